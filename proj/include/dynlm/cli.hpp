#pragma once

#include <string>
#include <vector>

namespace dynlm {

// Runs one command given argv-style arguments (program name excluded).
// Returns the process exit code: 0 success, 1 usage error, 2 data error,
// 3 numerical failure. Protocol execution re-enters this function per step.
int cli_dispatch(const std::vector<std::string>& args);

}  // namespace dynlm
