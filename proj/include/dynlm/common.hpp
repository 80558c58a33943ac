#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace dynlm {

inline constexpr const char* kVersion = "1.0.0";

// Exit-status contract: 0 success, 1 usage, 2 data/validation, 3 numerical.
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitNumeric = 3;

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Bad inputs, malformed files, contract violations.
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Divergence, non-finite values, solver failure.
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

}  // namespace dynlm
