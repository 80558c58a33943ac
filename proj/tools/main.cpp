#include <vector>

#include "dynlm/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return dynlm::cli_dispatch(args);
}
