#include <iostream>
#include <string>
#include <vector>

#include "flowsymm_cli/cli.hpp"

int main(int argc, char** argv) {
  std::vector<std::string> args(argv + 1, argv + argc);
  return flowsymm::cli::run_command(args, std::cout, std::cerr);
}
