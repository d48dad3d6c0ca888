#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace flowsymm::cli {

/// Parses argv (without the program name) and runs one subcommand:
/// generate, train, predict, evaluate, ablate or sensitivity. Returns the
/// process exit code; usage and errors go to err.
int run_command(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace flowsymm::cli
