#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace freconv::cli {

// Parses and dispatches one CLI invocation. `args` excludes the program
// name. Exit code contract: 0 success, 1 user error, 2 internal failure.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace freconv::cli
