#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace healthprism::cli {

// Runs one invocation (args excludes the program name). Returns the exit
// code; failures print a single "error: <code>: <message>" line to err.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace healthprism::cli
