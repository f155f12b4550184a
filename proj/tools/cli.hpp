#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace expertroute::cli {

/// Process exit codes.
enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kDataError = 2,
  kRuntimeError = 3,
};

/// Runs the command line `args` (args[0] is the program name) and returns the exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace expertroute::cli
