#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace posestream::cli {

enum ExitCode : int {
  kOk = 0,
  kUsage = 1,
  kConfigError = 2,
  kDataError = 3,
};

/// Runs the command line `args` (without the program name), writing normal
/// output to `out` and diagnostics to `err`. Returns the process exit code.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace posestream::cli
