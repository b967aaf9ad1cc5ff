#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace medsurv::cli {

enum ExitCode : int {
  exit_ok = 0,
  exit_failure = 1,
  exit_input = 2,
  exit_estimation = 3,
  exit_infeasible = 4,
};

/// Runs the command line `args` (without the program name). Reports go to
/// `out`, diagnostics and progress to `err`.
int run(std::vector<std::string> args, std::ostream& out, std::ostream& err);

}  // namespace medsurv::cli
