#ifndef EPSURV_TOOLS_CLI_HPP
#define EPSURV_TOOLS_CLI_HPP

#include <ostream>

namespace epsurv::cli {

/// Exit codes of the command-line tool.
enum ExitCode : int {
  kOk = 0,
  kValidation = 2,
  kConvergence = 3,
  kSingularity = 4,
  kIo = 5,
};

/// Runs the tool with the given arguments, writing reports to `out` and
/// diagnostics to `err`. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace epsurv::cli

#endif  // EPSURV_TOOLS_CLI_HPP
