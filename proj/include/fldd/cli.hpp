#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace fldd::cli {

enum ExitCode : int {
  kOk = 0,
  kFailure = 1,        // oracle-check property failure or unexpected error
  kConfigError = 2,    // usage, config, or missing input
  kTrainingAbort = 3,  // too many consecutive non-finite steps
  kVersionMismatch = 4,
  kBoundViolation = 5,
};

/// Runs one subcommand: train, sample, eval, oracle-check, export-trajectories.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace fldd::cli
