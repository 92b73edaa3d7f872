#pragma once

// Oracle property suites shared by the oracle-check command and the
// acceptance harness.

#include <cstdint>
#include <string>
#include <vector>

#include "fldd/model.hpp"

namespace fldd {

struct CheckResult {
  std::string name;
  bool passed = false;
  std::string detail;
  double seconds = 0.0;
};

/// suite: coupling | gradients | estimators | bounds | all.
/// Throws std::invalid_argument for an unknown suite.
std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed = 0);

std::vector<std::string> suite_names();

CheckResult check_coupling(std::size_t pairs, std::uint64_t seed);
CheckResult check_relaxed_gradients(std::uint64_t seed);
CheckResult check_reinforce_expectation_gradients(std::uint64_t seed);
CheckResult check_estimator_unbiased(std::size_t samples, std::uint64_t seed);
CheckResult check_bounds_at_init(std::uint64_t seed);

/// Small network for oracle-scale instances, with a random (non-zero)
/// output layer so gradients are generic.
ModelConfig oracle_model_config(std::size_t k, std::size_t d, std::size_t steps,
                                ForwardKind kind = ForwardKind::Learned);
void randomize_outputs(FlddModel& model, Rng& rng, double scale = 0.5);

}  // namespace fldd
