#pragma once

#include <cstdint>
#include <vector>

#include "fldd/ndgrad.hpp"

namespace fldd {

struct AdamWConfig {
  double lr = 2e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.01;
};

/// Decoupled-weight-decay Adam over a fixed list of parameter Vars.
class AdamW {
 public:
  AdamW(std::vector<nd::Var> params, AdamWConfig config);

  /// Applies one update from the parameters' current gradients.
  void step();
  void zero_grad();

  std::int64_t steps_taken() const { return steps_; }
  const AdamWConfig& config() const { return config_; }
  AdamWConfig& config() { return config_; }

  // Moment buffers, exposed for checkpointing.
  std::vector<nd::Array>& first_moments() { return m_; }
  std::vector<nd::Array>& second_moments() { return v_; }
  void set_steps_taken(std::int64_t n) { steps_ = n; }

 private:
  std::vector<nd::Var> params_;
  AdamWConfig config_;
  std::vector<nd::Array> m_;
  std::vector<nd::Array> v_;
  std::int64_t steps_ = 0;
};

/// Global L2 norm of all gradients.
double grad_norm(const std::vector<nd::Var>& params);

/// Rescales gradients so their global norm is at most max_norm. Returns the
/// norm before clipping.
double clip_grad_norm(const std::vector<nd::Var>& params, double max_norm);

}  // namespace fldd
