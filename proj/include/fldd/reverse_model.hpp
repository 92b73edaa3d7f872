#pragma once

// Factorized reverse process p(z_s^i | z_t) = Cat(v^i(z_t, t)) and its sampler.

#include <cstddef>
#include <span>
#include <vector>

#include "fldd/catdist.hpp"
#include "fldd/forward_process.hpp"
#include "fldd/ndgrad.hpp"
#include "fldd/network.hpp"
#include "fldd/rng.hpp"
#include "fldd/states.hpp"

namespace fldd {

struct ReverseConfig {
  std::size_t categories = 2;  // K
  std::size_t dims = 1;        // D
  std::size_t steps = 2;       // T
  PriorSpec prior;
  NetSpec net;  // input/output sizes are filled in by the constructor
};

struct LatentState {
  DataPoint z;
  std::size_t t = 0;
};

/// z_T, ..., z_0 for a batch: trajectory[j][n] is sample n at time T - j.
using Trajectory = std::vector<std::vector<DataPoint>>;

class ReverseModel {
 public:
  ReverseModel(ReverseConfig config, Rng& init_rng);

  const ReverseConfig& config() const { return config_; }
  std::size_t categories() const { return config_.categories; }
  std::size_t dims() const { return config_.dims; }
  std::size_t steps() const { return config_.steps; }

  /// encoding: (N, D*K) one-hot or relaxed inputs; t: N timesteps in [1, T].
  /// Returns (N*D, K) simplex rows floored at kProbFloor.
  nd::Var probs(const nd::Var& encoding, std::span<const std::size_t> t) const;
  /// Same with hard latents z (N*D categories).
  nd::Var probs(std::span<const std::size_t> z, std::span<const std::size_t> t) const;

  std::vector<Simplex> reverse_dist(const LatentState& state) const;

  /// Draws z_T from the prior and runs T reverse steps; exactly T network
  /// evaluations.
  DataPoint sample(Rng& rng) const;
  /// n samples, evaluated in chunks of `chunk` rows (T evaluations per chunk).
  std::vector<DataPoint> sample_batch(std::size_t n, Rng& rng, Trajectory* trajectory = nullptr,
                                      std::size_t chunk = 4096) const;

  std::vector<NamedVar> named_parameters() const { return net_.named_parameters("reverse."); }
  std::vector<nd::Var> parameters() const { return net_.parameters(); }

  std::size_t evaluations() const { return net_.evaluations(); }
  void reset_evaluations() { net_.reset_evaluations(); }
  Mlp& network() { return net_; }

 private:
  ReverseConfig config_;
  Mlp net_;
};

/// p(x) for every joint state x by dynamic programming over joint latents.
/// Throws EnumerationTooLarge when K^D exceeds cap.
std::vector<double> exact_model_law(const ReverseModel& model, std::size_t cap = kEnumerationCap);

/// Weighted mean of -log p(x) over points (uniform weights when empty).
double exact_model_nll(const ReverseModel& model, const std::vector<DataPoint>& points,
                       const std::vector<double>& weights = {}, std::size_t cap = kEnumerationCap);

}  // namespace fldd
