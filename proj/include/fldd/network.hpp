#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fldd/ndgrad.hpp"
#include "fldd/rng.hpp"

namespace fldd {

/// Shape of the MLP shared by the forward and reverse processes.
struct NetSpec {
  std::size_t input_dim = 0;
  std::size_t output_dim = 0;
  std::size_t width = 256;
  std::size_t depth = 3;  // hidden layers
  std::size_t time_dim = 16;
};

/// Sinusoidal features of integer timesteps, shape (t.size(), dim).
nd::Array time_embedding(std::span<const std::size_t> t, std::size_t dim);

using NamedVar = std::pair<std::string, nd::Var>;

/// GELU MLP over [input, time features]. The output layer starts at zero so
/// fresh networks predict uniform distributions.
class Mlp {
 public:
  Mlp() = default;
  Mlp(NetSpec spec, Rng& init_rng);

  /// input: (N, input_dim); t: N timesteps. Returns (N, output_dim).
  nd::Var forward(const nd::Var& input, std::span<const std::size_t> t) const;

  const NetSpec& spec() const { return spec_; }
  std::vector<NamedVar> named_parameters(const std::string& prefix) const;
  std::vector<nd::Var> parameters() const;

  /// Number of forward() calls so far.
  std::size_t evaluations() const { return evaluations_; }
  void reset_evaluations() { evaluations_ = 0; }

  /// Output layer, for rigging networks in tests.
  nd::Var& output_weight() { return weights_.back(); }
  nd::Var& output_bias() { return biases_.back(); }

 private:
  NetSpec spec_;
  std::vector<nd::Var> weights_;
  std::vector<nd::Var> biases_;
  mutable std::size_t evaluations_ = 0;
};

}  // namespace fldd
