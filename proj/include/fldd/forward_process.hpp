#pragma once

// Learnable forward (noising) process.
//
// Marginals are factorized over coordinates, q(z_t^i | x) = Cat(u^i(x, t)),
// with u^i(x, 0) one-hot at x^i and u^i(x, T) equal to the prior. Posteriors
// between adjacent steps are Maximum Couplings of u(x, s) and u(x, t), built
// independently per coordinate.

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "fldd/catdist.hpp"
#include "fldd/coupling.hpp"
#include "fldd/ndgrad.hpp"
#include "fldd/network.hpp"
#include "fldd/rng.hpp"

namespace fldd {

/// Category labels of one data point or latent, 0-based, length D.
using DataPoint = std::vector<std::size_t>;

enum class PriorKind { Uniform, Absorbing };

struct PriorSpec {
  PriorKind kind = PriorKind::Uniform;
  std::size_t mask = 0;  // absorbing category

  Simplex simplex(std::size_t k) const;
};

enum class ForwardKind {
  Learned,      // u = a(t) onehot(x) + b(t) prior + c(t) softmax(net(x, t))
  Fixed,        // u = (1 - t/T) onehot(x) + (t/T) prior, no parameters
  Masked,       // support {x^i, MASK}, mask probability b(t) + c(t) sigmoid(net(x, t))
  MaskedFixed,  // mask probability t/T
};

/// Learned kind: initial interior weight on the data and prior terms together.
inline constexpr double kDataWeightInit = 0.1;

std::string to_string(ForwardKind kind);
ForwardKind forward_kind_from_string(const std::string& name);

struct ForwardConfig {
  std::size_t categories = 2;  // K
  std::size_t dims = 1;        // D
  std::size_t steps = 2;       // T
  PriorSpec prior;
  ForwardKind kind = ForwardKind::Learned;
  NetSpec net;  // input/output sizes are filled in by the constructor
  /// Masked kinds only: mask probability built as a cumulative hazard so it
  /// is non-decreasing in t.
  bool monotone_mask = false;
};

/// Marginal simplexes u^i(x, t) for one data point.
using MarginalField = std::vector<Simplex>;

class ForwardProcess {
 public:
  ForwardProcess(ForwardConfig config, Rng& init_rng);

  const ForwardConfig& config() const { return config_; }
  std::size_t categories() const { return config_.categories; }
  std::size_t dims() const { return config_.dims; }
  std::size_t steps() const { return config_.steps; }
  bool learnable() const { return config_.kind == ForwardKind::Learned || config_.kind == ForwardKind::Masked; }
  bool masked() const { return config_.kind == ForwardKind::Masked || config_.kind == ForwardKind::MaskedFixed; }

  /// Batched marginals. x holds N*D categories, t holds N timesteps.
  /// Returns (N*D, K), row n*D + i is u^i(x_n, t_n).
  nd::Var marginals(std::span<const std::size_t> x, std::span<const std::size_t> t) const;

  MarginalField marginals(const DataPoint& x, std::size_t t) const;
  /// Same as marginals(); requires a masked kind with an absorbing prior.
  MarginalField masked_marginals(const DataPoint& x, std::size_t t) const;

  /// Coupling rows q(z_s^i | z_t^i, x) for s = t - 1.
  std::vector<CouplingRow> posterior(const DataPoint& x, std::size_t s, std::size_t t, const DataPoint& z_t) const;

  /// sum_k zbar^i[k] q(z_s^i | z_t^i = k, x) for s = t - 1.
  std::vector<Simplex> relaxed_posterior(const DataPoint& x, std::size_t s, std::size_t t,
                                         const std::vector<RelaxedSample>& zbar_t) const;

  std::vector<NamedVar> named_parameters() const;
  std::vector<nd::Var> parameters() const;

  std::size_t evaluations() const { return net_.evaluations(); }
  Mlp& network() { return net_; }
  nd::Var& blend_logits() { return blend_; }

  /// Interior blend weights (a, b, c) at timestep t, without boundary overrides.
  std::array<double, 3> blend(std::size_t t) const;

 private:
  void check_inputs(std::span<const std::size_t> x, std::span<const std::size_t> t) const;
  nd::Var interior_marginals(std::span<const std::size_t> x, std::span<const std::size_t> t) const;
  nd::Var mask_probability(std::span<const std::size_t> x, std::span<const std::size_t> t) const;

  ForwardConfig config_;
  Mlp net_;
  nd::Var blend_;  // (T + 1, 3) logits; rows 0 and T are unused
};

void check_adjacent(std::size_t s, std::size_t t, std::size_t steps);

}  // namespace fldd
