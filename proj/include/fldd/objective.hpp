#pragma once

// Variational objective for jointly trained forward and reverse processes.
//
// The diffusion term is E_{t, q(z_t|x)} KL(q(z_s | z_t, x) || p(z_s | z_t)).
// Its gradient in the forward parameters goes through a discrete sample z_t,
// handled either by a Concrete relaxation (warm-up) or by the score-function
// surrogate w * L with w = q(z_t|x) / sg(q(z_t|x)).

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "fldd/model.hpp"
#include "fldd/ndgrad.hpp"
#include "fldd/rng.hpp"
#include "fldd/states.hpp"

namespace fldd {

enum class Estimator { Relaxed, Reinforce };
std::string to_string(Estimator e);

struct LossBreakdown {
  double l_diff = 0.0;
  double l_rec = 0.0;
  double l_prior = 0.0;
  Estimator estimator = Estimator::Reinforce;
  double tau = 0.0;  // relaxed only

  double total() const { return l_diff + l_rec + l_prior; }
};

/// tau(n) = start * (end / start)^(n / N), held at `end` after N steps.
class TauSchedule {
 public:
  explicit TauSchedule(std::size_t steps, double start = 1.0, double end = 1e-3);
  double operator()(std::size_t n) const;
  std::size_t steps() const { return steps_; }

 private:
  std::size_t steps_;
  double start_;
  double end_;
};

/// Exponential moving average of the per-step mean loss.
class EmaBaseline {
 public:
  explicit EmaBaseline(double decay = 0.99) : decay_(decay) {}
  double value() const { return ready_ ? value_ : 0.0; }
  bool ready() const { return ready_; }
  void update(double x);
  void restore(double value, bool ready) {
    value_ = value;
    ready_ = ready;
  }

 private:
  double decay_;
  double value_ = 0.0;
  bool ready_ = false;
};

struct DiffLossOptions {
  /// Multiplier on each sample's loss; T when t is drawn uniformly.
  double time_weight = 1.0;
  /// Subtracted from L inside the score term only.
  double baseline = 0.0;
};

struct DiffLoss {
  nd::Var surrogate;       // scalar to differentiate
  std::vector<double> kl;  // per-sample L = sum_i KL
  double value = 0.0;      // surrogate value: mean of time_weight * L
};

/// One categorical draw per row of u, shape (rows, K).
std::vector<std::size_t> sample_latents(const nd::Array& u, Rng& rng);

/// Score-function surrogate for given hard latents z_t (N*D categories).
DiffLoss diff_loss_reinforce(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                             std::span<const std::size_t> z_t, const DiffLossOptions& options = {});
/// Same, drawing z_t ~ q(z_t | x). The draw is written to z_out when given.
DiffLoss diff_loss_reinforce(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                             Rng& latent_rng, const DiffLossOptions& options = {},
                             std::vector<std::size_t>* z_out = nullptr);

/// Concrete-relaxed loss with explicit Gumbel noise of shape (N*D, K).
DiffLoss diff_loss_relaxed(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                           double tau, const nd::Array& noise, const DiffLossOptions& options = {});
DiffLoss diff_loss_relaxed(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                           double tau, Rng& gumbel_rng, const DiffLossOptions& options = {});

/// Per-sample log q(z_t | x) logits used for the Concrete relaxation.
nd::Var concrete_logits(const nd::Var& u);

struct BoundOptions {
  std::size_t cap = kEnumerationCap;
  std::size_t mc_samples = 64;  // per timestep, when z_t cannot be enumerated
};

/// Variational bound on -log p(x): sum over t of E_{q(z_t|x)} KL, plus the
/// reconstruction and prior terms (both zero under the boundary conditions).
/// Exact over z_t when K^D <= cap; Monte Carlo otherwise.
class BoundEvaluator {
 public:
  BoundEvaluator(const FlddModel& model, BoundOptions options = {});

  LossBreakdown operator()(const DataPoint& x, Rng& rng);
  /// Diffusion term for a single timestep.
  double step_term(const DataPoint& x, std::size_t t, Rng& rng);
  bool exact() const { return exact_; }

 private:
  const std::vector<double>& reverse_log_table(std::size_t t);

  const FlddModel& model_;
  BoundOptions options_;
  bool exact_;
  // Per timestep: log v^i(z)[j] for every joint state z, laid out [z][i][j].
  std::vector<std::vector<double>> log_tables_;
};

LossBreakdown full_bound(const FlddModel& model, const DataPoint& x, BoundOptions options = {});

/// Mean bound over points; rng drives the Monte Carlo path only.
double mean_bound(const FlddModel& model, const std::vector<DataPoint>& points, Rng& rng,
                  BoundOptions options = {});

}  // namespace fldd
