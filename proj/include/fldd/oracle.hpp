#pragma once

// Brute-force references on small joint state spaces.

#include <cstddef>
#include <functional>
#include <string>
#include <vector>

#include "fldd/catdist.hpp"
#include "fldd/model.hpp"
#include "fldd/ndgrad.hpp"
#include "fldd/states.hpp"

namespace fldd {

/// Full probability table over {0..K-1}^D, coordinate 0 most significant.
class EnumeratedLaw {
 public:
  EnumeratedLaw(std::size_t k, std::size_t d, std::vector<double> probs, std::size_t cap = kEnumerationCap);

  static EnumeratedLaw product(const std::vector<Simplex>& marginals, std::size_t cap = kEnumerationCap);

  std::size_t categories() const { return k_; }
  std::size_t dims() const { return d_; }
  std::size_t states() const { return probs_.size(); }
  const std::vector<double>& probs() const { return probs_; }
  double operator()(const DataPoint& z) const { return probs_[encode_state(z, k_)]; }

  Simplex marginal(std::size_t i) const;
  /// Law of coordinate i given every other coordinate fixed as in `rest`
  /// (rest[i] is ignored). Throws when the conditioning event has no mass.
  Simplex conditional(std::size_t i, const DataPoint& rest) const;

 private:
  std::size_t k_;
  std::size_t d_;
  std::vector<double> probs_;
};

/// KL(law || product of its marginals); zero iff the law factorizes.
double factorization_gap(const EnumeratedLaw& law);

/// Induced target q(z_s | z_t) = sum_x q(x | z_t) q(z_s | z_t, x) for one
/// data law, forward process, and step s = t - 1. Forward marginals for every
/// data point are computed once and reused across z_t.
class TargetOracle {
 public:
  TargetOracle(const EnumeratedLaw& data, const ForwardProcess& forward, std::size_t t,
               std::size_t cap = kEnumerationCap);

  /// q(x | z_t) over the data states; throws when q(z_t) is zero.
  EnumeratedLaw data_posterior(const DataPoint& z_t) const;
  EnumeratedLaw target(const DataPoint& z_t) const;
  /// q(z_t) = sum_x q(x) q(z_t | x), as a sampler-friendly table.
  EnumeratedLaw latent_marginal() const;

 private:
  std::size_t k_;
  std::size_t d_;
  std::size_t cap_;
  std::vector<std::size_t> support_;       // data states with mass
  std::vector<double> weight_;             // q(x) for each support state
  std::vector<MarginalField> u_s_, u_t_;   // per support state
};

EnumeratedLaw induced_target(const EnumeratedLaw& data, const ForwardProcess& forward, std::size_t s, std::size_t t,
                             const DataPoint& z_t, std::size_t cap = kEnumerationCap);

/// sum_{z_t} q(z_t | x) KL(q(z_s | z_t, x) || p(z_s | z_t)) as a differentiable
/// scalar, enumerating every z_t.
nd::Var expected_step_loss(const FlddModel& model, const DataPoint& x, std::size_t t,
                           std::size_t cap = kEnumerationCap);

struct NamedGrad {
  std::string name;
  nd::Array grad;
};

/// Exact gradient of expected_step_loss in the given parameters (forward
/// parameters when empty).
std::vector<NamedGrad> exact_reinforce_grad(const FlddModel& model, const DataPoint& x, std::size_t t,
                                            std::vector<NamedVar> params = {}, std::size_t cap = kEnumerationCap);

struct FdReport {
  double max_rel_error = 0.0;
  std::string worst;  // "name[index]"
  std::size_t checked = 0;
};

/// Central differences of a deterministic scalar loss against autodiff.
/// Relative error is |a - f| / max(|a|, |f|, scale_floor).
FdReport fd_check(const std::function<nd::Var()>& loss, const std::vector<NamedVar>& params, double h = 1e-5,
                  double scale_floor = 1e-3);

}  // namespace fldd
