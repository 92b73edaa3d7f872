#pragma once

// Categorical and Concrete (relaxed categorical) distributions.
//
// Categories are 0-based internally; files and the CLI use 1-based labels.

#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "fldd/ndgrad.hpp"
#include "fldd/rng.hpp"

namespace fldd {

/// Lower bound applied to model probabilities before any KL evaluation.
inline constexpr double kProbFloor = 1e-8;
/// Sum tolerance for a valid simplex.
inline constexpr double kSimplexTol = 1e-9;

class InvalidSimplex : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Probability vector over K categories: entries >= 0, sum within 1e-9 of 1.
class Simplex {
 public:
  explicit Simplex(std::vector<double> probs);

  static Simplex uniform(std::size_t k);
  static Simplex one_hot(std::size_t k, std::size_t index);

  std::size_t size() const { return probs_.size(); }
  double operator[](std::size_t i) const { return probs_[i]; }
  std::span<const double> probs() const { return probs_; }
  const std::vector<double>& vec() const { return probs_; }

  bool operator==(const Simplex&) const = default;

 private:
  std::vector<double> probs_;
};

/// True when p is a valid simplex under the tolerances above.
bool is_simplex(std::span<const double> p);

/// Inverse-CDF draw from p. Throws InvalidSimplex on an invalid p.
std::size_t sample_cat(const Simplex& p, Rng& rng);
/// Unchecked variant for hot loops; p must already be a valid simplex.
std::size_t sample_cat_unchecked(std::span<const double> p, Rng& rng);

/// KL(q || p) with 0 log(0/.) = 0. Returns +infinity when q puts mass where
/// p has none.
double kl_cat(const Simplex& q, const Simplex& p);

/// Clamp every entry to >= floor then renormalize.
std::vector<double> floor_renormalize(std::span<const double> p, double floor = kProbFloor);

/// Standard Gumbel(0,1) via -log(-log U), U clamped to [1e-12, 1 - 1e-12].
double gumbel(Rng& rng);
nd::Array gumbel_noise(const nd::Shape& shape, Rng& rng);

struct RelaxedSample {
  std::vector<double> weights;
  double temperature = 1.0;
};

/// softmax((logits + g) / tau) with fresh Gumbel noise g.
RelaxedSample sample_concrete(std::span<const double> logits, double tau, Rng& rng);

// ---- differentiable forms, row-wise over the last axis ----

/// softmax((logits + noise) / tau); pathwise in logits. tau must be > 0.
nd::Var concrete_weights(const nd::Var& logits, const nd::Array& noise, double tau);

/// Differentiable floor_renormalize.
nd::Var floor_renormalize(const nd::Var& probs, double floor = kProbFloor);

/// Row-wise KL(q || p) with the 0 log 0 convention; result has last dim 1.
/// p must be strictly positive (floor it first).
nd::Var kl_rows(const nd::Var& q, const nd::Var& p);

}  // namespace fldd
