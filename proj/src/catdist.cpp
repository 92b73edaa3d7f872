#include "fldd/catdist.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace fldd {

bool is_simplex(std::span<const double> p) {
  if (p.empty()) return false;
  double s = 0.0;
  for (double v : p) {
    if (!(v >= 0.0) || !std::isfinite(v)) return false;
    s += v;
  }
  return std::abs(s - 1.0) <= kSimplexTol;
}

Simplex::Simplex(std::vector<double> probs) : probs_(std::move(probs)) {
  if (!is_simplex(probs_)) {
    const double s = std::accumulate(probs_.begin(), probs_.end(), 0.0);
    throw InvalidSimplex("invalid simplex over " + std::to_string(probs_.size()) +
                         " categories (sum=" + std::to_string(s) + ")");
  }
}

Simplex Simplex::uniform(std::size_t k) { return Simplex(std::vector<double>(k, 1.0 / static_cast<double>(k))); }

Simplex Simplex::one_hot(std::size_t k, std::size_t index) {
  std::vector<double> p(k, 0.0);
  p.at(index) = 1.0;
  return Simplex(std::move(p));
}

std::size_t sample_cat_unchecked(std::span<const double> p, Rng& rng) {
  const double u = rng.uniform();
  double cum = 0.0;
  std::size_t last_positive = 0;
  for (std::size_t k = 0; k < p.size(); ++k) {
    if (p[k] <= 0.0) continue;
    last_positive = k;
    cum += p[k];
    if (u < cum) return k;
  }
  return last_positive;
}

std::size_t sample_cat(const Simplex& p, Rng& rng) { return sample_cat_unchecked(p.probs(), rng); }

double kl_cat(const Simplex& q, const Simplex& p) {
  if (q.size() != p.size()) throw InvalidSimplex("kl_cat: simplexes of different sizes");
  double kl = 0.0;
  for (std::size_t k = 0; k < q.size(); ++k) {
    if (q[k] <= 0.0) continue;
    if (p[k] <= 0.0) return std::numeric_limits<double>::infinity();
    kl += q[k] * std::log(q[k] / p[k]);
  }
  return kl;
}

std::vector<double> floor_renormalize(std::span<const double> p, double floor) {
  std::vector<double> out(p.begin(), p.end());
  double s = 0.0;
  for (double& v : out) s += (v = std::max(v, floor));
  for (double& v : out) v /= s;
  return out;
}

double gumbel(Rng& rng) {
  const double u = std::clamp(rng.uniform(), 1e-12, 1.0 - 1e-12);
  return -std::log(-std::log(u));
}

nd::Array gumbel_noise(const nd::Shape& shape, Rng& rng) {
  nd::Array g(shape);
  for (double& v : g.values()) v = gumbel(rng);
  return g;
}

RelaxedSample sample_concrete(std::span<const double> logits, double tau, Rng& rng) {
  if (!(tau > 0.0)) throw std::invalid_argument("sample_concrete: temperature must be positive");
  nd::Array l(nd::Shape{logits.size()}, std::vector<double>(logits.begin(), logits.end()));
  nd::Array g = gumbel_noise(l.shape(), rng);
  nd::Var w = concrete_weights(nd::Var::constant(l), g, tau);
  return RelaxedSample{w.value().vec(), tau};
}

nd::Var concrete_weights(const nd::Var& logits, const nd::Array& noise, double tau) {
  if (!(tau > 0.0)) throw std::invalid_argument("concrete_weights: temperature must be positive");
  return nd::softmax((logits + nd::Var::constant(noise)) * (1.0 / tau));
}

nd::Var floor_renormalize(const nd::Var& probs, double floor) {
  nd::Var c = nd::clamp(probs, floor, std::numeric_limits<double>::infinity());
  return c / nd::sum_last(c);
}

nd::Var kl_rows(const nd::Var& q, const nd::Var& p) {
  // q log q vanishes at q = 0; the clamp keeps the log finite there.
  nd::Var log_q = nd::log(nd::clamp(q, 1e-300, std::numeric_limits<double>::infinity()));
  return nd::sum_last(q * (log_q - nd::log(p)));
}

}  // namespace fldd
