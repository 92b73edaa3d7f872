#include "fldd/objective.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

#include "fldd/catdist.hpp"
#include "fldd/coupling.hpp"

namespace fldd {

std::string to_string(Estimator e) { return e == Estimator::Relaxed ? "relaxed" : "reinforce"; }

TauSchedule::TauSchedule(std::size_t steps, double start, double end) : steps_(steps), start_(start), end_(end) {
  if (!(start > 0.0) || !(end > 0.0)) throw std::invalid_argument("TauSchedule: temperatures must be positive");
}

double TauSchedule::operator()(std::size_t n) const {
  if (steps_ == 0 || n >= steps_) return steps_ == 0 && n == 0 ? start_ : end_;
  if (n == 0) return start_;
  const double frac = static_cast<double>(n) / static_cast<double>(steps_);
  return start_ * std::pow(end_ / start_, frac);
}

void EmaBaseline::update(double x) {
  if (!ready_) {
    value_ = x;
    ready_ = true;
  } else {
    value_ = decay_ * value_ + (1.0 - decay_) * x;
  }
}

std::vector<std::size_t> sample_latents(const nd::Array& u, Rng& rng) {
  const std::size_t rows = u.rows(), k = u.cols();
  std::vector<std::size_t> z(rows);
  for (std::size_t r = 0; r < rows; ++r) z[r] = sample_cat_unchecked(std::span<const double>(u.data() + r * k, k), rng);
  return z;
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

struct Prepared {
  std::vector<std::size_t> s;
  nd::Var u_s;
  nd::Var u_t;
};

Prepared prepare(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t) {
  Prepared p;
  p.s.reserve(t.size());
  for (auto step : t) {
    if (step < 1 || step > model.config.steps) {
      throw std::out_of_range("diffusion loss: timestep " + std::to_string(step) + " outside [1, T]");
    }
    p.s.push_back(step - 1);
  }
  // One forward-network pass over both timesteps.
  std::vector<std::size_t> xx(x.begin(), x.end());
  xx.insert(xx.end(), x.begin(), x.end());
  std::vector<std::size_t> tt(p.s.begin(), p.s.end());
  tt.insert(tt.end(), t.begin(), t.end());
  const nd::Var both = model.forward.marginals(xx, tt);
  const std::size_t rows = x.size();
  std::vector<std::size_t> first(rows), second(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    first[r] = r;
    second[r] = rows + r;
  }
  p.u_s = nd::index_rows(both, first);
  p.u_t = nd::index_rows(both, second);
  return p;
}

// Sum of the D per-coordinate entries of a (N*D, 1) column.
nd::Var per_sample(const nd::Var& column, std::size_t n, std::size_t d) {
  return nd::sum_last(nd::reshape(column, {n, d}));
}

DiffLoss finish(const nd::Var& kl, const nd::Var& surrogate_terms, double time_weight) {
  DiffLoss out;
  out.kl = kl.value().vec();
  out.surrogate = nd::mean(surrogate_terms) * time_weight;
  out.value = out.surrogate.item();
  return out;
}

}  // namespace

nd::Var concrete_logits(const nd::Var& u) { return nd::log(nd::clamp(u, kProbFloor, kInf)); }

DiffLoss diff_loss_reinforce(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                             std::span<const std::size_t> z_t, const DiffLossOptions& options) {
  const std::size_t n = t.size(), d = model.config.dims;
  if (z_t.size() != x.size()) throw nd::ShapeError("diff_loss_reinforce: latent count does not match data");
  const Prepared p = prepare(model, x, t);
  const CouplingTerms terms = coupling_terms(p.u_s, p.u_t);
  const nd::Var q_rows = posterior_rows(terms, z_t);
  const nd::Var v_rows = model.reverse.probs(z_t, t);
  const nd::Var kl = per_sample(kl_rows(q_rows, v_rows), n, d);

  const nd::Var log_q = per_sample(nd::log(nd::clamp(nd::gather(p.u_t, z_t), 1e-300, kInf)), n, d);
  const nd::Var w = nd::exp(log_q - nd::stop_grad(log_q));
  const nd::Var terms_per_sample = w * kl - (w - 1.0) * options.baseline;
  return finish(kl, terms_per_sample, options.time_weight);
}

DiffLoss diff_loss_reinforce(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                             Rng& latent_rng, const DiffLossOptions& options, std::vector<std::size_t>* z_out) {
  std::vector<std::size_t> tt(t.begin(), t.end());
  const nd::Var u_t = model.forward.marginals(x, tt);
  std::vector<std::size_t> z = sample_latents(u_t.value(), latent_rng);
  if (z_out) *z_out = z;
  return diff_loss_reinforce(model, x, t, z, options);
}

DiffLoss diff_loss_relaxed(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                           double tau, const nd::Array& noise, const DiffLossOptions& options) {
  const std::size_t n = t.size(), d = model.config.dims, k = model.config.categories;
  if (noise.shape() != nd::Shape{n * d, k}) {
    throw nd::ShapeError("diff_loss_relaxed: noise " + nd::shape_str(noise.shape()) + " for " + std::to_string(n) +
                         " points");
  }
  const Prepared p = prepare(model, x, t);
  const nd::Var zbar = concrete_weights(concrete_logits(p.u_t), noise, tau);
  const CouplingTerms terms = coupling_terms(p.u_s, p.u_t);
  const nd::Var q_rows = mixed_posterior(terms, zbar);
  const nd::Var v_rows = model.reverse.probs(nd::reshape(zbar, {n, d * k}), t);
  const nd::Var kl = per_sample(kl_rows(q_rows, v_rows), n, d);
  return finish(kl, kl, options.time_weight);
}

DiffLoss diff_loss_relaxed(const FlddModel& model, std::span<const std::size_t> x, std::span<const std::size_t> t,
                           double tau, Rng& gumbel_rng, const DiffLossOptions& options) {
  const nd::Array noise = gumbel_noise({t.size() * model.config.dims, model.config.categories}, gumbel_rng);
  return diff_loss_relaxed(model, x, t, tau, noise, options);
}

BoundEvaluator::BoundEvaluator(const FlddModel& model, BoundOptions options)
    : model_(model),
      options_(options),
      exact_(enumerable(model.config.categories, model.config.dims, options.cap)),
      log_tables_(model.config.steps + 1) {}

const std::vector<double>& BoundEvaluator::reverse_log_table(std::size_t t) {
  auto& table = log_tables_[t];
  if (!table.empty()) return table;
  const std::size_t k = model_.config.categories, d = model_.config.dims;
  const std::size_t states = joint_state_count(k, d, options_.cap);
  table.resize(states * d * k);
  constexpr std::size_t kChunk = 2048;
  for (std::size_t start = 0; start < states; start += kChunk) {
    const std::size_t m = std::min(kChunk, states - start);
    std::vector<std::size_t> z;
    z.reserve(m * d);
    for (std::size_t r = 0; r < m; ++r) {
      const auto s = decode_state(start + r, k, d);
      z.insert(z.end(), s.begin(), s.end());
    }
    const nd::Var p = model_.reverse.probs(z, std::vector<std::size_t>(m, t));
    for (std::size_t e = 0; e < m * d * k; ++e) table[start * d * k + e] = std::log(p.value()[e]);
  }
  return table;
}

double BoundEvaluator::step_term(const DataPoint& x, std::size_t t, Rng& rng) {
  const std::size_t k = model_.config.categories, d = model_.config.dims;
  const MarginalField us = model_.forward.marginals(x, t - 1);
  const MarginalField ut = model_.forward.marginals(x, t);
  std::vector<std::vector<CouplingRow>> rows(d);
  std::vector<std::vector<double>> negent(d, std::vector<double>(k, 0.0));
  for (std::size_t i = 0; i < d; ++i) {
    rows[i] = coupling_matrix(us[i], ut[i]);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t j = 0; j < k; ++j) {
        const double q = rows[i][a].row[j];
        if (q > 0.0) negent[i][a] += q * std::log(q);
      }
  }
  auto kl_at = [&](const std::size_t* z, const double* log_v) {
    double kl = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const auto& row = rows[i][z[i]].row;
      double cross = 0.0;
      for (std::size_t j = 0; j < k; ++j)
        if (row[j] > 0.0) cross += row[j] * log_v[i * k + j];
      kl += negent[i][z[i]] - cross;
    }
    return kl;
  };

  if (exact_) {
    const auto& table = reverse_log_table(t);
    std::vector<std::vector<std::size_t>> support(d);
    for (std::size_t i = 0; i < d; ++i)
      for (std::size_t a = 0; a < k; ++a)
        if (ut[i][a] > 0.0) support[i].push_back(a);
    std::vector<std::size_t> pos(d, 0), z(d);
    double total = 0.0;
    while (true) {
      double q = 1.0;
      for (std::size_t i = 0; i < d; ++i) {
        z[i] = support[i][pos[i]];
        q *= ut[i][z[i]];
      }
      if (q > 0.0) total += q * kl_at(z.data(), table.data() + encode_state(z, k) * d * k);
      std::size_t i = d;
      while (i > 0) {
        --i;
        if (++pos[i] < support[i].size()) break;
        pos[i] = 0;
        if (i == 0) return total;
      }
      if (d == 0) return total;
    }
  }

  const std::size_t m = options_.mc_samples;
  std::vector<std::size_t> z(m * d);
  for (std::size_t r = 0; r < m; ++r)
    for (std::size_t i = 0; i < d; ++i) z[r * d + i] = sample_cat(ut[i], rng);
  const nd::Var p = model_.reverse.probs(z, std::vector<std::size_t>(m, t));
  std::vector<double> log_v(d * k);
  double total = 0.0;
  for (std::size_t r = 0; r < m; ++r) {
    for (std::size_t e = 0; e < d * k; ++e) log_v[e] = std::log(p.value()[r * d * k + e]);
    total += kl_at(z.data() + r * d, log_v.data());
  }
  return total / static_cast<double>(m);
}

LossBreakdown BoundEvaluator::operator()(const DataPoint& x, Rng& rng) {
  const std::size_t steps = model_.config.steps, k = model_.config.categories;
  LossBreakdown out;
  for (std::size_t t = 1; t <= steps; ++t) out.l_diff += step_term(x, t, rng);

  // p(x | z_0) is the identity indicator, so L_rec is zero iff u(x, 0) is one-hot at x.
  const MarginalField u0 = model_.forward.marginals(x, 0);
  for (std::size_t i = 0; i < x.size(); ++i) {
    if (u0[i][x[i]] != 1.0) out.l_rec = kInf;
  }
  const Simplex prior = model_.config.prior.simplex(k);
  for (const auto& u : model_.forward.marginals(x, steps)) out.l_prior += kl_cat(u, prior);
  if (out.l_rec != 0.0 || out.l_prior != 0.0) {
    throw std::logic_error("full_bound: boundary conditions violated (L_rec or L_prior nonzero)");
  }
  return out;
}

LossBreakdown full_bound(const FlddModel& model, const DataPoint& x, BoundOptions options) {
  BoundEvaluator eval(model, options);
  Rng rng(0, 0xb0);
  return eval(x, rng);
}

double mean_bound(const FlddModel& model, const std::vector<DataPoint>& points, Rng& rng, BoundOptions options) {
  if (points.empty()) throw std::invalid_argument("mean_bound: no points");
  BoundEvaluator eval(model, options);
  double total = 0.0;
  for (const auto& x : points) total += eval(x, rng).total();
  return total / static_cast<double>(points.size());
}

}  // namespace fldd
