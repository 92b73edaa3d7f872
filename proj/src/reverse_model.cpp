#include "fldd/reverse_model.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace fldd {

ReverseModel::ReverseModel(ReverseConfig config, Rng& init_rng) : config_(std::move(config)) {
  const std::size_t k = config_.categories, d = config_.dims;
  if (k < 2 || d < 1 || config_.steps < 1) throw std::invalid_argument("ReverseModel: need K >= 2, D >= 1, T >= 1");
  (void)config_.prior.simplex(k);
  config_.net.input_dim = d * k;
  config_.net.output_dim = d * k;
  net_ = Mlp(config_.net, init_rng);
}

nd::Var ReverseModel::probs(const nd::Var& encoding, std::span<const std::size_t> t) const {
  const std::size_t n = t.size(), d = config_.dims, k = config_.categories;
  for (auto step : t) {
    if (step < 1 || step > config_.steps) {
      throw std::out_of_range("ReverseModel: timestep " + std::to_string(step) + " outside [1, T]");
    }
  }
  const nd::Var logits = nd::reshape(net_.forward(encoding, t), {n * d, k});
  return floor_renormalize(nd::softmax(logits));
}

nd::Var ReverseModel::probs(std::span<const std::size_t> z, std::span<const std::size_t> t) const {
  const std::size_t d = config_.dims, k = config_.categories;
  if (z.size() != t.size() * d) throw nd::ShapeError("ReverseModel::probs: latent count does not match batch");
  return probs(nd::Var::constant(nd::one_hot(z, k).reshaped({t.size(), d * k})), t);
}

std::vector<Simplex> ReverseModel::reverse_dist(const LatentState& state) const {
  if (state.z.size() != config_.dims) throw nd::ShapeError("reverse_dist: latent has wrong dimension");
  std::vector<std::size_t> t{state.t};
  const nd::Var p = probs(state.z, t);
  const std::size_t k = config_.categories;
  std::vector<Simplex> out;
  for (std::size_t i = 0; i < config_.dims; ++i) {
    out.emplace_back(std::vector<double>(p.value().data() + i * k, p.value().data() + (i + 1) * k));
  }
  return out;
}

DataPoint ReverseModel::sample(Rng& rng) const { return sample_batch(1, rng).front(); }

std::vector<DataPoint> ReverseModel::sample_batch(std::size_t n, Rng& rng, Trajectory* trajectory,
                                                  std::size_t chunk) const {
  const std::size_t d = config_.dims, k = config_.categories, steps = config_.steps;
  const Simplex prior = config_.prior.simplex(k);
  std::vector<DataPoint> out;
  out.reserve(n);
  if (trajectory) trajectory->assign(steps + 1, {});
  for (std::size_t start = 0; start < n; start += chunk) {
    const std::size_t m = std::min(chunk, n - start);
    std::vector<std::size_t> z(m * d);
    for (auto& v : z) v = sample_cat(prior, rng);
    auto record = [&](std::size_t j) {
      if (!trajectory) return;
      for (std::size_t r = 0; r < m; ++r) (*trajectory)[j].emplace_back(z.begin() + r * d, z.begin() + (r + 1) * d);
    };
    record(0);
    for (std::size_t t = steps; t >= 1; --t) {
      const std::vector<std::size_t> ts(m, t);
      const nd::Var p = probs(z, ts);
      for (std::size_t row = 0; row < m * d; ++row) {
        z[row] = sample_cat_unchecked(std::span<const double>(p.value().data() + row * k, k), rng);
      }
      record(steps - t + 1);
    }
    for (std::size_t r = 0; r < m; ++r) out.emplace_back(z.begin() + r * d, z.begin() + (r + 1) * d);
  }
  return out;
}

std::vector<double> exact_model_law(const ReverseModel& model, std::size_t cap) {
  const std::size_t k = model.categories(), d = model.dims();
  const std::size_t states = joint_state_count(k, d, cap);
  const Simplex prior = model.config().prior.simplex(k);

  std::vector<double> current(states, 0.0);
  for (std::size_t idx = 0; idx < states; ++idx) {
    const auto z = decode_state(idx, k, d);
    double p = 1.0;
    for (auto v : z) p *= prior[v];
    current[idx] = p;
  }

  constexpr std::size_t kChunk = 2048;
  std::vector<double> outer(states);
  for (std::size_t t = model.steps(); t >= 1; --t) {
    std::vector<double> next(states, 0.0);
    std::vector<std::size_t> live;
    for (std::size_t idx = 0; idx < states; ++idx)
      if (current[idx] > 0.0) live.push_back(idx);
    for (std::size_t start = 0; start < live.size(); start += kChunk) {
      const std::size_t m = std::min(kChunk, live.size() - start);
      std::vector<std::size_t> z;
      z.reserve(m * d);
      for (std::size_t r = 0; r < m; ++r) {
        const auto s = decode_state(live[start + r], k, d);
        z.insert(z.end(), s.begin(), s.end());
      }
      const nd::Var p = model.probs(z, std::vector<std::size_t>(m, t));
      for (std::size_t r = 0; r < m; ++r) {
        // Outer product of the D per-coordinate rows, coordinate 0 most significant.
        std::size_t len = 1;
        outer[0] = current[live[start + r]];
        for (std::size_t i = 0; i < d; ++i) {
          const double* row = p.value().data() + (r * d + i) * k;
          for (std::size_t a = len; a-- > 0;) {
            const double base = outer[a];
            for (std::size_t j = 0; j < k; ++j) outer[a * k + j] = base * row[j];
          }
          len *= k;
        }
        for (std::size_t s = 0; s < states; ++s) next[s] += outer[s];
      }
    }
    current = std::move(next);
  }
  return current;
}

double exact_model_nll(const ReverseModel& model, const std::vector<DataPoint>& points,
                       const std::vector<double>& weights, std::size_t cap) {
  if (points.empty()) throw std::invalid_argument("exact_model_nll: no data points");
  if (!weights.empty() && weights.size() != points.size()) {
    throw std::invalid_argument("exact_model_nll: weights do not match points");
  }
  const auto law = exact_model_law(model, cap);
  const std::size_t k = model.categories();
  double total = 0.0, mass = 0.0;
  for (std::size_t i = 0; i < points.size(); ++i) {
    const double w = weights.empty() ? 1.0 : weights[i];
    if (w == 0.0) continue;
    total += w * -std::log(law[encode_state(points[i], k)]);
    mass += w;
  }
  return total / mass;
}

}  // namespace fldd
