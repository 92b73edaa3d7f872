#include "fldd/forward_process.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace fldd {

Simplex PriorSpec::simplex(std::size_t k) const {
  if (kind == PriorKind::Uniform) return Simplex::uniform(k);
  if (mask >= k) throw std::invalid_argument("PriorSpec: mask category outside the category range");
  return Simplex::one_hot(k, mask);
}

std::string to_string(ForwardKind kind) {
  switch (kind) {
    case ForwardKind::Learned: return "learned";
    case ForwardKind::Fixed: return "fixed";
    case ForwardKind::Masked: return "masked";
    case ForwardKind::MaskedFixed: return "masked-fixed";
  }
  return "?";
}

ForwardKind forward_kind_from_string(const std::string& name) {
  if (name == "learned") return ForwardKind::Learned;
  if (name == "fixed") return ForwardKind::Fixed;
  if (name == "masked") return ForwardKind::Masked;
  if (name == "masked-fixed") return ForwardKind::MaskedFixed;
  throw std::invalid_argument("unknown forward kind '" + name + "'");
}

void check_adjacent(std::size_t s, std::size_t t, std::size_t steps) {
  if (t < 1 || t > steps || s + 1 != t) {
    throw std::out_of_range("posterior: need adjacent steps s = t - 1 with 1 <= t <= " + std::to_string(steps) +
                            ", got s=" + std::to_string(s) + " t=" + std::to_string(t));
  }
}

namespace {

// Initial interior blend (a, b, c). The learned kind starts with most weight
// on the network; the rest keeps the interpolation a : b = (1 - t/T) : t/T.
// Starting near a = 1 - t/T instead tends to stall in a copy-the-data optimum.
// The masked kind starts at mask rate t/T.
std::array<double, 3> initial_blend(ForwardKind kind, double tau) {
  if (kind == ForwardKind::Masked) {
    const double c = std::min(tau, 1.0 - tau);
    return {1.0 - tau - 0.5 * c, tau - 0.5 * c, c};
  }
  return {kDataWeightInit * (1.0 - tau), kDataWeightInit * tau, 1.0 - kDataWeightInit};
}

}  // namespace

ForwardProcess::ForwardProcess(ForwardConfig config, Rng& init_rng) : config_(std::move(config)) {
  const std::size_t k = config_.categories, d = config_.dims, steps = config_.steps;
  if (k < 2 || d < 1 || steps < 1) throw std::invalid_argument("ForwardProcess: need K >= 2, D >= 1, T >= 1");
  if (masked() && config_.prior.kind != PriorKind::Absorbing) {
    throw std::invalid_argument("ForwardProcess: masked forward kinds need an absorbing prior");
  }
  (void)config_.prior.simplex(k);
  config_.net.input_dim = d * k;
  config_.net.output_dim = masked() ? d : d * k;
  if (learnable()) {
    net_ = Mlp(config_.net, init_rng);
    nd::Array logits(nd::Shape{steps + 1, 3}, 0.0);
    for (std::size_t t = 1; t < steps; ++t) {
      double tau = static_cast<double>(t) / static_cast<double>(steps);
      if (config_.kind == ForwardKind::Masked && config_.monotone_mask) {
        tau = 1.0 / static_cast<double>(steps - t + 1);  // hazard giving mask rate t/T
      }
      const auto init = initial_blend(config_.kind, tau);
      for (std::size_t j = 0; j < 3; ++j) logits[t * 3 + j] = std::log(init[j]);
    }
    blend_ = nd::Var::parameter(std::move(logits));
  }
}

std::array<double, 3> ForwardProcess::blend(std::size_t t) const {
  if (!learnable()) {
    const double tau = static_cast<double>(t) / static_cast<double>(config_.steps);
    return {1.0 - tau, tau, 0.0};
  }
  std::vector<std::size_t> idx{t};
  const nd::Var w = nd::softmax(nd::index_rows(blend_, idx));
  return {w.value()[0], w.value()[1], w.value()[2]};
}

void ForwardProcess::check_inputs(std::span<const std::size_t> x, std::span<const std::size_t> t) const {
  if (x.size() != t.size() * config_.dims) {
    throw nd::ShapeError("ForwardProcess: " + std::to_string(x.size()) + " categories for " +
                         std::to_string(t.size()) + " points of dimension " + std::to_string(config_.dims));
  }
  for (auto v : x)
    if (v >= config_.categories) throw std::out_of_range("ForwardProcess: category out of range");
  for (auto v : t)
    if (v > config_.steps) throw std::out_of_range("ForwardProcess: timestep " + std::to_string(v) + " > T");
}

nd::Var ForwardProcess::mask_probability(std::span<const std::size_t> x, std::span<const std::size_t> t) const {
  const std::size_t n = t.size(), d = config_.dims, k = config_.categories;
  if (config_.kind == ForwardKind::MaskedFixed) {
    nd::Array m(nd::Shape{n, d});
    for (std::size_t r = 0; r < n; ++r)
      for (std::size_t i = 0; i < d; ++i) m[r * d + i] = static_cast<double>(t[r]) / static_cast<double>(config_.steps);
    return nd::Var::constant(std::move(m));
  }
  if (!config_.monotone_mask) {
    const nd::Var input = nd::Var::constant(nd::one_hot(x, k).reshaped({n, d * k}));
    const nd::Var w = nd::softmax(nd::index_rows(blend_, t));
    std::vector<std::size_t> col(n, 1);
    const nd::Var b = nd::gather(w, col);
    std::fill(col.begin(), col.end(), 2);
    const nd::Var c = nd::gather(w, col);
    return b + c * nd::sigmoid(net_.forward(input, t));
  }
  // m(x, t) = 1 - prod_{t' <= t} (1 - r(x, t')) with hazard r = b + c sigmoid(net).
  std::vector<std::size_t> owner, times, xs;
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t tp = 1; tp <= t[r]; ++tp) {
      owner.push_back(r);
      times.push_back(tp);
      xs.insert(xs.end(), x.begin() + r * d, x.begin() + (r + 1) * d);
    }
  }
  if (owner.empty()) return nd::Var::constant(nd::Array(nd::Shape{n, d}, 0.0));
  const std::size_t m = owner.size();
  const nd::Var input = nd::Var::constant(nd::one_hot(xs, k).reshaped({m, d * k}));
  const nd::Var w = nd::softmax(nd::index_rows(blend_, times));
  std::vector<std::size_t> col(m, 1);
  const nd::Var b = nd::gather(w, col);
  std::fill(col.begin(), col.end(), 2);
  const nd::Var c = nd::gather(w, col);
  const nd::Var hazard = b + c * nd::sigmoid(net_.forward(input, times));
  const nd::Var log_keep = nd::scatter_rows(nd::log(1.0 - hazard), owner, n);
  return 1.0 - nd::exp(log_keep);
}

nd::Var ForwardProcess::interior_marginals(std::span<const std::size_t> x, std::span<const std::size_t> t) const {
  const std::size_t n = t.size(), d = config_.dims, k = config_.categories;
  const nd::Array onehot = nd::one_hot(x, k);  // (n*d, k)
  if (masked()) {
    nd::Array toward_mask = onehot;
    for (std::size_t r = 0; r < n * d; ++r) {
      for (std::size_t j = 0; j < k; ++j) toward_mask[r * k + j] = (j == config_.prior.mask ? 1.0 : 0.0) - onehot[r * k + j];
    }
    const nd::Var m = nd::reshape(mask_probability(x, t), {n * d, 1});
    return nd::Var::constant(onehot) + m * nd::Var::constant(toward_mask);
  }
  if (config_.kind == ForwardKind::Fixed) {
    const Simplex prior = config_.prior.simplex(k);
    nd::Array u(nd::Shape{n * d, k});
    for (std::size_t r = 0; r < n; ++r) {
      const double tau = static_cast<double>(t[r]) / static_cast<double>(config_.steps);
      for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < k; ++j) {
          const std::size_t e = (r * d + i) * k + j;
          u[e] = (1.0 - tau) * onehot[e] + tau * prior[j];
        }
    }
    return nd::Var::constant(std::move(u));
  }
  const nd::Var input = nd::Var::constant(onehot.reshaped({n, d * k}));
  const nd::Var net_probs = nd::reshape(nd::softmax(nd::reshape(net_.forward(input, t), {n * d, k})), {n, d * k});
  const nd::Var w = nd::softmax(nd::index_rows(blend_, t));
  std::vector<std::size_t> col(n, 0);
  const nd::Var a = nd::gather(w, col);
  std::fill(col.begin(), col.end(), 1);
  const nd::Var b = nd::gather(w, col);
  std::fill(col.begin(), col.end(), 2);
  const nd::Var c = nd::gather(w, col);
  const Simplex prior = config_.prior.simplex(k);
  nd::Array prior_row(nd::Shape{1, d * k});
  for (std::size_t i = 0; i < d; ++i)
    for (std::size_t j = 0; j < k; ++j) prior_row[i * k + j] = prior[j];
  const nd::Var u = a * nd::Var::constant(onehot.reshaped({n, d * k})) + b * nd::Var::constant(prior_row) + c * net_probs;
  return nd::reshape(u, {n * d, k});
}

nd::Var ForwardProcess::marginals(std::span<const std::size_t> x, std::span<const std::size_t> t) const {
  check_inputs(x, t);
  const std::size_t n = t.size(), d = config_.dims, k = config_.categories, steps = config_.steps;
  const Simplex prior = config_.prior.simplex(k);

  nd::Array boundary(nd::Shape{n * d, k}, 0.0);
  std::vector<std::uint8_t> is_boundary(n * d * k, 0);
  std::vector<std::size_t> interior, interior_x, interior_t, interior_rows;
  for (std::size_t r = 0; r < n; ++r) {
    if (t[r] == 0 || t[r] == steps) {
      for (std::size_t i = 0; i < d; ++i) {
        const std::size_t row = r * d + i;
        for (std::size_t j = 0; j < k; ++j) {
          boundary[row * k + j] = t[r] == 0 ? (j == x[row] ? 1.0 : 0.0) : prior[j];
          is_boundary[row * k + j] = 1;
        }
      }
    } else {
      interior.push_back(r);
      interior_t.push_back(t[r]);
      interior_x.insert(interior_x.end(), x.begin() + r * d, x.begin() + (r + 1) * d);
      for (std::size_t i = 0; i < d; ++i) interior_rows.push_back(r * d + i);
    }
  }
  const nd::Var fixed = nd::Var::constant(std::move(boundary));
  if (interior.empty()) return fixed;
  nd::Var inner = interior_marginals(interior_x, interior_t);
  if (interior.size() != n) inner = nd::scatter_rows(inner, interior_rows, n * d);
  return nd::where(is_boundary, fixed, inner);
}

MarginalField ForwardProcess::marginals(const DataPoint& x, std::size_t t) const {
  std::vector<std::size_t> ts{t};
  const nd::Var u = marginals(x, ts);
  MarginalField field;
  const std::size_t k = config_.categories;
  for (std::size_t i = 0; i < config_.dims; ++i) {
    field.emplace_back(std::vector<double>(u.value().data() + i * k, u.value().data() + (i + 1) * k));
  }
  return field;
}

MarginalField ForwardProcess::masked_marginals(const DataPoint& x, std::size_t t) const {
  if (!masked()) throw std::logic_error("masked_marginals: forward process is not a masking process");
  return marginals(x, t);
}

std::vector<CouplingRow> ForwardProcess::posterior(const DataPoint& x, std::size_t s, std::size_t t,
                                                   const DataPoint& z_t) const {
  check_adjacent(s, t, config_.steps);
  const MarginalField us = marginals(x, s);
  const MarginalField ut = marginals(x, t);
  std::vector<CouplingRow> rows;
  for (std::size_t i = 0; i < config_.dims; ++i) rows.push_back(max_coupling_row(us[i], ut[i], z_t.at(i)));
  return rows;
}

std::vector<Simplex> ForwardProcess::relaxed_posterior(const DataPoint& x, std::size_t s, std::size_t t,
                                                       const std::vector<RelaxedSample>& zbar_t) const {
  check_adjacent(s, t, config_.steps);
  const MarginalField us = marginals(x, s);
  const MarginalField ut = marginals(x, t);
  const std::size_t k = config_.categories;
  std::vector<Simplex> out;
  for (std::size_t i = 0; i < config_.dims; ++i) {
    const auto rows = coupling_matrix(us[i], ut[i]);
    std::vector<double> mix(k, 0.0);
    for (std::size_t from = 0; from < k; ++from)
      for (std::size_t j = 0; j < k; ++j) mix[j] += zbar_t.at(i).weights.at(from) * rows[from].row[j];
    out.emplace_back(floor_renormalize(mix, 0.0));
  }
  return out;
}

std::vector<NamedVar> ForwardProcess::named_parameters() const {
  if (!learnable()) return {};
  auto out = net_.named_parameters("forward.");
  out.emplace_back("forward.blend", blend_);
  return out;
}

std::vector<nd::Var> ForwardProcess::parameters() const {
  std::vector<nd::Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

}  // namespace fldd
