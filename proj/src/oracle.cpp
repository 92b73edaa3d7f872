#include "fldd/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

#include "fldd/coupling.hpp"

namespace fldd {

namespace {

// Accumulates weight * (outer product of per-coordinate rows) into table.
void add_outer(std::vector<double>& table, std::vector<double>& scratch, double weight,
               const std::vector<const std::vector<double>*>& rows, std::size_t k) {
  std::size_t len = 1;
  scratch[0] = weight;
  for (const auto* row : rows) {
    for (std::size_t a = len; a-- > 0;) {
      const double base = scratch[a];
      for (std::size_t j = 0; j < k; ++j) scratch[a * k + j] = base * (*row)[j];
    }
    len *= k;
  }
  for (std::size_t s = 0; s < len; ++s) table[s] += scratch[s];
}

}  // namespace

EnumeratedLaw::EnumeratedLaw(std::size_t k, std::size_t d, std::vector<double> probs, std::size_t cap)
    : k_(k), d_(d), probs_(std::move(probs)) {
  const std::size_t n = joint_state_count(k, d, cap);
  if (probs_.size() != n) {
    throw std::invalid_argument("EnumeratedLaw: table has " + std::to_string(probs_.size()) + " entries, expected " +
                                std::to_string(n));
  }
  double total = 0.0;
  for (double p : probs_) {
    if (!(p >= 0.0)) throw std::invalid_argument("EnumeratedLaw: negative or NaN probability");
    total += p;
  }
  if (std::abs(total - 1.0) > 1e-10) {
    throw std::invalid_argument("EnumeratedLaw: probabilities sum to " + std::to_string(total));
  }
}

EnumeratedLaw EnumeratedLaw::product(const std::vector<Simplex>& marginals, std::size_t cap) {
  if (marginals.empty()) throw std::invalid_argument("EnumeratedLaw::product: no marginals");
  const std::size_t k = marginals.front().size(), d = marginals.size();
  const std::size_t n = joint_state_count(k, d, cap);
  std::vector<double> table(n, 0.0), scratch(n);
  std::vector<const std::vector<double>*> rows;
  for (const auto& m : marginals) rows.push_back(&m.vec());
  add_outer(table, scratch, 1.0, rows, k);
  return EnumeratedLaw(k, d, std::move(table), cap);
}

Simplex EnumeratedLaw::marginal(std::size_t i) const {
  if (i >= d_) throw std::out_of_range("EnumeratedLaw::marginal: coordinate out of range");
  std::vector<double> m(k_, 0.0);
  // Coordinate i cycles with period K^(D-1-i).
  std::size_t stride = 1;
  for (std::size_t j = i + 1; j < d_; ++j) stride *= k_;
  for (std::size_t s = 0; s < probs_.size(); ++s) m[(s / stride) % k_] += probs_[s];
  const double total = std::accumulate(m.begin(), m.end(), 0.0);
  for (double& v : m) v /= total;
  return Simplex(std::move(m));
}

Simplex EnumeratedLaw::conditional(std::size_t i, const DataPoint& rest) const {
  if (i >= d_ || rest.size() != d_) throw std::out_of_range("EnumeratedLaw::conditional: bad coordinate");
  DataPoint z = rest;
  std::vector<double> c(k_);
  double total = 0.0;
  for (std::size_t a = 0; a < k_; ++a) {
    z[i] = a;
    total += (c[a] = (*this)(z));
  }
  if (!(total > 0.0)) throw std::domain_error("EnumeratedLaw::conditional: conditioning event has zero mass");
  for (double& v : c) v /= total;
  return Simplex(std::move(c));
}

double factorization_gap(const EnumeratedLaw& law) {
  const std::size_t k = law.categories(), d = law.dims();
  std::vector<Simplex> marginals;
  for (std::size_t i = 0; i < d; ++i) marginals.push_back(law.marginal(i));
  double gap = 0.0;
  for (std::size_t s = 0; s < law.states(); ++s) {
    const double p = law.probs()[s];
    if (p <= 0.0) continue;
    const auto z = decode_state(s, k, d);
    double log_prod = 0.0;
    for (std::size_t i = 0; i < d; ++i) log_prod += std::log(marginals[i][z[i]]);
    gap += p * (std::log(p) - log_prod);
  }
  return std::max(gap, 0.0);
}

TargetOracle::TargetOracle(const EnumeratedLaw& data, const ForwardProcess& forward, std::size_t t, std::size_t cap)
    : k_(data.categories()), d_(data.dims()), cap_(cap) {
  if (k_ != forward.categories() || d_ != forward.dims()) {
    throw std::invalid_argument("TargetOracle: data law and forward process disagree on K or D");
  }
  check_adjacent(t - 1, t, forward.steps());
  for (std::size_t s = 0; s < data.states(); ++s) {
    if (data.probs()[s] > 0.0) {
      support_.push_back(s);
      weight_.push_back(data.probs()[s]);
    }
  }
  constexpr std::size_t kChunk = 1024;
  for (std::size_t start = 0; start < support_.size(); start += kChunk) {
    const std::size_t m = std::min(kChunk, support_.size() - start);
    std::vector<std::size_t> xs;
    for (std::size_t r = 0; r < m; ++r) {
      const auto x = decode_state(support_[start + r], k_, d_);
      xs.insert(xs.end(), x.begin(), x.end());
    }
    std::vector<std::size_t> both = xs;
    both.insert(both.end(), xs.begin(), xs.end());
    std::vector<std::size_t> ts(m, t - 1);
    ts.resize(2 * m, t);
    const nd::Array u = forward.marginals(both, ts).value();
    auto field = [&](std::size_t row0) {
      MarginalField f;
      for (std::size_t i = 0; i < d_; ++i) {
        const double* p = u.data() + (row0 + i) * k_;
        f.emplace_back(std::vector<double>(p, p + k_));
      }
      return f;
    };
    for (std::size_t r = 0; r < m; ++r) {
      u_s_.push_back(field(r * d_));
      u_t_.push_back(field((m + r) * d_));
    }
  }
}

EnumeratedLaw TargetOracle::data_posterior(const DataPoint& z_t) const {
  if (z_t.size() != d_) throw std::invalid_argument("TargetOracle: latent has wrong dimension");
  std::vector<double> table(joint_state_count(k_, d_, cap_), 0.0);
  double total = 0.0;
  for (std::size_t n = 0; n < support_.size(); ++n) {
    double w = weight_[n];
    for (std::size_t i = 0; i < d_; ++i) w *= u_t_[n][i][z_t[i]];
    table[support_[n]] = w;
    total += w;
  }
  if (!(total > 0.0)) throw std::domain_error("TargetOracle: latent has zero probability under q(z_t)");
  for (double& v : table) v /= total;
  return EnumeratedLaw(k_, d_, std::move(table), cap_);
}

EnumeratedLaw TargetOracle::target(const DataPoint& z_t) const {
  const EnumeratedLaw post = data_posterior(z_t);
  const std::size_t n_states = post.states();
  std::vector<double> table(n_states, 0.0), scratch(n_states);
  std::vector<std::vector<double>> row_store(d_);
  std::vector<const std::vector<double>*> rows(d_);
  for (std::size_t n = 0; n < support_.size(); ++n) {
    const double w = post.probs()[support_[n]];
    if (w <= 0.0) continue;
    for (std::size_t i = 0; i < d_; ++i) {
      row_store[i] = max_coupling_row(u_s_[n][i], u_t_[n][i], z_t[i]).row.vec();
      rows[i] = &row_store[i];
    }
    add_outer(table, scratch, w, rows, k_);
  }
  const double total = std::accumulate(table.begin(), table.end(), 0.0);
  for (double& v : table) v /= total;
  return EnumeratedLaw(k_, d_, std::move(table), cap_);
}

EnumeratedLaw TargetOracle::latent_marginal() const {
  const std::size_t n_states = joint_state_count(k_, d_, cap_);
  std::vector<double> table(n_states, 0.0), scratch(n_states);
  std::vector<const std::vector<double>*> rows(d_);
  for (std::size_t n = 0; n < support_.size(); ++n) {
    for (std::size_t i = 0; i < d_; ++i) rows[i] = &u_t_[n][i].vec();
    add_outer(table, scratch, weight_[n], rows, k_);
  }
  const double total = std::accumulate(table.begin(), table.end(), 0.0);
  for (double& v : table) v /= total;
  return EnumeratedLaw(k_, d_, std::move(table), cap_);
}

EnumeratedLaw induced_target(const EnumeratedLaw& data, const ForwardProcess& forward, std::size_t s, std::size_t t,
                             const DataPoint& z_t, std::size_t cap) {
  check_adjacent(s, t, forward.steps());
  return TargetOracle(data, forward, t, cap).target(z_t);
}

nd::Var expected_step_loss(const FlddModel& model, const DataPoint& x, std::size_t t, std::size_t cap) {
  const std::size_t k = model.config.categories, d = model.config.dims;
  check_adjacent(t - 1, t, model.config.steps);
  if (x.size() != d) throw std::invalid_argument("expected_step_loss: data point has wrong dimension");
  const std::size_t states = joint_state_count(k, d, cap);

  std::vector<std::size_t> xx = x;
  xx.insert(xx.end(), x.begin(), x.end());
  const nd::Var both = model.forward.marginals(xx, std::vector<std::size_t>{t - 1, t});

  std::vector<std::size_t> s_rows(states * d), t_rows(states * d), z(states * d);
  for (std::size_t s = 0; s < states; ++s) {
    const auto zs = decode_state(s, k, d);
    for (std::size_t i = 0; i < d; ++i) {
      s_rows[s * d + i] = i;
      t_rows[s * d + i] = d + i;
      z[s * d + i] = zs[i];
    }
  }
  const nd::Var u_s = nd::index_rows(both, s_rows);
  const nd::Var u_t = nd::index_rows(both, t_rows);

  // q(z_t | x) as a product over coordinates, kept multiplicative so zero
  // factors still pass gradient to the others.
  const nd::Var picked = nd::reshape(nd::gather(u_t, z), {states, d});
  nd::Var q;
  for (std::size_t i = 0; i < d; ++i) {
    const nd::Var col = nd::gather(picked, std::vector<std::size_t>(states, i));
    q = q.defined() ? q * col : col;
  }

  const CouplingTerms terms = coupling_terms(u_s, u_t);
  const nd::Var rows = posterior_rows(terms, z);
  const nd::Var v = model.reverse.probs(z, std::vector<std::size_t>(states, t));
  const nd::Var kl = nd::sum_last(nd::reshape(kl_rows(rows, v), {states, d}));
  return nd::sum(q * kl);
}

std::vector<NamedGrad> exact_reinforce_grad(const FlddModel& model, const DataPoint& x, std::size_t t,
                                            std::vector<NamedVar> params, std::size_t cap) {
  if (params.empty()) params = model.forward.named_parameters();
  auto all = model.parameters();
  for (auto& p : all) p.zero_grad();
  nd::backward(expected_step_loss(model, x, t, cap));
  std::vector<NamedGrad> out;
  for (auto& [name, v] : params) out.push_back({name, v.grad()});
  for (auto& p : all) p.zero_grad();
  return out;
}

FdReport fd_check(const std::function<nd::Var()>& loss, const std::vector<NamedVar>& params, double h,
                  double scale_floor) {
  for (auto [name, v] : params) v.zero_grad();
  nd::backward(loss());
  FdReport report;
  for (auto [name, v] : params) {
    const nd::Array analytic = v.grad();
    v.zero_grad();
    nd::Array& value = v.mutable_value();
    for (std::size_t e = 0; e < value.size(); ++e) {
      const double saved = value[e];
      value[e] = saved + h;
      const double up = loss().item();
      value[e] = saved - h;
      const double down = loss().item();
      value[e] = saved;
      const double numeric = (up - down) / (2.0 * h);
      const double a = analytic[e];
      const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), scale_floor});
      ++report.checked;
      if (err > report.max_rel_error || report.worst.empty()) {
        report.max_rel_error = std::max(report.max_rel_error, err);
        if (err >= report.max_rel_error) report.worst = name + "[" + std::to_string(e) + "]";
      }
    }
  }
  return report;
}

}  // namespace fldd
