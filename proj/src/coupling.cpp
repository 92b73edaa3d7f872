#include "fldd/coupling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace fldd {

namespace {

void require_same_size(const Simplex& a, const Simplex& b) {
  if (a.size() != b.size()) {
    throw CouplingError("coupling: marginals over " + std::to_string(a.size()) + " and " +
                        std::to_string(b.size()) + " categories");
  }
}

bool nearly_equal(const Simplex& a, const Simplex& b) {
  for (std::size_t k = 0; k < a.size(); ++k)
    if (std::abs(a[k] - b[k]) > kCouplingEps) return false;
  return true;
}

// Normalizes away rounding so the row passes Simplex validation.
Simplex make_row(std::vector<double> row) {
  double s = 0.0;
  for (double& v : row) s += (v = std::max(v, 0.0));
  for (double& v : row) v /= s;
  return Simplex(std::move(row));
}

}  // namespace

std::optional<Simplex> deficit_distribution(const Simplex& u_s, const Simplex& u_t) {
  require_same_size(u_s, u_t);
  std::vector<double> d(u_s.size());
  double total = 0.0;
  for (std::size_t j = 0; j < d.size(); ++j) total += (d[j] = std::max(u_s[j] - u_t[j], 0.0));
  if (total <= 0.0) return std::nullopt;
  for (double& v : d) v /= total;
  return make_row(std::move(d));
}

CouplingRow max_coupling_row(const Simplex& u_s, const Simplex& u_t, std::size_t k) {
  require_same_size(u_s, u_t);
  if (k >= u_t.size()) throw CouplingError("max_coupling_row: category out of range");
  if (!(u_t[k] > 0.0)) {
    throw CouplingError("max_coupling_row: conditioning on category " + std::to_string(k) +
                        " which has zero probability under u_t");
  }
  const std::size_t n = u_s.size();
  if (nearly_equal(u_s, u_t)) return {k, Simplex::one_hot(n, k)};
  const auto deficit = deficit_distribution(u_s, u_t);
  std::vector<double> row(n, 0.0);
  const double leave = std::max(u_t[k] - u_s[k], 0.0) / u_t[k];
  if (deficit && leave > 0.0) {
    for (std::size_t j = 0; j < n; ++j) row[j] = leave * (*deficit)[j];
  }
  row[k] += std::min(u_s[k], u_t[k]) / u_t[k];
  return {k, make_row(std::move(row))};
}

std::vector<CouplingRow> coupling_matrix(const Simplex& u_s, const Simplex& u_t) {
  require_same_size(u_s, u_t);
  std::vector<CouplingRow> rows;
  rows.reserve(u_t.size());
  for (std::size_t k = 0; k < u_t.size(); ++k) {
    if (u_t[k] < kCouplingEps) {
      rows.push_back({k, Simplex::one_hot(u_t.size(), k)});
    } else {
      rows.push_back(max_coupling_row(u_s, u_t, k));
    }
  }
  return rows;
}

double expected_stay_mass(const Simplex& u_s, const Simplex& u_t) {
  require_same_size(u_s, u_t);
  double s = 0.0;
  for (std::size_t k = 0; k < u_s.size(); ++k) s += std::min(u_s[k], u_t[k]);
  return s;
}

CouplingTerms coupling_terms(const nd::Var& u_s, const nd::Var& u_t) {
  if (u_s.shape() != u_t.shape()) {
    throw nd::ShapeError("coupling_terms: marginals " + nd::shape_str(u_s.shape()) + " vs " +
                         nd::shape_str(u_t.shape()));
  }
  const nd::Shape shape = u_t.shape();
  const std::size_t rows = u_t.value().rows(), cols = u_t.value().cols();
  const nd::Array& vs = u_s.value();
  const nd::Array& vt = u_t.value();

  CouplingTerms terms;
  std::vector<std::uint8_t> degenerate(vt.size(), 0);
  std::vector<std::uint8_t> identity(vt.size(), 0);
  for (std::size_t r = 0; r < rows; ++r) {
    bool equal = true;
    for (std::size_t c = 0; c < cols; ++c) {
      const std::size_t i = r * cols + c;
      if (vt[i] < kCouplingEps) {
        degenerate[i] = 1;
        ++terms.degenerate;
      }
      equal = equal && std::abs(vs[i] - vt[i]) <= kCouplingEps;
    }
    for (std::size_t c = 0; c < cols; ++c) identity[r * cols + c] = equal || degenerate[r * cols + c];
  }

  const nd::Var ones = nd::Var::constant(nd::Array(shape, 1.0));
  const nd::Var zeros = nd::Var::constant(nd::Array(shape, 0.0));
  const nd::Var safe_t = nd::where(degenerate, ones, u_t);
  terms.stay = nd::where(identity, ones, nd::minimum(u_s, u_t) / safe_t);
  terms.leave = nd::where(identity, zeros, nd::relu(u_t - u_s) / safe_t);
  const nd::Var d = nd::relu(u_s - u_t);
  terms.deficit = d / nd::clamp(nd::sum_last(d), std::numeric_limits<double>::min(),
                                std::numeric_limits<double>::infinity());
  return terms;
}

nd::Var posterior_rows(const CouplingTerms& terms, std::span<const std::size_t> z) {
  const std::size_t cols = terms.stay.value().cols();
  const nd::Var onehot = nd::Var::constant(nd::one_hot(z, cols).reshaped(terms.stay.shape()));
  return onehot * terms.stay + nd::gather(terms.leave, z) * terms.deficit;
}

nd::Var mixed_posterior(const CouplingTerms& terms, const nd::Var& weights) {
  return weights * terms.stay + nd::sum_last(weights * terms.leave) * terms.deficit;
}

}  // namespace fldd
