#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <vector>

#include "fldd/ndgrad.hpp"
#include "fldd/rng.hpp"

namespace fldd::test {

inline nd::Array random_array(nd::Shape shape, Rng& rng, double lo = -2.0, double hi = 2.0) {
  nd::Array a(std::move(shape));
  for (double& v : a.values()) v = lo + (hi - lo) * rng.uniform();
  return a;
}

// Central differences of f over every entry of every input, against autodiff.
inline double max_fd_error(const std::function<nd::Var(const std::vector<nd::Var>&)>& f,
                           std::vector<nd::Var> inputs, double h = 1e-6) {
  for (auto& v : inputs) v.zero_grad();
  nd::backward(f(inputs));
  double worst = 0.0;
  for (auto& v : inputs) {
    const nd::Array g = v.grad();
    for (std::size_t e = 0; e < v.size(); ++e) {
      const double keep = v.value()[e];
      v.mutable_value()[e] = keep + h;
      const double up = f(inputs).item();
      v.mutable_value()[e] = keep - h;
      const double down = f(inputs).item();
      v.mutable_value()[e] = keep;
      const double fd = (up - down) / (2.0 * h);
      const double scale = std::max({std::abs(fd), std::abs(g[e]), 1e-3});
      worst = std::max(worst, std::abs(fd - g[e]) / scale);
    }
  }
  return worst;
}

// Chi-square statistic of observed counts against expected probabilities.
inline double chi_square(const std::vector<double>& counts, const std::vector<double>& probs) {
  double n = 0.0;
  for (double c : counts) n += c;
  double stat = 0.0;
  for (std::size_t i = 0; i < counts.size(); ++i) {
    if (probs[i] == 0.0) continue;
    const double e = n * probs[i];
    stat += (counts[i] - e) * (counts[i] - e) / e;
  }
  return stat;
}

// 0.999 quantiles of chi-square with 1..9 degrees of freedom.
inline double chi2_999(std::size_t dof) {
  static const double q[] = {0.0, 10.828, 13.816, 16.266, 18.467, 20.515, 22.458, 24.322, 26.124, 27.877};
  return q[dof];
}

}  // namespace fldd::test
