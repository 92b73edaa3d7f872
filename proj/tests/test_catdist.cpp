#include <cmath>

#include "doctest.h"
#include "fldd/catdist.hpp"
#include "helpers.hpp"

using namespace fldd;
using fldd::test::chi2_999;
using fldd::test::chi_square;

TEST_SUITE("catdist") {

TEST_CASE("a one-hot simplex always samples its category") {
  Rng rng(1);
  const Simplex p({1.0, 0.0, 0.0});
  for (int i = 0; i < 1000; ++i) CHECK(sample_cat(p, rng) == 0);
}

TEST_CASE("a fair coin lands within three sigma") {
  Rng rng(2);
  const int n = 100000;
  int ones = 0;
  for (int i = 0; i < n; ++i) ones += sample_cat(Simplex({0.5, 0.5}), rng) == 1;
  CHECK(std::abs(ones - n / 2) < 3.0 * std::sqrt(n * 0.25));
}

TEST_CASE("sampling frequencies pass a chi-square test") {
  Rng rng(3);
  const std::vector<double> probs = {0.2, 0.3, 0.5};
  std::vector<double> counts(3, 0.0);
  for (int i = 0; i < 100000; ++i) counts[sample_cat(Simplex(probs), rng)] += 1.0;
  CHECK(chi_square(counts, probs) < chi2_999(2));

  std::vector<double> skew = {0.01, 0.0, 0.09, 0.6, 0.3};
  std::vector<double> skew_counts(5, 0.0);
  for (int i = 0; i < 100000; ++i) skew_counts[sample_cat(Simplex(skew), rng)] += 1.0;
  CHECK(skew_counts[1] == 0.0);
  CHECK(chi_square(skew_counts, skew) < chi2_999(3));
}

TEST_CASE("invalid simplexes are rejected") {
  CHECK_THROWS_AS(Simplex({0.5, 0.6}), InvalidSimplex);
  CHECK_THROWS_AS(Simplex({-0.1, 1.1}), InvalidSimplex);
  CHECK_THROWS_AS(Simplex(std::vector<double>{}), InvalidSimplex);
  CHECK_NOTHROW(Simplex({0.5, 0.5 + 1e-10}));
}

TEST_CASE("KL closed forms") {
  CHECK(kl_cat(Simplex({0.5, 0.5}), Simplex({0.5, 0.5})) == 0.0);
  CHECK(kl_cat(Simplex({1, 0}), Simplex({0.5, 0.5})) == doctest::Approx(std::log(2.0)).epsilon(1e-14));
  // 0.25 log(0.25 / 0.75) + 0.75 log(0.75 / 0.25) = 0.5 log 3
  CHECK(kl_cat(Simplex({0.25, 0.75}), Simplex({0.75, 0.25})) == doctest::Approx(0.5493061443340549).epsilon(1e-14));
  CHECK(std::isinf(kl_cat(Simplex({0.5, 0.5}), Simplex({1, 0}))));
}

TEST_CASE("KL is nonnegative on random pairs") {
  Rng rng(4);
  for (int n = 0; n < 500; ++n) {
    const std::size_t k = 2 + rng() % 6;
    std::vector<double> a(k), b(k);
    double sa = 0, sb = 0;
    for (std::size_t i = 0; i < k; ++i) {
      a[i] = rng.uniform();
      b[i] = rng.uniform() + 1e-3;
      sa += a[i];
      sb += b[i];
    }
    for (std::size_t i = 0; i < k; ++i) {
      a[i] /= sa;
      b[i] /= sb;
    }
    CHECK(kl_cat(Simplex(a), Simplex(b)) >= 0.0);
  }
}

TEST_CASE("floor_renormalize keeps a simplex and lifts zeros") {
  const auto p = floor_renormalize(std::vector<double>{1.0, 0.0, 0.0});
  CHECK(is_simplex(p));
  CHECK(p[1] > 0.0);
  CHECK(p[1] == p[2]);
}

TEST_CASE("Concrete temperature limits") {
  Rng rng(5);
  const std::vector<double> logits = {0.3, -1.0, 2.0};
  const auto hot = sample_concrete(logits, 1e6, rng);
  for (double w : hot.weights) CHECK(w == doctest::Approx(1.0 / 3.0).epsilon(1e-4));
  for (int n = 0; n < 100; ++n) {
    const auto cold = sample_concrete(logits, 1e-6, rng);
    int ones = 0;
    for (double w : cold.weights) ones += w > 1.0 - 1e-12;
    CHECK(ones == 1);
  }
  CHECK_THROWS(sample_concrete(logits, 0.0, rng));
  CHECK_THROWS(sample_concrete(logits, -1.0, rng));
}

TEST_CASE("Concrete argmax follows softmax of the logits") {
  Rng rng(6);
  const std::vector<double> logits = {0.0, std::log(2.0), std::log(3.0), std::log(4.0)};
  const std::vector<double> probs = {0.1, 0.2, 0.3, 0.4};
  std::vector<double> counts(4, 0.0);
  for (int i = 0; i < 100000; ++i) {
    const auto s = sample_concrete(logits, 0.5, rng);
    counts[std::max_element(s.weights.begin(), s.weights.end()) - s.weights.begin()] += 1.0;
  }
  CHECK(chi_square(counts, probs) < chi2_999(3));
}

TEST_CASE("Concrete weights are differentiable in the logits") {
  Rng rng(7);
  const nd::Array noise = gumbel_noise({3, 4}, rng);
  const nd::Array w = fldd::test::random_array({3, 4}, rng);
  nd::Var logits = nd::Var::parameter(fldd::test::random_array({3, 4}, rng));
  const double err = fldd::test::max_fd_error(
      [&](const std::vector<nd::Var>& v) { return nd::sum(concrete_weights(v[0], noise, 0.7) * nd::Var(w)); },
      {logits});
  CHECK(err < 1e-4);
}

TEST_CASE("differentiable KL rows agree with kl_cat") {
  const nd::Var q(nd::Array({2, 3}, {0.2, 0.3, 0.5, 1.0, 0.0, 0.0}));
  const nd::Var p(nd::Array({2, 3}, {0.1, 0.1, 0.8, 0.25, 0.25, 0.5}));
  const nd::Var kl = kl_rows(q, p);
  CHECK(kl.value()[0] == doctest::Approx(kl_cat(Simplex({0.2, 0.3, 0.5}), Simplex({0.1, 0.1, 0.8}))));
  CHECK(kl.value()[1] == doctest::Approx(std::log(4.0)));
}

}
