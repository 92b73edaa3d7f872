#include <cmath>

#include "doctest.h"
#include "fldd/checks.hpp"
#include "fldd/coupling.hpp"
#include "fldd/objective.hpp"
#include "fldd/oracle.hpp"
#include "helpers.hpp"

using namespace fldd;

namespace {

FlddModel random_model(std::size_t k, std::size_t d, std::size_t steps, std::uint64_t seed,
                       ForwardKind kind = ForwardKind::Learned) {
  Rng rng(seed);
  FlddModel m(oracle_model_config(k, d, steps, kind), rng);
  randomize_outputs(m, rng);
  return m;
}

std::vector<double> grads_of(const FlddModel& m, const nd::Var& loss) {
  for (auto p : m.parameters()) p.zero_grad();
  nd::backward(loss);
  std::vector<double> out;
  for (auto& p : m.parameters()) {
    const nd::Array g = p.grad();
    out.insert(out.end(), g.values().begin(), g.values().end());
  }
  return out;
}

}  // namespace

TEST_SUITE("objective") {

TEST_CASE("the score-function surrogate evaluates to the plain loss") {
  FlddModel m = random_model(3, 2, 3, 1);
  Rng rng(2);
  const std::vector<std::size_t> x = {0, 2, 1, 1, 2, 2}, t = {1, 2, 3};
  DiffLossOptions options;
  options.time_weight = 3.0;
  options.baseline = 0.7;
  const DiffLoss loss = diff_loss_reinforce(m, x, t, rng, options);
  double mean = 0.0;
  for (double v : loss.kl) mean += v / 3.0;
  CHECK(loss.value == doctest::Approx(3.0 * mean).epsilon(1e-14));
}

TEST_CASE("deterministic marginals reduce the surrogate to the pathwise gradient") {
  FlddModel m = random_model(3, 2, 3, 3);
  // u(x, 2) = onehot(x): all blend weight on the data term at t = 2.
  auto& blend = m.forward.blend_logits().mutable_value();
  blend.at(2, 0) = 0.0;
  blend.at(2, 1) = -1000.0;
  blend.at(2, 2) = -1000.0;
  const std::vector<std::size_t> x = {1, 2}, t = {2};
  const std::vector<std::size_t>& z = x;  // the only latent with mass

  DiffLossOptions with_baseline;
  with_baseline.baseline = 5.0;
  const auto g0 = grads_of(m, diff_loss_reinforce(m, x, t, z).surrogate);
  const auto g1 = grads_of(m, diff_loss_reinforce(m, x, t, z, with_baseline).surrogate);

  // Pathwise loss assembled from the public pieces.
  const std::vector<std::size_t> s = {1};
  const auto terms = coupling_terms(m.forward.marginals(x, s), m.forward.marginals(x, t));
  const nd::Var direct = nd::sum(kl_rows(posterior_rows(terms, z), m.reverse.probs(z, t)));
  const auto g2 = grads_of(m, direct);
  REQUIRE(g0.size() == g2.size());
  double norm = 0.0;
  for (std::size_t e = 0; e < g0.size(); ++e) {
    CHECK(g0[e] == doctest::Approx(g2[e]).epsilon(1e-12).scale(1e-9));
    CHECK(g1[e] == doctest::Approx(g2[e]).epsilon(1e-12).scale(1e-9));
    norm += std::abs(g2[e]);
  }
  CHECK(norm > 0.0);
}

TEST_CASE("the relaxed loss approaches the hard loss at low temperature") {
  FlddModel m = random_model(3, 2, 3, 4);
  Rng rng(5);
  const std::vector<std::size_t> x = {0, 2, 2, 1}, t = {2, 3};
  for (int rep = 0; rep < 10; ++rep) {
    const nd::Array noise = gumbel_noise({4, 3}, rng);
    const nd::Array logits = concrete_logits(m.forward.marginals(x, t)).value();
    std::vector<std::size_t> z(4);
    for (std::size_t r = 0; r < 4; ++r) {
      double best = -INFINITY;
      for (std::size_t j = 0; j < 3; ++j) {
        const double v = logits.at(r, j) + noise.at(r, j);
        if (v > best) {
          best = v;
          z[r] = j;
        }
      }
    }
    const double relaxed = diff_loss_relaxed(m, x, t, 1e-6, noise).value;
    const double hard = diff_loss_reinforce(m, x, t, z).value;
    CHECK(std::abs(relaxed - hard) < 1e-3);
  }
}

TEST_CASE("a reverse model matching the posterior gives zero relaxed loss") {
  // T = 1: every posterior row is onehot(x) whatever the relaxed z_1.
  Rng rng(6);
  FlddModel m(oracle_model_config(3, 2, 1), rng);
  const std::vector<std::size_t> x = {2, 0}, t = {1};
  auto& bias = m.reverse.network().output_bias().mutable_value();
  for (std::size_t i = 0; i < 2; ++i) bias[i * 3 + x[i]] = 60.0;
  const DiffLoss loss = diff_loss_relaxed(m, x, t, 0.5, rng);
  CHECK(loss.value >= 0.0);
  CHECK(loss.value < 1e-6);
}

TEST_CASE("gradient and estimator oracles") {
  CHECK(check_relaxed_gradients(0).passed);
  CHECK(check_reinforce_expectation_gradients(0).passed);
  const auto unbiased = check_estimator_unbiased(100000, 0);
  INFO(unbiased.detail);
  CHECK(unbiased.passed);
}

TEST_CASE("single-step bound equals the direct expectation") {
  FlddModel m = random_model(3, 2, 1, 7);
  const DataPoint x = {1, 2};
  const auto bound = full_bound(m, x);
  CHECK(bound.l_rec == 0.0);
  CHECK(bound.l_prior == 0.0);
  // z_1 ~ uniform prior; KL(onehot(x) || v(z_1)) = -sum_i log v_i(z_1)[x_i].
  double direct = 0.0;
  for (std::size_t s = 0; s < 9; ++s) {
    const auto dist = m.reverse.reverse_dist({decode_state(s, 3, 2), 1});
    direct -= (std::log(dist[0][x[0]]) + std::log(dist[1][x[1]])) / 9.0;
  }
  CHECK(bound.total() == doctest::Approx(direct).epsilon(1e-12));
}

TEST_CASE("a factorized single-step model has a tight bound") {
  Rng rng(8);
  FlddModel m(oracle_model_config(3, 2, 1), rng);
  auto& bias = m.reverse.network().output_bias().mutable_value();
  for (double& v : bias.values()) v = rng.normal();
  const auto law = exact_model_law(m.reverse);
  for (std::size_t s = 0; s < 9; ++s) {
    const DataPoint x = decode_state(s, 3, 2);
    CHECK(full_bound(m, x).total() == doctest::Approx(-std::log(law[s])).epsilon(1e-12));
  }
}

TEST_CASE("bounds dominate the exact NLL at initialization") {
  const auto r = check_bounds_at_init(0);
  INFO(r.detail);
  CHECK(r.passed);
}

TEST_CASE("Monte Carlo bound agrees with enumeration") {
  FlddModel m = random_model(3, 2, 2, 9);
  const DataPoint x = {0, 1};
  const double exact = full_bound(m, x).total();
  BoundOptions mc;
  mc.cap = 1;
  mc.mc_samples = 20000;
  BoundEvaluator eval(m, mc);
  CHECK(!eval.exact());
  Rng rng(10);
  CHECK(eval(x, rng).total() == doctest::Approx(exact).epsilon(0.02));
}

TEST_CASE("temperature schedule") {
  const TauSchedule tau(100);
  CHECK(tau(0) == 1.0);
  CHECK(tau(100) == 1e-3);
  CHECK(tau(5000) == 1e-3);
  CHECK(tau(50) == doctest::Approx(std::sqrt(1e-3)).epsilon(1e-12));
  for (std::size_t n = 1; n <= 100; ++n) CHECK(tau(n) < tau(n - 1));
}

TEST_CASE("moving-average baseline") {
  EmaBaseline b(0.9);
  CHECK(b.value() == 0.0);
  b.update(2.0);
  CHECK(b.value() == 2.0);
  b.update(4.0);
  CHECK(b.value() == doctest::Approx(2.2));
}

TEST_CASE("timesteps outside [1, T] are rejected") {
  FlddModel m = random_model(2, 1, 2, 11);
  Rng rng(12);
  const std::vector<std::size_t> x = {0}, t0 = {0}, t3 = {3};
  CHECK_THROWS_AS(diff_loss_reinforce(m, x, t0, rng), std::out_of_range);
  CHECK_THROWS_AS(diff_loss_relaxed(m, x, t3, 0.5, rng), std::out_of_range);
}

}
