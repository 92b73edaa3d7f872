#include <cmath>
#include <cstring>

#include "doctest.h"
#include "fldd/ndgrad.hpp"
#include "fldd/network.hpp"
#include "fldd/optim.hpp"
#include "helpers.hpp"

using namespace fldd;
using fldd::test::max_fd_error;
using fldd::test::random_array;

TEST_SUITE("ndgrad") {

TEST_CASE("softmax of equal logits is uniform") {
  const nd::Var p = nd::softmax(nd::Var(nd::Array::from({0, 0, 0})));
  for (std::size_t i = 0; i < 3; ++i) CHECK(p.value()[i] == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
}

TEST_CASE("stop_grad passes the value and blocks the gradient") {
  nd::Var x = nd::Var::parameter(nd::Array::from({1.5, -2.0}));
  const nd::Var y = nd::stop_grad(x);
  CHECK(y.value() == x.value());
  nd::backward(nd::sum(y * y) + nd::sum(x));
  CHECK(x.grad()[0] == 1.0);
  CHECK(x.grad()[1] == 1.0);
}

TEST_CASE("small closed-form results") {
  const nd::Var a(nd::Array({2, 3}, 1.0));
  const nd::Var b(nd::Array({3, 1}, 1.0));
  const nd::Var c = nd::matmul(a, b);
  CHECK(c.shape() == nd::Shape{2, 1});
  CHECK(c.value()[0] == 3.0);
  CHECK(c.value()[1] == 3.0);

  nd::Var x = nd::Var::parameter(nd::Array::from({1, 2}));
  nd::backward(nd::sum(x * x));
  CHECK(x.grad()[0] == 2.0);
  CHECK(x.grad()[1] == 4.0);
}

TEST_CASE("KL of a softmax against itself has zero gradient") {
  Rng rng(1);
  nd::Var a = nd::Var::parameter(random_array({2, 4}, rng));
  const nd::Var p = nd::softmax(a);
  const nd::Var kl = nd::sum(p * (nd::log(p) - nd::log(nd::stop_grad(p))));
  nd::backward(kl);
  const nd::Array g_a = a.grad();
  for (double g : g_a.values()) CHECK(std::abs(g) < 1e-12);
}

TEST_CASE("every op matches finite differences") {
  Rng rng(2);
  const auto weights = random_array({3, 4}, rng);
  auto weighted = [&](const nd::Var& y) { return nd::sum(y * nd::Var(weights)); };
  auto p = [&](nd::Shape s, double lo = -2.0, double hi = 2.0) {
    return nd::Var::parameter(random_array(std::move(s), rng, lo, hi));
  };
  // Keep inputs away from kinks and poles.
  auto away_from = [&](nd::Shape s, double point, double gap) {
    nd::Array a = random_array(std::move(s), rng);
    for (double& v : a.values())
      if (std::abs(v - point) < gap) v = point + (v < point ? -gap : gap);
    return nd::Var::parameter(a);
  };
  using Vs = std::vector<nd::Var>;
  const double tol = 1e-5;

  CHECK(max_fd_error([&](const Vs& v) { return weighted(v[0] + v[1]); }, {p({3, 4}), p({4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(v[0] - v[1]); }, {p({3, 4}), p({3, 1})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(v[0] * v[1]); }, {p({3, 4}), p({})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(v[0] / v[1]); }, {p({3, 4}), p({3, 4}, 0.5, 2.0)}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::minimum(v[0], v[1])); },
                     {p({3, 4}, 0.0, 1.0), p({3, 4}, 1.2, 2.0)}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::neg(v[0])); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::exp(v[0])); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::log(v[0])); }, {p({3, 4}, 0.2, 2.0)}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::gelu(v[0])); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::relu(v[0])); }, {away_from({3, 4}, 0.0, 0.05)}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::sigmoid(v[0])); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::clamp(v[0], -1.0, 1.0)); },
                     {away_from({3, 4}, 1.0, 0.05)}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return nd::sum(v[0]) * nd::mean(v[0]); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return nd::sum(nd::sum_last(v[0]) * nd::sum_last(v[0])); }, {p({3, 4})}) <
        tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::softmax(v[0])); }, {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::matmul(v[0], v[1])); }, {p({3, 5}), p({5, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::reshape(v[0], {3, 4})); }, {p({2, 6})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::broadcast_to(v[0], {3, 4})); }, {p({1, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::concat({v[0], v[1]})); }, {p({3, 1}), p({3, 3})}) < tol);

  const std::vector<std::size_t> cols = {2, 0, 3}, rows = {1, 1, 0};
  CHECK(max_fd_error([&](const Vs& v) { return nd::sum(nd::gather(v[0], cols) * nd::gather(v[0], cols)); },
                     {p({3, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::index_rows(v[0], rows)); }, {p({2, 4})}) < tol);
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::scatter_rows(v[0], rows, 3)); }, {p({3, 4})}) < tol);
  std::vector<std::uint8_t> mask(12);
  for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = i % 3 == 0;
  CHECK(max_fd_error([&](const Vs& v) { return weighted(nd::where(mask, v[0], v[1] * v[1])); },
                     {p({3, 4}), p({3, 4})}) < tol);
}

TEST_CASE("three-layer network gradient matches finite differences") {
  Rng rng(3);
  NetSpec spec;
  spec.input_dim = 4;
  spec.output_dim = 3;
  spec.width = 6;
  spec.depth = 3;
  spec.time_dim = 4;
  Mlp net(spec, rng);
  net.output_weight().mutable_value() = random_array(net.output_weight().shape(), rng, -0.5, 0.5);
  const nd::Var input(random_array({5, 4}, rng));
  const std::vector<std::size_t> t = {0, 1, 2, 3, 4};
  std::vector<nd::Var> params = net.parameters();
  const nd::Var w(random_array({5, 3}, rng));
  const double err =
      max_fd_error([&](const std::vector<nd::Var>&) { return nd::sum(nd::softmax(net.forward(input, t)) * w); }, params);
  CHECK(err < 1e-5);
}

TEST_CASE("backward needs a scalar root") {
  nd::Var x = nd::Var::parameter(nd::Array::from({1, 2}));
  CHECK_THROWS_AS(nd::backward(x * 2.0), nd::ShapeError);
}

TEST_CASE("shape errors name the op and both shapes") {
  const nd::Var a(nd::Array({2, 3})), b(nd::Array({4, 5}));
  try {
    nd::add(a, b);
    FAIL("expected a shape error");
  } catch (const nd::ShapeError& e) {
    const std::string what = e.what();
    CHECK(what.find("add") != std::string::npos);
    CHECK(what.find("(2,3)") != std::string::npos);
    CHECK(what.find("(4,5)") != std::string::npos);
  }
  CHECK_THROWS_AS(nd::matmul(a, a), nd::ShapeError);
}

TEST_CASE("leaf gradients accumulate across backward calls") {
  nd::Var x = nd::Var::parameter(nd::Array::from({3.0}));
  nd::backward(nd::sum(x * 2.0));
  nd::backward(nd::sum(x * 2.0));
  CHECK(x.grad()[0] == 4.0);
  x.zero_grad();
  CHECK(x.grad()[0] == 0.0);
}

TEST_CASE("repeated evaluation is bit-identical") {
  Rng rng(4);
  const nd::Array a = random_array({4, 7}, rng), b = random_array({7, 3}, rng);
  auto run = [&] {
    nd::Var va = nd::Var::parameter(a);
    nd::backward(nd::sum(nd::softmax(nd::matmul(va, nd::Var(b))) * 3.0));
    return va.grad();
  };
  const nd::Array g1 = run(), g2 = run();
  CHECK(std::memcmp(g1.data(), g2.data(), g1.size() * sizeof(double)) == 0);
}

TEST_CASE("AdamW takes a first step of size lr against the gradient") {
  nd::Var w = nd::Var::parameter(nd::Array::from({1.0, -1.0}));
  AdamWConfig config;
  config.weight_decay = 0.0;
  AdamW opt({w}, config);
  CHECK(opt.config().lr == 2e-4);
  nd::backward(nd::sum(w * nd::Var(nd::Array::from({0.3, -5.0}))));
  opt.step();
  CHECK(w.value()[0] == doctest::Approx(1.0 - 2e-4).epsilon(1e-6));
  CHECK(w.value()[1] == doctest::Approx(-1.0 + 2e-4).epsilon(1e-6));
}

TEST_CASE("AdamW decreases a constant-gradient loss every step") {
  nd::Var w = nd::Var::parameter(nd::Array::from({0.5}));
  AdamWConfig config;
  config.weight_decay = 0.0;
  config.lr = 1e-2;
  AdamW opt({w}, config);
  double previous = w.value()[0];
  for (int i = 0; i < 50; ++i) {
    opt.zero_grad();
    nd::backward(nd::sum(w * 2.0));
    opt.step();
    CHECK(w.value()[0] < previous);
    previous = w.value()[0];
  }
}

TEST_CASE("gradient clipping rescales to the requested norm") {
  nd::Var a = nd::Var::parameter(nd::Array::from({3.0})), b = nd::Var::parameter(nd::Array::from({4.0}));
  nd::backward(nd::sum(a * a * 0.5) + nd::sum(b * b * 0.5));
  CHECK(clip_grad_norm({a, b}, 1.0) == doctest::Approx(5.0));
  CHECK(grad_norm({a, b}) == doctest::Approx(1.0));
}

}
