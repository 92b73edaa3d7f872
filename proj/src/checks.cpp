#include "fldd/checks.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "fldd/coupling.hpp"
#include "fldd/objective.hpp"
#include "fldd/oracle.hpp"

namespace fldd {

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point start) {
  return std::chrono::duration<double>(Clock::now() - start).count();
}

std::string fmt(const char* format, double a, double b = 0.0) {
  char buf[160];
  std::snprintf(buf, sizeof buf, format, a, b);
  return buf;
}

Simplex random_simplex(std::size_t k, Rng& rng, double zero_rate) {
  std::vector<double> p(k);
  double total = 0.0;
  for (auto& v : p) {
    v = rng.uniform() < zero_rate ? 0.0 : -std::log(1.0 - rng.uniform());
    total += v;
  }
  if (total == 0.0) {
    p[rng() % k] = 1.0;
    total = 1.0;
  }
  for (auto& v : p) v /= total;
  return Simplex(std::move(p));
}

struct Instance {
  std::size_t k, d;
};

constexpr Instance kGradInstances[] = {{2, 1}, {3, 1}, {2, 2}, {3, 2}};

}  // namespace

ModelConfig oracle_model_config(std::size_t k, std::size_t d, std::size_t steps, ForwardKind kind) {
  ModelConfig c;
  c.categories = k;
  c.dims = d;
  c.steps = steps;
  c.forward = kind;
  if (kind == ForwardKind::Masked || kind == ForwardKind::MaskedFixed) {
    c.prior.kind = PriorKind::Absorbing;
    c.prior.mask = k - 1;
  }
  c.net.width = 8;
  c.net.depth = 2;
  c.net.time_dim = 4;
  return c;
}

void randomize_outputs(FlddModel& model, Rng& rng, double scale) {
  auto fill = [&](nd::Var& v) {
    for (double& x : v.mutable_value().values()) x = scale * rng.normal();
  };
  if (model.forward.learnable()) {
    fill(model.forward.network().output_weight());
    fill(model.forward.network().output_bias());
  }
  fill(model.reverse.network().output_weight());
  fill(model.reverse.network().output_bias());
}

CheckResult check_coupling(std::size_t pairs, std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed, 101);
  double consistency = 0.0, stay = 0.0;
  bool rows_valid = true;
  for (std::size_t n = 0; n < pairs; ++n) {
    const std::size_t k = 2 + rng() % 15;
    const double zero_rate = n % 4 == 0 ? 0.3 : 0.0;
    const Simplex u_s = random_simplex(k, rng, zero_rate), u_t = random_simplex(k, rng, zero_rate);
    const auto rows = coupling_matrix(u_s, u_t);
    double p_stay = 0.0;
    for (std::size_t j = 0; j < k; ++j) {
      double mass = 0.0;
      for (std::size_t a = 0; a < k; ++a) mass += u_t[a] * rows[a].row[j];
      consistency = std::max(consistency, std::abs(mass - u_s[j]));
      p_stay += u_t[j] * rows[j].row[j];
      for (std::size_t a = 0; a < k; ++a) {
        if (a != j && u_s[a] >= u_t[a] && rows[a].row[j] != 0.0) rows_valid = false;
      }
    }
    stay = std::max(stay, std::abs(p_stay - expected_stay_mass(u_s, u_t)));
  }
  CheckResult r{"coupling: marginal consistency and maximal stay mass", false, "", seconds_since(start)};
  r.passed = consistency <= 1e-12 && stay <= 1e-12 && rows_valid && r.seconds < 5.0;
  r.detail = fmt("max consistency error %.3g, max stay-mass error %.3g", consistency, stay) +
             fmt(" over %.0f pairs in %.2f s", static_cast<double>(pairs), r.seconds);
  if (!rows_valid) r.detail += "; off-diagonal mass leaving a non-excess bin";
  return r;
}

CheckResult check_relaxed_gradients(std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed, 102);
  double worst = 0.0;
  std::string where;
  for (const auto& inst : kGradInstances) {
    Rng init(seed, 200 + inst.k * 10 + inst.d);
    FlddModel model(oracle_model_config(inst.k, inst.d, 3), init);
    randomize_outputs(model, rng);
    std::vector<std::size_t> x, t = {1, 2, 3};
    for (std::size_t n = 0; n < t.size() * inst.d; ++n) x.push_back(rng() % inst.k);
    const nd::Array noise = gumbel_noise({t.size() * inst.d, inst.k}, rng);
    const auto report = fd_check([&] { return diff_loss_relaxed(model, x, t, 0.7, noise).surrogate; },
                                 model.named_parameters());
    if (report.max_rel_error >= worst) {
      worst = report.max_rel_error;
      where = "K=" + std::to_string(inst.k) + " D=" + std::to_string(inst.d) + " " + report.worst;
    }
  }
  CheckResult r{"gradients: relaxed objective vs finite differences", worst < 1e-4, "", seconds_since(start)};
  r.detail = fmt("max relative error %.3g (limit 1e-4)", worst) + " at " + where;
  return r;
}

CheckResult check_reinforce_expectation_gradients(std::uint64_t seed) {
  const auto start = Clock::now();
  Rng rng(seed, 103);
  double worst = 0.0;
  std::string where;
  for (const auto& inst : kGradInstances) {
    Rng init(seed, 300 + inst.k * 10 + inst.d);
    FlddModel model(oracle_model_config(inst.k, inst.d, 3), init);
    randomize_outputs(model, rng);
    DataPoint x(inst.d);
    for (auto& v : x) v = rng() % inst.k;
    for (std::size_t t = 1; t <= 3; ++t) {
      const auto report = fd_check([&] { return expected_step_loss(model, x, t); }, model.named_parameters());
      if (report.max_rel_error >= worst) {
        worst = report.max_rel_error;
        where = "K=" + std::to_string(inst.k) + " D=" + std::to_string(inst.d) + " t=" + std::to_string(t) + " " +
                report.worst;
      }
    }
  }
  CheckResult r{"gradients: enumerated score-function expectation vs finite differences", worst < 1e-6, "",
                seconds_since(start)};
  r.detail = fmt("max relative error %.3g (limit 1e-6)", worst) + " at " + where;
  return r;
}

CheckResult check_estimator_unbiased(std::size_t samples, std::uint64_t seed) {
  const auto start = Clock::now();
  constexpr std::size_t kBatch = 1000;
  const std::size_t batches = std::max<std::size_t>(samples / kBatch, 2);
  Rng init(seed, 104);
  FlddModel model(oracle_model_config(2, 1, 2), init);
  Rng rng(seed, 105);
  randomize_outputs(model, rng);
  const DataPoint x = {1};
  const auto params = model.forward.named_parameters();
  const auto all = model.parameters();

  double worst_z = 0.0;
  std::string where;
  std::size_t compared = 0;
  for (std::size_t t = 1; t <= 2; ++t) {
    const auto exact = exact_reinforce_grad(model, x, t);
    for (const double baseline : {0.0, 0.5}) {
      std::vector<std::vector<double>> sum(params.size()), sum_sq(params.size());
      for (std::size_t i = 0; i < params.size(); ++i) {
        sum[i].assign(params[i].second.size(), 0.0);
        sum_sq[i].assign(params[i].second.size(), 0.0);
      }
      const std::vector<std::size_t> xs(kBatch, x[0]), ts(kBatch, t);
      DiffLossOptions options;
      options.baseline = baseline;
      for (std::size_t b = 0; b < batches; ++b) {
        for (auto p : all) p.zero_grad();
        nd::backward(diff_loss_reinforce(model, xs, ts, rng, options).surrogate);
        for (std::size_t i = 0; i < params.size(); ++i) {
          const nd::Array g = params[i].second.grad();
          for (std::size_t e = 0; e < g.size(); ++e) {
            sum[i][e] += g[e];
            sum_sq[i][e] += g[e] * g[e];
          }
        }
      }
      for (auto p : all) p.zero_grad();
      const double nb = static_cast<double>(batches);
      for (std::size_t i = 0; i < params.size(); ++i) {
        for (std::size_t e = 0; e < sum[i].size(); ++e) {
          const double mean = sum[i][e] / nb;
          const double var = std::max(sum_sq[i][e] / nb - mean * mean, 0.0) * nb / (nb - 1.0);
          const double se = std::sqrt(var / nb);
          const double err = std::abs(mean - exact[i].grad[e]);
          double z = 0.0;
          if (se > 0.0) {
            z = err / se;
          } else if (err > 1e-12) {
            z = INFINITY;
          }
          ++compared;
          if (z >= worst_z) {
            worst_z = z;
            where = params[i].first + "[" + std::to_string(e) + "] t=" + std::to_string(t) +
                    fmt(" baseline=%.2g", baseline);
          }
        }
      }
    }
  }
  CheckResult r{"estimators: score-function mean gradient matches the enumerated gradient", worst_z < 4.0, "",
                seconds_since(start)};
  r.detail = fmt("max |z| %.3g over %.0f parameter entries", worst_z, static_cast<double>(compared)) + fmt(
      " (limit 4, %.0f samples per case)", static_cast<double>(batches * kBatch)) + " at " + where;
  return r;
}

CheckResult check_bounds_at_init(std::uint64_t seed) {
  const auto start = Clock::now();
  struct Case {
    std::size_t k, d, steps;
    ForwardKind kind;
    bool monotone;
  };
  const Case cases[] = {{3, 2, 2, ForwardKind::Learned, false}, {2, 3, 3, ForwardKind::Learned, false},
                        {4, 2, 1, ForwardKind::Learned, false}, {3, 2, 2, ForwardKind::Fixed, false},
                        {3, 2, 3, ForwardKind::Masked, false},  {3, 2, 3, ForwardKind::Masked, true},
                        {3, 3, 2, ForwardKind::MaskedFixed, false}};
  Rng rng(seed, 106);
  double worst = INFINITY;
  std::size_t audited = 0;
  for (const auto& c : cases) {
    Rng init(seed, 400 + audited);
    auto config = oracle_model_config(c.k, c.d, c.steps, c.kind);
    config.monotone_mask = c.monotone;
    FlddModel model(config, init);
    randomize_outputs(model, rng);
    const auto law = exact_model_law(model.reverse);
    BoundEvaluator bound(model);
    for (std::size_t s = 0; s < law.size(); ++s) {
      const auto x = decode_state(s, c.k, c.d);
      const double slack = bound(x, rng).total() + std::log(law[s]);
      worst = std::min(worst, slack);
    }
    ++audited;
  }
  CheckResult r{"bounds: variational bound >= exact NLL at initialization", worst >= -1e-9, "", seconds_since(start)};
  r.detail = fmt("min(bound - NLL) %.3g over %.0f models, every joint state", worst, static_cast<double>(audited));
  return r;
}

std::vector<std::string> suite_names() { return {"coupling", "gradients", "estimators", "bounds", "all"}; }

std::vector<CheckResult> run_suite(const std::string& suite, std::uint64_t seed) {
  const bool all = suite == "all";
  const auto names = suite_names();
  if (std::find(names.begin(), names.end(), suite) == names.end()) {
    throw std::invalid_argument("unknown suite '" + suite + "'");
  }
  std::vector<CheckResult> out;
  if (all || suite == "coupling") out.push_back(check_coupling(1000, seed));
  if (all || suite == "gradients") {
    out.push_back(check_relaxed_gradients(seed));
    out.push_back(check_reinforce_expectation_gradients(seed));
  }
  if (all || suite == "estimators") out.push_back(check_estimator_unbiased(100000, seed));
  if (all || suite == "bounds") out.push_back(check_bounds_at_init(seed));
  return out;
}

}  // namespace fldd
