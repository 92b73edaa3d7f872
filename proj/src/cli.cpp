#include "fldd/cli.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "fldd/checkpoint.hpp"
#include "fldd/checks.hpp"
#include "fldd/config.hpp"
#include "fldd/io.hpp"
#include "fldd/trainer.hpp"

namespace fldd::cli {

namespace {

namespace fs = std::filesystem;

std::vector<std::uint8_t> palette(std::size_t k, bool masked) {
  if (masked && k == 3) return {0, 255, 128};
  std::vector<std::uint8_t> p(k);
  for (std::size_t j = 0; j < k; ++j) p[j] = static_cast<std::uint8_t>(255 * j / (k - 1));
  return p;
}

std::optional<std::size_t> image_side(const RunConfig& config, std::size_t d) {
  if (config.data.kind != "idx") return std::nullopt;
  const auto side = static_cast<std::size_t>(std::lround(std::sqrt(static_cast<double>(d))));
  if (side * side != d) return std::nullopt;
  return side;
}

std::string num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.6g", v);
  return buf;
}

// Data law for TV summaries; only the synthetic kinds need no input files.
std::optional<Dataset> synthetic_law(const RunConfig& config) {
  if (config.data.kind == "idx") return std::nullopt;
  return make_dataset(config);
}

void write_trajectory(const Trajectory& traj, const LoadedModel& loaded, const std::string& dir, bool per_sample,
                      std::size_t columns) {
  const auto& mc = loaded.model->config;
  const auto side = image_side(loaded.config, mc.dims);
  const auto pal = palette(mc.categories, mc.prior.kind == PriorKind::Absorbing);
  for (std::size_t j = 0; j < traj.size(); ++j) {
    const std::size_t t = mc.steps - j;
    if (!side) {
      atomic_write(dir + "/traj_t" + std::to_string(t) + ".csv", samples_csv(traj[j], mc.dims));
    } else if (per_sample) {
      for (std::size_t n = 0; n < traj[j].size(); ++n) {
        atomic_write(dir + "/sample" + std::to_string(n) + "_t" + std::to_string(t) + ".pgm",
                     pgm_grid({traj[j][n]}, *side, pal, 1));
      }
    } else if (!traj[j].empty()) {
      atomic_write(dir + "/grid_t" + std::to_string(t) + ".pgm", pgm_grid(traj[j], *side, pal, columns));
    }
  }
}

int cmd_train(const std::string& config_path, const std::vector<std::string>& sets, const std::string& out_override,
              std::ostream& out) {
  RunConfig config = load_config(config_path);
  apply_overrides(config, sets);
  if (!out_override.empty()) config.trainer.out = out_override;
  validate(config);
  Dataset data = make_dataset(config);
  Trainer trainer(config, std::move(data));
  out << kMetricsHeader << "\n";
  trainer.run(config.trainer.out, [&](const MetricsRow& row) { out << format_metrics_row(row) << "\n" << std::flush; });
  out << "wrote " << config.trainer.out << "/final.bin\n";
  return kOk;
}

int cmd_sample(const std::string& ckpt_path, std::size_t n, std::optional<std::size_t> steps, const std::string& dir,
               std::uint64_t seed, bool trajectory, std::size_t columns, std::ostream& out, std::ostream& err) {
  const LoadedModel loaded = load_model(Checkpoint::load(ckpt_path));
  const auto& mc = loaded.model->config;
  if (steps && *steps != mc.steps) {
    err << "sample: --steps " << *steps << " differs from the trained T=" << mc.steps
        << "; the reverse network is only defined at its training timesteps\n";
    return kConfigError;
  }
  fs::create_directories(dir);
  Rng rng(seed, 0x5a);
  Trajectory traj;
  loaded.model->reverse.reset_evaluations();
  const auto samples = loaded.model->reverse.sample_batch(n, rng, trajectory ? &traj : nullptr);
  atomic_write(dir + "/samples.csv", samples_csv(samples, mc.dims));
  if (trajectory && n > 0) write_trajectory(traj, loaded, dir, false, columns);
  out << "samples: " << n << "\n";
  out << "steps: " << mc.steps << "\n";
  if (n > 0) {
    if (auto law = synthetic_law(loaded.config)) {
      out << "tv: " << num(tv_distance(samples, *law)) << "\n";
      if (loaded.config.data.kind == "random-walk") {
        std::size_t valid = 0;
        for (const auto& x : samples) valid += random_walk_valid(x);
        out << "validity_rate: " << num(static_cast<double>(valid) / static_cast<double>(n)) << "\n";
      }
    }
  }
  return kOk;
}

int cmd_export(const std::string& ckpt_path, std::size_t n, const std::string& dir, std::uint64_t seed,
               std::ostream& out) {
  const LoadedModel loaded = load_model(Checkpoint::load(ckpt_path));
  fs::create_directories(dir);
  Rng rng(seed, 0x5b);
  Trajectory traj;
  loaded.model->reverse.sample_batch(n, rng, &traj);
  write_trajectory(traj, loaded, dir, true, 1);
  out << "exported " << n << " trajectories of " << traj.size() << " states to " << dir << "\n";
  return kOk;
}

struct EvalArgs {
  std::string ckpt;
  std::string config;
  std::vector<std::string> sets;
  std::string out = "eval.json";
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> points;
  std::size_t tv_samples = 100000;
  std::size_t gap_samples = 64;
  std::size_t entropy_samples = 1000;
};

int cmd_eval(const EvalArgs& a, std::ostream& out, std::ostream& err) {
  const LoadedModel loaded = load_model(Checkpoint::load(a.ckpt));
  RunConfig config = loaded.config;
  if (!a.config.empty()) {
    config = load_config(a.config);
    apply_overrides(config, a.sets);
    const auto& m = loaded.config.model;
    if (config.model.steps != m.steps || config.model.prior != m.prior || config.model.forward != m.forward) {
      err << "eval: model section of " << a.config << " does not match the checkpoint\n";
      return kConfigError;
    }
  } else {
    apply_overrides(config, a.sets);
  }
  const Dataset data = make_dataset(config);
  const auto& mc = loaded.model->config;
  if (data.categories() != mc.categories || data.dims() != mc.dims) {
    err << "eval: dataset shape (K=" << data.categories() << ", D=" << data.dims()
        << ") does not match the checkpoint (K=" << mc.categories << ", D=" << mc.dims << ")\n";
    return kConfigError;
  }

  EvalOptions options;
  options.points = a.points.value_or(config.trainer.eval_size);
  options.mc_samples = config.trainer.eval_mc;
  options.tv_samples = a.tv_samples;
  options.gap_samples = a.gap_samples;
  options.entropy_samples = a.entropy_samples;
  options.cap = config.trainer.enum_cap;
  options.seed = a.seed.value_or(config.trainer.seed);

  nlohmann::ordered_json report;
  report["checkpoint"] = a.ckpt;
  report["step"] = loaded.step;
  report["categories"] = mc.categories;
  report["dims"] = mc.dims;
  report["steps"] = mc.steps;
  int code = kOk;
  std::optional<EvalReport> r;
  try {
    r = evaluate(*loaded.model, data, options, config.data.kind == "random-walk");
  } catch (const BoundViolation& e) {
    err << "eval: " << e.what() << "\n";
    code = kBoundViolation;
  }
  auto opt = [](const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(nullptr); };
  report["bound"] = r ? nlohmann::json(r->bound) : nlohmann::json(nullptr);
  report["bound_per_dim"] = r ? nlohmann::json(r->bound_per_dim) : nlohmann::json(nullptr);
  report["exact_nll"] = r ? opt(r->exact_nll) : nullptr;
  report["bound_valid"] = code == kOk;
  report["tv"] = r ? opt(r->tv) : nullptr;
  report["validity_rate"] = r ? opt(r->validity_rate) : nullptr;
  report["factorization_gap"] = r ? opt(r->factorization_gap) : nullptr;
  report["reverse_entropy"] = r && !r->reverse_entropy.empty() ? nlohmann::json(r->reverse_entropy) : nullptr;
  const fs::path out_path(a.out);
  if (out_path.has_parent_path()) fs::create_directories(out_path.parent_path());
  atomic_write(a.out, report.dump(2) + "\n");
  for (auto it = report.begin(); it != report.end(); ++it) {
    if (it.key() == "checkpoint") continue;
    out << it.key() << ": " << it.value().dump() << "\n";
  }
  return code;
}

int cmd_oracle(const std::string& suite, std::uint64_t seed, std::ostream& out) {
  const auto results = run_suite(suite, seed);
  bool ok = true;
  for (const auto& r : results) {
    out << (r.passed ? "PASS " : "FAIL ") << r.name << ": " << r.detail << "\n";
    ok = ok && r.passed;
  }
  return ok ? kOk : kFailure;
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Forward-learned discrete diffusion lab", "fldd"};
  app.require_subcommand(1);

  std::string config_path, out_dir, ckpt;
  std::vector<std::string> sets;
  auto* train = app.add_subcommand("train", "Train forward and reverse processes");
  train->add_option("--config", config_path, "Config file (key=value lines)")->required();
  train->add_option("--set", sets, "Override key=value (repeatable)");
  train->add_option("--out", out_dir, "Output directory (overrides trainer.out)");

  std::size_t n = 1000, columns = 10;
  std::optional<std::size_t> steps;
  std::uint64_t seed = 0;
  bool trajectory = false;
  std::string sample_dir = ".";
  auto* sample = app.add_subcommand("sample", "Draw samples from a trained reverse process");
  sample->add_option("--ckpt", ckpt, "Checkpoint")->required();
  sample->add_option("--n", n, "Number of samples");
  sample->add_option("--steps", steps, "Number of reverse steps (must equal the trained T)");
  sample->add_option("--out", sample_dir, "Output directory");
  sample->add_option("--seed", seed, "Sampling seed");
  sample->add_flag("--trajectory", trajectory, "Also write every intermediate state");
  sample->add_option("--columns", columns, "Tiles per row in trajectory grids");

  EvalArgs eval_args;
  std::uint64_t eval_seed = 0;
  std::size_t eval_points = 0;
  auto* eval = app.add_subcommand("eval", "Evaluate a checkpoint");
  eval->add_option("--ckpt", eval_args.ckpt, "Checkpoint")->required();
  eval->add_option("--config", eval_args.config, "Config file for the dataset (defaults to the stored config)");
  eval->add_option("--set", eval_args.sets, "Override key=value (repeatable)");
  eval->add_option("--out", eval_args.out, "Report path");
  auto* eval_seed_opt = eval->add_option("--seed", eval_seed, "Evaluation seed (defaults to trainer.seed)");
  auto* eval_points_opt = eval->add_option("--points", eval_points, "Evaluation set size");
  eval->add_option("--tv-samples", eval_args.tv_samples, "Samples for the TV estimate (0 skips)");
  eval->add_option("--gap-samples", eval_args.gap_samples, "z_1 draws for the factorization gap (0 skips)");
  eval->add_option("--entropy-samples", eval_args.entropy_samples, "Trajectories for reverse entropies (0 skips)");

  std::string suite = "all";
  std::uint64_t oracle_seed = 0;
  auto* oracle = app.add_subcommand("oracle-check", "Run oracle property suites");
  oracle->add_option("--suite", suite, "coupling | gradients | estimators | bounds | all");
  oracle->add_option("--seed", oracle_seed, "Seed");

  std::size_t export_n = 4;
  std::string export_dir = "trajectories";
  std::uint64_t export_seed = 0;
  auto* exp = app.add_subcommand("export-trajectories", "Write every intermediate state of a few samples");
  exp->add_option("--ckpt", ckpt, "Checkpoint")->required();
  exp->add_option("--n", export_n, "Number of trajectories");
  exp->add_option("--out", export_dir, "Output directory");
  exp->add_option("--seed", export_seed, "Sampling seed");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kConfigError;
  }

  try {
    if (*train) return cmd_train(config_path, sets, out_dir, out);
    if (*sample) return cmd_sample(ckpt, n, steps, sample_dir, seed, trajectory, columns, out, err);
    if (*eval) {
      if (*eval_seed_opt) eval_args.seed = eval_seed;
      if (*eval_points_opt) eval_args.points = eval_points;
      return cmd_eval(eval_args, out, err);
    }
    if (*oracle) {
      try {
        return cmd_oracle(suite, oracle_seed, out);
      } catch (const std::invalid_argument& e) {
        err << "oracle-check: " << e.what() << "\n";
        return kConfigError;
      }
    }
    if (*exp) return cmd_export(ckpt, export_n, export_dir, export_seed, out);
  } catch (const CheckpointVersionError& e) {
    err << "error: " << e.what() << "\n";
    return kVersionMismatch;
  } catch (const TrainingAborted& e) {
    err << "error: " << e.what() << "\n";
    return kTrainingAbort;
  } catch (const BoundViolation& e) {
    err << "error: " << e.what() << "\n";
    return kBoundViolation;
  } catch (const ConfigError& e) {
    err << "error: " << e.what() << "\n";
    return kConfigError;
  } catch (const std::exception& e) {
    // Unreadable inputs (config, checkpoint, dataset) land here too.
    err << "error: " << e.what() << "\n";
    return kConfigError;
  }
  return kConfigError;
}

}  // namespace fldd::cli
