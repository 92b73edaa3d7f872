#include "fldd/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <numeric>

#include "fldd/io.hpp"
#include "fldd/oracle.hpp"

namespace fldd {

namespace {

enum Stream : std::uint64_t { kInit = 0, kData = 1, kTime = 2, kLatent = 3, kGumbel = 4, kEval = 5, kBound = 6,
                              kTv = 7, kGap = 8, kEntropy = 9 };

constexpr std::size_t kMaxSkips = 100;

std::string fmt(const std::optional<double>& v) {
  if (!v) return "";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.10g", *v);
  return buf;
}

void check_shapes(const std::vector<NamedVar>& params, const Checkpoint& ckpt) {
  for (const auto& [name, v] : params) {
    const auto& a = ckpt.get(name);
    if (a.shape() != v.shape()) {
      throw CheckpointError("checkpoint: '" + name + "' has shape " + nd::shape_str(a.shape()) + ", model expects " +
                            nd::shape_str(v.shape()));
    }
  }
}

void load_parameters(const std::vector<NamedVar>& params, const Checkpoint& ckpt) {
  check_shapes(params, ckpt);
  for (auto [name, v] : params) v.mutable_value() = ckpt.get(name);
}

double entropy(const double* p, std::size_t k) {
  double h = 0.0;
  for (std::size_t j = 0; j < k; ++j)
    if (p[j] > 0.0) h -= p[j] * std::log(p[j]);
  return h;
}

}  // namespace

Dataset make_dataset(const RunConfig& config) {
  validate(config);
  std::optional<Dataset> data;
  if (config.data.kind == "gmm") {
    data = gmm_grid_law(config.data.gmm);
  } else if (config.data.kind == "random-walk") {
    data = random_walk_law(config.data.length);
  } else {
    data = load_idx(config.data.idx);
  }
  if (config.model.prior == PriorKind::Absorbing) return data->with_mask_category();
  return *data;
}

ModelConfig model_config(const RunConfig& config, std::size_t k, std::size_t d) {
  ModelConfig m;
  m.categories = k;
  m.dims = d;
  m.steps = config.model.steps;
  m.prior.kind = config.model.prior;
  m.prior.mask = k - 1;
  m.forward = config.model.forward;
  m.monotone_mask = config.model.monotone_mask;
  m.net = config.net;
  return m;
}

std::string format_metrics_row(const MetricsRow& r) {
  return std::to_string(r.step) + "," + to_string(r.phase) + "," + fmt(r.tau) + "," + fmt(r.loss) + "," +
         fmt(r.bound) + "," + fmt(r.exact_nll) + "," + fmt(r.tv);
}

std::vector<DataPoint> evaluation_points(const Dataset& data, std::size_t points, std::uint64_t seed) {
  Rng rng(seed, kEval);
  std::vector<DataPoint> out;
  out.reserve(points);
  for (std::size_t n = 0; n < points; ++n) out.push_back(data.sample(rng));
  return out;
}

double mean_factorization_gap(const Dataset& data, const ForwardProcess& forward, std::size_t t, std::size_t samples,
                              Rng& rng, std::size_t cap) {
  if (samples == 0) throw std::invalid_argument("mean_factorization_gap: no samples");
  const TargetOracle oracle(data.law(cap), forward, t, cap);
  const EnumeratedLaw latent = oracle.latent_marginal();
  std::vector<double> cumulative(latent.states());
  std::partial_sum(latent.probs().begin(), latent.probs().end(), cumulative.begin());
  double total = 0.0;
  for (std::size_t n = 0; n < samples; ++n) {
    const double u = rng.uniform() * cumulative.back();
    std::size_t idx = static_cast<std::size_t>(std::upper_bound(cumulative.begin(), cumulative.end(), u) -
                                               cumulative.begin());
    idx = std::min(idx, latent.states() - 1);
    total += factorization_gap(oracle.target(decode_state(idx, data.categories(), data.dims())));
  }
  return total / static_cast<double>(samples);
}

EvalReport evaluate(const FlddModel& model, const Dataset& data, const EvalOptions& options, bool random_walk) {
  const auto points = evaluation_points(data, options.points, options.seed);
  const std::size_t k = model.config.categories, d = model.config.dims, steps = model.config.steps;
  EvalReport report;

  Rng bound_rng(options.seed, kBound);
  report.bound = mean_bound(model, points, bound_rng, {options.cap, options.mc_samples});
  report.bound_per_dim = report.bound / static_cast<double>(d);

  if (enumerable(k, d, options.cap)) {
    report.exact_nll = exact_model_nll(model.reverse, points, {}, options.cap);
    if (report.bound < *report.exact_nll - 1e-9) {
      throw BoundViolation("variational bound " + std::to_string(report.bound) + " is below the exact NLL " +
                           std::to_string(*report.exact_nll));
    }
  }

  if (options.tv_samples > 0) {
    Rng rng(options.seed, kTv);
    const auto samples = model.reverse.sample_batch(options.tv_samples, rng);
    if (data.exact()) report.tv = tv_distance(samples, data);
    if (random_walk) {
      std::size_t valid = 0;
      for (const auto& x : samples) valid += random_walk_valid(x);
      report.validity_rate = static_cast<double>(valid) / static_cast<double>(samples.size());
    }
  }

  if (options.gap_samples > 0 && data.exact() && enumerable(k, d, options.cap)) {
    Rng rng(options.seed, kGap);
    report.factorization_gap = mean_factorization_gap(data, model.forward, 1, options.gap_samples, rng, options.cap);
  }

  if (options.entropy_samples > 0) {
    Rng rng(options.seed, kEntropy);
    Trajectory traj;
    model.reverse.sample_batch(options.entropy_samples, rng, &traj);
    for (std::size_t j = 0; j < steps; ++j) {
      const std::size_t t = steps - j;
      std::vector<std::size_t> z;
      for (const auto& x : traj[j]) z.insert(z.end(), x.begin(), x.end());
      const nd::Var p = model.reverse.probs(z, std::vector<std::size_t>(traj[j].size(), t));
      double h = 0.0;
      for (std::size_t r = 0; r < p.value().rows(); ++r) h += entropy(p.value().data() + r * k, k);
      report.reverse_entropy.push_back(h / static_cast<double>(p.value().rows()));
    }
  }
  return report;
}

Trainer::Trainer(const RunConfig& config, Dataset data)
    : config_(config),
      data_(std::move(data)),
      schedule_(config.trainer.tau_steps),
      baseline_(config.trainer.baseline_decay),
      data_rng_(config.trainer.seed, kData),
      time_rng_(config.trainer.seed, kTime),
      latent_rng_(config.trainer.seed, kLatent),
      gumbel_rng_(config.trainer.seed, kGumbel) {
  validate(config_);
  Rng init(config_.trainer.seed, kInit);
  model_ = std::make_unique<FlddModel>(model_config(config_, data_.categories(), data_.dims()), init);
  optimizer_ = std::make_unique<AdamW>(model_->parameters(), config_.optim);
  eval_points_ = evaluation_points(data_, config_.trainer.eval_size, config_.trainer.seed);
}

Estimator Trainer::phase(std::size_t step) const {
  return step < config_.trainer.warmup_steps ? Estimator::Relaxed : Estimator::Reinforce;
}

std::optional<double> Trainer::tau(std::size_t step) const {
  if (phase(step) != Estimator::Relaxed) return std::nullopt;
  return schedule_(step);
}

bool Trainer::train_step(double* loss_out) {
  const std::size_t n = step_, batch = config_.trainer.batch, steps = config_.model.steps;
  const auto x = data_.sample_flat(batch, data_rng_);
  std::vector<std::size_t> t(batch);
  for (auto& v : t) v = 1 + std::min(steps - 1, static_cast<std::size_t>(time_rng_.uniform() * static_cast<double>(steps)));

  DiffLossOptions options;
  options.time_weight = static_cast<double>(steps);
  DiffLoss loss;
  if (phase(n) == Estimator::Relaxed) {
    loss = diff_loss_relaxed(*model_, x, t, schedule_(n), gumbel_rng_, options);
  } else {
    if (config_.trainer.baseline) options.baseline = baseline_.value();
    loss = diff_loss_reinforce(*model_, x, t, latent_rng_, options);
  }
  ++step_;

  const double mean_kl = std::accumulate(loss.kl.begin(), loss.kl.end(), 0.0) / static_cast<double>(loss.kl.size());
  auto skip = [&](const char* why) {
    optimizer_->zero_grad();
    if (++skipped_ >= kMaxSkips) {
      throw TrainingAborted("training aborted after " + std::to_string(skipped_) + " consecutive skipped steps (" +
                            why + ") at step " + std::to_string(step_));
    }
    std::fprintf(stderr, "step %zu skipped: %s\n", step_, why);
    return false;
  };
  if (!std::isfinite(loss.value) || !std::isfinite(mean_kl)) return skip("non-finite loss");

  optimizer_->zero_grad();
  nd::backward(loss.surrogate);
  const auto params = model_->parameters();
  const double norm = phase(n) == Estimator::Reinforce && config_.trainer.clip > 0.0
                          ? clip_grad_norm(params, config_.trainer.clip)
                          : grad_norm(params);
  if (!std::isfinite(norm)) return skip("non-finite gradient");
  optimizer_->step();
  skipped_ = 0;
  if (config_.trainer.baseline) baseline_.update(mean_kl);
  if (loss_out) *loss_out = loss.value;
  return true;
}

MetricsRow Trainer::evaluate_row(std::optional<double> loss) {
  MetricsRow row;
  row.step = step_;
  const std::size_t last = step_ == 0 ? 0 : step_ - 1;
  row.phase = phase(last);
  row.tau = tau(last);
  row.loss = loss;
  EvalOptions options;
  options.points = config_.trainer.eval_size;
  options.mc_samples = config_.trainer.eval_mc;
  options.tv_samples = data_.exact() ? config_.trainer.eval_tv_samples : 0;
  options.cap = config_.trainer.enum_cap;
  options.seed = config_.trainer.seed;
  const EvalReport report = evaluate(*model_, data_, options);
  row.bound = report.bound;
  row.exact_nll = report.exact_nll;
  row.tv = report.tv;
  return row;
}

std::vector<MetricsRow> Trainer::run(const std::string& out_dir, const std::function<void(const MetricsRow&)>& on_row) {
  std::vector<MetricsRow> rows;
  std::string csv = std::string(kMetricsHeader) + "\n";
  if (!out_dir.empty()) std::filesystem::create_directories(out_dir);
  auto emit = [&](MetricsRow row) {
    csv += format_metrics_row(row) + "\n";
    if (!out_dir.empty()) atomic_write(out_dir + "/metrics.csv", csv);
    if (on_row) on_row(row);
    rows.push_back(std::move(row));
  };

  const std::size_t total = config_.trainer.steps;
  if (step_ == 0) emit(evaluate_row(std::nullopt));
  while (step_ < total) {
    double loss = 0.0;
    const bool ok = train_step(&loss);
    if (step_ % config_.trainer.eval_every == 0 || step_ == total) {
      emit(evaluate_row(ok ? std::optional<double>(loss) : std::nullopt));
    }
    if (!out_dir.empty() && config_.trainer.checkpoint_every > 0 && step_ % config_.trainer.checkpoint_every == 0) {
      checkpoint().save(out_dir + "/ckpt-" + std::to_string(step_) + ".bin");
    }
  }
  if (!out_dir.empty()) {
    if (rows.empty() || rows.back().step != step_) atomic_write(out_dir + "/metrics.csv", csv);
    checkpoint().save(out_dir + "/final.bin");
  }
  return rows;
}

Checkpoint Trainer::checkpoint() const {
  Checkpoint ck;
  ck.put_text("config.text", to_text(config_));
  ck.put("meta.shape", nd::Array({3}, {static_cast<double>(data_.categories()), static_cast<double>(data_.dims()),
                                       static_cast<double>(config_.model.steps)}));
  ck.put("meta.step", nd::Array::scalar(static_cast<double>(step_)));
  ck.put("meta.skipped", nd::Array::scalar(static_cast<double>(skipped_)));
  ck.put("meta.baseline", nd::Array({2}, {baseline_.value(), baseline_.ready() ? 1.0 : 0.0}));
  const auto params = model_->named_parameters();
  for (const auto& [name, v] : params) ck.put(name, v.value());
  ck.put("adam.steps", nd::Array::scalar(static_cast<double>(optimizer_->steps_taken())));
  for (std::size_t i = 0; i < params.size(); ++i) {
    ck.put("adam.m." + params[i].first, optimizer_->first_moments()[i]);
    ck.put("adam.v." + params[i].first, optimizer_->second_moments()[i]);
  }
  ck.put_words("rng.data", data_rng_.state());
  ck.put_words("rng.time", time_rng_.state());
  ck.put_words("rng.latent", latent_rng_.state());
  ck.put_words("rng.gumbel", gumbel_rng_.state());
  return ck;
}

void Trainer::restore(const Checkpoint& ck) {
  const auto& shape = ck.get("meta.shape");
  if (shape.size() != 3 || shape[0] != static_cast<double>(data_.categories()) ||
      shape[1] != static_cast<double>(data_.dims()) || shape[2] != static_cast<double>(config_.model.steps)) {
    throw CheckpointError("checkpoint: shape (K, D, T) does not match the configured run");
  }
  const auto params = model_->named_parameters();
  load_parameters(params, ck);
  for (std::size_t i = 0; i < params.size(); ++i) {
    optimizer_->first_moments()[i] = ck.get("adam.m." + params[i].first);
    optimizer_->second_moments()[i] = ck.get("adam.v." + params[i].first);
  }
  optimizer_->set_steps_taken(static_cast<std::int64_t>(ck.get("adam.steps").item()));
  step_ = static_cast<std::size_t>(ck.get("meta.step").item());
  skipped_ = static_cast<std::size_t>(ck.get("meta.skipped").item());
  const auto& b = ck.get("meta.baseline");
  baseline_.restore(b[0], b[1] != 0.0);
  data_rng_.set_state(ck.get_words("rng.data"));
  time_rng_.set_state(ck.get_words("rng.time"));
  latent_rng_.set_state(ck.get_words("rng.latent"));
  gumbel_rng_.set_state(ck.get_words("rng.gumbel"));
}

LoadedModel load_model(const Checkpoint& ck) {
  LoadedModel out;
  out.config = parse_config(ck.get_text("config.text"));
  const auto& shape = ck.get("meta.shape");
  if (shape.size() != 3) throw CheckpointError("checkpoint: malformed meta.shape");
  const auto k = static_cast<std::size_t>(shape[0]), d = static_cast<std::size_t>(shape[1]);
  if (static_cast<std::size_t>(shape[2]) != out.config.model.steps) {
    throw CheckpointError("checkpoint: T in meta.shape disagrees with the stored config");
  }
  Rng init(out.config.trainer.seed, kInit);
  out.model = std::make_unique<FlddModel>(model_config(out.config, k, d), init);
  load_parameters(out.model->named_parameters(), ck);
  out.step = static_cast<std::size_t>(ck.get("meta.step").item());
  return out;
}

}  // namespace fldd
