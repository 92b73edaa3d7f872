#pragma once

// Joint training of the forward and reverse processes: Concrete-relaxed
// warm-up, then score-function steps, with periodic evaluation.

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "fldd/checkpoint.hpp"
#include "fldd/config.hpp"
#include "fldd/datasets.hpp"
#include "fldd/model.hpp"
#include "fldd/objective.hpp"
#include "fldd/optim.hpp"
#include "fldd/rng.hpp"

namespace fldd {

class TrainingAborted : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Bound, audit, or data problems found while evaluating.
class BoundViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Builds the dataset named by the config. Absorbing priors get an extra
/// mask category appended after the data categories.
Dataset make_dataset(const RunConfig& config);

ModelConfig model_config(const RunConfig& config, std::size_t k, std::size_t d);

struct MetricsRow {
  std::size_t step = 0;
  Estimator phase = Estimator::Relaxed;
  std::optional<double> tau;
  std::optional<double> loss;
  std::optional<double> bound;
  std::optional<double> exact_nll;
  std::optional<double> tv;
};

inline constexpr const char* kMetricsHeader = "step,phase,tau,loss,bound,exact_nll,tv";
std::string format_metrics_row(const MetricsRow& row);

struct EvalOptions {
  std::size_t points = 256;       // evaluation set size
  std::size_t mc_samples = 64;    // per timestep when z_t is not enumerable
  std::size_t tv_samples = 0;     // 0 skips TV
  std::size_t gap_samples = 0;    // z_1 draws for the factorization gap; 0 skips
  std::size_t entropy_samples = 0;
  std::size_t cap = kEnumerationCap;
  std::uint64_t seed = 0;
};

struct EvalReport {
  double bound = 0.0;  // nats per data point
  double bound_per_dim = 0.0;
  std::optional<double> exact_nll;
  std::optional<double> tv;
  std::optional<double> validity_rate;
  std::optional<double> factorization_gap;
  std::vector<double> reverse_entropy;  // mean per-coordinate entropy at t = T..1
};

/// Evaluation set: `points` draws from the dataset law with a fixed stream.
std::vector<DataPoint> evaluation_points(const Dataset& data, std::size_t points, std::uint64_t seed);

/// Mean factorization gap of q(z_{t-1} | z_t) over z_t ~ q(z_t).
double mean_factorization_gap(const Dataset& data, const ForwardProcess& forward, std::size_t t, std::size_t samples,
                              Rng& rng, std::size_t cap = kEnumerationCap);

/// Throws BoundViolation when an enumerable bound falls below the exact NLL.
EvalReport evaluate(const FlddModel& model, const Dataset& data, const EvalOptions& options,
                    bool random_walk = false);

class Trainer {
 public:
  Trainer(const RunConfig& config, Dataset data);

  const RunConfig& config() const { return config_; }
  const Dataset& data() const { return data_; }
  FlddModel& model() { return *model_; }
  const FlddModel& model() const { return *model_; }
  std::size_t step() const { return step_; }
  double baseline() const { return baseline_.value(); }

  Estimator phase(std::size_t step) const;
  /// tau in use at a step; empty in the score-function phase.
  std::optional<double> tau(std::size_t step) const;

  /// One optimization step; returns false when the step was skipped for a
  /// non-finite loss. Throws TrainingAborted after 100 consecutive skips.
  bool train_step(double* loss_out = nullptr);

  /// Runs to trainer.steps, evaluating every eval_every steps. Writes
  /// metrics.csv, checkpoints and final.bin under `out_dir` when non-empty.
  std::vector<MetricsRow> run(const std::string& out_dir = "",
                              const std::function<void(const MetricsRow&)>& on_row = {});

  MetricsRow evaluate_row(std::optional<double> loss);

  Checkpoint checkpoint() const;
  /// Restores parameters, optimizer moments, baseline, step and RNG streams.
  void restore(const Checkpoint& ckpt);

 private:
  RunConfig config_;
  Dataset data_;
  std::unique_ptr<FlddModel> model_;
  std::unique_ptr<AdamW> optimizer_;
  TauSchedule schedule_;
  EmaBaseline baseline_;
  Rng data_rng_, time_rng_, latent_rng_, gumbel_rng_;
  std::vector<DataPoint> eval_points_;
  std::size_t step_ = 0;
  std::size_t skipped_ = 0;
};

/// Model parameters and shape from a checkpoint, for sampling and evaluation.
struct LoadedModel {
  RunConfig config;
  std::unique_ptr<FlddModel> model;
  std::size_t step = 0;
};

LoadedModel load_model(const Checkpoint& ckpt);

}  // namespace fldd
