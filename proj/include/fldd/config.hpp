#pragma once

// Flat typed key=value run configuration with section prefixes, e.g.
//
//   data.kind=gmm
//   model.T=2
//   net.width=256
//
// '#' starts a comment. Unknown keys and malformed values are errors.

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "fldd/datasets.hpp"
#include "fldd/model.hpp"
#include "fldd/optim.hpp"

namespace fldd {

class ConfigError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct DataConfig {
  std::string kind = "gmm";  // gmm | random-walk | idx
  GmmSpec gmm;
  std::size_t length = 8;  // random-walk D
  IdxSpec idx;
};

struct ModelSection {
  std::size_t steps = 2;  // T
  PriorKind prior = PriorKind::Uniform;
  ForwardKind forward = ForwardKind::Learned;
  bool monotone_mask = false;
};

struct TrainerConfig {
  std::size_t steps = 20000;
  std::size_t warmup_steps = 10000;
  std::size_t tau_steps = 10000;
  std::size_t batch = 256;
  std::uint64_t seed = 0;
  std::size_t eval_every = 500;
  std::size_t eval_size = 256;
  std::size_t eval_mc = 64;
  std::size_t eval_tv_samples = 10000;
  std::size_t checkpoint_every = 0;
  double clip = 10.0;  // REINFORCE phase only; 0 disables
  bool baseline = true;
  double baseline_decay = 0.99;
  std::size_t enum_cap = kEnumerationCap;
  std::string out = "run";
};

struct RunConfig {
  DataConfig data;
  ModelSection model;
  NetSpec net;
  AdamWConfig optim;
  TrainerConfig trainer;
};

/// Sets one key from its text value; throws ConfigError on unknown keys or
/// bad values.
void set_config_value(RunConfig& config, const std::string& key, const std::string& value);

/// Parses "key=value" lines over the defaults.
RunConfig parse_config(const std::string& text);

/// Reads a config file. Relative data paths are resolved against the file's
/// directory.
RunConfig load_config(const std::string& path);

/// Applies "key=value" overrides in order.
void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides);

/// Canonical text listing every key; parse_config(to_text(c)) reproduces c.
std::string to_text(const RunConfig& config);

std::vector<std::string> config_keys();

/// Structural checks beyond per-key parsing.
void validate(const RunConfig& config);

}  // namespace fldd
