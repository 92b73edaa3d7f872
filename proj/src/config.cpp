#include "fldd/config.hpp"

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <functional>
#include <sstream>

namespace fldd {

namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

template <class T>
T parse_int(const std::string& key, const std::string& v) {
  T out{};
  const auto [ptr, ec] = std::from_chars(v.data(), v.data() + v.size(), out);
  if (ec != std::errc() || ptr != v.data() + v.size()) {
    throw ConfigError("config: " + key + " expects a non-negative integer, got '" + v + "'");
  }
  return out;
}

double parse_double(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const double out = std::stod(v, &used);
    if (used == v.size()) return out;
  } catch (const std::exception&) {
  }
  throw ConfigError("config: " + key + " expects a number, got '" + v + "'");
}

bool parse_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: " + key + " expects true or false, got '" + v + "'");
}

std::array<double, 2> parse_pair(const std::string& key, const std::string& v) {
  const auto comma = v.find(',');
  if (comma == std::string::npos) throw ConfigError("config: " + key + " expects 'a,b', got '" + v + "'");
  return {parse_double(key, trim(v.substr(0, comma))), parse_double(key, trim(v.substr(comma + 1)))};
}

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

struct Entry {
  const char* key;
  std::function<void(RunConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const RunConfig&)> get;
};

#define FLDD_SIZE(KEY, FIELD)                                                                            \
  Entry {                                                                                                \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_int<std::size_t>(k, v); }, \
        [](const RunConfig& c) { return std::to_string(c.FIELD); }                                       \
  }
#define FLDD_DOUBLE(KEY, FIELD)                                                                     \
  Entry {                                                                                           \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_double(k, v); }, \
        [](const RunConfig& c) { return fmt(c.FIELD); }                                             \
  }
#define FLDD_BOOL(KEY, FIELD)                                                                     \
  Entry {                                                                                         \
    KEY, [](RunConfig& c, const std::string& k, const std::string& v) { c.FIELD = parse_bool(k, v); }, \
        [](const RunConfig& c) { return std::string(c.FIELD ? "true" : "false"); }                \
  }
#define FLDD_STRING(KEY, FIELD)                                                            \
  Entry {                                                                                  \
    KEY, [](RunConfig& c, const std::string&, const std::string& v) { c.FIELD = v; },      \
        [](const RunConfig& c) { return c.FIELD; }                                         \
  }

const std::vector<Entry>& entries() {
  static const std::vector<Entry> table = {
      Entry{"data.kind",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v != "gmm" && v != "random-walk" && v != "idx") {
                throw ConfigError("config: " + k + " must be gmm, random-walk or idx, got '" + v + "'");
              }
              c.data.kind = v;
            },
            [](const RunConfig& c) { return c.data.kind; }},
      FLDD_SIZE("data.grid", data.gmm.grid),
      Entry{"data.mean1", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.gmm.mean1 = parse_pair(k, v); },
            [](const RunConfig& c) { return fmt(c.data.gmm.mean1[0]) + "," + fmt(c.data.gmm.mean1[1]); }},
      Entry{"data.mean2", [](RunConfig& c, const std::string& k, const std::string& v) { c.data.gmm.mean2 = parse_pair(k, v); },
            [](const RunConfig& c) { return fmt(c.data.gmm.mean2[0]) + "," + fmt(c.data.gmm.mean2[1]); }},
      FLDD_DOUBLE("data.weight", data.gmm.weight1),
      FLDD_DOUBLE("data.sigma", data.gmm.sigma),
      FLDD_SIZE("data.length", data.length),
      FLDD_STRING("data.images", data.idx.images),
      FLDD_STRING("data.labels", data.idx.labels),
      FLDD_DOUBLE("data.threshold", data.idx.threshold),
      FLDD_SIZE("data.side", data.idx.side),
      FLDD_SIZE("data.limit", data.idx.limit),
      FLDD_SIZE("model.T", model.steps),
      Entry{"model.prior",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              if (v == "uniform") {
                c.model.prior = PriorKind::Uniform;
              } else if (v == "absorbing") {
                c.model.prior = PriorKind::Absorbing;
              } else {
                throw ConfigError("config: " + k + " must be uniform or absorbing, got '" + v + "'");
              }
            },
            [](const RunConfig& c) { return std::string(c.model.prior == PriorKind::Uniform ? "uniform" : "absorbing"); }},
      Entry{"model.forward",
            [](RunConfig& c, const std::string& k, const std::string& v) {
              try {
                c.model.forward = forward_kind_from_string(v);
              } catch (const std::exception&) {
                throw ConfigError("config: " + k + " must be learned, fixed, masked or masked-fixed, got '" + v + "'");
              }
            },
            [](const RunConfig& c) { return to_string(c.model.forward); }},
      FLDD_BOOL("model.monotone_mask", model.monotone_mask),
      FLDD_SIZE("net.width", net.width),
      FLDD_SIZE("net.depth", net.depth),
      FLDD_SIZE("net.time_dim", net.time_dim),
      FLDD_DOUBLE("optim.lr", optim.lr),
      FLDD_DOUBLE("optim.beta1", optim.beta1),
      FLDD_DOUBLE("optim.beta2", optim.beta2),
      FLDD_DOUBLE("optim.eps", optim.eps),
      FLDD_DOUBLE("optim.weight_decay", optim.weight_decay),
      FLDD_SIZE("trainer.steps", trainer.steps),
      FLDD_SIZE("trainer.warmup_steps", trainer.warmup_steps),
      FLDD_SIZE("trainer.tau_steps", trainer.tau_steps),
      FLDD_SIZE("trainer.batch", trainer.batch),
      Entry{"trainer.seed",
            [](RunConfig& c, const std::string& k, const std::string& v) { c.trainer.seed = parse_int<std::uint64_t>(k, v); },
            [](const RunConfig& c) { return std::to_string(c.trainer.seed); }},
      FLDD_SIZE("trainer.eval_every", trainer.eval_every),
      FLDD_SIZE("trainer.eval_size", trainer.eval_size),
      FLDD_SIZE("trainer.eval_mc", trainer.eval_mc),
      FLDD_SIZE("trainer.eval_tv_samples", trainer.eval_tv_samples),
      FLDD_SIZE("trainer.checkpoint_every", trainer.checkpoint_every),
      FLDD_DOUBLE("trainer.clip", trainer.clip),
      FLDD_BOOL("trainer.baseline", trainer.baseline),
      FLDD_DOUBLE("trainer.baseline_decay", trainer.baseline_decay),
      FLDD_SIZE("trainer.enum_cap", trainer.enum_cap),
      FLDD_STRING("trainer.out", trainer.out),
  };
  return table;
}

#undef FLDD_SIZE
#undef FLDD_DOUBLE
#undef FLDD_BOOL
#undef FLDD_STRING

}  // namespace

void set_config_value(RunConfig& config, const std::string& key, const std::string& value) {
  for (const auto& e : entries()) {
    if (key == e.key) {
      e.set(config, key, value);
      return;
    }
  }
  throw ConfigError("config: unknown key '" + key + "'");
}

RunConfig parse_config(const std::string& text) {
  RunConfig config;
  std::istringstream in(text);
  std::string line;
  std::size_t number = 0;
  while (std::getline(in, line)) {
    ++number;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("config line " + std::to_string(number) + ": expected key=value, got '" + line + "'");
    }
    set_config_value(config, trim(line.substr(0, eq)), trim(line.substr(eq + 1)));
  }
  return config;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("config: cannot open " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  RunConfig config = parse_config(buf.str());
  const auto base = std::filesystem::path(path).parent_path();
  for (std::string* p : {&config.data.idx.images, &config.data.idx.labels}) {
    if (!p->empty() && std::filesystem::path(*p).is_relative()) *p = (base / *p).lexically_normal().string();
  }
  return config;
}

void apply_overrides(RunConfig& config, const std::vector<std::string>& overrides) {
  for (const auto& o : overrides) {
    const auto eq = o.find('=');
    if (eq == std::string::npos) throw ConfigError("override '" + o + "' is not key=value");
    set_config_value(config, trim(o.substr(0, eq)), trim(o.substr(eq + 1)));
  }
}

std::string to_text(const RunConfig& config) {
  std::string out;
  for (const auto& e : entries()) out += std::string(e.key) + "=" + e.get(config) + "\n";
  return out;
}

std::vector<std::string> config_keys() {
  std::vector<std::string> keys;
  for (const auto& e : entries()) keys.emplace_back(e.key);
  return keys;
}

void validate(const RunConfig& c) {
  if (c.model.steps < 1) throw ConfigError("config: model.T must be at least 1");
  if (c.trainer.batch < 1) throw ConfigError("config: trainer.batch must be positive");
  if (c.trainer.eval_every < 1) throw ConfigError("config: trainer.eval_every must be positive");
  if (c.trainer.eval_size < 1) throw ConfigError("config: trainer.eval_size must be positive");
  if (c.trainer.tau_steps > c.trainer.warmup_steps) {
    throw ConfigError("config: trainer.tau_steps must not exceed trainer.warmup_steps");
  }
  if (c.net.width < 1 || c.net.depth < 1) throw ConfigError("config: net.width and net.depth must be positive");
  if (c.net.time_dim % 2 != 0) throw ConfigError("config: net.time_dim must be even");
  if (!(c.optim.lr > 0.0)) throw ConfigError("config: optim.lr must be positive");
  if (!(c.trainer.baseline_decay >= 0.0 && c.trainer.baseline_decay < 1.0)) {
    throw ConfigError("config: trainer.baseline_decay must lie in [0, 1)");
  }
  const bool masked = c.model.forward == ForwardKind::Masked || c.model.forward == ForwardKind::MaskedFixed;
  if (masked && c.model.prior != PriorKind::Absorbing) {
    throw ConfigError("config: masked forward processes need model.prior=absorbing");
  }
  if (c.data.kind == "idx" && c.data.idx.images.empty()) throw ConfigError("config: data.images is required for idx");
  if (c.data.kind == "random-walk" && c.data.length < 2) throw ConfigError("config: data.length must be at least 2");
}

}  // namespace fldd
