#pragma once

#include <cstddef>
#include <vector>

#include "fldd/forward_process.hpp"
#include "fldd/network.hpp"
#include "fldd/reverse_model.hpp"

namespace fldd {

struct ModelConfig {
  std::size_t categories = 2;  // K
  std::size_t dims = 1;        // D
  std::size_t steps = 2;       // T
  PriorSpec prior;
  ForwardKind forward = ForwardKind::Learned;
  bool monotone_mask = false;
  NetSpec net;  // shared by both processes; weights are not shared
};

/// Forward and reverse processes trained together.
struct FlddModel {
  FlddModel(const ModelConfig& config, Rng& init_rng);

  ModelConfig config;
  ForwardProcess forward;
  ReverseModel reverse;

  std::vector<NamedVar> named_parameters() const;
  std::vector<nd::Var> parameters() const;
};

}  // namespace fldd
