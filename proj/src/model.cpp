#include "fldd/model.hpp"

namespace fldd {

namespace {

ForwardConfig forward_config(const ModelConfig& c) {
  ForwardConfig f;
  f.categories = c.categories;
  f.dims = c.dims;
  f.steps = c.steps;
  f.prior = c.prior;
  f.kind = c.forward;
  f.net = c.net;
  f.monotone_mask = c.monotone_mask;
  return f;
}

ReverseConfig reverse_config(const ModelConfig& c) {
  ReverseConfig r;
  r.categories = c.categories;
  r.dims = c.dims;
  r.steps = c.steps;
  r.prior = c.prior;
  r.net = c.net;
  return r;
}

}  // namespace

FlddModel::FlddModel(const ModelConfig& c, Rng& init_rng)
    : config(c), forward(forward_config(c), init_rng), reverse(reverse_config(c), init_rng) {}

std::vector<NamedVar> FlddModel::named_parameters() const {
  auto out = forward.named_parameters();
  auto rev = reverse.named_parameters();
  out.insert(out.end(), rev.begin(), rev.end());
  return out;
}

std::vector<nd::Var> FlddModel::parameters() const {
  std::vector<nd::Var> out;
  for (auto& [name, v] : named_parameters()) out.push_back(v);
  return out;
}

}  // namespace fldd
