#include "fldd/network.hpp"

#include <cmath>
#include <stdexcept>

namespace fldd {

nd::Array time_embedding(std::span<const std::size_t> t, std::size_t dim) {
  nd::Array out(nd::Shape{t.size(), dim}, 0.0);
  const std::size_t half = dim / 2;
  for (std::size_t i = 0; i < t.size(); ++i) {
    const double pos = static_cast<double>(t[i]);
    for (std::size_t j = 0; j < half; ++j) {
      const double freq = std::pow(1000.0, -static_cast<double>(j) / static_cast<double>(half));
      out[i * dim + j] = std::sin(pos * freq);
      out[i * dim + half + j] = std::cos(pos * freq);
    }
    if (dim % 2) out[i * dim + dim - 1] = pos;
  }
  return out;
}

Mlp::Mlp(NetSpec spec, Rng& init_rng) : spec_(spec) {
  if (spec.input_dim == 0 || spec.output_dim == 0) throw std::invalid_argument("Mlp: zero input or output size");
  std::size_t fan_in = spec.input_dim + spec.time_dim;
  for (std::size_t layer = 0; layer <= spec.depth; ++layer) {
    const bool last = layer == spec.depth;
    const std::size_t fan_out = last ? spec.output_dim : spec.width;
    nd::Array w(nd::Shape{fan_in, fan_out}, 0.0);
    if (!last) {
      const double scale = std::sqrt(2.0 / static_cast<double>(fan_in));
      for (double& v : w.values()) v = scale * init_rng.normal();
    }
    weights_.push_back(nd::Var::parameter(std::move(w)));
    biases_.push_back(nd::Var::parameter(nd::Array(nd::Shape{fan_out}, 0.0)));
    fan_in = fan_out;
  }
}

nd::Var Mlp::forward(const nd::Var& input, std::span<const std::size_t> t) const {
  const nd::Shape& s = input.shape();
  if (s.size() != 2 || s[1] != spec_.input_dim || s[0] != t.size()) {
    throw nd::ShapeError("Mlp::forward: input " + nd::shape_str(s) + " with " + std::to_string(t.size()) +
                         " timesteps, expected width " + std::to_string(spec_.input_dim));
  }
  ++evaluations_;
  nd::Var h = spec_.time_dim > 0 ? nd::concat({input, nd::Var::constant(time_embedding(t, spec_.time_dim))}) : input;
  for (std::size_t layer = 0; layer < weights_.size(); ++layer) {
    h = nd::matmul(h, weights_[layer]) + biases_[layer];
    if (layer + 1 < weights_.size()) h = nd::gelu(h);
  }
  return h;
}

std::vector<NamedVar> Mlp::named_parameters(const std::string& prefix) const {
  std::vector<NamedVar> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.emplace_back(prefix + "layer" + std::to_string(i) + ".weight", weights_[i]);
    out.emplace_back(prefix + "layer" + std::to_string(i) + ".bias", biases_[i]);
  }
  return out;
}

std::vector<nd::Var> Mlp::parameters() const {
  std::vector<nd::Var> out;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    out.push_back(weights_[i]);
    out.push_back(biases_[i]);
  }
  return out;
}

}  // namespace fldd
