#include "fldd/optim.hpp"

#include <cmath>

namespace fldd {

AdamW::AdamW(std::vector<nd::Var> params, AdamWConfig config) : params_(std::move(params)), config_(config) {
  for (const auto& p : params_) {
    m_.emplace_back(p.shape(), 0.0);
    v_.emplace_back(p.shape(), 0.0);
  }
}

void AdamW::step() {
  ++steps_;
  const double b1 = config_.beta1, b2 = config_.beta2;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto& p = params_[i];
    if (!p.has_grad()) continue;
    const nd::Array& g = p.node()->grad;
    nd::Array& w = p.mutable_value();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m_[i][j] = b1 * m_[i][j] + (1.0 - b1) * g[j];
      v_[i][j] = b2 * v_[i][j] + (1.0 - b2) * g[j] * g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      w[j] -= config_.lr * (mhat / (std::sqrt(vhat) + config_.eps) + config_.weight_decay * w[j]);
    }
  }
}

void AdamW::zero_grad() {
  for (auto& p : params_) p.zero_grad();
}

double grad_norm(const std::vector<nd::Var>& params) {
  double s = 0.0;
  for (const auto& p : params) {
    if (!p.has_grad()) continue;
    for (double g : p.node()->grad.values()) s += g * g;
  }
  return std::sqrt(s);
}

double clip_grad_norm(const std::vector<nd::Var>& params, double max_norm) {
  const double norm = grad_norm(params);
  if (norm > max_norm && norm > 0.0) {
    const double scale = max_norm / norm;
    for (const auto& p : params) {
      if (!p.has_grad()) continue;
      for (double& g : p.node()->grad.values()) g *= scale;
    }
  }
  return norm;
}

}  // namespace fldd
