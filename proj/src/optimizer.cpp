#include "seqgrad/optimizer.hpp"

#include <cmath>
#include <stdexcept>
#include <string>

namespace seqgrad {

std::string_view optimizer_name(OptimizerKind k) { return k == OptimizerKind::kSgd ? "sgd" : "adam"; }

OptimizerKind parse_optimizer(std::string_view name) {
  if (name == "sgd") return OptimizerKind::kSgd;
  if (name == "adam") return OptimizerKind::kAdam;
  throw std::invalid_argument("unknown optimizer '" + std::string(name) + "'");
}

Optimizer::Optimizer(const OptimizerConfig& config, const ParamSet& like) : config_(config) {
  if (!(config.learning_rate > 0.0)) throw std::invalid_argument("learning rate must be positive");
  if (config.kind == OptimizerKind::kAdam) {
    m_.assign(like.numel(), 0.0);
    v_.assign(like.numel(), 0.0);
  }
}

void Optimizer::step(ParamSet& params, const ParamSet& grad) {
  if (params.size() != grad.size()) throw std::invalid_argument("optimizer: gradient/parameter mismatch");
  ++t_;
  const double lr = config_.learning_rate;
  if (config_.kind == OptimizerKind::kSgd) {
    for (std::size_t i = 0; i < params.size(); ++i) params[i].axpy(-lr, grad[i]);
    return;
  }
  const double b1 = config_.beta1;
  const double b2 = config_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(t_));
  std::size_t off = 0;
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto p = params[i].data();
    const auto g = grad[i].data();
    if (g.size() != p.size()) throw std::invalid_argument("optimizer: shape mismatch for " + params.name(i));
    for (std::size_t j = 0; j < p.size(); ++j, ++off) {
      m_[off] = b1 * m_[off] + (1.0 - b1) * g[j];
      v_[off] = b2 * v_[off] + (1.0 - b2) * g[j] * g[j];
      p[j] -= lr * (m_[off] / c1) / (std::sqrt(v_[off] / c2) + config_.epsilon);
    }
  }
}

}  // namespace seqgrad
