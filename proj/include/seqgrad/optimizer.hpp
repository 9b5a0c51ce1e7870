#pragma once

#include <cstddef>
#include <string_view>
#include <vector>

#include "seqgrad/policy.hpp"

namespace seqgrad {

enum class OptimizerKind { kSgd, kAdam };

std::string_view optimizer_name(OptimizerKind k);
OptimizerKind parse_optimizer(std::string_view name);

struct OptimizerConfig {
  OptimizerKind kind = OptimizerKind::kAdam;
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
};

/// Descends along the supplied loss gradient.
class Optimizer {
 public:
  Optimizer(const OptimizerConfig& config, const ParamSet& like);

  void step(ParamSet& params, const ParamSet& grad);
  std::size_t steps() const { return t_; }

 private:
  OptimizerConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::size_t t_ = 0;
};

}  // namespace seqgrad
