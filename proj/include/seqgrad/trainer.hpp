#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string_view>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/estimator.hpp"
#include "seqgrad/optimizer.hpp"
#include "seqgrad/policy.hpp"
#include "seqgrad/reward.hpp"

namespace seqgrad {

enum class Stage { kXe, kSc };

std::string_view stage_name(Stage s);
Stage parse_stage(std::string_view name);

inline constexpr double kDefaultXeLearningRate = 5e-4;
inline constexpr double kDefaultScLearningRate = 1e-4;

struct TrainConfig {
  Stage stage = Stage::kXe;
  std::size_t epochs = 10;
  /// Contexts per step.
  std::size_t batch_size = 16;
  /// 0 selects the per-stage default.
  double learning_rate = 0.0;
  OptimizerKind optimizer = OptimizerKind::kAdam;
  BaselineStrategy strategy{};
  RewardKind reward = RewardKind::kCiderD;
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t eval_beam = 5;
  /// Evaluate on val every N steps; 0 evaluates at the end of each epoch.
  std::size_t eval_every = 0;
  std::size_t threads = 1;

  double effective_learning_rate() const;
  void validate() const;
};

struct StepRecord {
  std::size_t step = 0;
  Stage stage = Stage::kXe;
  double mean_sample_reward = 0.0;
  std::optional<double> greedy_reward;
  double loss = 0.0;
  double ms_per_step = 0.0;
};

struct EvalRecord {
  std::size_t step = 0;
  Split split = Split::kVal;
  double cider_d = 0.0;
  double bleu4 = 0.0;
};

/// Append-only training history with monotone step numbers.
class TrainLog {
 public:
  void add_step(const StepRecord& r);
  void add_eval(const EvalRecord& r);

  const std::vector<StepRecord>& steps() const { return steps_; }
  const std::vector<EvalRecord>& evals() const { return evals_; }
  /// Last eval record for the split, if any.
  std::optional<EvalRecord> final_eval(Split split) const;
  /// Total greedy decodes issued by the estimator over the run.
  std::size_t greedy_decodes = 0;

  /// `step,stage,mean_sample_reward,greedy_reward,loss,ms_per_step`; an absent
  /// greedy reward is written as an empty field.
  void write_steps_csv(std::ostream& out) const;
  /// `step,split,cider_d,bleu4`
  void write_eval_csv(std::ostream& out) const;

 private:
  std::vector<StepRecord> steps_;
  std::vector<EvalRecord> evals_;
};

struct EvalMetrics {
  double cider_d = 0.0;
  double bleu4 = 0.0;
};

/// Beam-decodes every context and reports mean CIDEr-D (using `cider`) and BLEU4.
/// Read-only on the model.
EvalMetrics evaluate(const PolicyModel& model, std::span<const ContextInstance> split,
                     const RewardFn& cider, std::size_t beam = 5, std::size_t threads = 1);

/// Called after every epoch with the 1-based epoch index.
using EpochCallback = std::function<void(std::size_t epoch, const PolicyModel& model)>;

/// Cross-entropy pretraining: per context minimizes
/// -(1/M) sum_refs log p(ref) / len(ref), averaged over the batch.
TrainLog pretrain_xe(PolicyModel& model, const Dataset& dataset, const TrainConfig& config,
                     const EpochCallback& on_epoch = {});

/// Self-critical REINFORCE fine-tuning with config.strategy.
TrainLog train_sc(PolicyModel& model, const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

/// Builds a reward of the given kind; CIDEr-D takes document frequencies from the train split.
RewardFn make_reward(RewardKind kind, const Dataset& dataset);

}  // namespace seqgrad
