#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/estimator.hpp"
#include "seqgrad/policy.hpp"
#include "seqgrad/reward.hpp"

namespace seqgrad {

struct VarianceReport {
  std::size_t epoch = 0;
  BaselineStrategy strategy{};
  double v = 0.0;
  std::size_t n_batches = 0;
  std::size_t batch_size = 0;
  std::uint64_t seed = 0;
};

struct VarianceOptions {
  std::size_t n_batches = 20;
  std::size_t batch_size = 16;
  std::uint64_t seed = 1;
  double temperature = 1.0;
  std::size_t threads = 1;
  /// Contexts used to fit the LEARNED baseline before measuring.
  std::size_t learned_warmup_contexts = 128;
};

/// Fixed batches with one sampling seed each. Two strategies measured on the
/// same plan see the same contexts and the same per-context RNG streams.
struct BatchPlan {
  std::vector<std::vector<const ContextInstance*>> batches;
  std::vector<std::uint64_t> seeds;
};

/// Batches drawn from a seeded shuffle of the train split. When the split is
/// smaller than n_batches * batch_size, further passes use fresh shuffles.
BatchPlan plan_batches(const Dataset& dataset, std::size_t n_batches, std::size_t batch_size,
                       std::uint64_t seed);

/// Flattened batch gradients for every batch in the plan, in plan order.
std::vector<std::vector<double>> plan_gradients(const PolicyModel& model, const BatchPlan& plan,
                                                const RewardFn& reward, const BaselineStrategy& strategy,
                                                const EstimatorOptions& opts = {}, std::size_t threads = 1);

/// Fits a learned baseline for a frozen model from samples drawn on an RNG
/// stream that the measurement itself never uses.
LearnedBaseline warmup_learned_baseline(const PolicyModel& model, const Dataset& dataset,
                                        const RewardFn& reward, std::size_t k, const VarianceOptions& opts);

/// Mean over parameter components of the across-batch gradient variance
/// (n-1 divisor). The model is only read.
VarianceReport measure_epoch_variance(const PolicyModel& model, const Dataset& dataset,
                                      const RewardFn& reward, const BaselineStrategy& strategy,
                                      const VarianceOptions& opts, std::size_t epoch = 0);

struct EpochCheckpoint {
  std::size_t epoch = 0;
  PolicyModel model;
};

/// Every checkpoint crossed with every strategy, checkpoint-major, all on
/// the batch plan determined by opts.seed.
std::vector<VarianceReport> variance_sweep(std::span<const EpochCheckpoint> checkpoints,
                                           std::span<const BaselineStrategy> strategies,
                                           const Dataset& dataset, const RewardFn& reward,
                                           const VarianceOptions& opts);

/// Label used in CSV rows and chart legends: the strategy name, with K
/// appended to a strategy that appears with several K in one sweep.
std::string strategy_label(const BaselineStrategy& s, bool with_k);

/// `epoch,strategy,V`
void write_variance_csv(std::span<const VarianceReport> reports, std::ostream& out);
/// Line chart of V against epoch on a log y axis, one line per strategy.
void write_variance_svg(std::span<const VarianceReport> reports, std::ostream& out);

}  // namespace seqgrad
