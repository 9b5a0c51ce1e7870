#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/policy.hpp"
#include "seqgrad/random.hpp"
#include "seqgrad/reward.hpp"

namespace seqgrad {

enum class BaselineKind { kNone, kGreedy, kLeaveOneOut, kSingleSample, kLearned };

std::string_view baseline_name(BaselineKind k);
/// Accepts none|greedy|loo|single|learned.
BaselineKind parse_baseline(std::string_view name);

struct BaselineStrategy {
  BaselineKind kind = BaselineKind::kLeaveOneOut;
  /// Samples per context.
  std::size_t k = 5;

  /// Throws std::invalid_argument naming the strategy when k is too small.
  void validate() const;
};

/// Per-sample baselines b_k. b_k never depends on rewards[k]:
///   NONE           0
///   GREEDY         reward of the greedy decode
///   LEAVE_ONE_OUT  mean reward of the other K-1 samples
///   SINGLE_SAMPLE  rewards[(k+1) mod K]
///   LEARNED        the learned predictor's output for this context
std::vector<double> compute_baselines(const BaselineStrategy& strategy, std::span<const double> rewards,
                                      std::optional<double> greedy_reward = std::nullopt,
                                      std::optional<double> learned_pred = std::nullopt);

/// Linear map from context features to predicted reward. Its interface never
/// sees a sampled sequence.
class LearnedBaseline {
 public:
  LearnedBaseline() = default;
  explicit LearnedBaseline(std::size_t feature_dim) : weights_(feature_dim, 0.0) {}
  LearnedBaseline(std::vector<double> weights, double bias) : weights_(std::move(weights)), bias_(bias) {}

  double predict(std::span<const double> features) const;
  const std::vector<double>& weights() const { return weights_; }
  double bias() const { return bias_; }

 private:
  std::vector<double> weights_;
  double bias_ = 0.0;
};

struct RewardPair {
  std::vector<double> features;
  double reward = 0.0;
};

struct LearnedFitOptions {
  double ridge = 1e-6;
  /// Step size of the single gradient step used when there are fewer pairs than unknowns.
  double learning_rate = 0.05;
};

/// Least squares on (features, reward): a closed-form ridge solve when there
/// are at least dim+1 pairs, otherwise one gradient step from `lb`. All-zero
/// features fall back to a bias-only fit.
LearnedBaseline fit_learned_baseline(const LearnedBaseline& lb, std::span<const RewardPair> pairs,
                                     const LearnedFitOptions& opts = {});

struct SampleRecord {
  int context_id = 0;
  TokenSeq seq;
  double logprob = 0.0;
  double reward = 0.0;
  double baseline = 0.0;
  double advantage = 0.0;
};

/// Loss gradient: ascent on expected reward equals descent along `grad`.
struct GradientEstimate {
  ParamSet grad;
  std::vector<int> context_ids;
  std::uint64_t seed = 0;
  std::vector<SampleRecord> samples;
  /// Mean greedy reward over contexts; only set when the strategy decodes greedily.
  std::optional<double> greedy_reward;
  std::size_t greedy_decodes = 0;
};

struct EstimatorOptions {
  double temperature = 1.0;
  /// Required for LEARNED.
  const LearnedBaseline* learned = nullptr;
};

/// Draws K samples for one context and returns
///   -(1/K) * sum_k (R(c_k) - b_k) * grad log p(c_k | I).
/// GREEDY additionally runs one greedy decode; no other strategy does.
GradientEstimate estimate_gradient(const PolicyModel& model, const ContextInstance& ctx,
                                   const RewardFn& reward, const BaselineStrategy& strategy, Rng& rng,
                                   const EstimatorOptions& opts = {});

/// Mean of per-context estimates. Context c samples from the stream
/// derive_seed({seed, c.context_id}), and results are reduced in batch order,
/// so the output is identical for any thread count.
GradientEstimate estimate_batch_gradient(const PolicyModel& model,
                                         std::span<const ContextInstance* const> batch,
                                         const RewardFn& reward, const BaselineStrategy& strategy,
                                         std::uint64_t seed, const EstimatorOptions& opts = {},
                                         std::size_t threads = 1);

/// Every terminated sequence with at most t_max content tokens drawn from
/// the output space of a vocabulary of `vocab_size` ids.
std::vector<TokenSeq> enumerate_sequences(std::size_t vocab_size, std::size_t t_max);

inline constexpr std::size_t kMaxEnumerableOutputs = 6;
inline constexpr std::size_t kMaxEnumerableTmax = 4;

/// Ground-truth loss gradient -sum_c p(c) R(c) grad log p(c) by full
/// enumeration. MICRO models with <= 6 output choices and t_max <= 4 only.
GradientEstimate exact_policy_gradient(const PolicyModel& model, const ContextInstance& ctx,
                                       const RewardFn& reward);

/// E[R] = sum_c p(c) R(c) by enumeration (same preconditions as above).
double expected_reward(const PolicyModel& model, const ContextInstance& ctx, const RewardFn& reward);

/// Mean over parameter components of the per-component variance (n-1
/// divisor) across n_trials independent single-context estimates.
double estimator_variance(const PolicyModel& model, const ContextInstance& ctx, const RewardFn& reward,
                          const BaselineStrategy& strategy, std::size_t n_trials, Rng& rng,
                          const EstimatorOptions& opts = {});

/// Per-component unbiased variance across rows; V = mean of the result.
/// Requires >= 2 rows of equal length.
std::vector<double> componentwise_variance(std::span<const std::vector<double>> rows);
double mean_variance(std::span<const std::vector<double>> rows);

}  // namespace seqgrad
