#include "seqgrad/estimator.hpp"

#include <Eigen/Dense>
#include <cmath>
#include <stdexcept>
#include <string>

#include "seqgrad/parallel.hpp"

namespace seqgrad {

std::string_view baseline_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::kNone: return "none";
    case BaselineKind::kGreedy: return "greedy";
    case BaselineKind::kLeaveOneOut: return "loo";
    case BaselineKind::kSingleSample: return "single";
    case BaselineKind::kLearned: return "learned";
  }
  return "none";
}

BaselineKind parse_baseline(std::string_view name) {
  if (name == "none") return BaselineKind::kNone;
  if (name == "greedy" || name == "scst") return BaselineKind::kGreedy;
  if (name == "loo" || name == "leave_one_out") return BaselineKind::kLeaveOneOut;
  if (name == "single" || name == "single_sample") return BaselineKind::kSingleSample;
  if (name == "learned") return BaselineKind::kLearned;
  throw std::invalid_argument("unknown strategy '" + std::string(name) +
                              "' (expected none|greedy|loo|single|learned)");
}

void BaselineStrategy::validate() const {
  if (k < 1) throw std::invalid_argument(std::string(baseline_name(kind)) + ": K must be >= 1");
  if ((kind == BaselineKind::kLeaveOneOut || kind == BaselineKind::kSingleSample) && k < 2) {
    throw std::invalid_argument(std::string(baseline_name(kind)) + ": K must be >= 2, got " +
                                std::to_string(k));
  }
}

std::vector<double> compute_baselines(const BaselineStrategy& strategy, std::span<const double> rewards,
                                      std::optional<double> greedy_reward,
                                      std::optional<double> learned_pred) {
  const std::size_t k = rewards.size();
  const std::string name(baseline_name(strategy.kind));
  std::vector<double> b(k, 0.0);
  switch (strategy.kind) {
    case BaselineKind::kNone:
      break;
    case BaselineKind::kGreedy:
      if (!greedy_reward) throw std::invalid_argument(name + ": greedy reward required");
      std::fill(b.begin(), b.end(), *greedy_reward);
      break;
    case BaselineKind::kLeaveOneOut: {
      if (k < 2) throw std::invalid_argument(name + ": needs K >= 2 rewards");
      for (std::size_t i = 0; i < k; ++i) {
        double others = 0.0;
        for (std::size_t j = 0; j < k; ++j)
          if (j != i) others += rewards[j];
        b[i] = others / static_cast<double>(k - 1);
      }
      break;
    }
    case BaselineKind::kSingleSample:
      if (k < 2) throw std::invalid_argument(name + ": needs K >= 2 rewards");
      for (std::size_t i = 0; i < k; ++i) b[i] = rewards[(i + 1) % k];
      break;
    case BaselineKind::kLearned:
      if (!learned_pred) throw std::invalid_argument(name + ": learned prediction required");
      std::fill(b.begin(), b.end(), *learned_pred);
      break;
  }
  return b;
}

double LearnedBaseline::predict(std::span<const double> features) const {
  if (features.size() != weights_.size()) {
    throw std::invalid_argument("learned baseline expects " + std::to_string(weights_.size()) +
                                " features, got " + std::to_string(features.size()));
  }
  double y = bias_;
  for (std::size_t i = 0; i < weights_.size(); ++i) y += weights_[i] * features[i];
  return y;
}

LearnedBaseline fit_learned_baseline(const LearnedBaseline& lb, std::span<const RewardPair> pairs,
                                     const LearnedFitOptions& opts) {
  if (pairs.empty()) throw std::invalid_argument("fit_learned_baseline: no pairs");
  const std::size_t dim = lb.weights().size();
  const std::size_t n = pairs.size();
  bool all_zero = true;
  for (const RewardPair& p : pairs) {
    if (p.features.size() != dim) {
      throw std::invalid_argument("fit_learned_baseline: feature dimension mismatch");
    }
    for (double f : p.features) all_zero = all_zero && f == 0.0;
  }
  if (all_zero) {
    double mean = 0.0;
    for (const RewardPair& p : pairs) mean += p.reward;
    return LearnedBaseline(std::vector<double>(dim, 0.0), mean / static_cast<double>(n));
  }

  if (n >= dim + 1) {
    // Ridge on the weights only; the bias column is unpenalized.
    Eigen::MatrixXd x(n, dim + 1);
    Eigen::VectorXd y(n);
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = 0; j < dim; ++j) x(i, j) = pairs[i].features[j];
      x(i, dim) = 1.0;
      y(i) = pairs[i].reward;
    }
    Eigen::MatrixXd gram = x.transpose() * x;
    for (std::size_t j = 0; j < dim; ++j) gram(j, j) += opts.ridge;
    const Eigen::VectorXd sol = gram.ldlt().solve(x.transpose() * y);
    return LearnedBaseline(std::vector<double>(sol.data(), sol.data() + dim), sol(dim));
  }

  std::vector<double> grad_w(dim, 0.0);
  double grad_b = 0.0;
  for (const RewardPair& p : pairs) {
    const double err = lb.predict(p.features) - p.reward;
    for (std::size_t j = 0; j < dim; ++j) grad_w[j] += 2.0 * err * p.features[j] / static_cast<double>(n);
    grad_b += 2.0 * err / static_cast<double>(n);
  }
  std::vector<double> w = lb.weights();
  for (std::size_t j = 0; j < dim; ++j) w[j] -= opts.learning_rate * grad_w[j];
  return LearnedBaseline(std::move(w), lb.bias() - opts.learning_rate * grad_b);
}

GradientEstimate estimate_gradient(const PolicyModel& model, const ContextInstance& ctx,
                                   const RewardFn& reward, const BaselineStrategy& strategy, Rng& rng,
                                   const EstimatorOptions& opts) {
  strategy.validate();
  const PreparedRefs refs = prepare_refs(ctx.references);

  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  std::vector<TapeSample> samples;
  std::vector<double> rewards;
  samples.reserve(strategy.k);
  rewards.reserve(strategy.k);
  for (std::size_t i = 0; i < strategy.k; ++i) {
    samples.push_back(sample_on(rollout, rng, opts.temperature));
    rewards.push_back(reward.score(samples.back().seq, refs));
  }

  GradientEstimate est;
  est.context_ids = {ctx.context_id};
  std::optional<double> greedy_reward;
  std::optional<double> learned_pred;
  if (strategy.kind == BaselineKind::kGreedy) {
    greedy_reward = reward.score(greedy_decode(model, ctx).seq, refs);
    est.greedy_reward = greedy_reward;
    est.greedy_decodes = 1;
  } else if (strategy.kind == BaselineKind::kLearned) {
    if (opts.learned == nullptr) throw std::invalid_argument("learned: no LearnedBaseline supplied");
    learned_pred = opts.learned->predict(ctx.features);
  }
  const std::vector<double> baselines = compute_baselines(strategy, rewards, greedy_reward, learned_pred);

  const double inv_k = 1.0 / static_cast<double>(strategy.k);
  std::vector<NodeId> terms;
  std::vector<double> weights;
  for (std::size_t i = 0; i < samples.size(); ++i) {
    const double adv = rewards[i] - baselines[i];
    terms.push_back(samples[i].logprob);
    weights.push_back(-inv_k * adv);
    est.samples.push_back(SampleRecord{ctx.context_id, samples[i].seq, tape.value(samples[i].logprob).item(),
                                       rewards[i], baselines[i], adv});
  }
  const NodeId loss = tape.weighted_sum(terms, weights);
  est.grad = rollout.gradients(loss);
  return est;
}

GradientEstimate estimate_batch_gradient(const PolicyModel& model,
                                         std::span<const ContextInstance* const> batch,
                                         const RewardFn& reward, const BaselineStrategy& strategy,
                                         std::uint64_t seed, const EstimatorOptions& opts,
                                         std::size_t threads) {
  if (batch.empty()) throw std::invalid_argument("estimate_batch_gradient: empty batch");
  std::vector<GradientEstimate> parts(batch.size());
  parallel_for(batch.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed({seed, static_cast<std::uint64_t>(batch[i]->context_id)}));
    parts[i] = estimate_gradient(model, *batch[i], reward, strategy, rng, opts);
  });

  GradientEstimate out;
  out.seed = seed;
  out.grad = model.params().zeros_like();
  const double inv_n = 1.0 / static_cast<double>(batch.size());
  double greedy_total = 0.0;
  for (GradientEstimate& p : parts) {
    for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j].axpy(inv_n, p.grad[j]);
    out.context_ids.push_back(p.context_ids.front());
    out.samples.insert(out.samples.end(), std::make_move_iterator(p.samples.begin()),
                       std::make_move_iterator(p.samples.end()));
    out.greedy_decodes += p.greedy_decodes;
    if (p.greedy_reward) greedy_total += *p.greedy_reward;
  }
  if (strategy.kind == BaselineKind::kGreedy) out.greedy_reward = greedy_total * inv_n;
  return out;
}

std::vector<TokenSeq> enumerate_sequences(std::size_t vocab_size, std::size_t t_max) {
  const std::size_t content = vocab_size - kNumReserved;
  std::vector<TokenSeq> out;
  std::vector<std::vector<TokenId>> frontier{{}};
  for (std::size_t len = 0; len <= t_max; ++len) {
    std::vector<std::vector<TokenId>> next;
    for (const auto& prefix : frontier) {
      out.push_back(TokenSeq::from_content(prefix));
      if (len == t_max) continue;
      for (std::size_t c = 0; c < content; ++c) {
        auto ext = prefix;
        ext.push_back(static_cast<TokenId>(kNumReserved + c));
        next.push_back(std::move(ext));
      }
    }
    frontier = std::move(next);
  }
  return out;
}

namespace {

void require_enumerable(const PolicyModel& model) {
  if (model.kind() != PolicyKind::kMicro || model.output_size() > kMaxEnumerableOutputs ||
      model.t_max() > kMaxEnumerableTmax) {
    throw std::invalid_argument(
        "exact_policy_gradient: needs a MICRO model with <= 6 output choices and t_max <= 4");
  }
}

}  // namespace

GradientEstimate exact_policy_gradient(const PolicyModel& model, const ContextInstance& ctx,
                                       const RewardFn& reward) {
  require_enumerable(model);
  const PreparedRefs refs = prepare_refs(ctx.references);
  GradientEstimate out;
  out.context_ids = {ctx.context_id};
  out.grad = model.params().zeros_like();
  for (const TokenSeq& seq : enumerate_sequences(model.config().vocab_size, model.t_max())) {
    const LogprobGradient lg = sequence_logprob_grad(model, ctx, seq);
    const double w = -std::exp(lg.value) * reward.score(seq, refs);
    for (std::size_t j = 0; j < out.grad.size(); ++j) out.grad[j].axpy(w, lg.grad[j]);
  }
  return out;
}

double expected_reward(const PolicyModel& model, const ContextInstance& ctx, const RewardFn& reward) {
  require_enumerable(model);
  const PreparedRefs refs = prepare_refs(ctx.references);
  double total = 0.0;
  for (const TokenSeq& seq : enumerate_sequences(model.config().vocab_size, model.t_max())) {
    total += std::exp(sequence_logprob(model, ctx, seq)) * reward.score(seq, refs);
  }
  return total;
}

std::vector<double> componentwise_variance(std::span<const std::vector<double>> rows) {
  if (rows.size() < 2) throw std::invalid_argument("variance needs at least 2 rows");
  const std::size_t d = rows.front().size();
  std::vector<double> mean(d, 0.0);
  for (const auto& r : rows) {
    if (r.size() != d) throw std::invalid_argument("variance rows differ in length");
    for (std::size_t j = 0; j < d; ++j) mean[j] += r[j];
  }
  const double n = static_cast<double>(rows.size());
  for (double& m : mean) m /= n;
  std::vector<double> var(d, 0.0);
  for (const auto& r : rows)
    for (std::size_t j = 0; j < d; ++j) var[j] += (r[j] - mean[j]) * (r[j] - mean[j]);
  for (double& v : var) v /= n - 1.0;
  return var;
}

double mean_variance(std::span<const std::vector<double>> rows) {
  const std::vector<double> var = componentwise_variance(rows);
  if (var.empty()) return 0.0;
  double total = 0.0;
  for (double v : var) total += v;
  return total / static_cast<double>(var.size());
}

double estimator_variance(const PolicyModel& model, const ContextInstance& ctx, const RewardFn& reward,
                          const BaselineStrategy& strategy, std::size_t n_trials, Rng& rng,
                          const EstimatorOptions& opts) {
  if (n_trials < 2) throw std::invalid_argument("estimator_variance: n_trials must be >= 2");
  std::vector<std::vector<double>> rows;
  rows.reserve(n_trials);
  for (std::size_t t = 0; t < n_trials; ++t) {
    rows.push_back(estimate_gradient(model, ctx, reward, strategy, rng, opts).grad.flatten());
  }
  return mean_variance(rows);
}

}  // namespace seqgrad
