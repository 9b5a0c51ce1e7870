#include "seqgrad/variance.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <set>
#include <stdexcept>
#include <string>

#include "seqgrad/report.hpp"
#include "seqgrad/text.hpp"

namespace seqgrad {

namespace {

constexpr std::uint64_t kPlanStream = 0x7a41;
constexpr std::uint64_t kBatchStream = 0xba7c;
constexpr std::uint64_t kWarmupStream = 0x1ea4;

std::vector<const ContextInstance*> shuffled_train(const Dataset& ds, std::uint64_t seed, std::uint64_t pass) {
  std::vector<const ContextInstance*> order;
  order.reserve(ds.train.size());
  for (const ContextInstance& c : ds.train) order.push_back(&c);
  Rng rng(derive_seed({seed, kPlanStream, pass}));
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  return order;
}

// Strategies that appear with more than one K.
std::set<BaselineKind> mixed_k(std::span<const VarianceReport> reports) {
  std::map<BaselineKind, std::set<std::size_t>> ks;
  for (const VarianceReport& r : reports) ks[r.strategy.kind].insert(r.strategy.k);
  std::set<BaselineKind> out;
  for (const auto& [kind, k] : ks)
    if (k.size() > 1) out.insert(kind);
  return out;
}

}  // namespace

BatchPlan plan_batches(const Dataset& dataset, std::size_t n_batches, std::size_t batch_size,
                       std::uint64_t seed) {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (dataset.train.empty()) throw std::invalid_argument("training split is empty");
  if (batch_size > dataset.train.size()) {
    throw std::invalid_argument("batch_size " + std::to_string(batch_size) + " exceeds the train split (" +
                                std::to_string(dataset.train.size()) + " contexts)");
  }
  BatchPlan plan;
  std::uint64_t pass = 0;
  auto order = shuffled_train(dataset, seed, pass);
  std::size_t pos = 0;
  for (std::size_t b = 0; b < n_batches; ++b) {
    if (pos + batch_size > order.size()) {
      order = shuffled_train(dataset, seed, ++pass);
      pos = 0;
    }
    plan.batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(pos),
                              order.begin() + static_cast<std::ptrdiff_t>(pos + batch_size));
    plan.seeds.push_back(derive_seed({seed, kBatchStream, b}));
    pos += batch_size;
  }
  return plan;
}

std::vector<std::vector<double>> plan_gradients(const PolicyModel& model, const BatchPlan& plan,
                                                const RewardFn& reward, const BaselineStrategy& strategy,
                                                const EstimatorOptions& opts, std::size_t threads) {
  if (plan.batches.size() != plan.seeds.size()) throw std::invalid_argument("batch plan: seed count mismatch");
  std::vector<std::vector<double>> rows;
  rows.reserve(plan.batches.size());
  for (std::size_t b = 0; b < plan.batches.size(); ++b) {
    const GradientEstimate est =
        estimate_batch_gradient(model, plan.batches[b], reward, strategy, plan.seeds[b], opts, threads);
    rows.push_back(est.grad.flatten());
  }
  return rows;
}

LearnedBaseline warmup_learned_baseline(const PolicyModel& model, const Dataset& dataset,
                                        const RewardFn& reward, std::size_t k, const VarianceOptions& opts) {
  const auto order = shuffled_train(dataset, derive_seed({opts.seed, kWarmupStream}), 0);
  const std::size_t n = std::min(order.size(), std::max<std::size_t>(1, opts.learned_warmup_contexts));
  std::vector<RewardPair> pairs;
  pairs.reserve(n * k);
  for (std::size_t i = 0; i < n; ++i) {
    const ContextInstance& ctx = *order[i];
    Rng rng(derive_seed({opts.seed, kWarmupStream, static_cast<std::uint64_t>(ctx.context_id)}));
    for (std::size_t j = 0; j < k; ++j) {
      const ScoredSample s = sample(model, ctx, rng, opts.temperature);
      pairs.push_back(RewardPair{ctx.features, reward.score(s.seq, ctx.references)});
    }
  }
  return fit_learned_baseline(LearnedBaseline(model.config().feature_dim), pairs);
}

VarianceReport measure_epoch_variance(const PolicyModel& model, const Dataset& dataset,
                                      const RewardFn& reward, const BaselineStrategy& strategy,
                                      const VarianceOptions& opts, std::size_t epoch) {
  if (opts.n_batches < 2) {
    throw std::invalid_argument("variance needs at least 2 batches, got " + std::to_string(opts.n_batches));
  }
  strategy.validate();
  const BatchPlan plan = plan_batches(dataset, opts.n_batches, opts.batch_size, opts.seed);
  LearnedBaseline learned;
  EstimatorOptions est_opts{opts.temperature, nullptr};
  if (strategy.kind == BaselineKind::kLearned) {
    learned = warmup_learned_baseline(model, dataset, reward, strategy.k, opts);
    est_opts.learned = &learned;
  }
  const auto rows = plan_gradients(model, plan, reward, strategy, est_opts, opts.threads);
  const double v = mean_variance(rows);
  if (!std::isfinite(v)) throw std::runtime_error("gradient variance is not finite");
  return VarianceReport{epoch, strategy, v, opts.n_batches, opts.batch_size, opts.seed};
}

std::vector<VarianceReport> variance_sweep(std::span<const EpochCheckpoint> checkpoints,
                                           std::span<const BaselineStrategy> strategies,
                                           const Dataset& dataset, const RewardFn& reward,
                                           const VarianceOptions& opts) {
  if (checkpoints.empty()) throw std::invalid_argument("variance sweep: no checkpoints");
  if (strategies.empty()) throw std::invalid_argument("variance sweep: no strategies");
  std::vector<VarianceReport> out;
  out.reserve(checkpoints.size() * strategies.size());
  for (const EpochCheckpoint& ck : checkpoints) {
    for (const BaselineStrategy& s : strategies) {
      out.push_back(measure_epoch_variance(ck.model, dataset, reward, s, opts, ck.epoch));
    }
  }
  return out;
}

std::string strategy_label(const BaselineStrategy& s, bool with_k) {
  std::string label(baseline_name(s.kind));
  if (with_k) label += "_k" + std::to_string(s.k);
  return label;
}

void write_variance_csv(std::span<const VarianceReport> reports, std::ostream& out) {
  const auto mixed = mixed_k(reports);
  out << "epoch,strategy,V\n";
  for (const VarianceReport& r : reports) {
    out << r.epoch << ',' << strategy_label(r.strategy, mixed.count(r.strategy.kind) > 0) << ',' << format_double(r.v) << '\n';
  }
}

void write_variance_svg(std::span<const VarianceReport> reports, std::ostream& out) {
  const auto mixed = mixed_k(reports);
  std::vector<LineSeries> series;
  for (const VarianceReport& r : reports) {
    const std::string label = strategy_label(r.strategy, mixed.count(r.strategy.kind) > 0);
    auto it = std::find_if(series.begin(), series.end(), [&](const LineSeries& s) { return s.name == label; });
    if (it == series.end()) {
      series.push_back(LineSeries{label, {}});
      it = series.end() - 1;
    }
    it->points.emplace_back(static_cast<double>(r.epoch), r.v);
  }
  ChartOptions chart;
  chart.title = "Gradient variance on the training set";
  chart.x_label = "epoch";
  chart.y_label = "V";
  chart.log_y = true;
  write_line_chart_svg(series, chart, out);
}

}  // namespace seqgrad
