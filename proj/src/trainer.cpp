#include "seqgrad/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <numeric>
#include <ostream>
#include <stdexcept>
#include <string>

#include "seqgrad/parallel.hpp"
#include "seqgrad/text.hpp"

namespace seqgrad {

std::string_view stage_name(Stage s) { return s == Stage::kXe ? "xe" : "sc"; }

Stage parse_stage(std::string_view name) {
  if (name == "xe") return Stage::kXe;
  if (name == "sc") return Stage::kSc;
  throw std::invalid_argument("unknown stage '" + std::string(name) + "' (expected xe|sc)");
}

double TrainConfig::effective_learning_rate() const {
  if (learning_rate > 0.0) return learning_rate;
  return stage == Stage::kXe ? kDefaultXeLearningRate : kDefaultScLearningRate;
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("batch_size must be positive");
  if (learning_rate < 0.0) throw std::invalid_argument("learning_rate must be positive");
  if (!(temperature > 0.0)) throw std::invalid_argument("temperature must be positive");
  if (eval_beam == 0) throw std::invalid_argument("eval_beam must be positive");
  if (threads == 0) throw std::invalid_argument("threads must be positive");
  if (stage == Stage::kSc) strategy.validate();
}

void TrainLog::add_step(const StepRecord& r) {
  if (!steps_.empty() && r.step <= steps_.back().step) {
    throw std::logic_error("TrainLog: step numbers must increase");
  }
  steps_.push_back(r);
}

void TrainLog::add_eval(const EvalRecord& r) {
  if (!evals_.empty() && r.step < evals_.back().step) {
    throw std::logic_error("TrainLog: eval steps must not decrease");
  }
  evals_.push_back(r);
}

std::optional<EvalRecord> TrainLog::final_eval(Split split) const {
  for (auto it = evals_.rbegin(); it != evals_.rend(); ++it)
    if (it->split == split) return *it;
  return std::nullopt;
}

void TrainLog::write_steps_csv(std::ostream& out) const {
  out << "step,stage,mean_sample_reward,greedy_reward,loss,ms_per_step\n";
  for (const StepRecord& r : steps_) {
    out << r.step << ',' << stage_name(r.stage) << ',' << format_double(r.mean_sample_reward) << ','
        << (r.greedy_reward ? format_double(*r.greedy_reward) : std::string()) << ','
        << format_double(r.loss) << ',' << format_fixed(r.ms_per_step, 3) << '\n';
  }
}

void TrainLog::write_eval_csv(std::ostream& out) const {
  out << "step,split,cider_d,bleu4\n";
  for (const EvalRecord& r : evals_) {
    out << r.step << ',' << split_name(r.split) << ',' << format_double(r.cider_d) << ','
        << format_double(r.bleu4) << '\n';
  }
}

EvalMetrics evaluate(const PolicyModel& model, std::span<const ContextInstance> split,
                     const RewardFn& cider, std::size_t beam, std::size_t threads) {
  if (split.empty()) return {};
  const RewardFn bleu = RewardFn::bleu4();
  std::vector<EvalMetrics> per(split.size());
  parallel_for(split.size(), threads, [&](std::size_t i) {
    const Decoded d = beam_search(model, split[i], beam);
    per[i] = {cider.score(d.seq, split[i].references), bleu.score(d.seq, split[i].references)};
  });
  EvalMetrics m;
  for (const EvalMetrics& e : per) {
    m.cider_d += e.cider_d;
    m.bleu4 += e.bleu4;
  }
  m.cider_d /= static_cast<double>(split.size());
  m.bleu4 /= static_cast<double>(split.size());
  return m;
}

RewardFn make_reward(RewardKind kind, const Dataset& dataset) {
  switch (kind) {
    case RewardKind::kCiderD:
      return RewardFn::cider_d(std::make_shared<const IdfStore>(build_idf(dataset)));
    case RewardKind::kBleu4:
      return RewardFn::bleu4();
    case RewardKind::kNegEditDistance:
      return RewardFn::neg_edit_distance(dataset.t_max);
  }
  throw std::invalid_argument("unknown reward kind");
}

namespace {

using Clock = std::chrono::steady_clock;

std::vector<std::vector<const ContextInstance*>> epoch_batches(const Dataset& ds, std::size_t batch_size,
                                                               std::uint64_t seed, std::size_t epoch) {
  std::vector<const ContextInstance*> order;
  for (const ContextInstance& c : ds.train) order.push_back(&c);
  Rng rng(derive_seed({seed, epoch, 0xba7c4}));
  // Fisher-Yates with the portable index draw.
  for (std::size_t i = order.size(); i > 1; --i) std::swap(order[i - 1], order[uniform_index(rng, i)]);
  std::vector<std::vector<const ContextInstance*>> batches;
  for (std::size_t i = 0; i < order.size(); i += batch_size) {
    batches.emplace_back(order.begin() + static_cast<std::ptrdiff_t>(i),
                         order.begin() + static_cast<std::ptrdiff_t>(std::min(order.size(), i + batch_size)));
  }
  return batches;
}

void run_eval(TrainLog& log, const PolicyModel& model, const Dataset& ds, const RewardFn& cider,
              std::size_t step, Split split, const TrainConfig& config) {
  const EvalMetrics m = evaluate(model, ds.split(split), cider, config.eval_beam, config.threads);
  log.add_eval(EvalRecord{step, split, m.cider_d, m.bleu4});
}

void finish_eval(TrainLog& log, const PolicyModel& model, const Dataset& ds, const RewardFn& cider,
                 std::size_t step, const TrainConfig& config) {
  const bool have_val = !log.evals().empty() && log.evals().back().step == step &&
                        log.evals().back().split == Split::kVal;
  if (!have_val) run_eval(log, model, ds, cider, step, Split::kVal, config);
  run_eval(log, model, ds, cider, step, Split::kTest, config);
}

double elapsed_ms(Clock::time_point since) {
  return std::chrono::duration<double, std::milli>(Clock::now() - since).count();
}

void check_dataset(const PolicyModel& model, const Dataset& ds) {
  if (ds.train.empty()) throw std::invalid_argument("training split is empty");
  if (model.config().vocab_size != ds.vocab.size()) {
    throw std::invalid_argument("model vocab size " + std::to_string(model.config().vocab_size) +
                                " does not match dataset vocab size " + std::to_string(ds.vocab.size()));
  }
  if (model.t_max() != ds.t_max) throw std::invalid_argument("model t_max does not match dataset");
}

// Periodic val evaluation plus the closing val/test evaluation.
struct EvalSchedule {
  const TrainConfig& config;
  bool due(std::size_t step, bool end_of_epoch) const {
    return config.eval_every > 0 ? step % config.eval_every == 0 : end_of_epoch;
  }
};

}  // namespace

TrainLog pretrain_xe(PolicyModel& model, const Dataset& dataset, const TrainConfig& config,
                     const EpochCallback& on_epoch) {
  if (config.stage != Stage::kXe) throw std::invalid_argument("pretrain_xe: config.stage must be xe");
  config.validate();
  check_dataset(model, dataset);
  const RewardFn cider = make_reward(RewardKind::kCiderD, dataset);
  Optimizer opt(OptimizerConfig{config.optimizer, config.effective_learning_rate()}, model.params());
  TrainLog log;
  const EvalSchedule schedule{config};
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(dataset, config.batch_size, config.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const auto start = Clock::now();
      ++step;
      struct Part {
        double loss = 0.0;
        ParamSet grad;
      };
      std::vector<Part> parts(batch.size());
      parallel_for(batch.size(), config.threads, [&](std::size_t i) {
        const ContextInstance& ctx = *batch[i];
        Tape tape;
        Rollout rollout(model, tape, ctx.features);
        std::vector<NodeId> terms;
        std::vector<double> weights;
        const double inv_m = 1.0 / static_cast<double>(ctx.references.size());
        for (const TokenSeq& ref : ctx.references) {
          terms.push_back(rollout.sequence_logprob(ref));
          weights.push_back(-inv_m / static_cast<double>(ref.ids.size()));
        }
        const NodeId loss = tape.weighted_sum(terms, weights);
        parts[i] = Part{tape.value(loss).item(), rollout.gradients(loss)};
      });
      ParamSet grad = model.params().zeros_like();
      double loss = 0.0;
      const double inv_b = 1.0 / static_cast<double>(batch.size());
      for (const Part& p : parts) {
        loss += p.loss * inv_b;
        for (std::size_t j = 0; j < grad.size(); ++j) grad[j].axpy(inv_b, p.grad[j]);
      }
      if (!std::isfinite(loss)) {
        throw std::runtime_error("XE loss diverged (non-finite) at step " + std::to_string(step));
      }
      opt.step(model.params(), grad);
      log.add_step(StepRecord{step, Stage::kXe, 0.0, std::nullopt, loss, elapsed_ms(start)});
      if (schedule.due(step, bi + 1 == batches.size())) run_eval(log, model, dataset, cider, step, Split::kVal, config);
    }
    if (on_epoch) on_epoch(epoch, model);
  }
  finish_eval(log, model, dataset, cider, step, config);
  return log;
}

TrainLog train_sc(PolicyModel& model, const Dataset& dataset, const TrainConfig& config,
                  const EpochCallback& on_epoch) {
  if (config.stage != Stage::kSc) throw std::invalid_argument("train_sc: config.stage must be sc");
  config.validate();
  check_dataset(model, dataset);
  const RewardFn reward = make_reward(config.reward, dataset);
  const RewardFn cider =
      config.reward == RewardKind::kCiderD ? reward : make_reward(RewardKind::kCiderD, dataset);
  Optimizer opt(OptimizerConfig{config.optimizer, config.effective_learning_rate()}, model.params());
  LearnedBaseline learned(model.config().feature_dim);
  TrainLog log;
  const EvalSchedule schedule{config};
  std::size_t step = 0;

  for (std::size_t epoch = 1; epoch <= config.epochs; ++epoch) {
    const auto batches = epoch_batches(dataset, config.batch_size, config.seed, epoch);
    for (std::size_t bi = 0; bi < batches.size(); ++bi) {
      const auto& batch = batches[bi];
      const auto start = Clock::now();
      ++step;
      EstimatorOptions opts{config.temperature, &learned};
      const GradientEstimate est = estimate_batch_gradient(
          model, batch, reward, config.strategy, derive_seed({config.seed, step, 0x5c}), opts, config.threads);
      for (const Tensor& g : est.grad.values()) {
        if (!g.all_finite()) throw std::runtime_error("SC gradient non-finite at step " + std::to_string(step));
      }
      opt.step(model.params(), est.grad);

      if (config.strategy.kind == BaselineKind::kLearned) {
        std::vector<RewardPair> pairs;
        pairs.reserve(est.samples.size());
        std::size_t ci = 0;
        for (const SampleRecord& s : est.samples) {
          while (batch[ci]->context_id != s.context_id) ++ci;
          pairs.push_back(RewardPair{batch[ci]->features, s.reward});
        }
        learned = fit_learned_baseline(learned, pairs);
      }

      double mean_reward = 0.0;
      double surrogate = 0.0;
      for (const SampleRecord& s : est.samples) {
        mean_reward += s.reward;
        surrogate -= s.advantage * s.logprob;
      }
      mean_reward /= static_cast<double>(est.samples.size());
      surrogate /= static_cast<double>(est.samples.size());
      log.greedy_decodes += est.greedy_decodes;
      log.add_step(StepRecord{step, Stage::kSc, mean_reward, est.greedy_reward, surrogate, elapsed_ms(start)});
      if (schedule.due(step, bi + 1 == batches.size())) run_eval(log, model, dataset, cider, step, Split::kVal, config);
    }
    if (on_epoch) on_epoch(epoch, model);
  }
  finish_eval(log, model, dataset, cider, step, config);
  return log;
}

}  // namespace seqgrad
