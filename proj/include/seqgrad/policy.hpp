#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/random.hpp"
#include "seqgrad/tape.hpp"
#include "seqgrad/tensor.hpp"
#include "seqgrad/vocab.hpp"

namespace seqgrad {

/// Named parameter tensors in a fixed order (the policy's theta).
class ParamSet {
 public:
  void add(std::string name, Tensor value);

  std::size_t size() const { return values_.size(); }
  const std::string& name(std::size_t i) const { return names_[i]; }
  const std::vector<std::string>& names() const { return names_; }
  Tensor& operator[](std::size_t i) { return values_[i]; }
  const Tensor& operator[](std::size_t i) const { return values_[i]; }
  Tensor& at(std::string_view name);
  const Tensor& at(std::string_view name) const;
  std::vector<Tensor>& values() { return values_; }
  const std::vector<Tensor>& values() const { return values_; }

  /// Total scalar count across all tensors.
  std::size_t numel() const;
  std::vector<double> flatten() const;
  /// Writes a flat vector back into the tensors (inverse of flatten).
  void assign_flat(std::span<const double> flat);
  /// Zero tensors with the same names and shapes.
  ParamSet zeros_like() const;

  friend bool operator==(const ParamSet&, const ParamSet&) = default;

 private:
  std::vector<std::string> names_;
  std::vector<Tensor> values_;
};

enum class PolicyKind { kMicro, kGruSmall };

std::string_view policy_kind_name(PolicyKind k);
PolicyKind parse_policy_kind(std::string_view name);

struct PolicyConfig {
  PolicyKind kind = PolicyKind::kGruSmall;
  /// Total vocabulary size including the three reserved tokens.
  std::size_t vocab_size = 0;
  std::size_t t_max = 0;
  std::size_t feature_dim = kToyFeatureDim;
  std::size_t hidden = 32;
  std::size_t embed = 16;

  friend bool operator==(const PolicyConfig&, const PolicyConfig&) = default;
};

/// Autoregressive conditional policy p_theta(c | I).
///
/// MICRO: logits at position t are W_t x + b_t (a context-conditioned,
/// position-wise table); sequences over small vocabularies are enumerable.
/// GRU_SMALL: h_0 = tanh(W_c x + b_c), one GRU cell over token embeddings,
/// logits = W_o h + b_o.
///
/// Both emit distributions over the output space (EOS + content tokens).
/// After t_max content tokens the only continuation is EOS, with
/// probability 1, which keeps the sequence measure normalized.
class PolicyModel {
 public:
  PolicyModel() = default;
  /// Random initialization from seed; init_scale <= 0 picks the per-kind default.
  static PolicyModel create(const PolicyConfig& config, std::uint64_t seed, double init_scale = 0.0);

  const PolicyConfig& config() const { return config_; }
  PolicyKind kind() const { return config_.kind; }
  std::size_t t_max() const { return config_.t_max; }
  std::size_t output_size() const { return config_.vocab_size - 2; }

  ParamSet& params() { return params_; }
  const ParamSet& params() const { return params_; }

  friend bool operator==(const PolicyModel&, const PolicyModel&) = default;

 private:
  PolicyConfig config_;
  ParamSet params_;
};

/// A model bound to a tape for one context. Parameters are recorded as
/// leaves so any log-prob built through the rollout is differentiable.
class Rollout {
 public:
  struct State {
    NodeId hidden;
    std::size_t position = 0;
  };

  Rollout(const PolicyModel& model, Tape& tape, std::span<const double> features);

  Tape& tape() { return tape_; }
  const PolicyModel& model() const { return model_; }
  const std::vector<NodeId>& param_nodes() const { return params_; }

  State initial();
  /// True when only EOS may follow (t_max content tokens emitted).
  bool forced_eos(const State& s) const { return s.position >= model_.t_max(); }
  /// Log-probabilities over the output space; must not be called on a forced-EOS state.
  NodeId logprobs(const State& s);
  State advance(const State& s, TokenId token);

  /// Differentiable log p(seq | context); seq must be terminated.
  NodeId sequence_logprob(const TokenSeq& seq);

  /// Parameter gradients of a scalar root, in ParamSet order.
  ParamSet gradients(NodeId root) const;

 private:
  NodeId gru_step(NodeId hidden, TokenId token);

  const PolicyModel& model_;
  Tape& tape_;
  std::vector<NodeId> params_;
  NodeId features_;
};

struct ScoredSample {
  TokenSeq seq;
  double logprob = 0.0;
  double reward = 0.0;
};

/// A sample drawn on a caller's tape, with its differentiable log-prob node.
struct TapeSample {
  TokenSeq seq;
  NodeId logprob;
};

/// Ancestral sampling from softmax(logits / temperature). The recorded
/// log-prob is always under the untempered policy.
TapeSample sample_on(Rollout& rollout, Rng& rng, double temperature = 1.0);
ScoredSample sample(const PolicyModel& model, const ContextInstance& ctx, Rng& rng,
                    double temperature = 1.0);

struct Decoded {
  TokenSeq seq;
  double logprob = 0.0;
};

/// Argmax at each step; ties go to the lowest token id.
Decoded greedy_decode(const PolicyModel& model, const ContextInstance& ctx);
/// Length-unnormalized beam search; finished hypotheses retire to a pool and
/// the highest-scoring finished sequence is returned. beam == 1 reproduces
/// greedy_decode.
Decoded beam_search(const PolicyModel& model, const ContextInstance& ctx, std::size_t beam = 5);

/// Rejects token ids outside the vocabulary or an invalid sequence.
double sequence_logprob(const PolicyModel& model, const ContextInstance& ctx, const TokenSeq& seq);

struct LogprobGradient {
  double value = 0.0;
  ParamSet grad;
};
LogprobGradient sequence_logprob_grad(const PolicyModel& model, const ContextInstance& ctx,
                                      const TokenSeq& seq);

/// Next-token log-probs over the output space after `prefix`. After t_max
/// tokens this is 0 for EOS and -inf elsewhere.
std::vector<double> step_logprobs(const PolicyModel& model, const ContextInstance& ctx,
                                  std::span<const TokenId> prefix);

/// Process-wide decode call counters.
struct DecodeCounters {
  std::atomic<std::uint64_t> greedy{0};
  std::atomic<std::uint64_t> beam{0};
  std::atomic<std::uint64_t> samples{0};
  void reset() {
    greedy = 0;
    beam = 0;
    samples = 0;
  }
};
DecodeCounters& decode_counters();

// Checkpoint text format: header line
//   seqgrad-model v1 kind=<micro|gru_small> vocab=<N> tmax=<T> features=<F> hidden=<H> embed=<E> stage=<s>
// then per parameter a line `param <name> <d0> [<d1>]` followed by one line of values.
struct Checkpoint {
  PolicyModel model;
  std::string stage = "init";
};

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out);
void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
Checkpoint read_checkpoint(std::istream& in);
Checkpoint read_checkpoint(const std::filesystem::path& path);
std::string checkpoint_string(const Checkpoint& ckpt);
/// FNV-1a of the serialized checkpoint; detects any parameter change.
std::uint64_t checkpoint_hash(const PolicyModel& model);

}  // namespace seqgrad
