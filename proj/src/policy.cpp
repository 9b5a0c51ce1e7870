#include "seqgrad/policy.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace seqgrad {

void ParamSet::add(std::string name, Tensor value) {
  for (const auto& n : names_) {
    if (n == name) throw std::invalid_argument("duplicate parameter '" + name + "'");
  }
  names_.push_back(std::move(name));
  values_.push_back(std::move(value));
}

Tensor& ParamSet::at(std::string_view name) {
  for (std::size_t i = 0; i < names_.size(); ++i)
    if (names_[i] == name) return values_[i];
  throw std::out_of_range("no parameter named '" + std::string(name) + "'");
}

const Tensor& ParamSet::at(std::string_view name) const {
  return const_cast<ParamSet*>(this)->at(name);
}

std::size_t ParamSet::numel() const {
  std::size_t n = 0;
  for (const auto& t : values_) n += t.size();
  return n;
}

std::vector<double> ParamSet::flatten() const {
  std::vector<double> out;
  out.reserve(numel());
  for (const auto& t : values_) out.insert(out.end(), t.data().begin(), t.data().end());
  return out;
}

void ParamSet::assign_flat(std::span<const double> flat) {
  if (flat.size() != numel()) {
    throw std::invalid_argument("assign_flat: got " + std::to_string(flat.size()) + " values for " +
                                std::to_string(numel()) + " parameters");
  }
  std::size_t off = 0;
  for (auto& t : values_) {
    std::copy_n(flat.begin() + off, t.size(), t.data().begin());
    off += t.size();
  }
}

ParamSet ParamSet::zeros_like() const {
  ParamSet z;
  for (std::size_t i = 0; i < size(); ++i) z.add(names_[i], Tensor(values_[i].shape(), 0.0));
  return z;
}

std::string_view policy_kind_name(PolicyKind k) {
  return k == PolicyKind::kMicro ? "micro" : "gru_small";
}

PolicyKind parse_policy_kind(std::string_view name) {
  if (name == "micro") return PolicyKind::kMicro;
  if (name == "gru_small" || name == "gru") return PolicyKind::kGruSmall;
  throw std::invalid_argument("unknown model kind '" + std::string(name) + "'");
}

namespace {

Tensor random_tensor(Shape shape, Rng& rng, double scale, bool uniform) {
  Tensor t(shape, 0.0);
  for (double& x : t.data()) x = uniform ? scale * (2.0 * uniform01(rng) - 1.0) : scale * standard_normal(rng);
  return t;
}

void check_sequence(const PolicyModel& model, const TokenSeq& seq) {
  const auto& ids = seq.ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId t = ids[i];
    if (t < 0 || static_cast<std::size_t>(t) >= model.config().vocab_size) {
      throw std::invalid_argument("token id " + std::to_string(t) + " out of range for vocab of " +
                                  std::to_string(model.config().vocab_size));
    }
    if (t == kBos || t == kPad) {
      throw std::invalid_argument("reserved token id " + std::to_string(t) + " inside sequence");
    }
    if (t == kEos && i + 1 != ids.size()) throw std::invalid_argument("EOS before end of sequence");
  }
  if (ids.empty() || ids.back() != kEos || !seq.terminated) {
    throw std::invalid_argument("sequence must be terminated by EOS");
  }
  if (ids.size() - 1 > model.t_max()) {
    throw std::invalid_argument("sequence of " + std::to_string(ids.size() - 1) +
                                " tokens exceeds t_max " + std::to_string(model.t_max()));
  }
}

}  // namespace

PolicyModel PolicyModel::create(const PolicyConfig& config, std::uint64_t seed, double init_scale) {
  if (config.vocab_size < kNumReserved + 1) {
    throw std::invalid_argument("policy vocab must contain at least one content token");
  }
  if (config.t_max == 0) throw std::invalid_argument("policy t_max must be >= 1");
  if (config.feature_dim == 0) throw std::invalid_argument("policy feature_dim must be >= 1");
  PolicyModel m;
  m.config_ = config;
  Rng rng(derive_seed({seed, 0x9011c7}));
  const std::size_t v = m.output_size();
  const std::size_t f = config.feature_dim;
  if (config.kind == PolicyKind::kMicro) {
    const double s = init_scale > 0 ? init_scale : 0.1;
    for (std::size_t t = 0; t < config.t_max; ++t) {
      m.params_.add("step" + std::to_string(t) + ".W", random_tensor(Shape{v, f}, rng, s, false));
      m.params_.add("step" + std::to_string(t) + ".b", random_tensor(Shape{v}, rng, s, false));
    }
  } else {
    const std::size_t h = config.hidden;
    const std::size_t e = config.embed;
    if (h == 0 || e == 0) throw std::invalid_argument("gru hidden/embed must be >= 1");
    const double s = init_scale > 0 ? init_scale : 1.0 / std::sqrt(static_cast<double>(h));
    m.params_.add("ctx.W", random_tensor(Shape{h, f}, rng, s, true));
    m.params_.add("ctx.b", random_tensor(Shape{h}, rng, s, true));
    m.params_.add("embed", random_tensor(Shape{config.vocab_size, e}, rng, s, true));
    for (const char* gate : {"z", "r", "n"}) {
      m.params_.add(std::string("gru.W") + gate, random_tensor(Shape{h, e}, rng, s, true));
      m.params_.add(std::string("gru.U") + gate, random_tensor(Shape{h, h}, rng, s, true));
      m.params_.add(std::string("gru.b") + gate, random_tensor(Shape{h}, rng, s, true));
    }
    m.params_.add("out.W", random_tensor(Shape{v, h}, rng, s, true));
    m.params_.add("out.b", random_tensor(Shape{v}, rng, s, true));
  }
  return m;
}

// Parameter slot indices for GRU_SMALL, matching the order in create().
namespace gru {
enum : std::size_t { kCtxW, kCtxB, kEmbed, kWz, kUz, kBz, kWr, kUr, kBr, kWn, kUn, kBn, kOutW, kOutB };
}

Rollout::Rollout(const PolicyModel& model, Tape& tape, std::span<const double> features)
    : model_(model), tape_(tape) {
  if (features.size() != model.config().feature_dim) {
    throw std::invalid_argument("context has " + std::to_string(features.size()) +
                                " features, model expects " +
                                std::to_string(model.config().feature_dim));
  }
  params_.reserve(model.params().size());
  for (const Tensor& t : model.params().values()) params_.push_back(tape.leaf(t));
  features_ = tape.constant(Tensor::vector({features.begin(), features.end()}));
}

NodeId Rollout::gru_step(NodeId h, TokenId token) {
  using namespace gru;
  Tape& t = tape_;
  const NodeId x = t.row(params_[kEmbed], static_cast<std::size_t>(token));
  auto gate = [&](std::size_t w, std::size_t u, std::size_t b, NodeId hin) {
    return t.add(t.add(t.matmul(params_[w], x), t.matmul(params_[u], hin)), params_[b]);
  };
  const NodeId z = t.sigmoid(gate(kWz, kUz, kBz, h));
  const NodeId r = t.sigmoid(gate(kWr, kUr, kBr, h));
  const NodeId n = t.tanh(gate(kWn, kUn, kBn, t.mul(r, h)));
  // h' = (1 - z) * n + z * h
  return t.add(n, t.mul(z, t.sub(h, n)));
}

Rollout::State Rollout::initial() {
  if (model_.kind() == PolicyKind::kMicro) return State{features_, 0};
  using namespace gru;
  const NodeId h0 = tape_.tanh(tape_.add(tape_.matmul(params_[kCtxW], features_), params_[kCtxB]));
  return State{gru_step(h0, kBos), 0};
}

NodeId Rollout::logprobs(const State& s) {
  if (forced_eos(s)) throw std::logic_error("logprobs requested past t_max");
  if (model_.kind() == PolicyKind::kMicro) {
    const NodeId w = params_[2 * s.position];
    const NodeId b = params_[2 * s.position + 1];
    return tape_.log_softmax(tape_.add(tape_.matmul(w, features_), b));
  }
  using namespace gru;
  return tape_.log_softmax(tape_.add(tape_.matmul(params_[kOutW], s.hidden), params_[kOutB]));
}

Rollout::State Rollout::advance(const State& s, TokenId token) {
  if (model_.kind() == PolicyKind::kMicro) return State{s.hidden, s.position + 1};
  return State{gru_step(s.hidden, token), s.position + 1};
}

NodeId Rollout::sequence_logprob(const TokenSeq& seq) {
  check_sequence(model_, seq);
  std::vector<NodeId> terms;
  terms.reserve(seq.ids.size());
  State s = initial();
  for (TokenId tok : seq.ids) {
    if (forced_eos(s)) break;  // trailing EOS after t_max tokens has probability 1
    terms.push_back(tape_.gather(logprobs(s), Vocab::output_index(tok)));
    if (tok != kEos) s = advance(s, tok);
  }
  const std::vector<double> ones(terms.size(), 1.0);
  return tape_.weighted_sum(terms, ones);
}

ParamSet Rollout::gradients(NodeId root) const {
  const Gradients g = tape_.backward(root);
  ParamSet out;
  for (std::size_t i = 0; i < params_.size(); ++i) out.add(model_.params().name(i), g.of(params_[i]));
  return out;
}

}  // namespace seqgrad

namespace seqgrad {
namespace {

std::size_t argmax_lowest(std::span<const double> v) {
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i)
    if (v[i] > v[best]) best = i;
  return best;
}

std::size_t draw(std::span<const double> logp, Rng& rng, double temperature) {
  const double inv_t = 1.0 / temperature;
  double mx = -std::numeric_limits<double>::infinity();
  for (double x : logp) mx = std::max(mx, x * inv_t);
  std::vector<double> cum(logp.size());
  double total = 0.0;
  for (std::size_t i = 0; i < logp.size(); ++i) {
    total += std::exp(logp[i] * inv_t - mx);
    cum[i] = total;
  }
  const double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < cum.size(); ++i)
    if (u < cum[i]) return i;
  return cum.size() - 1;
}

}  // namespace

TapeSample sample_on(Rollout& rollout, Rng& rng, double temperature) {
  if (!(temperature > 0.0)) throw std::invalid_argument("sample: temperature must be > 0");
  decode_counters().samples.fetch_add(1, std::memory_order_relaxed);
  Tape& tape = rollout.tape();
  TapeSample out;
  std::vector<NodeId> terms;
  Rollout::State s = rollout.initial();
  for (;;) {
    if (rollout.forced_eos(s)) {
      out.seq.ids.push_back(kEos);
      break;
    }
    const NodeId lp = rollout.logprobs(s);
    const std::size_t j = draw(tape.value(lp).data(), rng, temperature);
    terms.push_back(tape.gather(lp, j));
    const TokenId tok = Vocab::output_token(j);
    out.seq.ids.push_back(tok);
    if (tok == kEos) break;
    s = rollout.advance(s, tok);
  }
  out.seq.terminated = true;
  const std::vector<double> ones(terms.size(), 1.0);
  out.logprob = tape.weighted_sum(terms, ones);
  return out;
}

ScoredSample sample(const PolicyModel& model, const ContextInstance& ctx, Rng& rng, double temperature) {
  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  TapeSample s = sample_on(rollout, rng, temperature);
  return ScoredSample{std::move(s.seq), tape.value(s.logprob).item(), 0.0};
}

namespace {

// Greedy path; shared by greedy_decode and beam_search without touching counters.
Decoded greedy_path(Rollout& rollout) {
  Tape& tape = rollout.tape();
  Decoded out;
  Rollout::State s = rollout.initial();
  for (;;) {
    if (rollout.forced_eos(s)) {
      out.seq.ids.push_back(kEos);
      break;
    }
    const auto lp = tape.value(rollout.logprobs(s)).data();
    const std::size_t j = argmax_lowest(lp);
    out.logprob += lp[j];
    const TokenId tok = Vocab::output_token(j);
    out.seq.ids.push_back(tok);
    if (tok == kEos) break;
    s = rollout.advance(s, tok);
  }
  out.seq.terminated = true;
  return out;
}

}  // namespace

Decoded greedy_decode(const PolicyModel& model, const ContextInstance& ctx) {
  decode_counters().greedy.fetch_add(1, std::memory_order_relaxed);
  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  return greedy_path(rollout);
}

Decoded beam_search(const PolicyModel& model, const ContextInstance& ctx, std::size_t beam) {
  if (beam == 0) throw std::invalid_argument("beam_search: beam must be >= 1");
  decode_counters().beam.fetch_add(1, std::memory_order_relaxed);
  Tape tape;
  Rollout rollout(model, tape, ctx.features);

  struct Hyp {
    std::vector<TokenId> tokens;
    double score = 0.0;
    Rollout::State state;
  };
  // Higher score first; equal scores order by token sequence for determinism.
  auto better = [](const auto& a, const auto& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.tokens < b.tokens;
  };

  std::vector<Decoded> finished;
  std::vector<Hyp> live{Hyp{{}, 0.0, rollout.initial()}};
  while (!live.empty()) {
    struct Cand {
      std::size_t parent;
      TokenId token;
      double score;
      std::vector<TokenId> tokens;
    };
    std::vector<Cand> cands;
    for (std::size_t h = 0; h < live.size(); ++h) {
      const Hyp& hyp = live[h];
      auto extend = [&](TokenId tok, double lp) {
        Cand c{h, tok, hyp.score + lp, hyp.tokens};
        c.tokens.push_back(tok);
        cands.push_back(std::move(c));
      };
      if (rollout.forced_eos(hyp.state)) {
        extend(kEos, 0.0);
        continue;
      }
      const auto lp = tape.value(rollout.logprobs(hyp.state)).data();
      for (std::size_t j = 0; j < lp.size(); ++j) extend(Vocab::output_token(j), lp[j]);
    }
    const std::size_t keep = std::min(beam, cands.size());
    std::partial_sort(cands.begin(), cands.begin() + static_cast<std::ptrdiff_t>(keep), cands.end(), better);
    cands.resize(keep);

    std::vector<Hyp> next;
    for (Cand& c : cands) {
      if (c.token == kEos) {
        finished.push_back(Decoded{TokenSeq{std::move(c.tokens), true}, c.score});
      } else {
        next.push_back(Hyp{std::move(c.tokens), c.score, rollout.advance(live[c.parent].state, c.token)});
      }
    }
    live = std::move(next);
    if (!finished.empty() && !live.empty()) {
      // Scores only decrease with length, so no live hypothesis can overtake
      // a finished one that already beats all of them.
      double best_finished = finished.front().logprob;
      for (const auto& f : finished) best_finished = std::max(best_finished, f.logprob);
      double best_live = live.front().score;
      for (const auto& l : live) best_live = std::max(best_live, l.score);
      if (best_finished >= best_live) break;
    }
  }
  // The greedy path joins the pool, so the result never scores below greedy.
  finished.push_back(greedy_path(rollout));

  auto best = std::min_element(finished.begin(), finished.end(), [](const Decoded& a, const Decoded& b) {
    if (a.logprob != b.logprob) return a.logprob > b.logprob;
    return a.seq.ids < b.seq.ids;
  });
  return *best;
}

double sequence_logprob(const PolicyModel& model, const ContextInstance& ctx, const TokenSeq& seq) {
  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  return tape.value(rollout.sequence_logprob(seq)).item();
}

LogprobGradient sequence_logprob_grad(const PolicyModel& model, const ContextInstance& ctx,
                                      const TokenSeq& seq) {
  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  const NodeId root = rollout.sequence_logprob(seq);
  return LogprobGradient{tape.value(root).item(), rollout.gradients(root)};
}

std::vector<double> step_logprobs(const PolicyModel& model, const ContextInstance& ctx,
                                  std::span<const TokenId> prefix) {
  Tape tape;
  Rollout rollout(model, tape, ctx.features);
  Rollout::State s = rollout.initial();
  for (TokenId t : prefix) {
    if (t == kEos || rollout.forced_eos(s)) throw std::invalid_argument("step_logprobs: prefix too long or ends");
    s = rollout.advance(s, t);
  }
  if (rollout.forced_eos(s)) {
    std::vector<double> out(model.output_size(), -std::numeric_limits<double>::infinity());
    out[0] = 0.0;
    return out;
  }
  const auto lp = tape.value(rollout.logprobs(s)).data();
  return {lp.begin(), lp.end()};
}

DecodeCounters& decode_counters() {
  static DecodeCounters counters;
  return counters;
}

}  // namespace seqgrad
