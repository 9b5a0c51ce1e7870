#include "seqgrad/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>
#include <stdexcept>

#include "seqgrad/random.hpp"
#include "seqgrad/text.hpp"

namespace seqgrad {
namespace {

// Function-word roles used by the templates.
enum Role { kDet = 0, kVerb = 1, kPrep = 2, kMod = 3, kNumRoles = 4 };

struct ToyGrammar {
  std::vector<TokenId> subjects;
  std::vector<TokenId> objects;
  std::array<std::vector<TokenId>, kNumRoles> roles;
};

ToyGrammar build_grammar(std::size_t vocab_size, std::vector<std::string>& symbols) {
  ToyGrammar g;
  const std::size_t n_attr = std::max<std::size_t>(1, vocab_size / 4);
  const std::size_t n_func = vocab_size - 2 * n_attr;
  auto add = [&](std::string name) {
    symbols.push_back(std::move(name));
    return static_cast<TokenId>(kNumReserved + symbols.size() - 1);
  };
  for (std::size_t i = 0; i < n_attr; ++i) g.subjects.push_back(add("s" + std::to_string(i)));
  for (std::size_t i = 0; i < n_attr; ++i) g.objects.push_back(add("o" + std::to_string(i)));
  static constexpr const char* kRolePrefix[kNumRoles] = {"d", "v", "p", "m"};
  for (std::size_t i = 0; i < n_func; ++i) {
    const std::size_t r = i % kNumRoles;
    g.roles[r].push_back(add(kRolePrefix[r] + std::to_string(i / kNumRoles)));
  }
  return g;
}

// Picks the scene's preferred word with probability `keep`, otherwise any word of the role.
TokenId pick(Rng& rng, const std::vector<TokenId>& words, std::size_t preferred, double keep) {
  if (uniform01(rng) < keep) return words[preferred % words.size()];
  return words[uniform_index(rng, words.size())];
}

std::vector<TokenId> realize(Rng& rng, const ToyGrammar& g, std::size_t subj, std::size_t obj,
                             std::size_t t_max) {
  const std::size_t pref = subj * 7 + obj * 3;
  auto det = [&] { return pick(rng, g.roles[kDet], 0, 0.35); };
  auto mod = [&] { return pick(rng, g.roles[kMod], pref, 0.6); };
  const TokenId s = g.subjects[subj];
  const TokenId o = g.objects[obj];
  const TokenId v = pick(rng, g.roles[kVerb], pref, 0.7);
  const TokenId p = pick(rng, g.roles[kPrep], pref + 1, 0.7);

  // Optional modifier in front of a noun.
  auto noun = [&](std::vector<TokenId>& out, TokenId n) {
    if (uniform01(rng) < 0.3) out.push_back(mod());
    out.push_back(n);
  };

  std::vector<TokenId> out;
  const double u = uniform01(rng);
  if (u < 0.40) {  // d s v d o
    out.push_back(det());
    noun(out, s);
    out.push_back(v);
    out.push_back(det());
    noun(out, o);
  } else if (u < 0.60) {  // s v o
    noun(out, s);
    out.push_back(v);
    noun(out, o);
  } else if (u < 0.85) {  // d s v p d o
    out.push_back(det());
    noun(out, s);
    out.push_back(v);
    out.push_back(p);
    out.push_back(det());
    noun(out, o);
  } else {  // d o p d s
    out.push_back(det());
    noun(out, o);
    out.push_back(p);
    out.push_back(det());
    noun(out, s);
  }
  const std::size_t min_len = std::min<std::size_t>(4, t_max);
  while (out.size() < min_len) out.insert(out.begin(), det());
  if (out.size() > t_max) out.resize(t_max);
  return out;
}

[[noreturn]] void parse_fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("dataset line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

std::string_view split_name(Split s) {
  switch (s) {
    case Split::kTrain: return "train";
    case Split::kVal: return "val";
    case Split::kTest: return "test";
  }
  return "train";
}

Split parse_split(std::string_view name) {
  if (name == "train") return Split::kTrain;
  if (name == "val") return Split::kVal;
  if (name == "test") return Split::kTest;
  throw std::invalid_argument("unknown split '" + std::string(name) + "'");
}

const std::vector<ContextInstance>& Dataset::split(Split s) const {
  switch (s) {
    case Split::kTrain: return train;
    case Split::kVal: return val;
    case Split::kTest: return test;
  }
  return train;
}

Dataset generate_toy_dataset(const ToyDatasetOptions& opts) {
  if (opts.vocab_size < 6) {
    throw std::invalid_argument("vocab_size must be >= 6, got " + std::to_string(opts.vocab_size));
  }
  if (opts.t_max < 2) throw std::invalid_argument("t_max must be >= 2, got " + std::to_string(opts.t_max));
  if (opts.refs_per_context < 2) {
    throw std::invalid_argument("refs_per_context must be >= 2, got " +
                                std::to_string(opts.refs_per_context));
  }
  if (opts.n_contexts < 3) throw std::invalid_argument("n_contexts must be >= 3");

  std::vector<std::string> symbols;
  const ToyGrammar grammar = build_grammar(opts.vocab_size, symbols);

  Rng rng(derive_seed({opts.seed, 0x5eed}));
  constexpr std::size_t kHalf = kToyFeatureDim / 2;
  auto embed = [&](std::size_t n) {
    std::vector<std::vector<double>> e(n, std::vector<double>(kHalf));
    for (auto& row : e)
      for (double& x : row) x = standard_normal(rng);
    return e;
  };
  const auto subj_emb = embed(grammar.subjects.size());
  const auto obj_emb = embed(grammar.objects.size());

  Dataset ds;
  ds.vocab = Vocab(std::move(symbols));
  ds.t_max = opts.t_max;
  ds.refs_per_context = opts.refs_per_context;

  const std::size_t n_train = opts.n_contexts * 3 / 4;
  const std::size_t n_val = (opts.n_contexts - n_train) / 2;
  for (std::size_t c = 0; c < opts.n_contexts; ++c) {
    ContextInstance ctx;
    ctx.context_id = static_cast<int>(c);
    const std::size_t subj = uniform_index(rng, grammar.subjects.size());
    const std::size_t obj = uniform_index(rng, grammar.objects.size());
    ctx.features.reserve(kToyFeatureDim);
    for (double x : subj_emb[subj]) ctx.features.push_back(x + 0.1 * standard_normal(rng));
    for (double x : obj_emb[obj]) ctx.features.push_back(x + 0.1 * standard_normal(rng));
    for (std::size_t r = 0; r < opts.refs_per_context; ++r) {
      ctx.references.push_back(TokenSeq::from_content(realize(rng, grammar, subj, obj, opts.t_max)));
    }
    if (c < n_train) {
      ds.train.push_back(std::move(ctx));
    } else if (c < n_train + n_val) {
      ds.val.push_back(std::move(ctx));
    } else {
      ds.test.push_back(std::move(ctx));
    }
  }
  return ds;
}

void validate_dataset(const Dataset& ds) {
  if (ds.refs_per_context < 2) throw std::invalid_argument("dataset needs M >= 2 references");
  std::set<int> ids;
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (const ContextInstance& ctx : ds.split(s)) {
      if (!ids.insert(ctx.context_id).second) {
        throw std::invalid_argument("context id " + std::to_string(ctx.context_id) +
                                    " appears more than once");
      }
      if (ctx.references.size() != ds.refs_per_context) {
        throw std::invalid_argument("context " + std::to_string(ctx.context_id) + " has " +
                                    std::to_string(ctx.references.size()) + " references, expected " +
                                    std::to_string(ds.refs_per_context));
      }
      for (double f : ctx.features) {
        if (!std::isfinite(f)) {
          throw std::invalid_argument("context " + std::to_string(ctx.context_id) +
                                      " has a non-finite feature");
        }
      }
      for (const TokenSeq& ref : ctx.references) validate_sequence(ref, ds.vocab, ds.t_max);
    }
  }
}

void write_dataset(const Dataset& ds, std::ostream& out) {
  out << "seqgrad-dataset v1 vocab=" << ds.vocab.size() << " tmax=" << ds.t_max
      << " m=" << ds.refs_per_context << '\n';
  for (std::size_t i = 0; i < ds.vocab.size(); ++i) {
    out << "tok " << i << ' ' << ds.vocab.symbols()[i] << '\n';
  }
  for (Split s : {Split::kTrain, Split::kVal, Split::kTest}) {
    for (const ContextInstance& ctx : ds.split(s)) {
      out << "ctx " << ctx.context_id << ' ' << split_name(s);
      for (double f : ctx.features) out << ' ' << format_double(f);
      out << '\n';
      for (const TokenSeq& ref : ctx.references) {
        out << "ref " << ctx.context_id;
        for (TokenId t : ref.ids) out << ' ' << t;
        out << '\n';
      }
    }
  }
}

void write_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_dataset(ds, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Dataset read_dataset(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  if (!std::getline(in, line)) throw std::runtime_error("dataset: no header");
  ++line_no;

  Dataset ds;
  std::size_t n_vocab = 0;
  {
    const auto f = split_ws(line);
    if (f.size() != 5 || f[0] != "seqgrad-dataset" || f[1] != "v1") parse_fail(1, "no header");
    auto kv = [&](std::string_view field, std::string_view key) -> std::size_t {
      if (field.substr(0, key.size()) != key) parse_fail(1, "expected " + std::string(key));
      try {
        const long long v = parse_int(field.substr(key.size()));
        if (v <= 0) parse_fail(1, "non-positive " + std::string(key));
        return static_cast<std::size_t>(v);
      } catch (const std::invalid_argument& e) {
        parse_fail(1, e.what());
      }
    };
    n_vocab = kv(f[2], "vocab=");
    ds.t_max = kv(f[3], "tmax=");
    ds.refs_per_context = kv(f[4], "m=");
  }

  std::vector<std::string> symbols;
  ContextInstance* current = nullptr;
  std::set<int> seen_ids;
  while (std::getline(in, line)) {
    ++line_no;
    const auto f = split_ws(line);
    if (f.empty()) continue;
    try {
      if (f[0] == "tok") {
        if (current != nullptr) parse_fail(line_no, "tok line after contexts");
        if (f.size() != 3) parse_fail(line_no, "malformed tok line");
        if (parse_int(f[1]) != static_cast<long long>(symbols.size())) {
          parse_fail(line_no, "token ids must be dense and ordered");
        }
        symbols.emplace_back(f[2]);
      } else if (f[0] == "ctx") {
        if (symbols.size() != n_vocab) {
          parse_fail(line_no, "vocab block has " + std::to_string(symbols.size()) +
                                  " tokens, header says " + std::to_string(n_vocab));
        }
        if (ds.vocab.size() != n_vocab) ds.vocab = Vocab::from_all_symbols(symbols);
        if (current != nullptr && current->references.size() != ds.refs_per_context) {
          parse_fail(line_no, "previous context has " + std::to_string(current->references.size()) +
                                  " references, expected " + std::to_string(ds.refs_per_context));
        }
        if (f.size() < 4) parse_fail(line_no, "malformed ctx line");
        ContextInstance ctx;
        ctx.context_id = static_cast<int>(parse_int(f[1]));
        if (!seen_ids.insert(ctx.context_id).second) {
          parse_fail(line_no, "duplicate context id " + std::to_string(ctx.context_id));
        }
        const Split s = parse_split(f[2]);
        for (std::size_t i = 3; i < f.size(); ++i) ctx.features.push_back(parse_double(f[i]));
        auto& dst = s == Split::kTrain ? ds.train : s == Split::kVal ? ds.val : ds.test;
        dst.push_back(std::move(ctx));
        current = &dst.back();
      } else if (f[0] == "ref") {
        if (current == nullptr) parse_fail(line_no, "ref line before any ctx");
        if (f.size() < 3) parse_fail(line_no, "malformed ref line");
        if (parse_int(f[1]) != current->context_id) parse_fail(line_no, "ref context id mismatch");
        TokenSeq seq;
        for (std::size_t i = 2; i < f.size(); ++i) {
          const long long t = parse_int(f[i]);
          if (t < 0 || static_cast<std::size_t>(t) >= n_vocab) {
            parse_fail(line_no, "unknown token id " + std::string(f[i]));
          }
          seq.ids.push_back(static_cast<TokenId>(t));
        }
        seq.terminated = !seq.ids.empty() && seq.ids.back() == kEos;
        validate_sequence(seq, ds.vocab, ds.t_max);
        if (current->references.size() >= ds.refs_per_context) {
          parse_fail(line_no, "too many references for context " +
                                  std::to_string(current->context_id));
        }
        current->references.push_back(std::move(seq));
      } else {
        parse_fail(line_no, "unknown record '" + std::string(f[0]) + "'");
      }
    } catch (const std::invalid_argument& e) {
      parse_fail(line_no, e.what());
    }
  }
  if (current == nullptr) {
    if (symbols.size() != n_vocab) parse_fail(line_no, "incomplete vocab block");
    ds.vocab = Vocab::from_all_symbols(symbols);
  } else if (current->references.size() != ds.refs_per_context) {
    parse_fail(line_no, "last context has " + std::to_string(current->references.size()) +
                            " references, expected " + std::to_string(ds.refs_per_context));
  }
  validate_dataset(ds);
  return ds;
}

Dataset read_dataset(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open dataset " + path.string());
  return read_dataset(in);
}

}  // namespace seqgrad
