#include "seqgrad/reward.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>
#include <unordered_set>

namespace seqgrad {

NGramKey ngram_key(std::span<const TokenId> tokens) {
  if (tokens.empty() || tokens.size() > kMaxNgram) {
    throw std::invalid_argument("n-gram order must be in 1..4");
  }
  NGramKey key = 0;
  for (std::size_t i = 0; i < tokens.size(); ++i) {
    key |= static_cast<NGramKey>(static_cast<std::uint16_t>(tokens[i] + 1)) << (16 * i);
  }
  return key;
}

NGramTable::NGramTable(std::span<const TokenId> content) : length_(content.size()) {
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    if (content.size() < n) break;
    std::vector<NGramKey> keys;
    keys.reserve(content.size() - n + 1);
    for (std::size_t i = 0; i + n <= content.size(); ++i) keys.push_back(ngram_key(content.subspan(i, n)));
    std::sort(keys.begin(), keys.end());
    Entries& e = counts_[n - 1];
    for (NGramKey k : keys) {
      if (!e.empty() && e.back().first == k) {
        ++e.back().second;
      } else {
        e.emplace_back(k, 1);
      }
    }
  }
}

int NGramTable::count(std::size_t n, NGramKey key) const {
  const Entries& e = counts_[n - 1];
  auto it = std::lower_bound(e.begin(), e.end(), key,
                             [](const auto& entry, NGramKey k) { return entry.first < k; });
  return it != e.end() && it->first == key ? it->second : 0;
}

void IdfStore::add_document(std::span<const TokenSeq> references) {
  std::unordered_set<NGramKey> seen;
  for (const TokenSeq& ref : references) {
    const NGramTable t(ref.content());
    for (std::size_t n = 1; n <= kMaxNgram; ++n)
      for (const auto& [k, c] : t.order(n)) seen.insert(k);
  }
  for (NGramKey k : seen) ++df_[k];
  ++corpus_size_;
}

int IdfStore::df(NGramKey key) const {
  auto it = df_.find(key);
  return it == df_.end() ? 0 : it->second;
}

double IdfStore::weight(NGramKey key) const {
  auto it = df_.find(key);
  if (it == df_.end()) return 0.0;
  return std::log(static_cast<double>(corpus_size_)) - std::log(static_cast<double>(it->second));
}

IdfStore build_idf(const Dataset& dataset) {
  if (dataset.train.empty()) throw std::invalid_argument("build_idf: empty train split");
  IdfStore idf;
  for (const ContextInstance& ctx : dataset.train) idf.add_document(ctx.references);
  return idf;
}

std::string_view reward_name(RewardKind k) {
  switch (k) {
    case RewardKind::kCiderD: return "cider_d";
    case RewardKind::kBleu4: return "bleu4";
    case RewardKind::kNegEditDistance: return "neg_edit";
  }
  return "cider_d";
}

RewardKind parse_reward(std::string_view name) {
  if (name == "cider_d" || name == "cider") return RewardKind::kCiderD;
  if (name == "bleu4") return RewardKind::kBleu4;
  if (name == "neg_edit" || name == "neg_edit_distance") return RewardKind::kNegEditDistance;
  throw std::invalid_argument("unknown reward '" + std::string(name) + "'");
}

PreparedRefs prepare_refs(std::span<const TokenSeq> references) {
  PreparedRefs p;
  p.tables.reserve(references.size());
  for (const TokenSeq& r : references) {
    p.tables.emplace_back(r.content());
    p.contents.emplace_back(r.content().begin(), r.content().end());
  }
  return p;
}

double cider_d_score(const NGramTable& cand, std::span<const NGramTable> refs, const IdfStore& idf,
                     double sigma) {
  if (refs.empty()) throw std::invalid_argument("cider_d: no references");
  std::vector<double> per_ref;
  per_ref.reserve(refs.size());
  for (const NGramTable& ref : refs) {
    double sim = 0.0;
    for (std::size_t n = 1; n <= kMaxNgram; ++n) {
      double cand_sq = 0.0;
      double dot = 0.0;
      for (const auto& [k, c] : cand.order(n)) {
        const double w = idf.weight(k);
        cand_sq += (c * w) * (c * w);
        const int rc = ref.count(n, k);
        // Candidate counts are clipped to the reference count.
        if (rc > 0) dot += (std::min(c, rc) * w) * (rc * w);
      }
      double ref_sq = 0.0;
      for (const auto& [k, c] : ref.order(n)) {
        const double w = idf.weight(k);
        ref_sq += (c * w) * (c * w);
      }
      const double denom = std::sqrt(cand_sq * ref_sq);
      if (denom > 0.0) sim += dot / denom;
    }
    const double delta = static_cast<double>(cand.length()) - static_cast<double>(ref.length());
    sim = sim / static_cast<double>(kMaxNgram) * std::exp(-(delta * delta) / (2.0 * sigma * sigma));
    per_ref.push_back(sim);
  }
  // Summing in sorted order makes the result independent of reference order.
  std::sort(per_ref.begin(), per_ref.end());
  double total = 0.0;
  for (double s : per_ref) total += s;
  return 10.0 * total / static_cast<double>(refs.size());
}

double bleu4_score(const NGramTable& cand, std::span<const NGramTable> refs) {
  if (refs.empty()) throw std::invalid_argument("bleu4: no references");
  const std::size_t c_len = cand.length();
  if (c_len == 0) return 0.0;
  double log_p = 0.0;
  for (std::size_t n = 1; n <= kMaxNgram; ++n) {
    double matched = 0.0;
    double total = 0.0;
    for (const auto& [k, c] : cand.order(n)) {
      int max_ref = 0;
      for (const NGramTable& r : refs) max_ref = std::max(max_ref, r.count(n, k));
      matched += std::min(c, max_ref);
      total += c;
    }
    if (n == 1) {
      if (matched == 0.0) return 0.0;
      log_p += std::log(matched / total);
    } else {
      // add-one smoothing for higher orders
      log_p += std::log((matched + 1.0) / (total + 1.0));
    }
  }
  // Closest reference length; ties prefer the shorter one.
  std::size_t r_len = refs.front().length();
  for (const NGramTable& r : refs) {
    const auto d = [&](std::size_t l) { return l > c_len ? l - c_len : c_len - l; };
    if (d(r.length()) < d(r_len) || (d(r.length()) == d(r_len) && r.length() < r_len)) r_len = r.length();
  }
  const double bp = c_len >= r_len ? 1.0 : std::exp(1.0 - static_cast<double>(r_len) / static_cast<double>(c_len));
  return bp * std::exp(log_p / static_cast<double>(kMaxNgram));
}

std::size_t levenshtein(std::span<const TokenId> a, std::span<const TokenId> b) {
  std::vector<std::size_t> prev(b.size() + 1), cur(b.size() + 1);
  for (std::size_t j = 0; j <= b.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= a.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= b.size(); ++j) {
      const std::size_t sub = prev[j - 1] + (a[i - 1] == b[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

RewardFn RewardFn::cider_d(std::shared_ptr<const IdfStore> idf, double sigma) {
  if (!idf) throw std::invalid_argument("cider_d reward needs an idf store");
  if (!(sigma > 0.0)) throw std::invalid_argument("cider_d sigma must be positive");
  RewardFn r;
  r.kind_ = RewardKind::kCiderD;
  r.idf_ = std::move(idf);
  r.sigma_ = sigma;
  return r;
}

RewardFn RewardFn::bleu4() {
  RewardFn r;
  r.kind_ = RewardKind::kBleu4;
  return r;
}

RewardFn RewardFn::neg_edit_distance(std::size_t t_max) {
  if (t_max == 0) throw std::invalid_argument("neg_edit_distance needs t_max >= 1");
  RewardFn r;
  r.kind_ = RewardKind::kNegEditDistance;
  r.t_max_ = t_max;
  return r;
}

double RewardFn::score(const TokenSeq& candidate, std::span<const TokenSeq> references) const {
  return score(candidate, prepare_refs(references));
}

double RewardFn::score(const TokenSeq& candidate, const PreparedRefs& refs) const {
  if (refs.tables.empty()) throw std::invalid_argument("score: references must be non-empty");
  switch (kind_) {
    case RewardKind::kCiderD:
      return cider_d_score(NGramTable(candidate.content()), refs.tables, *idf_, sigma_);
    case RewardKind::kBleu4:
      return bleu4_score(NGramTable(candidate.content()), refs.tables);
    case RewardKind::kNegEditDistance: {
      std::size_t best = SIZE_MAX;
      for (const auto& r : refs.contents) best = std::min(best, levenshtein(candidate.content(), r));
      return -static_cast<double>(best) / static_cast<double>(t_max_);
    }
  }
  return 0.0;
}

std::vector<double> score_batch(const RewardFn& reward, std::span<const TokenSeq> candidates,
                                std::span<const std::vector<TokenSeq>> references_per_candidate) {
  if (candidates.size() != references_per_candidate.size()) {
    throw std::invalid_argument("score_batch: " + std::to_string(candidates.size()) +
                                " candidates but " + std::to_string(references_per_candidate.size()) +
                                " reference sets");
  }
  std::vector<double> out;
  out.reserve(candidates.size());
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    out.push_back(reward.score(candidates[i], references_per_candidate[i]));
  }
  return out;
}

}  // namespace seqgrad
