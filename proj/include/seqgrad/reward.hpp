#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <span>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/vocab.hpp"

namespace seqgrad {

inline constexpr std::size_t kMaxNgram = 4;

/// Packed n-gram, 1 <= n <= 4; each token occupies 16 bits (id + 1).
using NGramKey = std::uint64_t;

NGramKey ngram_key(std::span<const TokenId> tokens);

/// N-gram counts of the pre-EOS tokens of a sequence, per order n.
/// Each order is sorted by key.
class NGramTable {
 public:
  NGramTable() = default;
  explicit NGramTable(std::span<const TokenId> content);

  using Entries = std::vector<std::pair<NGramKey, int>>;
  const Entries& order(std::size_t n) const { return counts_[n - 1]; }
  int count(std::size_t n, NGramKey key) const;
  std::size_t length() const { return length_; }

 private:
  std::array<Entries, kMaxNgram> counts_;
  std::size_t length_ = 0;
};

/// Document frequencies of reference n-grams over a corpus of contexts.
class IdfStore {
 public:
  IdfStore() = default;

  /// Adds one document (context): an n-gram counts once per context no matter
  /// how many references contain it.
  void add_document(std::span<const TokenSeq> references);

  std::size_t corpus_size() const { return corpus_size_; }
  int df(NGramKey key) const;
  /// log(corpus / df); n-grams never seen get weight 0.
  double weight(NGramKey key) const;
  std::size_t num_ngrams() const { return df_.size(); }

 private:
  std::unordered_map<NGramKey, int> df_;
  std::size_t corpus_size_ = 0;
};

/// Document frequencies over the train split only. Rejects an empty split.
IdfStore build_idf(const Dataset& dataset);

enum class RewardKind { kCiderD, kBleu4, kNegEditDistance };

std::string_view reward_name(RewardKind k);
RewardKind parse_reward(std::string_view name);

/// References pre-tokenized into n-gram tables, reusable across candidates.
struct PreparedRefs {
  std::vector<NGramTable> tables;
  std::vector<std::vector<TokenId>> contents;
};

PreparedRefs prepare_refs(std::span<const TokenSeq> references);

/// R(.): maps (candidate, references) to a real reward. Immutable and safe
/// to share across threads.
class RewardFn {
 public:
  static RewardFn cider_d(std::shared_ptr<const IdfStore> idf, double sigma = 6.0);
  static RewardFn bleu4();
  static RewardFn neg_edit_distance(std::size_t t_max);

  RewardKind kind() const { return kind_; }
  double sigma() const { return sigma_; }
  const IdfStore* idf() const { return idf_.get(); }

  double score(const TokenSeq& candidate, std::span<const TokenSeq> references) const;
  double score(const TokenSeq& candidate, const PreparedRefs& refs) const;

 private:
  RewardFn() = default;

  RewardKind kind_ = RewardKind::kCiderD;
  std::shared_ptr<const IdfStore> idf_;
  double sigma_ = 6.0;
  std::size_t t_max_ = 1;
};

/// Element-wise score; rejects length mismatch.
std::vector<double> score_batch(const RewardFn& reward, std::span<const TokenSeq> candidates,
                                std::span<const std::vector<TokenSeq>> references_per_candidate);

double cider_d_score(const NGramTable& cand, std::span<const NGramTable> refs, const IdfStore& idf,
                     double sigma);
double bleu4_score(const NGramTable& cand, std::span<const NGramTable> refs);
std::size_t levenshtein(std::span<const TokenId> a, std::span<const TokenId> b);

}  // namespace seqgrad
