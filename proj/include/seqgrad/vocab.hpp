#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

namespace seqgrad {

using TokenId = std::int32_t;

inline constexpr TokenId kBos = 0;
inline constexpr TokenId kEos = 1;
inline constexpr TokenId kPad = 2;
inline constexpr std::size_t kNumReserved = 3;

/// Token inventory. Ids are dense; 0..2 are BOS/EOS/PAD.
///
/// Policies only ever emit EOS or a content token, so they score an "output
/// space" of size() - 2 choices: output index 0 is EOS and index j >= 1 is
/// token id j + 2.
class Vocab {
 public:
  Vocab() : Vocab(std::vector<std::string>{}) {}
  /// Builds a vocabulary from content symbols; reserved tokens are prepended.
  explicit Vocab(std::vector<std::string> content_symbols);
  /// Builds from the full symbol list including the three reserved entries.
  static Vocab from_all_symbols(std::vector<std::string> symbols);

  std::size_t size() const { return symbols_.size(); }
  std::size_t content_size() const { return symbols_.size() - kNumReserved; }
  std::size_t output_size() const { return symbols_.size() - 2; }

  const std::string& symbol(TokenId id) const;
  TokenId id_of(const std::string& symbol) const;
  bool contains(TokenId id) const { return id >= 0 && static_cast<std::size_t>(id) < size(); }
  static bool is_reserved(TokenId id) { return id == kBos || id == kEos || id == kPad; }

  static TokenId output_token(std::size_t output_index) {
    return output_index == 0 ? kEos : static_cast<TokenId>(output_index + 2);
  }
  static std::size_t output_index(TokenId id) {
    return id == kEos ? 0 : static_cast<std::size_t>(id) - 2;
  }

  const std::vector<std::string>& symbols() const { return symbols_; }
  friend bool operator==(const Vocab& a, const Vocab& b) { return a.symbols_ == b.symbols_; }

 private:
  std::vector<std::string> symbols_;
  std::unordered_map<std::string, TokenId> index_;
};

/// A generated or reference sequence. When terminated, ids ends with EOS.
/// content() excludes the EOS; its length is bounded by T_max.
struct TokenSeq {
  std::vector<TokenId> ids;
  bool terminated = false;

  static TokenSeq from_content(std::vector<TokenId> content);

  std::span<const TokenId> content() const {
    return {ids.data(), terminated ? ids.size() - 1 : ids.size()};
  }
  std::size_t content_length() const { return content().size(); }

  friend bool operator==(const TokenSeq&, const TokenSeq&) = default;
  friend auto operator<=>(const TokenSeq& a, const TokenSeq& b) { return a.ids <=> b.ids; }
};

/// Throws std::invalid_argument describing the first violated invariant:
/// out-of-vocab id, BOS/PAD anywhere, EOS not final, missing EOS when
/// require_terminated, or content longer than t_max.
void validate_sequence(const TokenSeq& seq, const Vocab& vocab, std::size_t t_max,
                       bool require_terminated = true);

std::string to_string(const TokenSeq& seq, const Vocab& vocab);

}  // namespace seqgrad
