#include "seqgrad/vocab.hpp"

#include <stdexcept>

namespace seqgrad {

Vocab::Vocab(std::vector<std::string> content_symbols) {
  symbols_ = {"<bos>", "<eos>", "<pad>"};
  symbols_.insert(symbols_.end(), std::make_move_iterator(content_symbols.begin()),
                  std::make_move_iterator(content_symbols.end()));
  for (std::size_t i = 0; i < symbols_.size(); ++i) {
    const std::string& s = symbols_[i];
    if (s.empty() || s.find_first_of(" \t\r\n") != std::string::npos) {
      throw std::invalid_argument("vocab symbol '" + s + "' is empty or contains whitespace");
    }
    if (!index_.emplace(s, static_cast<TokenId>(i)).second) {
      throw std::invalid_argument("duplicate vocab symbol '" + s + "'");
    }
  }
}

Vocab Vocab::from_all_symbols(std::vector<std::string> symbols) {
  if (symbols.size() < kNumReserved || symbols[0] != "<bos>" || symbols[1] != "<eos>" ||
      symbols[2] != "<pad>") {
    throw std::invalid_argument("vocab must start with <bos> <eos> <pad>");
  }
  return Vocab(std::vector<std::string>(symbols.begin() + kNumReserved, symbols.end()));
}

const std::string& Vocab::symbol(TokenId id) const {
  if (!contains(id)) throw std::out_of_range("token id " + std::to_string(id) + " not in vocab");
  return symbols_[static_cast<std::size_t>(id)];
}

TokenId Vocab::id_of(const std::string& symbol) const {
  auto it = index_.find(symbol);
  if (it == index_.end()) throw std::out_of_range("unknown symbol '" + symbol + "'");
  return it->second;
}

TokenSeq TokenSeq::from_content(std::vector<TokenId> content) {
  content.push_back(kEos);
  return TokenSeq{std::move(content), true};
}

void validate_sequence(const TokenSeq& seq, const Vocab& vocab, std::size_t t_max,
                       bool require_terminated) {
  const auto& ids = seq.ids;
  for (std::size_t i = 0; i < ids.size(); ++i) {
    const TokenId t = ids[i];
    if (!vocab.contains(t)) throw std::invalid_argument("unknown token id " + std::to_string(t));
    if (t == kBos || t == kPad) {
      throw std::invalid_argument("reserved token id " + std::to_string(t) + " inside sequence");
    }
    if (t == kEos && i + 1 != ids.size()) {
      throw std::invalid_argument("EOS at position " + std::to_string(i) + " is not final");
    }
  }
  const bool ends_eos = !ids.empty() && ids.back() == kEos;
  if (ends_eos != seq.terminated) {
    throw std::invalid_argument("terminated flag disagrees with trailing EOS");
  }
  if (require_terminated && !seq.terminated) throw std::invalid_argument("sequence missing EOS");
  if (seq.content_length() > t_max) {
    throw std::invalid_argument("sequence length " + std::to_string(seq.content_length()) +
                                " exceeds T_max " + std::to_string(t_max));
  }
}

std::string to_string(const TokenSeq& seq, const Vocab& vocab) {
  std::string out;
  for (TokenId t : seq.ids) {
    if (!out.empty()) out += ' ';
    out += vocab.symbol(t);
  }
  return out;
}

}  // namespace seqgrad
