#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "seqgrad/vocab.hpp"

namespace seqgrad {

enum class Split { kTrain, kVal, kTest };

std::string_view split_name(Split s);
Split parse_split(std::string_view name);

/// One conditioning input with its reference set.
struct ContextInstance {
  int context_id = 0;
  std::vector<double> features;
  std::vector<TokenSeq> references;

  friend bool operator==(const ContextInstance&, const ContextInstance&) = default;
};

struct Dataset {
  Vocab vocab;
  std::size_t t_max = 0;
  std::size_t refs_per_context = 0;
  std::vector<ContextInstance> train;
  std::vector<ContextInstance> val;
  std::vector<ContextInstance> test;

  const std::vector<ContextInstance>& split(Split s) const;
  std::size_t num_contexts() const { return train.size() + val.size() + test.size(); }

  friend bool operator==(const Dataset&, const Dataset&) = default;
};

struct ToyDatasetOptions {
  std::uint64_t seed = 1;
  std::size_t n_contexts = 800;
  /// Number of content symbols; three reserved tokens are added on top.
  std::size_t vocab_size = 24;
  std::size_t t_max = 12;
  std::size_t refs_per_context = 5;
};

inline constexpr std::size_t kToyFeatureDim = 8;

/// Synthetic captioning stand-in. Each context is a latent scene (a subject
/// and an object attribute); features are the two attribute embeddings plus
/// noise, and each reference is an independent random template realization of
/// the scene, so references of one context share n-grams.
Dataset generate_toy_dataset(const ToyDatasetOptions& opts);

/// Checks every dataset invariant; throws std::invalid_argument on violation.
void validate_dataset(const Dataset& ds);

void write_dataset(const Dataset& ds, std::ostream& out);
void write_dataset(const Dataset& ds, const std::filesystem::path& path);
/// Throws std::runtime_error naming the offending line.
Dataset read_dataset(std::istream& in);
Dataset read_dataset(const std::filesystem::path& path);

}  // namespace seqgrad
