#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/policy.hpp"
#include "seqgrad/random.hpp"
#include "seqgrad/vocab.hpp"

namespace seqgrad::testing {

/// Close under the gradient-check rule: relative error below rel, or both
/// values below an absolute floor where relative error is meaningless.
inline bool grad_close(double analytic, double numeric, double rel = 1e-4, double abs_floor = 1e-8) {
  const double diff = std::abs(analytic - numeric);
  if (diff <= abs_floor) return true;
  return diff <= rel * std::max(std::abs(analytic), std::abs(numeric));
}

/// Central difference of f along unit coordinate i of x.
inline double central_difference(const std::function<double(const std::vector<double>&)>& f,
                                  std::vector<double> x, std::size_t i, double h = 1e-5) {
  const double x0 = x[i];
  x[i] = x0 + h;
  const double up = f(x);
  x[i] = x0 - h;
  const double down = f(x);
  return (up - down) / (2.0 * h);
}

inline std::vector<double> random_vector(Rng& rng, std::size_t n, double lo = -2.0, double hi = 2.0) {
  std::vector<double> v(n);
  for (double& x : v) x = lo + (hi - lo) * uniform01(rng);
  return v;
}

/// Vocabulary with content symbols a, b, c, ...
inline Vocab letters(std::size_t n) {
  std::vector<std::string> s;
  for (std::size_t i = 0; i < n; ++i) s.push_back(std::string(1, static_cast<char>('a' + i)));
  return Vocab(s);
}

/// Content token id of the i-th letter.
inline TokenId tok(std::size_t i) { return static_cast<TokenId>(kNumReserved + i); }

inline TokenSeq seq(std::initializer_list<TokenId> content) { return TokenSeq::from_content(content); }

inline ContextInstance context(int id, std::vector<double> features, std::vector<TokenSeq> refs) {
  return ContextInstance{id, std::move(features), std::move(refs)};
}

inline PolicyModel micro_model(std::size_t content_tokens, std::size_t t_max, std::uint64_t seed,
                               double scale = 0.5, std::size_t features = kToyFeatureDim) {
  PolicyConfig c;
  c.kind = PolicyKind::kMicro;
  c.vocab_size = kNumReserved + content_tokens;
  c.t_max = t_max;
  c.feature_dim = features;
  return PolicyModel::create(c, seed, scale);
}

inline PolicyModel gru_model(std::size_t content_tokens, std::size_t t_max, std::uint64_t seed,
                             double scale = 0.0, std::size_t features = kToyFeatureDim) {
  PolicyConfig c;
  c.kind = PolicyKind::kGruSmall;
  c.vocab_size = kNumReserved + content_tokens;
  c.t_max = t_max;
  c.feature_dim = features;
  return PolicyModel::create(c, seed, scale);
}

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    Rng rng(std::random_device{}());
    path_ = std::filesystem::temp_directory_path() / ("seqgrad_" + tag + "_" + std::to_string(rng() % 1000000007));
    std::filesystem::remove_all(path_);
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::string str(const std::string& child) const { return (path_ / child).string(); }

 private:
  std::filesystem::path path_;
};

}  // namespace seqgrad::testing
