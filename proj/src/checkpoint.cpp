#include <fstream>
#include <istream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>

#include "seqgrad/policy.hpp"
#include "seqgrad/text.hpp"

namespace seqgrad {
namespace {

[[noreturn]] void fail(std::size_t line_no, const std::string& what) {
  throw std::runtime_error("checkpoint line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void write_checkpoint(const Checkpoint& ckpt, std::ostream& out) {
  const PolicyConfig& c = ckpt.model.config();
  out << "seqgrad-model v1 kind=" << policy_kind_name(c.kind) << " vocab=" << c.vocab_size
      << " tmax=" << c.t_max << " features=" << c.feature_dim << " hidden=" << c.hidden
      << " embed=" << c.embed << " stage=" << ckpt.stage << '\n';
  const ParamSet& p = ckpt.model.params();
  for (std::size_t i = 0; i < p.size(); ++i) {
    const Shape& s = p[i].shape();
    out << "param " << p.name(i);
    for (std::size_t d = 0; d < s.rank(); ++d) out << ' ' << s[d];
    out << '\n';
    bool first = true;
    for (double v : p[i].data()) {
      if (!first) out << ' ';
      out << format_double(v);
      first = false;
    }
    out << '\n';
  }
}

void write_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open " + path.string() + " for writing");
  write_checkpoint(ckpt, out);
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line)) throw std::runtime_error("checkpoint: no header");
  const auto head = split_ws(line);
  if (head.size() < 2 || head[0] != "seqgrad-model" || head[1] != "v1") fail(1, "no header");
  std::map<std::string, std::string, std::less<>> kv;
  for (std::size_t i = 2; i < head.size(); ++i) {
    const auto eq = head[i].find('=');
    if (eq == std::string_view::npos) fail(1, "malformed header field '" + std::string(head[i]) + "'");
    kv.emplace(std::string(head[i].substr(0, eq)), std::string(head[i].substr(eq + 1)));
  }
  auto get = [&](const char* key) -> const std::string& {
    auto it = kv.find(key);
    if (it == kv.end()) fail(1, std::string("missing header field ") + key);
    return it->second;
  };
  PolicyConfig config;
  Checkpoint ckpt;
  try {
    config.kind = parse_policy_kind(get("kind"));
    config.vocab_size = static_cast<std::size_t>(parse_int(get("vocab")));
    config.t_max = static_cast<std::size_t>(parse_int(get("tmax")));
    config.feature_dim = static_cast<std::size_t>(parse_int(get("features")));
    config.hidden = static_cast<std::size_t>(parse_int(get("hidden")));
    config.embed = static_cast<std::size_t>(parse_int(get("embed")));
    ckpt.stage = get("stage");
  } catch (const std::invalid_argument& e) {
    fail(1, e.what());
  }

  // Shapes and names come from the architecture; the file must match it exactly.
  ckpt.model = PolicyModel::create(config, 0);
  ParamSet& params = ckpt.model.params();
  std::size_t line_no = 1;
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!std::getline(in, line)) fail(line_no + 1, "missing parameter " + params.name(i));
    ++line_no;
    const auto f = split_ws(line);
    if (f.size() < 3 || f[0] != "param") fail(line_no, "expected param line");
    if (f[1] != params.name(i)) {
      fail(line_no, "expected parameter " + params.name(i) + ", found " + std::string(f[1]));
    }
    std::vector<std::size_t> dims;
    try {
      for (std::size_t d = 2; d < f.size(); ++d) dims.push_back(static_cast<std::size_t>(parse_int(f[d])));
    } catch (const std::invalid_argument& e) {
      fail(line_no, e.what());
    }
    if (dims != params[i].shape().dims()) fail(line_no, "shape mismatch for " + params.name(i));
    if (!std::getline(in, line)) fail(line_no + 1, "missing values for " + params.name(i));
    ++line_no;
    const auto vals = split_ws(line);
    if (vals.size() != params[i].size()) fail(line_no, "wrong value count for " + params.name(i));
    try {
      for (std::size_t j = 0; j < vals.size(); ++j) params[i][j] = parse_double(vals[j]);
    } catch (const std::invalid_argument& e) {
      fail(line_no, e.what());
    }
  }
  while (std::getline(in, line)) {
    ++line_no;
    if (!trim(line).empty()) fail(line_no, "trailing content");
  }
  return ckpt;
}

Checkpoint read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open checkpoint " + path.string());
  return read_checkpoint(in);
}

std::string checkpoint_string(const Checkpoint& ckpt) {
  std::ostringstream os;
  write_checkpoint(ckpt, os);
  return os.str();
}

std::uint64_t checkpoint_hash(const PolicyModel& model) {
  return fnv1a(checkpoint_string(Checkpoint{model, "hash"}));
}

}  // namespace seqgrad
