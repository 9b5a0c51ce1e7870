#include "seqgrad/cli.hpp"

#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <map>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "seqgrad/dataset.hpp"
#include "seqgrad/estimator.hpp"
#include "seqgrad/policy.hpp"
#include "seqgrad/report.hpp"
#include "seqgrad/text.hpp"
#include "seqgrad/trainer.hpp"
#include "seqgrad/variance.hpp"

namespace fs = std::filesystem;

namespace seqgrad {

namespace {

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

std::string read_file(const fs::path& path, const char* what) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error(std::string("cannot open ") + what + " " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << content;
  if (!out) throw std::runtime_error("write failed: " + path.string());
}

// key = value lines, '#' comments.
std::vector<std::pair<std::string, std::string>> parse_kv(const std::string& text, const std::string& origin) {
  std::vector<std::pair<std::string, std::string>> kv;
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    std::string_view v = trim(line);
    if (v.empty() || v.front() == '#') continue;
    const auto eq = v.find('=');
    if (eq == std::string_view::npos) {
      throw UsageError(origin + ":" + std::to_string(no) + ": expected key = value");
    }
    kv.emplace_back(std::string(trim(v.substr(0, eq))), std::string(trim(v.substr(eq + 1))));
  }
  return kv;
}

// Fills options that were not given on the command line from --config.
void apply_config(CLI::App& sub, const std::string& path) {
  const auto kv = parse_kv(read_file(path, "config"), path);
  for (const auto& [key, value] : kv) {
    CLI::Option* opt = key == "config" ? nullptr : sub.get_option_no_throw("--" + key);
    if (opt == nullptr) throw UsageError("unknown config key '" + key + "' in " + path);
    if (opt->count() > 0) continue;
    opt->add_result(value);
    opt->run_callback();
  }
}

std::string absolute_path(const std::string& p) { return fs::absolute(fs::path(p)).lexically_normal().string(); }

void require(bool ok, const std::string& msg) {
  if (!ok) throw UsageError(msg);
}

void prepare_out_dir(const fs::path& dir, bool force) {
  if (fs::exists(dir) && !fs::is_directory(dir)) throw UsageError(dir.string() + " exists and is not a directory");
  if (fs::exists(dir) && !fs::is_empty(dir) && !force) {
    throw UsageError("output directory " + dir.string() + " is not empty (use --force)");
  }
  fs::create_directories(dir);
}

Dataset load_dataset(const std::string& path) {
  if (!fs::exists(path)) throw std::runtime_error("dataset not found: " + path);
  return read_dataset(fs::path(path));
}

std::string dataset_hash(const Dataset& ds) {
  std::ostringstream os;
  write_dataset(ds, os);
  return hex64(fnv1a(os.str()));
}

std::string fmt_num(double v) { return format_double(v); }

// ---- gen-data

struct GenArgs {
  std::string out;
  std::uint64_t seed = 1;
  std::size_t contexts = 800;
  std::size_t vocab = 24;
  std::size_t tmax = 12;
  std::size_t refs = 5;
  bool force = false;
};

void add_gen(CLI::App& sub, GenArgs& a) {
  sub.add_option("--out", a.out, "Output dataset file");
  sub.add_option("--seed", a.seed, "Generator seed")->capture_default_str();
  sub.add_option("--contexts", a.contexts, "Number of contexts")->check(CLI::Range(3, 1000000))->capture_default_str();
  sub.add_option("--vocab", a.vocab, "Content symbols (>= 6)")->check(CLI::Range(6, 60000))->capture_default_str();
  sub.add_option("--tmax", a.tmax, "Maximum content tokens per sequence")->check(CLI::Range(2, 1000))->capture_default_str();
  sub.add_option("--refs", a.refs, "References per context")->check(CLI::Range(2, 1000))->capture_default_str();
  sub.add_flag("--force", a.force, "Overwrite an existing output");
}

int cmd_gen(const GenArgs& a, std::ostream& out) {
  require(!a.out.empty(), "gen-data: --out is required");
  if (fs::exists(a.out) && !a.force) throw UsageError(a.out + " already exists (use --force)");
  ToyDatasetOptions opts{a.seed, a.contexts, a.vocab, a.tmax, a.refs};
  const Dataset ds = generate_toy_dataset(opts);
  if (fs::path(a.out).has_parent_path()) fs::create_directories(fs::path(a.out).parent_path());
  write_dataset(ds, fs::path(a.out));
  out << "wrote " << a.out << ": train=" << ds.train.size() << " val=" << ds.val.size()
      << " test=" << ds.test.size() << " vocab=" << ds.vocab.size() << " (" << ds.vocab.content_size()
      << " content) tmax=" << ds.t_max << " refs=" << ds.refs_per_context << '\n';
  return kExitOk;
}

// ---- train

struct TrainArgs {
  std::string config;
  std::string data;
  std::string out;
  std::string init;
  std::string stage = "xe";
  std::string model = "gru_small";
  std::size_t epochs = 10;
  std::size_t batch_size = 16;
  double lr = 0.0;
  std::string optimizer = "adam";
  std::string strategy = "loo";
  std::size_t k = 5;
  std::string reward = "cider_d";
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t beam = 5;
  std::size_t eval_every = 0;
  std::size_t threads = 1;
  bool force = false;
};

void add_train(CLI::App& sub, TrainArgs& a) {
  sub.add_option("--config", a.config, "key = value file; command-line flags take precedence");
  sub.add_option("--data", a.data, "Dataset file");
  sub.add_option("--out", a.out, "Run output directory");
  sub.add_option("--init", a.init, "Checkpoint to start from (required for --stage sc)");
  sub.add_option("--stage", a.stage, "xe | sc")->check(CLI::IsMember({"xe", "sc"}))->capture_default_str();
  sub.add_option("--model", a.model, "micro | gru_small (xe without --init)")
      ->check(CLI::IsMember({"micro", "gru_small"}))
      ->capture_default_str();
  sub.add_option("--epochs", a.epochs)->capture_default_str();
  sub.add_option("--batch-size", a.batch_size, "Contexts per step")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--lr", a.lr, "Learning rate (0 = stage default)")->check(CLI::NonNegativeNumber)->capture_default_str();
  sub.add_option("--optimizer", a.optimizer)->check(CLI::IsMember({"sgd", "adam"}))->capture_default_str();
  sub.add_option("--strategy", a.strategy, "none | greedy | loo | single | learned")->capture_default_str();
  sub.add_option("--k", a.k, "Samples per context")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--reward", a.reward, "cider_d | bleu4 | neg_edit")->capture_default_str();
  sub.add_option("--temperature", a.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--seed", a.seed)->capture_default_str();
  sub.add_option("--beam", a.beam, "Beam size for evaluation")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--eval-every", a.eval_every, "Validation every N steps (0 = per epoch)")->capture_default_str();
  sub.add_option("--threads", a.threads)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_flag("--force", a.force, "Reuse a non-empty output directory");
}

TrainConfig to_train_config(const TrainArgs& a) {
  TrainConfig c;
  try {
    c.stage = parse_stage(a.stage);
    c.epochs = a.epochs;
    c.batch_size = a.batch_size;
    c.learning_rate = a.lr;
    c.optimizer = parse_optimizer(a.optimizer);
    c.strategy = BaselineStrategy{parse_baseline(a.strategy), a.k};
    c.reward = parse_reward(a.reward);
    c.temperature = a.temperature;
    c.seed = a.seed;
    c.eval_beam = a.beam;
    c.eval_every = a.eval_every;
    c.threads = a.threads;
    c.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  return c;
}

std::string train_echo(const TrainArgs& a, const TrainConfig& c, const std::string& model_kind) {
  std::ostringstream os;
  os << "# seqgrad " << kVersion << " train\n";
  os << "data = " << a.data << '\n';
  if (!a.init.empty()) os << "init = " << a.init << '\n';
  os << "stage = " << stage_name(c.stage) << '\n';
  os << "model = " << model_kind << '\n';
  os << "epochs = " << c.epochs << '\n';
  os << "batch-size = " << c.batch_size << '\n';
  os << "lr = " << fmt_num(c.effective_learning_rate()) << '\n';
  os << "optimizer = " << optimizer_name(c.optimizer) << '\n';
  os << "strategy = " << baseline_name(c.strategy.kind) << '\n';
  os << "k = " << c.strategy.k << '\n';
  os << "reward = " << reward_name(c.reward) << '\n';
  os << "temperature = " << fmt_num(c.temperature) << '\n';
  os << "seed = " << c.seed << '\n';
  os << "beam = " << c.eval_beam << '\n';
  os << "eval-every = " << c.eval_every << '\n';
  os << "threads = " << c.threads << '\n';
  return os.str();
}

std::string checkpoint_name(std::size_t epoch) {
  std::string n = std::to_string(epoch);
  return "epoch_" + std::string(n.size() < 3 ? 3 - n.size() : 0, '0') + n + ".ckpt";
}

int cmd_train(TrainArgs a, std::ostream& out) {
  require(!a.data.empty(), "train: --data is required");
  require(!a.out.empty(), "train: --out is required");
  const TrainConfig config = to_train_config(a);
  a.data = absolute_path(a.data);
  if (!a.init.empty()) a.init = absolute_path(a.init);

  if (config.stage == Stage::kSc && a.init.empty()) {
    throw UsageError("train --stage sc needs --init <checkpoint> from an xe run");
  }
  const Dataset ds = load_dataset(a.data);

  PolicyModel model;
  if (!a.init.empty()) {
    if (!fs::exists(a.init)) throw std::runtime_error("checkpoint not found: " + a.init);
    Checkpoint ck = read_checkpoint(fs::path(a.init));
    if (config.stage == Stage::kSc && ck.stage == "init") {
      throw UsageError("checkpoint " + a.init + " has not been pretrained (stage=init); run --stage xe first");
    }
    model = std::move(ck.model);
  } else {
    PolicyConfig pc;
    pc.kind = parse_policy_kind(a.model);
    pc.vocab_size = ds.vocab.size();
    pc.t_max = ds.t_max;
    pc.feature_dim = ds.train.empty() ? kToyFeatureDim : ds.train.front().features.size();
    model = PolicyModel::create(pc, derive_seed({config.seed, 0x1417}));
  }

  const fs::path dir(a.out);
  prepare_out_dir(dir, a.force);
  fs::create_directories(dir / "checkpoints");
  write_file(dir / "config.txt", train_echo(a, config, std::string(policy_kind_name(model.kind()))));
  if (!a.config.empty()) write_file(dir / "config.input.txt", read_file(a.config, "config"));

  const std::string stage(stage_name(config.stage));
  const std::uint64_t init_hash = checkpoint_hash(model);
  auto on_epoch = [&](std::size_t epoch, const PolicyModel& m) {
    write_checkpoint(Checkpoint{m, stage}, dir / "checkpoints" / checkpoint_name(epoch));
    out << stage << " epoch " << epoch << "/" << config.epochs << " done\n";
  };
  const TrainLog log = config.stage == Stage::kXe ? pretrain_xe(model, ds, config, on_epoch)
                                                  : train_sc(model, ds, config, on_epoch);
  write_checkpoint(Checkpoint{model, stage}, dir / "model.ckpt");

  std::ostringstream steps, evals;
  log.write_steps_csv(steps);
  log.write_eval_csv(evals);
  write_file(dir / "steps.csv", steps.str());
  write_file(dir / "eval.csv", evals.str());

  std::ostringstream manifest;
  manifest << "version = " << kVersion << '\n'
           << "dataset_hash = " << dataset_hash(ds) << '\n'
           << "init_hash = " << hex64(init_hash) << '\n'
           << "final_hash = " << hex64(checkpoint_hash(model)) << '\n'
           << "greedy_decodes = " << log.greedy_decodes << '\n';
  write_file(dir / "manifest.txt", manifest.str());

  for (Split s : {Split::kVal, Split::kTest}) {
    if (auto e = log.final_eval(s)) {
      out << split_name(s) << ": cider_d=" << format_fixed(e->cider_d, 4) << " bleu4=" << format_fixed(e->bleu4, 4)
          << '\n';
    }
  }
  return kExitOk;
}

// ---- eval

struct EvalArgs {
  std::string data;
  std::string model;
  std::string split = "test";
  std::size_t beam = 5;
  std::size_t threads = 1;
  std::string out;
};

void add_eval(CLI::App& sub, EvalArgs& a) {
  sub.add_option("--data", a.data, "Dataset file");
  sub.add_option("--model", a.model, "Checkpoint file");
  sub.add_option("--split", a.split)->check(CLI::IsMember({"train", "val", "test"}))->capture_default_str();
  sub.add_option("--beam", a.beam)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--threads", a.threads)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--out", a.out, "Also write the CSV to this file");
}

int cmd_eval(const EvalArgs& a, std::ostream& out) {
  require(!a.data.empty(), "eval: --data is required");
  require(!a.model.empty(), "eval: --model is required");
  const Dataset ds = load_dataset(a.data);
  if (!fs::exists(a.model)) throw std::runtime_error("checkpoint not found: " + a.model);
  const Checkpoint ck = read_checkpoint(fs::path(a.model));
  const Split split = parse_split(a.split);
  const RewardFn cider = make_reward(RewardKind::kCiderD, ds);
  const EvalMetrics m = evaluate(ck.model, ds.split(split), cider, a.beam, a.threads);
  std::ostringstream csv;
  csv << "split,cider_d,bleu4\n" << a.split << ',' << format_double(m.cider_d) << ',' << format_double(m.bleu4) << '\n';
  out << csv.str();
  if (!a.out.empty()) write_file(a.out, csv.str());
  return kExitOk;
}

// ---- compare

struct CompareArgs {
  std::vector<std::string> runs;
  std::string split = "test";
  std::string out;
};

void add_compare(CLI::App& sub, CompareArgs& a) {
  sub.add_option("--runs", a.runs, "Run directories produced by train")->delimiter(',');
  sub.add_option("--split", a.split)->check(CLI::IsMember({"val", "test"}))->capture_default_str();
  sub.add_option("--out", a.out, "Write the table to this CSV instead of stdout");
}

std::map<std::string, std::string> read_kv_file(const fs::path& p, const char* what) {
  std::map<std::string, std::string> m;
  for (auto& [k, v] : parse_kv(read_file(p, what), p.string())) m[k] = v;
  return m;
}

int cmd_compare(const CompareArgs& a, std::ostream& out) {
  require(!a.runs.empty(), "compare: --runs needs at least one run directory");
  const Split split = parse_split(a.split);
  struct Run {
    std::string stage, strategy, k, seed, hash;
    CompareRow row;
  };
  std::vector<Run> runs;
  for (const std::string& dir : a.runs) {
    const auto cfg = read_kv_file(fs::path(dir) / "config.txt", "run config");
    const auto man = read_kv_file(fs::path(dir) / "manifest.txt", "run manifest");
    const std::string evals = read_file(fs::path(dir) / "eval.csv", "eval log");
    std::optional<EvalRecord> last;
    std::istringstream in(evals);
    std::string line;
    std::getline(in, line);
    while (std::getline(in, line)) {
      const auto f = split_char(line, ',');
      if (f.size() != 4) throw std::runtime_error(dir + "/eval.csv: malformed row '" + line + "'");
      if (parse_split(f[1]) != split) continue;
      last = EvalRecord{static_cast<std::size_t>(parse_int(f[0])), split, parse_double(f[2]), parse_double(f[3])};
    }
    if (!last) throw std::runtime_error(dir + ": no " + a.split + " evaluation found");
    auto get = [&](const std::map<std::string, std::string>& m, const char* key) {
      auto it = m.find(key);
      if (it == m.end()) throw std::runtime_error(dir + ": missing '" + key + "'");
      return it->second;
    };
    Run r{get(cfg, "stage"), get(cfg, "strategy"), get(cfg, "k"), get(cfg, "seed"), get(man, "dataset_hash"), {}};
    r.row = CompareRow{r.stage == "xe" ? "xe" : r.strategy, r.seed, last->cider_d, last->bleu4};
    runs.push_back(std::move(r));
  }
  for (const Run& r : runs) {
    if (r.hash != runs.front().hash) {
      throw std::runtime_error("compare: runs use different datasets (" + a.runs.front() + " vs another run)");
    }
  }
  // Add K to the label when one strategy appears with several K.
  std::vector<CompareRow> rows;
  for (const Run& r : runs) {
    CompareRow row = r.row;
    const bool mixed = std::any_of(runs.begin(), runs.end(), [&](const Run& o) {
      return o.stage == r.stage && o.strategy == r.strategy && o.k != r.k;
    });
    if (mixed && r.stage != "xe") row.strategy += "_k" + r.k;
    rows.push_back(std::move(row));
  }
  const auto table = compare_table(rows);
  std::ostringstream csv;
  write_compare_csv(table, csv);
  if (a.out.empty()) {
    out << csv.str();
  } else {
    write_file(a.out, csv.str());
    out << "wrote " << a.out << " (" << rows.size() << " runs)\n";
  }
  return kExitOk;
}

// ---- variance

struct VarianceArgs {
  std::string config;
  std::string data;
  std::string checkpoints;
  std::vector<std::string> strategies{"greedy", "loo"};
  std::size_t k = 5;
  std::size_t batches = 20;
  std::size_t batch_size = 16;
  std::string reward = "cider_d";
  double temperature = 1.0;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::string out;
  bool force = false;
};

void add_variance(CLI::App& sub, VarianceArgs& a) {
  sub.add_option("--config", a.config, "key = value file; command-line flags take precedence");
  sub.add_option("--data", a.data, "Dataset file");
  sub.add_option("--checkpoints", a.checkpoints, "Run directory or its checkpoints/ directory");
  sub.add_option("--strategies", a.strategies, "Comma list; name or name:K (e.g. loo:3)")
      ->delimiter(',')
      ->capture_default_str();
  sub.add_option("--strategy", a.strategies, "Alias of --strategies")->delimiter(',');
  sub.add_option("--k", a.k, "Default samples per context")->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--batches", a.batches, "Batches per measurement (>= 2)")->capture_default_str();
  sub.add_option("--batch-size", a.batch_size)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--reward", a.reward)->capture_default_str();
  sub.add_option("--temperature", a.temperature)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--seed", a.seed)->capture_default_str();
  sub.add_option("--threads", a.threads)->check(CLI::PositiveNumber)->capture_default_str();
  sub.add_option("--out", a.out, "Output directory for variance.csv and variance.svg");
  sub.add_flag("--force", a.force);
}

std::vector<BaselineStrategy> parse_strategies(const std::vector<std::string>& specs, std::size_t default_k) {
  std::vector<BaselineStrategy> out;
  for (const std::string& spec : specs) {
    const auto colon = spec.find(':');
    BaselineStrategy s{parse_baseline(spec.substr(0, colon)), default_k};
    if (colon != std::string::npos) {
      const long long k = parse_int(spec.substr(colon + 1));
      if (k < 1) throw std::invalid_argument("K must be positive in '" + spec + "'");
      s.k = static_cast<std::size_t>(k);
    }
    s.validate();
    out.push_back(s);
  }
  return out;
}

std::vector<std::pair<std::size_t, fs::path>> find_checkpoints(const fs::path& where) {
  fs::path dir = where;
  if (fs::is_directory(where / "checkpoints")) dir = where / "checkpoints";
  if (!fs::is_directory(dir)) throw std::runtime_error("checkpoint directory not found: " + where.string());
  std::vector<std::pair<std::size_t, fs::path>> found;
  for (const auto& entry : fs::directory_iterator(dir)) {
    const std::string name = entry.path().filename().string();
    if (name.rfind("epoch_", 0) != 0 || entry.path().extension() != ".ckpt") continue;
    try {
      found.emplace_back(static_cast<std::size_t>(parse_int(name.substr(6, name.size() - 6 - 5))), entry.path());
    } catch (const std::invalid_argument&) {
    }
  }
  if (found.empty()) throw std::runtime_error("no checkpoints (epoch_NNN.ckpt) found in " + dir.string());
  std::sort(found.begin(), found.end());
  return found;
}

std::string variance_echo(const VarianceArgs& a, const std::vector<BaselineStrategy>& strategies) {
  std::ostringstream os;
  os << "# seqgrad " << kVersion << " variance\n";
  os << "data = " << a.data << '\n';
  os << "checkpoints = " << a.checkpoints << '\n';
  os << "strategies = ";
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    os << (i ? "," : "") << baseline_name(strategies[i].kind) << ':' << strategies[i].k;
  }
  os << '\n';
  os << "batches = " << a.batches << '\n';
  os << "batch-size = " << a.batch_size << '\n';
  os << "reward = " << a.reward << '\n';
  os << "temperature = " << fmt_num(a.temperature) << '\n';
  os << "seed = " << a.seed << '\n';
  os << "threads = " << a.threads << '\n';
  return os.str();
}

int cmd_variance(VarianceArgs a, std::ostream& out) {
  require(!a.data.empty(), "variance: --data is required");
  require(!a.checkpoints.empty(), "variance: --checkpoints is required");
  require(!a.out.empty(), "variance: --out is required");
  require(a.batches >= 2, "variance: --batches must be at least 2");
  std::vector<BaselineStrategy> strategies;
  RewardKind reward_kind{};
  try {
    strategies = parse_strategies(a.strategies, a.k);
    reward_kind = parse_reward(a.reward);
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  require(!strategies.empty(), "variance: no strategies given");
  a.data = absolute_path(a.data);
  a.checkpoints = absolute_path(a.checkpoints);

  const Dataset ds = load_dataset(a.data);
  std::vector<EpochCheckpoint> cks;
  for (const auto& [epoch, path] : find_checkpoints(a.checkpoints)) {
    cks.push_back(EpochCheckpoint{epoch, read_checkpoint(path).model});
  }
  const fs::path dir(a.out);
  prepare_out_dir(dir, a.force);
  write_file(dir / "config.txt", variance_echo(a, strategies));

  VarianceOptions opts;
  opts.n_batches = a.batches;
  opts.batch_size = a.batch_size;
  opts.seed = a.seed;
  opts.temperature = a.temperature;
  opts.threads = a.threads;
  const RewardFn reward = make_reward(reward_kind, ds);
  const auto reports = variance_sweep(cks, strategies, ds, reward, opts);

  std::ostringstream csv, svg;
  write_variance_csv(reports, csv);
  write_variance_svg(reports, svg);
  write_file(dir / "variance.csv", csv.str());
  write_file(dir / "variance.svg", svg.str());
  out << csv.str();
  return kExitOk;
}

}  // namespace

int run_cli(std::span<const std::string> args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Baseline strategies for REINFORCE sequence training on a toy captioning task", "seqgrad"};
  app.set_version_flag("--version", kVersion);
  app.require_subcommand(1);

  GenArgs gen;
  TrainArgs train;
  EvalArgs ev;
  CompareArgs cmp;
  VarianceArgs var;
  CLI::App* gen_cmd = app.add_subcommand("gen-data", "Generate the synthetic dataset");
  CLI::App* train_cmd = app.add_subcommand("train", "Cross-entropy or self-critical training");
  CLI::App* eval_cmd = app.add_subcommand("eval", "Beam-search evaluation of a checkpoint");
  CLI::App* cmp_cmd = app.add_subcommand("compare", "Final metrics per strategy across runs");
  CLI::App* var_cmd = app.add_subcommand("variance", "Gradient variance of saved checkpoints");
  add_gen(*gen_cmd, gen);
  add_train(*train_cmd, train);
  add_eval(*eval_cmd, ev);
  add_compare(*cmp_cmd, cmp);
  add_variance(*var_cmd, var);

  try {
    std::vector<std::string> rev(args.rbegin(), args.rend());
    app.parse(rev);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kExitOk;
  } catch (const CLI::CallForVersion&) {
    out << kVersion << '\n';
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    if (!app.get_subcommands().empty()) {
      err << "run with " << app.get_subcommands().front()->get_name() << " --help for usage\n";
    }
    return kExitUsage;
  }

  try {
    if (*gen_cmd) return cmd_gen(gen, out);
    if (*train_cmd) {
      if (!train.config.empty()) apply_config(*train_cmd, train.config);
      return cmd_train(train, out);
    }
    if (*eval_cmd) return cmd_eval(ev, out);
    if (*cmp_cmd) return cmd_compare(cmp, out);
    if (*var_cmd) {
      if (!var.config.empty()) apply_config(*var_cmd, var.config);
      return cmd_variance(var, out);
    }
  } catch (const UsageError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kExitFailure;
  }
  return kExitUsage;
}

}  // namespace seqgrad
