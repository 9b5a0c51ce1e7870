// Acceptance suite: prints one PASS/FAIL line per criterion and exits
// non-zero if any criterion fails. Optional arguments select criteria by number.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <memory>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "seqgrad/cli.hpp"
#include "seqgrad/estimator.hpp"
#include "seqgrad/reward.hpp"
#include "seqgrad/text.hpp"
#include "seqgrad/trainer.hpp"
#include "seqgrad/variance.hpp"
#include "support.hpp"

using namespace seqgrad;
namespace fs = std::filesystem;

namespace {

using Clock = std::chrono::steady_clock;

struct Outcome {
  bool pass = false;
  std::string summary;
};

double seconds_since(Clock::time_point t) {
  return std::chrono::duration<double>(Clock::now() - t).count();
}

std::string fx(double v, int p = 4) { return format_fixed(v, p); }

double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  const std::size_t n = v.size();
  return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

// ---- 1. gradient correctness

Outcome gradient_correctness() {
  const auto start = Clock::now();
  Rng rng(1001);
  std::size_t triples = 0, components = 0, bad = 0;
  double worst = 0.0;
  for (PolicyKind kind : {PolicyKind::kMicro, PolicyKind::kGruSmall}) {
    for (int t = 0; t < 100; ++t) {
      PolicyConfig c;
      c.kind = kind;
      c.vocab_size = kNumReserved + 2 + uniform_index(rng, 6);
      c.t_max = 2 + uniform_index(rng, 4);
      c.feature_dim = 2 + uniform_index(rng, 6);
      c.hidden = 3 + uniform_index(rng, 6);
      c.embed = 2 + uniform_index(rng, 4);
      const PolicyModel model = PolicyModel::create(c, rng(), 0.3 + 0.7 * uniform01(rng));
      const ContextInstance ctx{t, testing::random_vector(rng, c.feature_dim, -1.0, 1.0), {}};
      std::vector<TokenId> content(uniform_index(rng, c.t_max + 1));
      for (TokenId& id : content) id = static_cast<TokenId>(kNumReserved + uniform_index(rng, c.vocab_size - kNumReserved));
      const TokenSeq s = TokenSeq::from_content(content);

      const auto analytic = sequence_logprob_grad(model, ctx, s).grad.flatten();
      const auto flat = model.params().flatten();
      const auto f = [&](const std::vector<double>& x) {
        PolicyModel m = model;
        m.params().assign_flat(x);
        return sequence_logprob(m, ctx, s);
      };
      for (std::size_t i = 0; i < flat.size(); ++i) {
        const double num = testing::central_difference(f, flat, i);
        const double scale = std::max(std::abs(analytic[i]), std::abs(num));
        // Relative error where the gradient is resolvable by differencing,
        // absolute agreement for components that are numerically zero.
        const bool ok = scale > 1e-5 ? std::abs(analytic[i] - num) / scale < 1e-4 : std::abs(analytic[i] - num) < 1e-9;
        if (scale > 1e-5) worst = std::max(worst, std::abs(analytic[i] - num) / scale);
        bad += ok ? 0 : 1;
        ++components;
      }
      ++triples;
    }
  }
  const double secs = seconds_since(start);
  return {bad == 0 && triples >= 200 && secs < 60.0,
          std::to_string(triples) + " triples (100 micro, 100 gru_small), " + std::to_string(components) +
              " components, " + std::to_string(bad) + " mismatches, worst rel err " + format_double(worst) + ", " +
              fx(secs, 1) + "s"};
}

// ---- 2. unbiasedness

Outcome unbiasedness() {
  const auto start = Clock::now();
  const std::uint64_t seed = 2;
  const std::size_t trials = 200000;
  Rng setup(derive_seed({seed, 0x5e7}));
  // Three content tokens (vocab of four choices with EOS), T_max 3.
  const PolicyModel model = testing::micro_model(3, 3, derive_seed({seed, 0x1417}), 1.0);
  const TokenId a = testing::tok(0), b = testing::tok(1), c = testing::tok(2);
  const ContextInstance ctx = testing::context(0, testing::random_vector(setup, kToyFeatureDim, -1.0, 1.0),
                                               {testing::seq({a, b, c}), testing::seq({a, b}), testing::seq({b, c, a})});
  auto idf = std::make_shared<IdfStore>();
  idf->add_document(ctx.references);
  for (const auto& doc : std::vector<std::vector<TokenSeq>>{
           {testing::seq({c, c})}, {testing::seq({a})}, {testing::seq({b, b, a})}, {testing::seq({c, a})}})
    idf->add_document(doc);
  const RewardFn reward = RewardFn::cider_d(idf);

  // Learned baseline fitted beforehand on an independent stream.
  LearnedBaseline learned(kToyFeatureDim);
  {
    Rng warm(derive_seed({seed, 0x1ea4}));
    std::vector<RewardPair> pairs;
    for (int i = 0; i < 16; ++i) {
      ContextInstance other = ctx;
      if (i > 0) other.features = testing::random_vector(warm, kToyFeatureDim, -1.0, 1.0);
      for (int k = 0; k < 8; ++k) pairs.push_back({other.features, reward.score(sample(model, other, warm).seq, ctx.references)});
    }
    learned = fit_learned_baseline(learned, pairs);
  }

  const auto exact = exact_policy_gradient(model, ctx, reward).grad.flatten();
  const std::size_t d = exact.size();
  bool all = true;
  std::ostringstream detail;
  for (BaselineKind kind : {BaselineKind::kNone, BaselineKind::kGreedy, BaselineKind::kLeaveOneOut,
                            BaselineKind::kSingleSample, BaselineKind::kLearned}) {
    Rng rng(derive_seed({seed, 0xacc2, static_cast<std::uint64_t>(kind)}));
    std::vector<double> sum(d, 0.0), sq(d, 0.0);
    const EstimatorOptions opts{1.0, &learned};
    for (std::size_t t = 0; t < trials; ++t) {
      const auto g = estimate_gradient(model, ctx, reward, {kind, 5}, rng, opts).grad.flatten();
      for (std::size_t i = 0; i < d; ++i) {
        sum[i] += g[i];
        sq[i] += g[i] * g[i];
      }
    }
    std::size_t within2 = 0, within3 = 0;
    double z2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
      const double n = static_cast<double>(trials);
      const double m = sum[i] / n;
      const double var = std::max(0.0, (sq[i] - n * m * m) / (n - 1.0));
      const double se = std::sqrt(var / n);
      const double err = std::abs(m - exact[i]);
      if (se == 0.0) {
        within2 += err <= 1e-12;
        within3 += err <= 1e-12;
        continue;
      }
      within2 += err <= 2.0 * se;
      within3 += err <= 3.0 * se;
      z2 += (err / se) * (err / se);
    }
    const double frac = static_cast<double>(within2) / static_cast<double>(d);
    const bool ok = frac >= 0.95;
    all = all && ok;
    detail << "\n    " << baseline_name(kind) << ": " << within2 << "/" << d << " within 2 SE (" << fx(100 * frac, 1)
           << "%), " << within3 << "/" << d << " within 3 SE, mean z^2 " << fx(z2 / static_cast<double>(d), 3)
           << (ok ? "" : "  <- below 95%");
  }
  const double secs = seconds_since(start);
  return {all && secs < 600.0,
          std::to_string(trials) + " trials per strategy, K=5, " + fx(secs, 1) + "s" + detail.str()};
}

// ---- shared training experiment (criteria 3-7)

struct SeedRun {
  std::uint64_t seed = 0;
  double xe_test = 0.0;
  std::map<BaselineKind, double> sc_test;
  std::map<BaselineKind, double> last_epoch_reward;
  std::map<BaselineKind, std::vector<double>> ms_per_step;
  std::map<BaselineKind, std::size_t> greedy_decodes;
  std::map<BaselineKind, std::uint64_t> counter_greedy;
};

struct Experiment {
  Dataset dataset;
  std::vector<SeedRun> runs;
  std::vector<EpochCheckpoint> loo_checkpoints;  // first seed's LOO run
  double seconds = 0.0;
};

constexpr std::uint64_t kSeeds[] = {101, 102, 103, 104, 105};
constexpr BaselineKind kScStrategies[] = {BaselineKind::kGreedy, BaselineKind::kLeaveOneOut,
                                          BaselineKind::kSingleSample};
constexpr std::size_t kScEpochs = 10;

const Experiment& experiment() {
  static const Experiment e = [] {
    const auto start = Clock::now();
    Experiment ex;
    ex.dataset = generate_toy_dataset({});
    const Dataset& ds = ex.dataset;
    const RewardFn cider = make_reward(RewardKind::kCiderD, ds);
    for (std::uint64_t seed : kSeeds) {
      SeedRun run;
      run.seed = seed;
      PolicyConfig pc;
      pc.kind = PolicyKind::kGruSmall;
      pc.vocab_size = ds.vocab.size();
      pc.t_max = ds.t_max;
      PolicyModel xe = PolicyModel::create(pc, derive_seed({seed, 0x1417}));
      TrainConfig xc;
      xc.stage = Stage::kXe;
      xc.epochs = 20;
      xc.learning_rate = 5e-3;
      xc.seed = seed;
      const TrainLog xlog = pretrain_xe(xe, ds, xc);
      run.xe_test = xlog.final_eval(Split::kTest)->cider_d;
      std::cerr << "  seed " << seed << " xe test " << fx(run.xe_test) << '\n';

      for (BaselineKind kind : kScStrategies) {
        PolicyModel m = xe;
        TrainConfig sc;
        sc.stage = Stage::kSc;
        sc.epochs = kScEpochs;
        sc.strategy = {kind, 5};
        sc.seed = seed;
        const bool keep = seed == kSeeds[0] && kind == BaselineKind::kLeaveOneOut;
        const auto before = decode_counters().greedy.load();
        const TrainLog log = train_sc(m, ds, sc, [&](std::size_t epoch, const PolicyModel& snap) {
          if (keep) ex.loo_checkpoints.push_back({epoch, snap});
        });
        run.counter_greedy[kind] = decode_counters().greedy.load() - before;
        run.sc_test[kind] = log.final_eval(Split::kTest)->cider_d;
        run.greedy_decodes[kind] = log.greedy_decodes;
        const std::size_t per_epoch = log.steps().size() / kScEpochs;
        std::vector<double> last;
        for (std::size_t i = log.steps().size() - per_epoch; i < log.steps().size(); ++i)
          last.push_back(log.steps()[i].mean_sample_reward);
        run.last_epoch_reward[kind] = mean(last);
        for (const StepRecord& s : log.steps()) run.ms_per_step[kind].push_back(s.ms_per_step);
        std::cerr << "  seed " << seed << " " << baseline_name(kind) << " test " << fx(run.sc_test[kind])
                  << " last-epoch reward " << fx(run.last_epoch_reward[kind]) << '\n';
      }
      ex.runs.push_back(std::move(run));
    }
    ex.seconds = seconds_since(start);
    return ex;
  }();
  return e;
}

VarianceOptions variance_options() {
  VarianceOptions o;
  o.n_batches = 40;
  o.batch_size = 16;
  o.seed = 7;
  return o;
}

// ---- 3. variance ordering across epochs

Outcome variance_ordering() {
  const Experiment& ex = experiment();
  const auto start = Clock::now();
  const RewardFn cider = make_reward(RewardKind::kCiderD, ex.dataset);
  const std::vector<BaselineStrategy> strategies{
      {BaselineKind::kGreedy, 5}, {BaselineKind::kLeaveOneOut, 5}, {BaselineKind::kSingleSample, 5}};
  const auto reports = variance_sweep(ex.loo_checkpoints, strategies, ex.dataset, cider, variance_options());
  std::size_t epochs = 0, below_greedy = 0, below_single = 0;
  std::ostringstream detail;
  for (std::size_t i = 0; i + 2 < reports.size(); i += 3) {
    const double g = reports[i].v, l = reports[i + 1].v, s = reports[i + 2].v;
    ++epochs;
    below_greedy += l < g;
    below_single += l < s;
    detail << "\n    epoch " << reports[i].epoch << ": greedy " << format_double(g) << "  loo " << format_double(l)
           << "  single " << format_double(s);
  }
  const double fg = static_cast<double>(below_greedy) / static_cast<double>(epochs);
  const double fs_ = static_cast<double>(below_single) / static_cast<double>(epochs);
  const double secs = seconds_since(start);
  return {fg >= 0.8 && fs_ >= 0.9 && secs < 900.0,
          "V(loo) < V(greedy) in " + std::to_string(below_greedy) + "/" + std::to_string(epochs) +
              " epochs, V(loo) < V(single) in " + std::to_string(below_single) + "/" + std::to_string(epochs) +
              ", 40 paired batches of 16, " + fx(secs, 1) + "s" + detail.str()};
}

// ---- 4. K sweep

Outcome k_sweep() {
  const Experiment& ex = experiment();
  const RewardFn cider = make_reward(RewardKind::kCiderD, ex.dataset);
  const std::vector<EpochCheckpoint> last{ex.loo_checkpoints.back()};
  std::vector<BaselineStrategy> strategies;
  for (std::size_t k : {2u, 3u, 5u, 8u}) strategies.push_back({BaselineKind::kLeaveOneOut, k});
  const auto reports = variance_sweep(last, strategies, ex.dataset, cider, variance_options());
  std::size_t inversions = 0;
  std::string values;
  for (std::size_t i = 0; i < reports.size(); ++i) {
    if (i > 0 && reports[i].v > reports[i - 1].v) ++inversions;
    values += (i ? ", " : "") + std::string("K=") + std::to_string(reports[i].strategy.k) + " " + format_double(reports[i].v);
  }
  return {inversions <= 1, "epoch " + std::to_string(last[0].epoch) + " checkpoint: " + values + "; " +
                               std::to_string(inversions) + " inversion(s)"};
}

// ---- 5. training efficacy

Outcome training_efficacy() {
  const Experiment& ex = experiment();
  std::vector<double> xe, greedy, loo;
  std::ostringstream detail;
  for (const SeedRun& r : ex.runs) {
    xe.push_back(r.xe_test);
    greedy.push_back(r.sc_test.at(BaselineKind::kGreedy));
    loo.push_back(r.sc_test.at(BaselineKind::kLeaveOneOut));
    detail << "\n    seed " << r.seed << ": xe " << fx(r.xe_test) << "  greedy " << fx(greedy.back()) << " ("
           << fx(100 * (greedy.back() / r.xe_test - 1), 1) << "%)  loo " << fx(loo.back()) << " ("
           << fx(100 * (loo.back() / r.xe_test - 1), 1) << "%)";
  }
  const double mx = mean(xe), mg = mean(greedy), ml = mean(loo);
  const bool ok = mg >= 1.05 * mx && ml >= 1.05 * mx && ml >= mg;
  return {ok && ex.seconds < 1800.0,
          "seed-mean test CIDEr-D: xe " + fx(mx) + ", greedy " + fx(mg) + " (+" + fx(100 * (mg / mx - 1), 2) +
              "%), loo " + fx(ml) + " (+" + fx(100 * (ml / mx - 1), 2) + "%); training " + fx(ex.seconds, 1) + "s" +
              detail.str()};
}

// ---- 6. single-sample ablation

Outcome single_sample() {
  const Experiment& ex = experiment();
  std::vector<double> g, l, s;
  for (const SeedRun& r : ex.runs) {
    g.push_back(r.last_epoch_reward.at(BaselineKind::kGreedy));
    l.push_back(r.last_epoch_reward.at(BaselineKind::kLeaveOneOut));
    s.push_back(r.last_epoch_reward.at(BaselineKind::kSingleSample));
  }
  const double mg = mean(g), ml = mean(l), ms = mean(s);
  return {ms <= ml, "last-epoch mean sample reward over seeds: single " + fx(ms) + ", loo " + fx(ml) +
                        "; against greedy " + fx(mg) + " single is " + (ms < mg ? "lower" : "not lower")};
}

// ---- 7. speed

Outcome speed() {
  const Experiment& ex = experiment();
  std::vector<double> g, l;
  std::size_t loo_decodes = 0, greedy_decodes = 0;
  for (const SeedRun& r : ex.runs) {
    const auto& mg = r.ms_per_step.at(BaselineKind::kGreedy);
    const auto& ml = r.ms_per_step.at(BaselineKind::kLeaveOneOut);
    g.insert(g.end(), mg.begin(), mg.end());
    l.insert(l.end(), ml.begin(), ml.end());
    loo_decodes += r.greedy_decodes.at(BaselineKind::kLeaveOneOut) + r.counter_greedy.at(BaselineKind::kLeaveOneOut);
    greedy_decodes += r.counter_greedy.at(BaselineKind::kGreedy);
  }
  const double mg = median(g), ml = median(l);
  return {ml <= mg && loo_decodes == 0 && greedy_decodes > 0,
          "median ms/step loo " + fx(ml, 3) + " vs greedy " + fx(mg, 3) + " (K=5, batch 16); greedy decodes: loo " +
              std::to_string(loo_decodes) + ", greedy " + std::to_string(greedy_decodes)};
}

// ---- 8. metric correctness

Outcome metric_correctness() {
  const TokenId a = testing::tok(0), b = testing::tok(1), c = testing::tok(2), d = testing::tok(3),
                e = testing::tok(4), f = testing::tok(5);
  bool ok = true;
  std::ostringstream detail;

  auto spread = std::make_shared<IdfStore>();
  spread->add_document(std::vector<TokenSeq>{testing::seq({a, b, c, d, e})});
  spread->add_document(std::vector<TokenSeq>{testing::seq({f})});
  const RewardFn full = RewardFn::cider_d(spread);
  const std::vector<TokenSeq> id_refs{testing::seq({a, b, c, d, e})};
  const double identity = full.score(testing::seq({a, b, c, d, e}), id_refs);
  const double disjoint = full.score(testing::seq({f, f, f}), id_refs);
  ok = ok && identity == 10.0 && disjoint == 0.0;
  detail << "identity " << format_double(identity) << ", disjoint " << format_double(disjoint);

  auto two = std::make_shared<IdfStore>();
  two->add_document(std::vector<TokenSeq>{testing::seq({a, b, c}), testing::seq({b, c})});
  two->add_document(std::vector<TokenSeq>{testing::seq({a, d})});
  const std::vector<TokenSeq> oracle_refs{testing::seq({a, b, c}), testing::seq({b, c})};
  const double got = RewardFn::cider_d(two).score(testing::seq({a, b, d}), oracle_refs);
  const double want = 10.0 * ((0.5 + 1.0 / std::sqrt(2.0)) / 4.0 + 0.125 * std::exp(-1.0 / 72.0)) / 2.0;
  ok = ok && std::abs(got - want) <= 1e-9;
  detail << ", two-context oracle |err| " << format_double(std::abs(got - want));

  Rng rng(808);
  std::size_t invariant = 0;
  const std::size_t cases = 1000;
  for (std::size_t i = 0; i < cases; ++i) {
    const auto random_seq = [&] {
      std::vector<TokenId> v(1 + uniform_index(rng, 8));
      for (TokenId& t : v) t = testing::tok(uniform_index(rng, 6));
      return TokenSeq::from_content(v);
    };
    auto idf = std::make_shared<IdfStore>();
    for (int doc = 0; doc < 8; ++doc) {
      std::vector<TokenSeq> refs(1 + uniform_index(rng, 4));
      for (TokenSeq& r : refs) r = random_seq();
      idf->add_document(refs);
    }
    std::vector<TokenSeq> refs(2 + uniform_index(rng, 4));
    for (TokenSeq& r : refs) r = random_seq();
    const TokenSeq cand = random_seq();
    const RewardFn r = RewardFn::cider_d(idf);
    const double base = r.score(cand, refs);
    std::shuffle(refs.begin(), refs.end(), rng);
    invariant += r.score(cand, refs) == base;
  }
  ok = ok && invariant == cases;
  detail << ", permutation invariant on " << invariant << "/" << cases << " cases";
  return {ok, detail.str()};
}

// ---- 9. determinism

std::string read_all(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

// steps.csv with the wall-clock column blanked.
std::string mask_timing(const std::string& csv) {
  std::istringstream in(csv);
  std::string out, line;
  while (std::getline(in, line)) {
    out += line.substr(0, line.rfind(',')) + ",*\n";
  }
  return out;
}

bool run_pipeline(const fs::path& root, std::string& err) {
  const std::string data = (root / "data.txt").string();
  const std::vector<std::vector<std::string>> commands{
      {"gen-data", "--out", data, "--seed", "5"},
      {"train", "--data", data, "--out", (root / "xe").string(), "--stage", "xe", "--epochs", "2", "--lr", "5e-3",
       "--seed", "3", "--threads", "1"},
      {"train", "--data", data, "--out", (root / "sc").string(), "--stage", "sc", "--init",
       (root / "xe" / "model.ckpt").string(), "--epochs", "2", "--strategy", "loo", "--seed", "3", "--threads", "1"},
      {"variance", "--data", data, "--checkpoints", (root / "sc").string(), "--strategies", "greedy,loo,single",
       "--batches", "5", "--batch-size", "8", "--seed", "3", "--threads", "1", "--out", (root / "var").string()},
  };
  for (const auto& args : commands) {
    std::ostringstream out, e;
    if (run_cli(args, out, e) != kExitOk) {
      err = args[0] + ": " + e.str();
      return false;
    }
  }
  return true;
}

Outcome determinism() {
  testing::TempDir a("accept_a"), b("accept_b");
  std::string err;
  if (!run_pipeline(a.path(), err) || !run_pipeline(b.path(), err)) return {false, "pipeline failed: " + err};
  std::size_t compared = 0, identical = 0;
  std::string differing;
  for (const auto& entry : fs::recursive_directory_iterator(a.path())) {
    if (entry.path().extension() != ".csv") continue;
    const fs::path rel = fs::relative(entry.path(), a.path());
    std::string x = read_all(entry.path()), y = read_all(b.path() / rel);
    if (rel.filename() == "steps.csv") {
      x = mask_timing(x);
      y = mask_timing(y);
    }
    ++compared;
    if (x == y && !x.empty()) {
      ++identical;
    } else {
      differing += " " + rel.string();
    }
  }
  const bool data_same = read_all(a.path() / "data.txt") == read_all(b.path() / "data.txt");
  return {compared >= 5 && identical == compared && data_same,
          std::to_string(identical) + "/" + std::to_string(compared) +
              " CSVs byte-identical (ms_per_step column of steps.csv masked)" + (data_same ? ", dataset identical" : ", dataset differs") +
              (differing.empty() ? "" : "; differing:" + differing)};
}

}  // namespace

int main(int argc, char** argv) {
  const std::vector<std::pair<std::string, std::function<Outcome()>>> criteria{
      {"gradient correctness", gradient_correctness},
      {"unbiasedness of every baseline", unbiasedness},
      {"variance ordering", variance_ordering},
      {"K sweep", k_sweep},
      {"training efficacy", training_efficacy},
      {"single-sample ablation", single_sample},
      {"speed", speed},
      {"metric correctness", metric_correctness},
      {"determinism", determinism},
  };
  std::set<std::size_t> selected;
  for (int i = 1; i < argc; ++i) selected.insert(static_cast<std::size_t>(std::stoul(argv[i])));

  int failures = 0;
  for (std::size_t i = 0; i < criteria.size(); ++i) {
    if (!selected.empty() && !selected.count(i + 1)) continue;
    Outcome o;
    try {
      o = criteria[i].second();
    } catch (const std::exception& e) {
      o = {false, std::string("error: ") + e.what()};
    }
    failures += o.pass ? 0 : 1;
    std::cout << (o.pass ? "PASS" : "FAIL") << " " << (i + 1) << " " << criteria[i].first << ": " << o.summary
              << std::endl;
  }
  return failures == 0 ? 0 : 1;
}
