#include <doctest.h>

#include <fstream>
#include <map>
#include <sstream>

#include "seqgrad/cli.hpp"
#include "seqgrad/text.hpp"
#include "seqgrad/trainer.hpp"
#include "seqgrad/variance.hpp"
#include "support.hpp"

using namespace seqgrad;
using seqgrad::testing::TempDir;
namespace fs = std::filesystem;

namespace {

struct Result {
  int code = 0;
  std::string out;
  std::string err;
};

Result run(std::vector<std::string> args) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  return {code, out.str(), err.str()};
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

std::vector<std::string> lines(const std::string& text) {
  std::vector<std::string> out;
  std::istringstream in(text);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

std::map<std::string, std::string> kv(const fs::path& p) {
  std::map<std::string, std::string> m;
  for (const std::string& l : lines(slurp(p))) {
    if (l.empty() || l[0] == '#') continue;
    const auto eq = l.find(" = ");
    m[l.substr(0, eq)] = l.substr(eq + 3);
  }
  return m;
}

// Dataset plus an XE run and two SC runs, built once for the whole file.
struct Pipeline {
  TempDir dir{"cli"};
  std::string data = dir.str("data.txt");
  std::string xe = dir.str("xe");
  std::string greedy = dir.str("greedy");
  std::string loo = dir.str("loo");

  Pipeline() {
    REQUIRE(run({"gen-data", "--out", data, "--contexts", "64", "--seed", "4"}).code == 0);
    REQUIRE(run({"train", "--data", data, "--out", xe, "--stage", "xe", "--epochs", "2", "--batch-size", "16",
                 "--lr", "5e-3", "--beam", "2"})
                .code == 0);
    for (const auto& [name, out] : {std::pair{"greedy", greedy}, std::pair{"loo", loo}}) {
      const Result r = run({"train", "--data", data, "--out", out, "--stage", "sc", "--init", xe + "/model.ckpt",
                            "--epochs", "2", "--batch-size", "16", "--strategy", name, "--k", "3", "--beam", "2"});
      REQUIRE_MESSAGE(r.code == 0, r.err);
    }
  }
};

Pipeline& pipeline() {
  static Pipeline p;
  return p;
}

}  // namespace

TEST_CASE("version and help") {
  CHECK(run({"--version"}).out == std::string(kVersion) + "\n");
  const Result h = run({"--help"});
  CHECK(h.code == 0);
  CHECK(h.out.find("variance") != std::string::npos);
  CHECK(run({}).code == kExitUsage);
  CHECK(run({"frobnicate"}).code == kExitUsage);
}

TEST_CASE("gen-data is deterministic and validates its arguments") {
  TempDir d("gen");
  const Result r = run({"gen-data", "--out", d.str("a.txt"), "--contexts", "40"});
  CHECK(r.code == 0);
  CHECK(r.out.find("train") != std::string::npos);
  CHECK(run({"gen-data", "--out", d.str("b.txt"), "--contexts", "40"}).code == 0);
  CHECK(slurp(d.str("a.txt")) == slurp(d.str("b.txt")));
  CHECK(run({"gen-data", "--out", d.str("c.txt"), "--contexts", "40", "--seed", "2"}).code == 0);
  CHECK(slurp(d.str("a.txt")) != slurp(d.str("c.txt")));

  const Result small = run({"gen-data", "--out", d.str("v.txt"), "--vocab", "3"});
  CHECK(small.code == kExitUsage);
  CHECK(small.err.find("--vocab") != std::string::npos);
  CHECK(!fs::exists(d.str("v.txt")));
  CHECK(run({"gen-data", "--out", d.str("a.txt"), "--contexts", "40"}).code != 0);
  CHECK(run({"gen-data", "--out", d.str("a.txt"), "--contexts", "40", "--force"}).code == 0);
  CHECK(run({"gen-data", "--contexts", "40"}).code == kExitUsage);
}

TEST_CASE("train writes the run directory") {
  const Pipeline& p = pipeline();
  for (const std::string& run_dir : {p.xe, p.greedy, p.loo}) {
    for (const char* f : {"config.txt", "steps.csv", "eval.csv", "model.ckpt", "manifest.txt",
                          "checkpoints/epoch_001.ckpt", "checkpoints/epoch_002.ckpt"})
      CHECK_MESSAGE(fs::exists(fs::path(run_dir) / f), run_dir << "/" << f);
    const auto ev = lines(slurp(fs::path(run_dir) / "eval.csv"));
    REQUIRE(ev.size() >= 3);
    CHECK(ev[0] == "step,split,cider_d,bleu4");
    CHECK(ev.back().find(",test,") != std::string::npos);
  }
  CHECK(lines(slurp(fs::path(p.xe) / "steps.csv")).size() == 1 + 2 * 3);
  const auto xe_man = kv(fs::path(p.xe) / "manifest.txt");
  const auto sc_man = kv(fs::path(p.greedy) / "manifest.txt");
  CHECK(sc_man.at("init_hash") == xe_man.at("final_hash"));
  CHECK(sc_man.at("dataset_hash") == xe_man.at("dataset_hash"));
  CHECK(sc_man.at("greedy_decodes") == "96");
  CHECK(kv(fs::path(p.loo) / "manifest.txt").at("greedy_decodes") == "0");
}

TEST_CASE("config echoes of two strategies differ in exactly one key") {
  const Pipeline& p = pipeline();
  const auto a = kv(fs::path(p.greedy) / "config.txt");
  const auto b = kv(fs::path(p.loo) / "config.txt");
  REQUIRE(a.size() == b.size());
  std::vector<std::string> diff;
  for (const auto& [k, v] : a)
    if (b.at(k) != v) diff.push_back(k);
  CHECK(diff == std::vector<std::string>{"strategy"});
  CHECK(parse_double(a.at("lr")) == 1e-4);
  CHECK(fs::path(a.at("data")).is_absolute());
}

TEST_CASE("train rejects bad arguments") {
  const Pipeline& p = pipeline();
  TempDir d("bad");
  const Result k1 = run({"train", "--data", p.data, "--out", d.str("r"), "--stage", "sc", "--init",
                         p.xe + "/model.ckpt", "--strategy", "loo", "--k", "1"});
  CHECK(k1.code == kExitUsage);
  CHECK(k1.err.find("loo") != std::string::npos);
  CHECK(run({"train", "--data", p.data, "--out", d.str("r"), "--stage", "sc"}).code == kExitUsage);
  CHECK(run({"train", "--data", p.data, "--out", d.str("r"), "--strategy", "mean"}).code == kExitUsage);
  CHECK(run({"train", "--data", p.data, "--out", p.xe, "--epochs", "0"}).code == kExitUsage);
  CHECK(run({"train", "--data", d.str("missing.txt"), "--out", d.str("r2")}).code == kExitFailure);

  // An untrained checkpoint cannot seed self-critical training.
  Checkpoint fresh = read_checkpoint(fs::path(p.xe) / "model.ckpt");
  fresh.stage = "init";
  write_checkpoint(fresh, d.path() / "fresh.ckpt");
  const Result init = run({"train", "--data", p.data, "--out", d.str("r3"), "--stage", "sc", "--init",
                           d.str("fresh.ckpt")});
  CHECK(init.code == kExitUsage);
  CHECK(init.err.find("stage=init") != std::string::npos);
}

TEST_CASE("train reads a config file and command-line flags win") {
  const Pipeline& p = pipeline();
  TempDir d("cfg");
  std::ofstream(d.str("run.cfg")) << "# run settings\nepochs = 1\nbatch-size = 32\nbeam = 1\nseed = 9\n";
  const Result r = run({"train", "--config", d.str("run.cfg"), "--data", p.data, "--out", d.str("r"), "--seed", "3"});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto cfg = kv(d.path() / "r" / "config.txt");
  CHECK(cfg.at("epochs") == "1");
  CHECK(cfg.at("batch-size") == "32");
  CHECK(cfg.at("seed") == "3");
  CHECK(fs::exists(d.path() / "r" / "config.input.txt"));
  std::ofstream(d.str("bad.cfg")) << "epochz = 1\n";
  CHECK(run({"train", "--config", d.str("bad.cfg"), "--data", p.data, "--out", d.str("r2")}).code == kExitUsage);
}

TEST_CASE("eval reports one row for the split") {
  const Pipeline& p = pipeline();
  const Result r = run({"eval", "--data", p.data, "--model", p.loo + "/model.ckpt", "--split", "test", "--beam", "2"});
  REQUIRE(r.code == 0);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 2);
  CHECK(l[0] == "split,cider_d,bleu4");
  CHECK(l[1].rfind("test,", 0) == 0);
  // Matches the final test row written during training.
  const std::string last = lines(slurp(fs::path(p.loo) / "eval.csv")).back();
  CHECK(l[1] == last.substr(last.find(',') + 1));
  CHECK(run({"eval", "--data", p.data, "--model", p.loo + "/nope.ckpt"}).code == kExitFailure);
}

TEST_CASE("compare tabulates runs with a mean row per strategy") {
  const Pipeline& p = pipeline();
  const Result one = run({"compare", "--runs", p.loo});
  REQUIRE(one.code == 0);
  const auto l = lines(one.out);
  REQUIRE(l.size() == 3);
  CHECK(l[0] == "strategy,seed,cider_d,bleu4");
  CHECK(l[1].rfind("loo,1,", 0) == 0);
  CHECK(l[2].rfind("loo,mean,", 0) == 0);
  const auto a = split_char(l[1], ','), b = split_char(l[2], ',');
  CHECK(std::abs(parse_double(a[2]) - parse_double(b[2])) <= 1e-12);
  CHECK(std::abs(parse_double(a[3]) - parse_double(b[3])) <= 1e-12);

  const Result all = run({"compare", "--runs", p.xe + "," + p.greedy + "," + p.loo});
  REQUIRE(all.code == 0);
  const auto rows = lines(all.out);
  CHECK(rows.size() == 1 + 3 + 3);
  CHECK(rows[1].rfind("xe,", 0) == 0);
}

TEST_CASE("compare refuses runs on different datasets") {
  const Pipeline& p = pipeline();
  TempDir d("cmp");
  REQUIRE(run({"gen-data", "--out", d.str("other.txt"), "--contexts", "40", "--seed", "77"}).code == 0);
  REQUIRE(run({"train", "--data", d.str("other.txt"), "--out", d.str("r"), "--epochs", "1", "--beam", "1"}).code == 0);
  const Result r = run({"compare", "--runs", p.xe + "," + d.str("r")});
  CHECK(r.code == kExitFailure);
  CHECK(r.err.find("different datasets") != std::string::npos);
  CHECK(run({"compare"}).code == kExitUsage);
}

TEST_CASE("variance writes CSV and chart matching an in-process sweep") {
  const Pipeline& p = pipeline();
  TempDir d("var");
  const Result r = run({"variance", "--data", p.data, "--checkpoints", p.loo, "--strategies", "greedy,loo",
                        "--k", "3", "--batches", "4", "--batch-size", "4", "--out", d.str("v")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const std::string csv = slurp(d.path() / "v" / "variance.csv");
  CHECK(csv == r.out);
  const auto l = lines(csv);
  REQUIRE(l.size() == 1 + 2 * 2);
  CHECK(l[0] == "epoch,strategy,V");
  CHECK(l[1].rfind("1,greedy,", 0) == 0);
  CHECK(l[4].rfind("2,loo,", 0) == 0);
  const std::string svg = slurp(d.path() / "v" / "variance.svg");
  CHECK(svg.find(">greedy<") != std::string::npos);
  CHECK(svg.find(">loo<") != std::string::npos);

  const Dataset ds = read_dataset(fs::path(p.data));
  std::vector<EpochCheckpoint> cks;
  for (std::size_t e : {1u, 2u})
    cks.push_back({e, read_checkpoint(fs::path(p.loo) / "checkpoints" / ("epoch_00" + std::to_string(e) + ".ckpt")).model});
  const std::vector<BaselineStrategy> strategies{{BaselineKind::kGreedy, 3}, {BaselineKind::kLeaveOneOut, 3}};
  VarianceOptions o;
  o.n_batches = 4;
  o.batch_size = 4;
  std::ostringstream expect;
  write_variance_csv(variance_sweep(cks, strategies, ds, make_reward(RewardKind::kCiderD, ds), o), expect);
  CHECK(csv == expect.str());
}

TEST_CASE("variance with mixed K labels rows by K") {
  const Pipeline& p = pipeline();
  TempDir d("vark");
  const Result r = run({"variance", "--data", p.data, "--checkpoints", p.loo + "/checkpoints", "--strategies",
                        "loo:2,loo:4", "--batches", "3", "--batch-size", "4", "--out", d.str("v")});
  REQUIRE_MESSAGE(r.code == 0, r.err);
  const auto l = lines(r.out);
  REQUIRE(l.size() == 5);
  CHECK(l[1].rfind("1,loo_k2,", 0) == 0);
  CHECK(l[2].rfind("1,loo_k4,", 0) == 0);
}

TEST_CASE("variance errors") {
  const Pipeline& p = pipeline();
  TempDir d("varerr");
  fs::create_directories(d.path() / "empty");
  const Result none = run({"variance", "--data", p.data, "--checkpoints", d.str("empty"), "--out", d.str("v")});
  CHECK(none.code == kExitFailure);
  CHECK(none.err.find("no checkpoints") != std::string::npos);
  CHECK(run({"variance", "--data", p.data, "--checkpoints", p.loo, "--batches", "1", "--out", d.str("v")}).code ==
        kExitUsage);
  CHECK(run({"variance", "--data", p.data, "--checkpoints", p.loo, "--strategies", "loo:1", "--out", d.str("v")})
            .code == kExitUsage);
}
