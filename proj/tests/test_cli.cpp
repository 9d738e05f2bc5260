#include "scnt/cli.hpp"

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

namespace {

namespace fs = std::filesystem;

using scnt::cli::dispatch;

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  EXPECT_TRUE(static_cast<bool>(in)) << path;
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

void spit(const std::string& path, const std::string& body) {
  std::ofstream out(path, std::ios::binary);
  out << body;
}

// tiny but complete settings: 256 train / 32 val / 64 test, one epoch
const char* kSmokeConfig = R"({
  "dataset": {"n": 352},
  "trainer": {"epochs": 1, "supernet-seed": 3},
  "search": {"population": 4, "generations": 1, "seed": 11, "select-k": 2},
  "rank": {"table": "/tmp/scnt_cli_table.csv"},
  "fold": {"probes": 4},
  "diagnose": {"paths": 4, "probe-batch": 4}
})";

void write_small_table(const std::string& path) {
  std::ostringstream out;
  out << "genes,acc,madds,params,seed\n";
  const char* rows[] = {"0-0-0-0", "0-1-2-0", "1-1-1-1", "2-2-2-2", "0-2-2-2",
                        "2-0-2-2", "2-2-0-2", "2-2-2-0", "1-2-2-2", "2-1-2-2"};
  for (int i = 0; i < 10; ++i) {
    out << rows[i] << ",0." << 10 + i * 7 << ",1000,100," << i << "\n";
  }
  spit(path, out.str());
}

struct OutDir {
  fs::path path;
  explicit OutDir(const std::string& name) : path(fs::path("/tmp") / name) {
    fs::remove_all(path);
  }
  std::string str() const { return path.string(); }
};

}  // namespace

TEST(Dispatch, HelpExitsZero) {
  EXPECT_EQ(dispatch({"--help"}), 0);
}

TEST(Dispatch, BadCommandLinesExitTwo) {
  EXPECT_EQ(dispatch({"frobnicate"}), 2);
  EXPECT_EQ(dispatch({}), 2);
  EXPECT_EQ(dispatch({"--bogus-flag", "train"}), 2);
}

TEST(Dispatch, MissingOutputDirIsAConfigError) {
  unsetenv("SCARLET_KIT_OUT");
  EXPECT_EQ(dispatch({"gen-data"}), 3);
}

TEST(Dispatch, EnvVarSuppliesTheOutputDir) {
  OutDir out("scnt_cli_env");
  spit("/tmp/scnt_cli_env.json", R"({"dataset": {"n": 44}})");
  setenv("SCARLET_KIT_OUT", out.str().c_str(), 1);
  EXPECT_EQ(dispatch({"gen-data", "--config", "/tmp/scnt_cli_env.json"}), 0);
  unsetenv("SCARLET_KIT_OUT");
  EXPECT_TRUE(fs::exists(out.path / "data" / "train.scnt"));
  EXPECT_TRUE(fs::exists(out.path / "manifest-gen-data.json"));
}

TEST(Config, UnknownKeysAndTypeMismatchesAreNamed) {
  spit("/tmp/scnt_cli_bad1.json", R"({"trainer": {"epoch": 3}})");
  spit("/tmp/scnt_cli_bad2.json", R"({"trainer": {"epochs": "three"}})");
  spit("/tmp/scnt_cli_bad3.json", "{nope");

  scnt::cli::Flags flags;
  flags.out = "/tmp/scnt_cli_never";
  flags.config = "/tmp/scnt_cli_bad1.json";
  try {
    scnt::cli::resolve_config("train", flags);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("trainer.epoch"), std::string::npos);
  }
  flags.config = "/tmp/scnt_cli_bad2.json";
  try {
    scnt::cli::resolve_config("train", flags);
    FAIL();
  } catch (const std::invalid_argument& e) {
    EXPECT_NE(std::string(e.what()).find("trainer.epochs"), std::string::npos);
    EXPECT_NE(std::string(e.what()).find("number"), std::string::npos);
  }
  flags.config = "/tmp/scnt_cli_bad3.json";
  EXPECT_THROW(scnt::cli::resolve_config("train", flags), std::invalid_argument);
  flags.config = "/tmp/scnt_cli_missing.json";
  EXPECT_THROW(scnt::cli::resolve_config("train", flags), std::invalid_argument);
}

TEST(Config, FlagsOverrideFileValues) {
  spit("/tmp/scnt_cli_seed.json", R"({"trainer": {"seed": 7}})");
  scnt::cli::Flags flags;
  flags.out = "/tmp/scnt_cli_never";
  flags.config = "/tmp/scnt_cli_seed.json";
  flags.seed = 99;
  const scnt::Json cfg = scnt::cli::resolve_config("train", flags);
  EXPECT_EQ(cfg.at("trainer").at("seed").get<std::uint64_t>(), 99u);
  // the same flag aims at a different section per subcommand
  const scnt::Json cfg2 = scnt::cli::resolve_config("search", flags);
  EXPECT_EQ(cfg2.at("trainer").at("seed").get<std::uint64_t>(), 7u);
  EXPECT_EQ(cfg2.at("search").at("seed").get<std::uint64_t>(), 99u);
}

TEST(Config, ManifestsAreValidConfigs) {
  OutDir out("scnt_cli_manifest");
  spit("/tmp/scnt_cli_m.json", R"({"dataset": {"n": 44, "seed": 6}})");
  ASSERT_EQ(dispatch({"gen-data", "--config", "/tmp/scnt_cli_m.json", "--out", out.str()}), 0);

  const scnt::Json manifest =
      scnt::Json::parse(slurp((out.path / "manifest-gen-data.json").string()));
  EXPECT_EQ(manifest.at("command"), "gen-data");
  EXPECT_EQ(manifest.at("config-hash"), scnt::config_hash(manifest.at("config").dump()));

  const scnt::Json reloaded =
      scnt::cli::load_config_file((out.path / "manifest-gen-data.json").string());
  EXPECT_EQ(reloaded.at("dataset").at("n").get<int>(), 44);
  EXPECT_EQ(reloaded.at("dataset").at("seed").get<std::uint64_t>(), 6u);
}

TEST(Pipeline, StagesDemandTheirPredecessors) {
  OutDir out("scnt_cli_order");
  spit("/tmp/scnt_cli_order.json", kSmokeConfig);
  const std::vector<std::string> base = {"--config", "/tmp/scnt_cli_order.json", "--out",
                                         out.str()};
  auto run = [&](const std::string& cmd) {
    std::vector<std::string> args = {cmd};
    args.insert(args.end(), base.begin(), base.end());
    return dispatch(args);
  };
  EXPECT_EQ(run("train"), 3);     // no data yet
  EXPECT_EQ(run("search"), 3);    // no supernet yet
  EXPECT_EQ(run("diagnose"), 3);  // same
  EXPECT_EQ(run("fold"), 3);      // nothing to fold
}

TEST(Pipeline, SmokeEndToEndAndReplay) {
  OutDir out("scnt_cli_smoke");
  OutDir replay("scnt_cli_smoke2");
  write_small_table("/tmp/scnt_cli_table.csv");
  spit("/tmp/scnt_cli_smoke.json", kSmokeConfig);
  const std::vector<std::string> base = {"--config", "/tmp/scnt_cli_smoke.json", "--out",
                                         out.str()};
  for (const char* cmd : {"gen-data", "train", "search", "fold", "rank-eval", "diagnose"}) {
    std::vector<std::string> args = {cmd};
    args.insert(args.end(), base.begin(), base.end());
    ASSERT_EQ(dispatch(args), 0) << cmd;
  }

  for (const char* f :
       {"data/full.scnt", "data/train.scnt", "data/val.scnt", "data/test.scnt", "supernet.scnt",
        "space.json", "supernet.json", "train-log.csv", "train-summary.txt",
        "search/generations.csv", "search/front.csv", "search/audit.csv",
        "search/selected-0.txt", "fold/standalone.scnt", "fold/report.txt", "rank/scatter.csv",
        "rank/summary.txt", "diagnose/similarity-layer0.csv", "diagnose/similarity-layer3.csv",
        "diagnose/oneshot.csv", "diagnose/oneshot-hist.csv", "manifest-gen-data.json",
        "manifest-train.json", "manifest-search.json", "manifest-fold.json",
        "manifest-rank-eval.json", "manifest-diagnose.json"}) {
    EXPECT_TRUE(fs::exists(out.path / f)) << f;
  }

  // the provided 10-entry table drives rank-eval rather than a fresh oracle run
  const std::string scatter = slurp((out.path / "rank" / "scatter.csv").string());
  EXPECT_EQ(std::count(scatter.begin(), scatter.end(), '\n'), 11);
  EXPECT_NE(slurp((out.path / "rank" / "summary.txt").string()).find("entries: 10"),
            std::string::npos);

  // the fold must have reproduced the supernet's function exactly
  EXPECT_NE(slurp((out.path / "fold" / "report.txt").string()).find("equivalent: yes"),
            std::string::npos);

  // a manifest is a complete recipe: replaying every stage gives the same bytes
  for (const char* cmd : {"gen-data", "train", "search", "fold", "rank-eval", "diagnose"}) {
    const std::string manifest = (out.path / (std::string("manifest-") + cmd + ".json")).string();
    ASSERT_EQ(dispatch({cmd, "--config", manifest, "--out", replay.str()}), 0) << cmd;
  }
  for (const char* f : {"train-log.csv", "search/front.csv", "search/audit.csv",
                        "rank/scatter.csv", "diagnose/oneshot.csv", "fold/report.txt"}) {
    EXPECT_EQ(slurp((out.path / f).string()), slurp((replay.path / f).string())) << f;
  }
}

TEST(Pipeline, FoldAcceptsAnExplicitArch) {
  // reuses the artifacts of the smoke test above via a fresh run directory
  OutDir out("scnt_cli_foldarch");
  write_small_table("/tmp/scnt_cli_table.csv");
  spit("/tmp/scnt_cli_fold.json",
       R"({"dataset": {"n": 352}, "trainer": {"epochs": 1}, "fold": {"arch": "0,1,2,0", "probes": 3}})");
  const std::vector<std::string> base = {"--config", "/tmp/scnt_cli_fold.json", "--out",
                                         out.str()};
  for (const char* cmd : {"gen-data", "train", "fold"}) {
    std::vector<std::string> args = {cmd};
    args.insert(args.end(), base.begin(), base.end());
    ASSERT_EQ(dispatch(args), 0) << cmd;
  }
  EXPECT_NE(slurp((out.path / "fold" / "report.txt").string()).find("arch: 0,1,2,0"),
            std::string::npos);
  EXPECT_EQ(scnt::load_selected_arch((out.path / "fold" / "report.txt").string()),
            (scnt::Architecture{{0, 1, 2, 0}}));
}
