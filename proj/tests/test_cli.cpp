// Copyright 2026 The otrlab Authors
// SPDX-License-Identifier: Apache-2.0
#include <gtest/gtest.h>

#include <fstream>
#include <iterator>
#include <nlohmann/json.hpp>
#include <sstream>

#include "otrlab/cli.hpp"
#include "otrlab/config.hpp"

namespace otrlab {
namespace {

namespace fs = std::filesystem;

constexpr const char* kTinyConfig = R"({
  "task": {"kind": "add_mod", "train_size": 24, "eval_size": 4, "ood_size": 4, "split_seed": 2},
  "model": {"context_len": 16, "d_model": 8, "n_heads": 2, "n_layers": 1, "d_ff": 16},
  "loss": {"k_samples": 8},
  "schedule": {"peak_lr": 0.003, "min_lr": 0.0001},
  "trainer": {"batch_size": 8, "epochs": 2, "seed": 4, "gt_probe_k": 8}
})";

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() / ("otrlab_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  fs::path write(const std::string& name, const std::string& text) {
    const fs::path p = dir_ / name;
    std::ofstream(p, std::ios::binary) << text;
    return p;
  }
  static std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    return {std::istreambuf_iterator<char>(in), {}};
  }
  int run(const std::vector<std::string>& args) {
    out_.str("");
    err_.str("");
    return cli_main(args, out_, err_);
  }

  fs::path dir_;
  std::ostringstream out_, err_;
};

TEST_F(Cli, TrainWritesOutputs) {
  const auto cfg = write("c.json", kTinyConfig);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "run").string()}), kExitOk) << err_.str();
  const std::string csv = slurp(dir_ / "run" / "metrics.csv");
  EXPECT_EQ(csv.substr(0, csv.find('\n')), kMetricsHeader);
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 7);
  EXPECT_TRUE(fs::exists(dir_ / "run" / "resolved_config.json"));
  EXPECT_TRUE(fs::exists(dir_ / "run" / "final" / "manifest.txt"));
}

TEST_F(Cli, MissingConfigExitsTwoNamingThePath) {
  const std::string path = (dir_ / "nope.json").string();
  EXPECT_EQ(run({"train", "--config", path, "--out", (dir_ / "o").string()}), kExitConfig);
  EXPECT_NE(err_.str().find(path), std::string::npos);
  EXPECT_FALSE(fs::exists(dir_ / "o"));
}

TEST_F(Cli, InvalidConfigExitsTwoWithFieldPath) {
  const auto bad = write("bad.json", R"({"trainer": {"batch_size": 8, "epoch": 3}})");
  EXPECT_EQ(run({"train", "--config", bad.string(), "--out", (dir_ / "o").string()}), kExitConfig);
  EXPECT_NE(err_.str().find("trainer.epoch"), std::string::npos) << err_.str();
  const auto bad2 = write("bad2.json", R"({"loss": {"kappa": -1}})");
  EXPECT_EQ(run({"train", "--config", bad2.string(), "--out", (dir_ / "o").string()}), kExitConfig);
  EXPECT_NE(err_.str().find("kappa"), std::string::npos) << err_.str();
  const auto cfg = write("c.json", kTinyConfig);
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "o").string(), "--objective", "ppo"}), kExitConfig);
  EXPECT_EQ(run({"train", "--out", "x"}), kExitConfig);
  EXPECT_EQ(run({}), kExitConfig);
}

TEST_F(Cli, ObjectiveOverrideShowsDefaultLossSpec) {
  std::string text = kTinyConfig;
  text.erase(text.find("  \"loss\""), std::string(R"(  "loss": {"k_samples": 8},)").size() + 1);
  const auto cfg = write("c.json", text);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--objective", "otr", "--out", (dir_ / "o").string(),
                 "--stop-after", "1"}),
            kExitOk)
      << err_.str();
  const auto j = nlohmann::json::parse(slurp(dir_ / "o" / "resolved_config.json"));
  EXPECT_EQ(j["loss"]["objective"], "otr");
  EXPECT_EQ(j["loss"]["kappa"], 1.3);
  EXPECT_EQ(j["loss"]["k_samples"], 256);
  EXPECT_EQ(j["loss"]["beta"], -0.1);
  EXPECT_NE(out_.str().find("stopped at step 1"), std::string::npos);
}

TEST_F(Cli, SameConfigTwiceIsByteIdenticalAndResumeMatches) {
  const auto cfg = write("c.json", kTinyConfig);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "a").string()}), kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "b").string()}), kExitOk);
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "b" / "metrics.csv"));
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "c").string(), "--stop-after", "2"}), kExitOk);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "c").string(), "--resume",
                 (dir_ / "c" / "checkpoint-2").string()}),
            kExitOk)
      << err_.str();
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "c" / "metrics.csv"));
}

TEST_F(Cli, ResolvedConfigReproducesTheRun) {
  const auto cfg = write("c.json", kTinyConfig);
  ASSERT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "a").string(), "--seed", "9"}), kExitOk);
  const auto resolved = dir_ / "a" / "resolved_config.json";
  ASSERT_EQ(run({"train", "--config", resolved.string(), "--out", (dir_ / "b").string()}), kExitOk);
  EXPECT_EQ(slurp(dir_ / "a" / "metrics.csv"), slurp(dir_ / "b" / "metrics.csv"));
  EXPECT_EQ(slurp(resolved), slurp(dir_ / "b" / "resolved_config.json"));
}

TEST_F(Cli, VerifySuites) {
  EXPECT_EQ(run({"verify", "--suite", "equivalence"}), kExitOk) << out_.str();
  EXPECT_NE(out_.str().find("PASS"), std::string::npos);
  EXPECT_EQ(out_.str().find("FAIL"), std::string::npos);
  EXPECT_EQ(run({"verify", "--suite", "bogus"}), kExitConfig);
}

TEST_F(Cli, CompareGrid) {
  const auto cfg = write("c.json", kTinyConfig);
  ASSERT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "g").string(), "--jobs", "3"}), kExitOk)
      << err_.str();
  const std::string s = slurp(dir_ / "g" / "summary.csv");
  std::istringstream lines(s);
  std::vector<std::string> rows;
  for (std::string l; std::getline(lines, l);) rows.push_back(l);
  ASSERT_EQ(rows.size(), 6u);
  EXPECT_EQ(rows[0], kSummaryHeader);
  EXPECT_EQ(rows[1].substr(0, 5), "sft,,");
  EXPECT_EQ(rows[2].substr(0, 7), "otr,-1,");
  EXPECT_EQ(rows[3].substr(0, 9), "otr,-0.1,");
  EXPECT_EQ(rows[4].substr(0, 6), "otr,0,");
  EXPECT_EQ(rows[5].substr(0, 9), "otr,0.01,");
  for (const char* cell : {"sft", "otr_beta-1", "otr_beta-0.1", "otr_beta0", "otr_beta0.01"}) {
    EXPECT_TRUE(fs::exists(dir_ / "g" / cell / "metrics.csv")) << cell;
  }
  ASSERT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "h").string(), "--jobs", "1"}), kExitOk);
  EXPECT_EQ(slurp(dir_ / "h" / "summary.csv"), s);
  EXPECT_EQ(slurp(dir_ / "h" / "otr_beta-0.1" / "metrics.csv"), slurp(dir_ / "g" / "otr_beta-0.1" / "metrics.csv"));
}

TEST_F(Cli, CompareEmptyGridExitsTwo) {
  const auto cfg = write("c.json", kTinyConfig);
  EXPECT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "g").string(), "--objectives", "otr", "--betas", ""}),
            kExitConfig)
      << err_.str();
  EXPECT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "g").string(), "--objectives", ""}), kExitConfig);
  EXPECT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "g").string(), "--betas", "x"}), kExitConfig);
  EXPECT_FALSE(fs::exists(dir_ / "g" / "summary.csv"));
}

TEST_F(Cli, PositiveBetaWarns) {
  const auto cfg = write("c.json", kTinyConfig);
  ASSERT_EQ(run({"compare", "--config", cfg.string(), "--out", (dir_ / "g").string(), "--objectives", "otr", "--betas",
                 "0.1"}),
            kExitOk);
  EXPECT_NE(err_.str().find("warning"), std::string::npos);
}

TEST_F(Cli, NonFiniteAbortExitsThree) {
  const auto cfg = write("c.json", R"({
    "task": {"kind": "add_mod", "train_size": 24, "eval_size": 4, "ood_size": 4},
    "model": {"context_len": 16, "d_model": 8, "n_heads": 2, "n_layers": 1, "d_ff": 16},
    "schedule": {"peak_lr": 1e300, "min_lr": 1e300, "warmup_ratio": 0},
    "adamw": {"weight_decay": 0},
    "trainer": {"batch_size": 8, "epochs": 3}
  })");
  EXPECT_EQ(run({"train", "--config", cfg.string(), "--out", (dir_ / "o").string(), "--objective", "sft"}), kExitNumeric)
      << err_.str();
  EXPECT_NE(err_.str().find("step"), std::string::npos);
}

TEST(Config, ParsesAndRejects) {
  const RunConfig rc = parse_run_config(kTinyConfig);
  EXPECT_EQ(rc.train.model.vocab_size, 21u);
  EXPECT_EQ(rc.train.batch_size, 8u);
  EXPECT_FALSE(rc.train.clip_norm.has_value());
  EXPECT_EQ(rc.task->train_size, 24u);
  EXPECT_THROW(parse_run_config(R"({"task": {}, "corpus": {"train": "x"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"kind": "rnn"}})"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"trainer": {"clip_norm": "big"}})"), ConfigError);
  EXPECT_THROW(parse_run_config("{not json"), ConfigError);
  EXPECT_THROW(parse_run_config(R"({"model": {"vocab_size": 5}})"), ConfigError);
  try {
    parse_run_config(R"({"loss": {"kapa": 1}})");
    FAIL();
  } catch (const ConfigError& e) {
    EXPECT_EQ(std::string(e.what()).rfind("config.loss.kapa", 0), 0u) << e.what();
  }
  EXPECT_EQ(parse_run_config(R"({"trainer": {"clip_norm": 1.5}})").train.clip_norm, 1.5);
}

TEST(Config, ResolvedJsonRoundTrips) {
  const RunConfig rc = parse_run_config(kTinyConfig);
  const std::string a = resolved_config_json(rc);
  EXPECT_EQ(resolved_config_json(parse_run_config(a)), a);
}

}  // namespace
}  // namespace otrlab
