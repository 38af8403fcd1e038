// Copyright 2026 The LGS Authors
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <gtest/gtest.h>

#include <cstdlib>
#include <filesystem>

#include "cli.hpp"
#include "lgs/io.hpp"

namespace lgs {
namespace {

namespace fs = std::filesystem;

class Cli : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lgs_cli_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
    fs::create_directories(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }

  int run(std::vector<std::string> args) {
    args.insert(args.begin(), "lgs");
    return cli::run(args);
  }
  std::string out(const std::string& rel) const { return (dir_ / rel).string(); }
  // stdout of one invocation
  std::pair<int, std::string> captured(std::vector<std::string> args) {
    ::testing::internal::CaptureStdout();
    const int code = run(std::move(args));
    return {code, ::testing::internal::GetCapturedStdout()};
  }

  // a tiny trained model
  std::string small_checkpoint(const std::string& name = "tr") {
    EXPECT_EQ(run({"train", "--n", "6", "--epochs", "2", "--batch-size", "4", "--samples", "2",
                   "--eval-instances", "2", "--d-z", "4", "--out-dir", out(name)}),
              0);
    return out(name + "/checkpoint.json");
  }

  fs::path dir_;
};

TEST_F(Cli, GapFormula) {
  auto [code, text] = captured({"eval", "--cost", "7.785", "--optimal", "7.752"});
  EXPECT_EQ(code, 0);
  EXPECT_NE(text.find("0.4257%"), std::string::npos) << text;
  std::tie(code, text) = captured({"eval", "--cost", "3.5", "--optimal", "3.5"});
  EXPECT_NE(text.find("gap 0.0000%"), std::string::npos) << text;
  EXPECT_EQ(run({"eval", "--cost", "1.0", "--optimal", "0"}), 2);
}

TEST_F(Cli, UsageErrorsExitTwo) {
  EXPECT_EQ(run({}), 2);
  EXPECT_EQ(run({"frobnicate"}), 2);
  EXPECT_EQ(run({"verify", "--suite", "nonsense"}), 2);
  EXPECT_EQ(run({"gen", "--count", "-1", "--out-dir", out("x")}), 2);
  EXPECT_EQ(run({"gen", "--kind", "knapsack", "--out-dir", out("x")}), 2);
  EXPECT_EQ(run({"gen", "--bogus-flag"}), 2);
  EXPECT_EQ(run({"solve", "--method", "annealing", "--dataset", "x.jsonl", "--checkpoint", "y"}), 2);
}

TEST_F(Cli, MissingFilesExitOne) {
  EXPECT_EQ(run({"solve", "--checkpoint", out("none.json"), "--dataset", out("none.jsonl"),
                 "--out-dir", out("s")}),
            1);
}

TEST_F(Cli, GenIsSeededAndManifested) {
  EXPECT_EQ(run({"gen", "--n", "10", "--count", "50", "--seed", "42", "--out-dir", out("a")}), 0);
  EXPECT_EQ(run({"gen", "--n", "10", "--count", "50", "--seed", "42", "--out-dir", out("b")}), 0);
  const auto a = io::read_file(out("a/dataset.jsonl"));
  EXPECT_EQ(a, io::read_file(out("b/dataset.jsonl")));
  EXPECT_EQ(io::read_dataset(out("a/dataset.jsonl")).size(), 50u);
  const auto m = io::Json::parse(io::read_file(out("a/dataset.jsonl.manifest.json")));
  EXPECT_EQ(m["command"], "gen");
  EXPECT_EQ(m["outputs"]["dataset"]["sha1"], io::git_blob_sha1(a));
  EXPECT_EQ(m["config"]["seed"], 42);
}

TEST_F(Cli, GenEdgeCases) {
  EXPECT_EQ(run({"gen", "--count", "0", "--out-dir", out("z")}), 0);
  EXPECT_TRUE(io::read_dataset(out("z/dataset.jsonl")).empty());
  EXPECT_TRUE(fs::exists(out("z/dataset.jsonl.manifest.json")));
  EXPECT_EQ(run({"gen", "--kind", "cvrp", "--n", "100", "--count", "1", "--out-dir", out("c")}), 0);
  const auto ds = io::read_dataset(out("c/dataset.jsonl"));
  ASSERT_EQ(ds.size(), 1u);
  EXPECT_EQ(ds[0].capacity, 50.0);
}

TEST_F(Cli, OutputDirFromEnvironment) {
  ::setenv("LGS_OUTPUT_DIR", out("env").c_str(), 1);
  EXPECT_EQ(run({"gen", "--count", "2"}), 0);
  ::unsetenv("LGS_OUTPUT_DIR");
  EXPECT_TRUE(fs::exists(out("env/dataset.jsonl")));
}

TEST_F(Cli, ZeroLearningRateKeepsInitialisation) {
  EXPECT_EQ(run({"train", "--n", "5", "--epochs", "2", "--batch-size", "3", "--samples", "2",
                 "--eval-instances", "2", "--lr", "0", "--init-seed", "9", "--out-dir", out("t")}),
            0);
  const auto ck = io::load_checkpoint(out("t/checkpoint.json"));
  EXPECT_EQ(ck.model, PolicyModel::initialize(ModelConfig{}, 9));
  EXPECT_EQ(ck.epoch, 2);
  const auto trace = io::read_csv(out("t/train_trace.csv"), "train_trace");
  EXPECT_EQ(trace.rows.size(), 2u);
}

TEST_F(Cli, ResumeContinuesEpochs) {
  const auto ck = small_checkpoint();
  EXPECT_EQ(run({"train", "--resume", ck, "--epochs", "3", "--out-dir", out("r")}), 0);
  const auto trace = io::read_csv(out("r/train_trace.csv"), "train_trace");
  ASSERT_EQ(trace.rows.size(), 1u);
  EXPECT_EQ(trace.rows[0][trace.column("epoch")], "3");
  EXPECT_EQ(io::load_checkpoint(out("r/checkpoint.json")).epoch, 3);
}

TEST_F(Cli, SolveIsReproducibleAndReplayable) {
  const auto ck = small_checkpoint();
  ASSERT_EQ(run({"gen", "--n", "6", "--count", "3", "--seed", "5", "--out-dir", out("d")}), 0);
  const std::vector<std::string> base = {"solve", "--checkpoint", ck, "--dataset",
                                         out("d/dataset.jsonl"), "--particles", "4",
                                         "--iterations", "5", "--seed", "3", "--trace",
                                         "--latents"};
  auto a = base, b = base;
  a.insert(a.end(), {"--out-dir", out("s1")});
  b.insert(b.end(), {"--out-dir", out("s2")});
  ASSERT_EQ(run(a), 0);
  ASSERT_EQ(run(b), 0);
  EXPECT_EQ(io::read_file(out("s1/results.csv")), io::read_file(out("s2/results.csv")));
  EXPECT_EQ(io::read_file(out("s1/traces/instance_2.csv")),
            io::read_file(out("s2/traces/instance_2.csv")));
  ASSERT_EQ(run({"solve", "--config", out("s1/solve_manifest.json"), "--out-dir", out("s3")}), 0);
  EXPECT_EQ(io::read_file(out("s1/results.csv")), io::read_file(out("s3/results.csv")));
  const auto res = io::read_csv(out("s1/results.csv"), "results");
  EXPECT_EQ(res.rows.size(), 3u);
  EXPECT_EQ(res.rows[0][res.column("wall_ms")], "0");

  auto [code, text] = captured({"eval", "--results", out("s1/results.csv"), "--reference",
                                "oracle", "--dataset", out("d/dataset.jsonl"), "--out",
                                out("e/eval.csv")});
  EXPECT_EQ(code, 0);
  EXPECT_NE(text.find("lgs"), std::string::npos);
  const auto ev = io::read_csv(out("e/eval.csv"), "eval");
  for (const auto& row : ev.rows) EXPECT_GE(std::stod(row[ev.column("gap_pct")]), -1e-9);
}

TEST_F(Cli, SolveRejectsMismatchedCheckpoint) {
  const auto ck = small_checkpoint();
  ASSERT_EQ(run({"gen", "--kind", "cvrp", "--n", "5", "--count", "1", "--out-dir", out("d")}), 0);
  EXPECT_EQ(run({"solve", "--checkpoint", ck, "--dataset", out("d/dataset.jsonl"), "--out-dir",
                 out("s")}),
            2);
  io::write_file(out("cfg.json"), R"({"inference": {"latent_dim": 7}})");
  ASSERT_EQ(run({"gen", "--n", "5", "--count", "1", "--out-dir", out("t")}), 0);
  EXPECT_EQ(run({"solve", "--config", out("cfg.json"), "--checkpoint", ck, "--dataset",
                 out("t/dataset.jsonl"), "--out-dir", out("s")}),
            2);
}

TEST_F(Cli, VerifySuite) {
  auto [code, text] = captured({"verify", "--suite", "balance", "--report", out("v.json")});
  EXPECT_EQ(code, 0);
  const auto report = io::Json::parse(io::read_file(out("v.json")));
  EXPECT_TRUE(report["passed"].get<bool>());
}

TEST_F(Cli, TraceLatent) {
  EXPECT_EQ(run({"trace-latent", "--n", "5", "--particles", "4", "--iterations", "6", "--out-dir",
                 out("tl")}),
            0);
  const auto lat = io::read_csv(out("tl/latents.csv"), "latent_trace");
  EXPECT_EQ(lat.rows.size(), 4u * 7u);
}

}  // namespace
}  // namespace lgs
