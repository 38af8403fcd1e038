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

#include <cmath>
#include <cstring>
#include <filesystem>
#include <limits>

#include "lgs/errors.hpp"
#include "lgs/io.hpp"
#include "support.hpp"

namespace lgs::io {
namespace {

class TempDir : public ::testing::Test {
 protected:
  void SetUp() override {
    dir_ = fs::temp_directory_path() /
           ("lgs_io_" + std::string(::testing::UnitTest::GetInstance()->current_test_info()->name()));
    fs::remove_all(dir_);
  }
  void TearDown() override { fs::remove_all(dir_); }
  fs::path dir_;
};

TEST(Io, ShortestRoundTripDoubles) {
  for (double v : {0.1, 1.0 / 3.0, 2.718281828459045, -1e-300, 1e300, 0.0, 7.785}) {
    EXPECT_EQ(parse_double(format_double(v)), v);
  }
  EXPECT_EQ(format_double(0.5), "0.5");
  EXPECT_THROW(parse_double("1.5x"), IoError);
  EXPECT_THROW(parse_double(""), IoError);
}

TEST(Io, Base64RoundTripIsBitExact) {
  const std::vector<double> v = {0.0, -0.0, 1.0 / 3.0, -2.5e-310, 1e308,
                                 std::numeric_limits<double>::denorm_min()};
  const auto back = base64_decode(base64_encode(v));
  ASSERT_EQ(back.size(), v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    EXPECT_EQ(std::memcmp(&back[i], &v[i], sizeof(double)), 0);
  }
  EXPECT_TRUE(base64_decode(base64_encode(std::vector<double>{})).empty());
  EXPECT_THROW(base64_decode("abc"), IoError);
}

TEST(Io, GitBlobHashes) {
  EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
  EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}

TEST_F(TempDir, DatasetRoundTrip) {
  std::vector<ProblemInstance> xs = {generate_instance(ProblemKind::TSP, 7, 1),
                                     generate_instance(ProblemKind::CVRP, 5, 2)};
  write_dataset(dir_ / "d.jsonl", xs);
  EXPECT_EQ(read_dataset(dir_ / "d.jsonl"), xs);
  write_dataset(dir_ / "empty.jsonl", {});
  EXPECT_TRUE(read_dataset(dir_ / "empty.jsonl").empty());
  EXPECT_THROW(read_dataset(dir_ / "missing.jsonl"), IoError);
  write_file(dir_ / "bad.jsonl", "{\"kind\": \"TSP\"}\n");
  EXPECT_ANY_THROW(read_dataset(dir_ / "bad.jsonl"));
}

TEST_F(TempDir, CheckpointRoundTripIsBitExact) {
  TrainConfig tc;
  tc.problem_size = 5;
  tc.batch_size = 2;
  tc.latent_samples = 2;
  tc.epochs = 2;
  tc.eval_instances = 2;
  tc.record_timing = false;
  TrainState st = initial_state(tc, test::tiny_config(ProblemKind::TSP), 3);
  train(tc, st);
  save_checkpoint(dir_ / "ck.json", st, tc);
  const auto ck = load_checkpoint(dir_ / "ck.json");
  EXPECT_EQ(ck.model, st.model);
  EXPECT_EQ(ck.epoch, 2);
  EXPECT_EQ(ck.tau0, st.tau0);
  EXPECT_EQ(ck.optimizer.steps(), st.optimizer.steps());
  EXPECT_EQ(ck.optimizer.first_moment(), st.optimizer.first_moment());
  EXPECT_EQ(ck.optimizer.second_moment(), st.optimizer.second_moment());
  ASSERT_TRUE(ck.train_config.has_value());
  EXPECT_EQ(ck.train_config->batch_size, 2);
  // re-serialising gives the same bytes
  TrainState again{ck.model, ck.optimizer, ck.epoch, ck.tau0};
  EXPECT_EQ(checkpoint_text(again, ck.train_config), read_file(dir_ / "ck.json"));
}

TEST_F(TempDir, CheckpointErrors) {
  write_file(dir_ / "v2.json", "{\"format_version\": 2}");
  EXPECT_ANY_THROW(load_checkpoint(dir_ / "v2.json"));
  write_file(dir_ / "junk.json", "not json");
  EXPECT_ANY_THROW(load_checkpoint(dir_ / "junk.json"));
}

TEST_F(TempDir, CsvVersioning) {
  CsvTable t;
  t.schema = "demo";
  t.header = {"a", "b"};
  t.rows = {{"1", "x"}, {"2", "y"}};
  write_csv(dir_ / "t.csv", t);
  EXPECT_EQ(read_file(dir_ / "t.csv"), "# schema=demo version=1.0\na,b\n1,x\n2,y\n");
  const auto back = read_csv(dir_ / "t.csv", "demo");
  EXPECT_EQ(back.rows, t.rows);
  EXPECT_EQ(back.column("b"), 1u);
  EXPECT_THROW(back.column("c"), IoError);
  EXPECT_NO_THROW(read_csv(dir_ / "t.csv", ""));
  EXPECT_THROW(read_csv(dir_ / "t.csv", "other"), IoError);
  write_file(dir_ / "v2.csv", "# schema=demo version=2.0\na,b\n");
  EXPECT_THROW(read_csv(dir_ / "v2.csv", "demo"), IoError);
  write_file(dir_ / "v1_3.csv", "# schema=demo version=1.3\na,b\n1,2\n");
  EXPECT_EQ(read_csv(dir_ / "v1_3.csv", "demo").minor, 3);
  write_file(dir_ / "plain.csv", "a,b\n1,2\n");
  EXPECT_THROW(read_csv(dir_ / "plain.csv", "demo"), IoError);
}

TEST(Io, TraceTables) {
  const std::vector<InferenceTraceRow> rows = {{0, 3.5, 4.0, 0.0, 0}, {1, 3.25, 3.9, 0.5, 1}};
  const auto t = inference_trace_table(rows);
  EXPECT_EQ(t.header,
            (std::vector<std::string>{"m", "best_cost", "mean_cost", "acceptance_rate", "theta_update_flag"}));
  EXPECT_EQ(t.rows[1], (std::vector<std::string>{"1", "3.25", "3.9", "0.5", "1"}));
  const std::vector<LatentRow> lat = {{2, 1, 0.5, -0.25, 3.0, 1}};
  EXPECT_EQ(latent_table(lat).header,
            (std::vector<std::string>{"m", "k", "z1", "z2", "cost", "accepted"}));
}

TEST(Io, ConfigsRoundTripAndValidate) {
  InferenceConfig c;
  c.method = Method::kInteractingMcmc;
  c.sa_schedule = {2, 3};
  c.lambda = 0.75;
  c.seed = 99;
  const auto back = inference_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
  EXPECT_EQ(back.method, Method::kInteractingMcmc);
  EXPECT_THROW(inference_config_from_json(Json{{"proposal_variance", -1.0}}), ConfigError);
  EXPECT_THROW(inference_config_from_json(Json{{"method", "nope"}}), ConfigError);
  TrainConfig tc;
  tc.epochs = 17;
  EXPECT_EQ(train_config_from_json(to_json(tc)).epochs, 17);
  EXPECT_EQ(train_config_from_json(Json{{"batch_size", 5}}, tc).epochs, 17);
  ModelConfig mc = test::tiny_config(ProblemKind::CVRP, 2);
  EXPECT_EQ(model_config_from_json(to_json(mc)), mc);
  EXPECT_THROW(model_config_from_json(Json{{"n_heads", 5}}), ConfigError);
}

}  // namespace
}  // namespace lgs::io
