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

// Writes the regression fixtures used by the oracle tests. Run once after the
// oracle is verified; the tests only read the files.
//
//   lgs_fixtures <output-dir>

#include <cstdio>
#include <filesystem>
#include <string>

#include "lgs/inference.hpp"
#include "lgs/io.hpp"
#include "lgs/oracle.hpp"
#include "lgs/verify.hpp"

namespace {

using lgs::io::Json;

// 13 significant digits; tests compare at 1e-9.
double rounded(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12e", v);
  return std::stod(buf);
}

Json header(std::uint64_t seed) {
  Json j;
  j["seed"] = seed;
  j["oracle_version"] = lgs::oracle::kVersion;
  return j;
}

void write(const std::filesystem::path& dir, const std::string& name, const Json& j) {
  lgs::io::write_file(dir / name, j.dump(1) + "\n");
  std::printf("wrote %s\n", (dir / name).c_str());
}

}  // namespace

int main(int argc, char** argv) {
  if (argc != 2) {
    std::fprintf(stderr, "usage: lgs_fixtures <output-dir>\n");
    return 2;
  }
  const std::filesystem::path dir = argv[1];
  using namespace lgs;

  {
    const auto inst = generate_instance(ProblemKind::TSP, 8, 42);
    const auto s = oracle::brute_force_tsp(inst);
    Json j = header(42);
    j["kind"] = "TSP";
    j["n"] = 8;
    j["cost"] = rounded(s.cost);
    j["tour"] = s.visits;
    write(dir, "tsp_seed42_n8.json", j);
  }
  {
    auto inst = generate_instance(ProblemKind::CVRP, 6, 7);
    inst.capacity = 10.0;
    const auto s = oracle::brute_force_cvrp(inst);
    Json j = header(7);
    j["kind"] = "CVRP";
    j["n"] = 6;
    j["capacity"] = 10.0;
    j["cost"] = rounded(s.cost);
    j["visits"] = s.visits;
    write(dir, "cvrp_seed7_n6_D10.json", j);
  }
  {
    const auto setup = verify::harness_setup(0);
    const oracle::GridHarness h(setup.model, setup.instance, setup.encoder, verify::kGridPoints,
                                verify::kGridLambda);
    Json j = header(0);
    j["points"] = verify::kGridPoints;
    j["lambda"] = verify::kGridLambda;
    j["tours"] = h.target().tours;
    Json probs = Json::array();
    for (double p : h.target().probabilities) probs.push_back(rounded(p));
    j["probabilities"] = probs;
    write(dir, "grid_5x5_n4_lambda1.json", j);
  }
  {
    // fresh desk model, short LGS runs, brute-force references
    const std::uint64_t seed = 8;
    const auto model = PolicyModel::initialize(ModelConfig{}, 0);
    InferenceConfig cfg;
    cfg.particles = 8;
    cfg.iterations = 20;
    Json j = header(seed);
    j["model_seed"] = 0;
    j["particles"] = cfg.particles;
    j["iterations"] = cfg.iterations;
    Json gaps = Json::array();
    for (int i = 0; i < 10; ++i) {
      const auto inst = generate_instance(ProblemKind::TSP, 8, derive_seed(seed, "dataset", i));
      cfg.seed = static_cast<std::uint64_t>(i);
      const double c = run(model, inst, cfg).best.cost;
      gaps.push_back(rounded(gap_percent(c, oracle::brute_force_tsp(inst).cost)));
    }
    j["gaps"] = gaps;
    write(dir, "gaps_n8.json", j);
  }
  return 0;
}
