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

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include <json.hpp>

#include "lgs/errors.hpp"
#include "lgs/inference.hpp"
#include "lgs/io.hpp"
#include "lgs/oracle.hpp"
#include "lgs/verify.hpp"
#include "support.hpp"

namespace lgs {
namespace {

using test::tiny_config;

// Held-Karp over subsets of labels 2..n, tour closed at label 1.
double held_karp(const ProblemInstance& inst) {
  const int n = inst.n;
  const int m = n - 1;
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<std::vector<double>> dp(1u << m, std::vector<double>(m, inf));
  for (int j = 0; j < m; ++j) dp[1u << j][j] = distance(inst.at(1), inst.at(j + 2));
  for (unsigned s = 1; s < (1u << m); ++s) {
    for (int j = 0; j < m; ++j) {
      if (!(s & (1u << j)) || dp[s][j] == inf) continue;
      for (int k = 0; k < m; ++k) {
        if (s & (1u << k)) continue;
        const unsigned t = s | (1u << k);
        dp[t][k] = std::min(dp[t][k], dp[s][j] + distance(inst.at(j + 2), inst.at(k + 2)));
      }
    }
  }
  double best = inf;
  for (int j = 0; j < m; ++j)
    best = std::min(best, dp[(1u << m) - 1][j] + distance(inst.at(j + 2), inst.at(1)));
  return best;
}

// Every customer order, every split into consecutive routes.
double permutation_split(const ProblemInstance& inst) {
  std::vector<int> p(inst.n);
  std::iota(p.begin(), p.end(), 1);
  double best = std::numeric_limits<double>::infinity();
  do {
    for (unsigned cuts = 0; cuts < (1u << (inst.n - 1)); ++cuts) {
      double total = 0.0, load = 0.0;
      int prev = 0;
      bool ok = true;
      for (int i = 0; i < inst.n && ok; ++i) {
        load += inst.demands[p[i]];
        total += distance(inst.at(prev), inst.at(p[i]));
        prev = p[i];
        if (load > inst.capacity) ok = false;
        if (i + 1 == inst.n || (cuts & (1u << i))) {
          total += distance(inst.at(prev), inst.at(0));
          prev = 0;
          load = 0.0;
        }
      }
      if (ok) best = std::min(best, total);
    }
  } while (std::next_permutation(p.begin(), p.end()));
  return best;
}

io::Json fixture(const std::string& name) {
  return io::Json::parse(io::read_file(test::fixture_path(name)));
}

TEST(BruteForce, TspAgreesWithHeldKarp) {
  for (int n = 3; n <= 9; ++n) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const auto inst = generate_instance(ProblemKind::TSP, n, 1000 * n + seed);
      const auto s = oracle::brute_force_tsp(inst);
      EXPECT_NEAR(s.cost, held_karp(inst), 1e-9) << "n=" << n;
      EXPECT_NEAR(s.cost, cost(inst, s.visits), 1e-12);
      EXPECT_EQ(s.visits.front(), 1);
    }
  }
}

TEST(BruteForce, TspSmallCases) {
  ProblemInstance sq;
  sq.n = 4;
  sq.coords = {{0, 0}, {1, 1}, {1, 0}, {0, 1}};
  const auto s = oracle::brute_force_tsp(sq);
  EXPECT_NEAR(s.cost, 4.0, 1e-12);
  EXPECT_EQ(s.visits, (std::vector<int>{1, 3, 2, 4}));
  const auto tri = generate_instance(ProblemKind::TSP, 3, 5);
  const double perimeter = distance(tri.coords[0], tri.coords[1]) +
                           distance(tri.coords[1], tri.coords[2]) +
                           distance(tri.coords[2], tri.coords[0]);
  EXPECT_NEAR(oracle::brute_force_tsp(tri).cost, perimeter, 1e-12);
  EXPECT_THROW(oracle::brute_force_tsp(generate_instance(ProblemKind::TSP, 11, 0)), SizeError);
}

TEST(BruteForce, CvrpAgreesWithPermutationSplit) {
  for (int n = 1; n <= 6; ++n) {
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto inst = generate_instance(ProblemKind::CVRP, n, 2000 * n + seed);
      inst.capacity = seed == 0 ? 10.0 : 16.0;
      const auto s = oracle::brute_force_cvrp(inst);
      EXPECT_NEAR(s.cost, permutation_split(inst), 1e-9) << "n=" << n;
      EXPECT_NO_THROW(validate_solution(inst, s.visits));
      EXPECT_NEAR(s.cost, cost(inst, s.visits), 1e-12);
    }
  }
  EXPECT_THROW(oracle::brute_force_cvrp(generate_instance(ProblemKind::CVRP, 9, 0)), SizeError);
}

TEST(BruteForce, CvrpSmallCases) {
  auto one = generate_instance(ProblemKind::CVRP, 1, 3);
  EXPECT_NEAR(oracle::brute_force_cvrp(one).cost, 2.0 * distance(one.coords[0], one.coords[1]),
              1e-12);
  ProblemInstance two;
  two.kind = ProblemKind::CVRP;
  two.n = 2;
  two.coords = {{0.5, 0.5}, {0.6, 0.5}, {0.7, 0.5}};
  two.demands = {0, 6, 6};
  two.capacity = 10;
  const auto s = oracle::brute_force_cvrp(two);
  EXPECT_EQ(std::count(s.visits.begin(), s.visits.end(), 0), 2);
  EXPECT_NEAR(s.cost, 0.2 + 0.4, 1e-12);
}

TEST(BruteForce, InvariantUnderAugmentation) {
  const auto inst = generate_instance(ProblemKind::TSP, 8, 9);
  const double c = oracle::brute_force_tsp(inst).cost;
  for (const auto& v : augment(inst)) EXPECT_NEAR(oracle::brute_force_tsp(v).cost, c, 1e-9);
  auto vrp = generate_instance(ProblemKind::CVRP, 5, 9);
  const double cv = oracle::brute_force_cvrp(vrp).cost;
  for (const auto& v : augment(vrp)) EXPECT_NEAR(oracle::brute_force_cvrp(v).cost, cv, 1e-9);
}

TEST(Fixtures, TspSeed42) {
  const auto f = fixture("tsp_seed42_n8.json");
  ASSERT_EQ(f["oracle_version"].get<int>(), oracle::kVersion);
  const auto inst = generate_instance(ProblemKind::TSP, 8, f["seed"].get<std::uint64_t>());
  const auto s = oracle::brute_force_tsp(inst);
  EXPECT_NEAR(s.cost, f["cost"].get<double>(), 1e-9);
  EXPECT_EQ(s.visits, f["tour"].get<std::vector<int>>());
  EXPECT_NEAR(held_karp(inst), f["cost"].get<double>(), 1e-9);
}

TEST(Fixtures, CvrpSeed7) {
  const auto f = fixture("cvrp_seed7_n6_D10.json");
  ASSERT_EQ(f["oracle_version"].get<int>(), oracle::kVersion);
  auto inst = generate_instance(ProblemKind::CVRP, 6, f["seed"].get<std::uint64_t>());
  inst.capacity = f["capacity"].get<double>();
  EXPECT_NEAR(oracle::brute_force_cvrp(inst).cost, f["cost"].get<double>(), 1e-9);
  EXPECT_NEAR(permutation_split(inst), f["cost"].get<double>(), 1e-9);
}

TEST(Fixtures, GridTable) {
  const auto f = fixture("grid_5x5_n4_lambda1.json");
  ASSERT_EQ(f["oracle_version"].get<int>(), oracle::kVersion);
  const auto setup = verify::harness_setup(f["seed"].get<std::uint64_t>());
  const oracle::GridHarness h(setup.model, setup.instance, setup.encoder, f["points"].get<int>(),
                              f["lambda"].get<double>());
  const auto expect = f["probabilities"].get<std::vector<double>>();
  ASSERT_EQ(h.states(), expect.size());
  EXPECT_EQ(h.target().tours, f["tours"].get<std::vector<std::vector<int>>>());
  for (std::size_t s = 0; s < expect.size(); ++s)
    EXPECT_NEAR(h.target().probabilities[s], expect[s], 1e-9);
}

TEST(Fixtures, GapsOnSeededSet) {
  const auto f = fixture("gaps_n8.json");
  ASSERT_EQ(f["oracle_version"].get<int>(), oracle::kVersion);
  const auto model = PolicyModel::initialize(ModelConfig{}, f["model_seed"].get<std::uint64_t>());
  InferenceConfig cfg;
  cfg.particles = f["particles"].get<int>();
  cfg.iterations = f["iterations"].get<int>();
  const auto gaps = f["gaps"].get<std::vector<double>>();
  const auto seed = f["seed"].get<std::uint64_t>();
  for (std::size_t i = 0; i < gaps.size(); ++i) {
    const auto inst = generate_instance(ProblemKind::TSP, 8, derive_seed(seed, "dataset", i));
    cfg.seed = i;
    const double c = run(model, inst, cfg).best.cost;
    const double g = gap_percent(c, held_karp(inst));
    EXPECT_NEAR(g, gaps[i], 1e-9) << i;
    EXPECT_GE(g, -1e-9);
  }
}

TEST(Enumerate, ThreeNodesGiveTwoCanonicalTours) {
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP), 1);
  const auto inst = generate_instance(ProblemKind::TSP, 3, 1);
  const auto enc = encode(model, inst);
  const std::vector<double> z(4, 0.1);
  const auto d = oracle::enumerate_policy(model, inst, enc, z);
  EXPECT_EQ(d.tours.size(), 6u);
  const auto c = oracle::canonical_tours(d);
  EXPECT_EQ(c.tours.size(), 2u);
  EXPECT_NEAR(c.total(), 1.0, 1e-12);
}

TEST(Enumerate, NormalisedForRandomModels) {
  for (int trial = 0; trial < 10; ++trial) {
    const auto kind = trial % 2 ? ProblemKind::CVRP : ProblemKind::TSP;
    const int n = kind == ProblemKind::TSP ? 4 + trial % 4 : 2 + trial % 4;
    const auto model = PolicyModel::initialize(tiny_config(kind), 50 + trial);
    const auto inst = generate_instance(kind, n, 60 + trial);
    const auto enc = encode(model, inst);
    Rng rng = make_rng(trial, "z");
    const auto d = oracle::enumerate_policy(model, inst, enc, draw_latent(enc, rng).z);
    EXPECT_NEAR(d.total(), 1.0, 1e-8);
    EXPECT_GT(d.min_admissible_step, 0.0);
    for (const auto& t : d.tours) EXPECT_NO_THROW(validate_solution(inst, t));
  }
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP), 0);
  const auto big = generate_instance(ProblemKind::TSP, 8, 0);
  EXPECT_THROW(oracle::enumerate_policy(model, big, encode(model, big), std::vector<double>(4)),
               SizeError);
}

// A huge clipping constant makes every step distribution nearly one-hot.
TEST(Enumerate, SaturatedPolicyConcentratesOnGreedyTour) {
  auto cfg = tiny_config(ProblemKind::TSP);
  cfg.omega = 2000.0;
  const auto model = PolicyModel::initialize(cfg, 3);
  const auto inst = generate_instance(ProblemKind::TSP, 6, 3);
  Policy policy(model, inst);
  const std::vector<double> z(4, 0.2);
  const auto d = oracle::enumerate_policy(model, inst, policy.encoder(), z);
  const auto top = std::max_element(d.probabilities.begin(), d.probabilities.end());
  EXPECT_GT(*top, 0.999);
  Rng rng = make_rng(0, "unused");
  EXPECT_EQ(policy.rollout(z, rng, DecodeMode::kGreedy).solution.visits,
            d.tours[top - d.probabilities.begin()]);
}

TEST(Grid, TargetFactorises) {
  const auto setup = verify::harness_setup(2);
  const auto grid = oracle::latent_grid(setup.encoder, 3, 1.5);
  ASSERT_EQ(grid.size(), 9u);
  const auto flat = oracle::exact_target_grid(setup.model, setup.instance, setup.encoder, grid, 0.0);
  double prior_total = 0.0;
  std::vector<double> prior;
  for (const auto& z : grid) {
    prior.push_back(std::exp(gaussian_logdensity(z, setup.encoder.mu.data(), setup.encoder.logvar.data())));
    prior_total += prior.back();
  }
  const std::size_t T = flat.tours.size();
  for (std::size_t g = 0; g < grid.size(); ++g) {
    const auto d = oracle::enumerate_policy(setup.model, setup.instance, setup.encoder, grid[g]);
    for (std::size_t t = 0; t < T; ++t)
      EXPECT_NEAR(flat.probabilities[g * T + t], prior[g] / prior_total * d.probabilities[t], 1e-12);
  }
  // a single grid point reduces to the cost-tilted policy
  const std::vector<std::vector<double>> one = {grid[4]};
  const auto tilted = oracle::exact_target_grid(setup.model, setup.instance, setup.encoder, one, 1.0);
  const auto d = oracle::enumerate_policy(setup.model, setup.instance, setup.encoder, grid[4]);
  double z = 0.0;
  for (std::size_t t = 0; t < T; ++t) z += d.probabilities[t] * std::exp(-cost(setup.instance, d.tours[t]));
  for (std::size_t t = 0; t < T; ++t)
    EXPECT_NEAR(tilted.probabilities[t], d.probabilities[t] * std::exp(-cost(setup.instance, d.tours[t])) / z,
                1e-12);
}

TEST(Grid, KernelIsStochasticStationaryAndReversible) {
  const auto setup = verify::harness_setup(3);
  const oracle::GridHarness h(setup.model, setup.instance, setup.encoder, 5, 1.0);
  for (std::size_t s = 0; s < h.states(); s += 37) {
    const auto row = h.transition_row(s);
    EXPECT_NEAR(std::accumulate(row.begin(), row.end(), 0.0), 1.0, 1e-12);
    for (std::size_t s2 = 0; s2 < h.states(); s2 += 11) EXPECT_DOUBLE_EQ(row[s2], h.transition(s, s2));
  }
  const auto& pi = h.target().probabilities;
  EXPECT_LT(oracle::tv_distance(h.apply(pi), pi), 1e-10);
  EXPECT_LT(oracle::detailed_balance_check(h, 2000, 1), 1e-10);
  const oracle::GridHarness broken(setup.model, setup.instance, setup.encoder, 5, 1.0, true);
  EXPECT_GT(oracle::detailed_balance_check(broken, 2000, 1), 1e-3);
}

TEST(Grid, SampledStepsFollowTheKernel) {
  const auto setup = verify::harness_setup(4);
  const oracle::GridHarness h(setup.model, setup.instance, setup.encoder, 5, 1.0);
  const std::size_t s = 12 * h.tours() + 3;  // centre of the grid
  const auto row = h.transition_row(s);
  std::vector<double> counts(h.states(), 0.0);
  Rng rng = make_rng(5, "steps");
  const int n = 200000;
  for (int i = 0; i < n; ++i) counts[h.step(s, rng)] += 1.0 / n;
  EXPECT_LT(oracle::tv_distance(counts, row), 0.01);
}

TEST(Metrics, TotalVariation) {
  const std::vector<double> a = {1, 0}, b = {0, 1}, c = {0.5, 0.5};
  EXPECT_EQ(oracle::tv_distance(a, b), 1.0);
  EXPECT_EQ(oracle::tv_distance(a, a), 0.0);
  EXPECT_EQ(oracle::tv_distance(a, c), 0.5);
  const std::vector<double> three = {1, 0, 0};
  EXPECT_THROW(oracle::tv_distance(a, three), ContractError);
  EXPECT_NEAR(oracle::relative_error(std::vector<double>{1.0, 2.0}, std::vector<double>{1.0, 2.2}),
              0.2 / 2.2, 1e-15);
}

TEST(Gradients, PolicyGradientCheck) {
  const auto setup = verify::harness_setup(5);
  Rng rng = make_rng(1, "z");
  const auto z = draw_latent(setup.encoder, rng).z;
  const auto a = oracle::policy_gradient_check(setup.model, setup.instance, setup.encoder, z, 2.0, 29);
  EXPECT_LT(a.max_relative_error, 1e-5);
  EXPECT_GT(a.components, 50u);
}

}  // namespace
}  // namespace lgs
