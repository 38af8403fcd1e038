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
#include <numeric>

#include "lgs/errors.hpp"
#include "lgs/model.hpp"
#include "lgs/problems.hpp"
#include "lgs/rng.hpp"

namespace lgs {
namespace {

ProblemInstance unit_square() {
  ProblemInstance inst;
  inst.kind = ProblemKind::TSP;
  inst.n = 4;
  inst.coords = {{0, 0}, {1, 0}, {1, 1}, {0, 1}};
  return inst;
}

ProblemInstance small_cvrp() {
  ProblemInstance inst;
  inst.kind = ProblemKind::CVRP;
  inst.n = 3;
  inst.coords = {{0, 0}, {1, 0}, {0, 1}, {1, 1}};
  inst.demands = {0, 4, 4, 4};
  inst.capacity = 8;
  return inst;
}

TEST(Problems, GeneratorRanges) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto tsp = generate_instance(ProblemKind::TSP, 20, seed);
    EXPECT_EQ(tsp.coords.size(), 20u);
    EXPECT_TRUE(tsp.demands.empty());
    const auto vrp = generate_instance(ProblemKind::CVRP, 20, seed);
    EXPECT_EQ(vrp.coords.size(), 21u);
    EXPECT_EQ(vrp.demands[0], 0.0);
    for (const auto* inst : {&tsp, &vrp}) {
      for (const auto& p : inst->coords) {
        EXPECT_GE(p.x, 0.0);
        EXPECT_LE(p.x, 1.0);
        EXPECT_GE(p.y, 0.0);
        EXPECT_LE(p.y, 1.0);
      }
    }
    for (int i = 1; i <= 20; ++i) {
      EXPECT_GE(vrp.demands[i], 1.0);
      EXPECT_LE(vrp.demands[i], 10.0);
    }
  }
}

TEST(Problems, GeneratorIsSeeded) {
  EXPECT_EQ(generate_instance(ProblemKind::TSP, 10, 42), generate_instance(ProblemKind::TSP, 10, 42));
  EXPECT_NE(generate_instance(ProblemKind::TSP, 10, 42), generate_instance(ProblemKind::TSP, 10, 43));
}

TEST(Problems, Capacities) {
  EXPECT_EQ(cvrp_capacity(100), 50.0);
  EXPECT_EQ(cvrp_capacity(125), 55.0);
  EXPECT_EQ(cvrp_capacity(150), 60.0);
  EXPECT_EQ(generate_instance(ProblemKind::CVRP, 100, 0).capacity, 50.0);
  EXPECT_EQ(generate_instance(ProblemKind::CVRP, 125, 0).capacity, 55.0);
  EXPECT_EQ(generate_instance(ProblemKind::CVRP, 150, 0).capacity, 60.0);
}

TEST(Problems, BadSizesRejected) {
  EXPECT_THROW(generate_instance(ProblemKind::TSP, 1, 0), ArgumentError);
  EXPECT_THROW(generate_instance(ProblemKind::TSP, -3, 0), ArgumentError);
  EXPECT_THROW(generate_instance(ProblemKind::CVRP, 0, 0), ArgumentError);
  EXPECT_THROW(parse_problem_kind("KNAPSACK"), ArgumentError);
  EXPECT_EQ(parse_problem_kind("CVRP"), ProblemKind::CVRP);
}

TEST(Problems, UnitSquareTour) {
  const auto sq = unit_square();
  const std::vector<int> tour = {1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(cost(sq, tour), 4.0);
  const std::vector<int> crossing = {1, 3, 2, 4};
  EXPECT_NEAR(cost(sq, crossing), 2.0 + 2.0 * std::sqrt(2.0), 1e-12);
}

TEST(Problems, TspValidation) {
  const auto inst = generate_instance(ProblemKind::TSP, 5, 1);
  EXPECT_NO_THROW(validate_solution(inst, std::vector<int>{3, 1, 5, 2, 4}));
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 2, 4, 5}), FeasibilityError);
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 3, 4}), FeasibilityError);
  EXPECT_THROW(validate_solution(inst, std::vector<int>{0, 1, 2, 3, 4}), FeasibilityError);
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 3, 4, 6}), FeasibilityError);
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 3, 4, 5, 1}), FeasibilityError);
}

TEST(Problems, CvrpValidation) {
  const auto inst = small_cvrp();
  EXPECT_NO_THROW(validate_solution(inst, std::vector<int>{1, 2, 0, 3, 0}));
  // capacity 8 cannot take three customers of demand 4
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 3, 0}), FeasibilityError);
  // missing final return
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 0, 3}), FeasibilityError);
  // depot twice in a row
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 0, 0, 2, 3, 0}), FeasibilityError);
  // customer missing
  EXPECT_THROW(validate_solution(inst, std::vector<int>{1, 2, 0}), FeasibilityError);
  // route: 0-1-2-0 = 1 + sqrt2 + 1, 0-3-0 = 2 sqrt2
  EXPECT_NEAR(cost(inst, std::vector<int>{1, 2, 0, 3, 0}), 2.0 + 3.0 * std::sqrt(2.0), 1e-12);
}

TEST(Problems, MasksFollowCapacity) {
  const auto inst = small_cvrp();
  auto m = feasible_mask(inst, {});
  EXPECT_EQ(m, (std::vector<bool>{false, true, true, true}));
  m = feasible_mask(inst, std::vector<int>{1, 2});
  EXPECT_EQ(m, (std::vector<bool>{true, false, false, false}));
  m = feasible_mask(inst, std::vector<int>{1});
  EXPECT_EQ(m, (std::vector<bool>{true, false, true, true}));
  m = feasible_mask(inst, std::vector<int>{1}, 3.0);
  EXPECT_EQ(m, (std::vector<bool>{true, false, false, false}));
  const auto tsp = unit_square();
  m = feasible_mask(tsp, std::vector<int>{2, 4});
  EXPECT_EQ(m, (std::vector<bool>{false, true, false, true, false}));
}

TEST(Problems, StepCaps) {
  const auto tsp = unit_square();
  EXPECT_EQ(RouteState(tsp).max_steps(), 4);
  const auto vrp = small_cvrp();
  EXPECT_EQ(RouteState(vrp).max_steps(), 8);
}

// Random admissible choices always finish in a valid solution.
TEST(Problems, MaskSoundnessFuzz) {
  for (std::uint64_t seed = 0; seed < 200; ++seed) {
    const auto kind = seed % 2 ? ProblemKind::CVRP : ProblemKind::TSP;
    const auto inst = generate_instance(kind, 3 + static_cast<int>(seed % 15), seed);
    Rng rng = make_rng(seed, "fuzz");
    RouteState state(inst);
    std::vector<int> visits;
    while (!state.done()) {
      ASSERT_LT(state.steps(), state.max_steps());
      const auto mask = state.mask();
      std::vector<int> options;
      for (int l = 0; l <= inst.n; ++l)
        if (mask[l]) options.push_back(l);
      ASSERT_FALSE(options.empty());
      const int pick = options[static_cast<std::size_t>(uniform01(rng) * options.size())];
      state.apply(pick);
      visits.push_back(pick);
    }
    EXPECT_NO_THROW(validate_solution(inst, visits));
  }
}

TEST(Problems, TspCostSymmetry) {
  const auto inst = generate_instance(ProblemKind::TSP, 9, 5);
  std::vector<int> tour(9);
  std::iota(tour.begin(), tour.end(), 1);
  Rng rng = make_rng(5, "perm");
  for (int trial = 0; trial < 50; ++trial) {
    std::shuffle(tour.begin(), tour.end(), rng);
    const double c = cost(inst, tour);
    auto rev = tour;
    std::reverse(rev.begin(), rev.end());
    EXPECT_NEAR(cost(inst, rev), c, 1e-12);
    for (int r = 1; r < 9; ++r) {
      auto rot = tour;
      std::rotate(rot.begin(), rot.begin() + r, rot.end());
      EXPECT_NEAR(cost(inst, rot), c, 1e-12);
    }
  }
}

TEST(Problems, AugmentationIsometry) {
  for (auto kind : {ProblemKind::TSP, ProblemKind::CVRP}) {
    const auto inst = generate_instance(kind, 12, 3);
    const auto variants = augment(inst);
    ASSERT_EQ(variants.size(), 8u);
    EXPECT_EQ(variants[0], inst);
    Rng rng = make_rng(3, "aug");
    for (int trial = 0; trial < 20; ++trial) {
      RouteState state(inst);
      std::vector<int> visits;
      while (!state.done()) {
        const auto mask = state.mask();
        std::vector<int> options;
        for (int l = 0; l <= inst.n; ++l)
          if (mask[l]) options.push_back(l);
        const int pick = options[static_cast<std::size_t>(uniform01(rng) * options.size())];
        state.apply(pick);
        visits.push_back(pick);
      }
      const double c = cost(inst, visits);
      for (const auto& v : variants) {
        EXPECT_EQ(v.demands, inst.demands);
        EXPECT_NEAR(cost(v, visits), c, 1e-12);
        for (const auto& p : v.coords) {
          EXPECT_GE(p.x, 0.0);
          EXPECT_LE(p.x, 1.0);
        }
      }
    }
  }
  EXPECT_THROW(dihedral_transform({0.1, 0.2}, 8), ArgumentError);
}

TEST(Problems, GapFormula) {
  EXPECT_NEAR(gap_percent(7.785, 7.752), 0.42569659442724, 1e-10);
  EXPECT_EQ(gap_percent(3.0, 3.0), 0.0);
  EXPECT_THROW(gap_percent(1.0, 0.0), ArgumentError);
}

TEST(Rng, StreamsAreKeyed) {
  EXPECT_EQ(derive_seed(1, "a", 2), derive_seed(1, "a", 2));
  EXPECT_NE(derive_seed(1, "a", 2), derive_seed(1, "b", 2));
  EXPECT_NE(derive_seed(1, "a", 2), derive_seed(1, "a", 3));
  EXPECT_NE(derive_seed(1, "a", 2), derive_seed(2, "a", 2));
  Rng r = make_rng(9, "u");
  for (int i = 0; i < 1000; ++i) {
    const double u = uniform01(r);
    EXPECT_GE(u, 0.0);
    EXPECT_LT(u, 1.0);
  }
}

}  // namespace
}  // namespace lgs
