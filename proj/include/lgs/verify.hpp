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

// Named property suites backed by the oracle module. Each suite returns a
// machine-readable report; a suite passes when every case does.

#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lgs/model.hpp"
#include "lgs/oracle.hpp"
#include "lgs/problems.hpp"

namespace lgs::verify {

struct Case {
  std::string name;
  double value = 0.0;
  double threshold = 0.0;
  bool below = true;  // pass iff value < threshold (or > when false)
  bool passed = false;
};

struct Report {
  std::string suite;
  bool passed = true;
  std::vector<Case> cases;
  double wall_ms = 0.0;

  void add(std::string name, double value, double threshold, bool below = true);
};

const std::vector<std::string>& suite_names();

// Throws ArgumentError listing the suites on an unknown name.
Report run_suite(const std::string& name, std::uint64_t seed = 0);

// ---- building blocks ---------------------------------------------------------

// Small d_z = 2 model and a TSP n = 4 instance for the grid harness.
struct HarnessSetup {
  PolicyModel model;
  ProblemInstance instance;
  EncoderOutputs encoder;
};
HarnessSetup harness_setup(std::uint64_t seed);

inline constexpr int kGridPoints = 5;
inline constexpr double kGridLambda = 1.0;
inline constexpr std::size_t kBalancePairs = 10000;
inline constexpr int kChains = 200000;
inline constexpr int kChainSteps = 100;

struct PrimitiveCheck {
  std::string name;
  double error = 0.0;
};
// Central differences against the tape for every diffnum primitive.
std::vector<PrimitiveCheck> primitive_gradient_checks(std::uint64_t seed);

// log p(y | x, z) gradient over all parameters (re-encoding the instance)
// against central differences on every `stride`-th entry.
double log_prob_gradient_error(ProblemKind kind, int n, std::uint64_t seed, std::size_t stride);

struct ChainConvergence {
  std::vector<double> tv;  // tv[m - 1] after m steps
  double slope = 0.0;      // least-squares slope of log TV over the transient
  int transient = 0;       // steps used in the fit
  double final_tv = 0.0;
};
// Many independent chains from a fixed corner state on the frozen harness.
ChainConvergence empirical_convergence(const oracle::GridHarness& harness, int chains, int steps,
                                       std::uint64_t seed);

struct AdaptiveConvergence {
  double tv_final = 0.0;    // to the target at the final parameters
  double tv_initial = 0.0;  // to the target at the initial parameters
  int updates = 0;
  double parameter_change = 0.0;  // max |theta_final - theta_0|
};
// Particles on the grid harness sharing decoder parameters updated by the
// SA rule on the default schedule.
AdaptiveConvergence adaptive_convergence(const HarnessSetup& setup, int particles, int steps,
                                         double gamma0, std::uint64_t seed);

}  // namespace lgs::verify
