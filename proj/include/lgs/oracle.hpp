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

// Exhaustive references for small instances: optimal solutions, exact
// decoder distributions, an enumerable grid version of the latent sampler,
// and finite-difference gradient checks.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgs/diffnum.hpp"
#include "lgs/model.hpp"
#include "lgs/problems.hpp"
#include "lgs/rng.hpp"

namespace lgs::oracle {

inline constexpr int kVersion = 1;

inline constexpr int kMaxBruteForceTsp = 10;
inline constexpr int kMaxBruteForceCvrp = 8;
inline constexpr int kMaxEnumerateTsp = 7;
inline constexpr int kMaxEnumerateCvrp = 5;
inline constexpr std::size_t kMaxGridStates = 100000;

// Optimal tour starting at label 1 (the lexicographically first among ties).
Solution brute_force_tsp(const ProblemInstance& instance);

// Optimal routes; each route's customers are followed by a depot visit.
Solution brute_force_cvrp(const ProblemInstance& instance);

Solution brute_force(const ProblemInstance& instance);

struct TourDistribution {
  std::vector<std::vector<int>> tours;  // feasible visit sequences, DFS order
  std::vector<double> probabilities;
  double min_admissible_step = 1.0;     // smallest probability of any admissible step

  double total() const;
};

// Exact p(y | x, z) over every feasible visit sequence.
TourDistribution enumerate_policy(const PolicyModel& model, const ProblemInstance& instance,
                                  const EncoderOutputs& encoder, std::span<const double> z);

// Merges TSP sequences that describe the same cycle from a different start.
TourDistribution canonical_tours(const TourDistribution& dist);

// z_{ij} = mu + sigma * (offset_i, offset_j), offsets evenly spaced in
// [-span, span]; requires d_z = 2. Index g = i * points + j.
std::vector<std::vector<double>> latent_grid(const EncoderOutputs& encoder, int points = 5,
                                             double span = 2.0);

struct GridDistribution {
  std::vector<std::vector<double>> grid;
  std::vector<std::vector<int>> tours;
  std::vector<double> probabilities;  // state s = g * tours.size() + t

  std::size_t states() const { return probabilities.size(); }
};

// pi(z_g, y) proportional to p(z_g | x) p(y | x, z_g) exp(-lambda C(y)).
GridDistribution exact_target_grid(const PolicyModel& model, const ProblemInstance& instance,
                                   const EncoderOutputs& encoder,
                                   const std::vector<std::vector<double>>& grid, double lambda);

// Metropolis-Hastings on the grid: move to one of the four neighbours with
// probability 1/4 each (off-grid moves stay), draw y' from the decoder at
// the new point, accept with the sampler's acceptance function.
class GridHarness {
 public:
  GridHarness(const PolicyModel& model, const ProblemInstance& instance,
              const EncoderOutputs& encoder, int points, double lambda,
              bool drop_density_ratio = false);

  const GridDistribution& target() const { return target_; }
  std::size_t states() const { return target_.states(); }
  int points() const { return points_; }
  std::size_t tours() const { return target_.tours.size(); }

  // Decoder table p(t | g).
  double policy(std::size_t g, std::size_t t) const { return policy_[g * tours() + t]; }
  double alpha(std::size_t s, std::size_t s2) const;

  double transition(std::size_t s, std::size_t s2) const;
  std::vector<double> transition_row(std::size_t s) const;
  // pi P.
  std::vector<double> apply(std::span<const double> pi) const;

  std::size_t step(std::size_t s, Rng& rng) const;

  // Rebuilds the tables after the decoder parameters changed.
  void refresh(const PolicyModel& model);

 private:
  std::vector<std::size_t> neighbours(std::size_t g) const;

  const ProblemInstance* instance_;
  EncoderOutputs encoder_;
  int points_;
  double lambda_;
  bool drop_density_ratio_;
  GridDistribution target_;
  std::vector<double> policy_;
  std::vector<std::vector<double>> policy_cdf_;
  std::vector<double> prior_;
  std::vector<double> cost_;
};

// Max over sampled pairs of |pi(s)P(s,s') - pi(s')P(s',s)| / max(pi(s)P(s,s'), tiny).
double detailed_balance_check(const GridHarness& harness, std::size_t pairs, std::uint64_t seed,
                              double tiny = 1e-300);

// 1/2 sum |p - q|; throws ContractError on a length mismatch.
double tv_distance(std::span<const double> p, std::span<const double> q);

struct GradientCheck {
  double max_relative_error = 0.0;
  diffnum::Gradients exact;  // sum_y p(y)(C(y) - b) grad log p(y)
  std::size_t components = 0;
};

// Compares the exact expectation of the score-function estimator with
// central differences of sum_y p(y) C(y) over decoder parameters. Every
// `stride`-th entry of each parameter is checked.
GradientCheck policy_gradient_check(const PolicyModel& model, const ProblemInstance& instance,
                                    const EncoderOutputs& encoder, std::span<const double> z,
                                    double baseline, std::size_t stride = 1, double step = 1e-5);

// Norm-wise relative error ||a - b||_inf / max(||a||_inf, ||b||_inf).
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace lgs::oracle
