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

// Latent-space search at inference time: i.i.d. sampling, single and
// parallel random-walk MCMC, interacting MCMC and the full sampler with
// stochastic-approximation updates of the decoder.
//
// Target over (z, y): p(z | x) p(y | x, z) exp(-lambda C(y)). Candidates are
// z' from a Gaussian random walk (optionally drifted by the difference of
// two cloud members) and y' from a fresh decoder rollout at z', so the
// decoder factor cancels in the acceptance ratio.

#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "lgs/diffnum.hpp"
#include "lgs/model.hpp"
#include "lgs/problems.hpp"
#include "lgs/rng.hpp"
#include "lgs/training.hpp"

namespace lgs {

enum class Method { kSampling, kSingleMcmc, kParallelMcmc, kInteractingMcmc, kLgs };

std::string to_string(Method m);
// Throws ArgumentError listing the valid names.
Method parse_method(const std::string& name);
const std::vector<std::string>& method_names();

enum class SaOptimizer { kSgd, kAdam };

struct InferenceConfig {
  Method method = Method::kLgs;
  int particles = 32;
  int iterations = 200;
  // > 0 switches to a wall-clock budget: iterate until this many ms elapse.
  double wall_clock_ms = 0.0;
  double lambda = 2.0;
  double proposal_variance = 0.01;
  // < 0 selects the per-problem default (0.319 TSP, 0.379 CVRP).
  double proposal_drift = -1.0;
  double sa_step = 1e-4;
  std::vector<int> sa_schedule = {1, 1, 5, 15, 25, 100, 150};
  SaOptimizer sa_optimizer = SaOptimizer::kSgd;
  bool augment = false;
  bool record_latents = false;
  // 0 accepts any checkpoint; otherwise the checkpoint's d_z must match.
  int latent_dim = 0;
  std::uint64_t seed = 0;

  void validate() const;
  double drift_for(ProblemKind kind) const;
};

struct Particle {
  std::vector<double> z;
  Solution y;
  double prior_logdensity = 0.0;
};

struct ChainState {
  ProblemInstance instance;
  EncoderOutputs encoder;  // frozen
  PolicyModel model;       // current decoder parameters
  std::vector<Particle> particles;
  int m = 0;
  Solution best;
  std::uint64_t seed = 0;
  int sa_updates = 0;
  Adam adam;
};

// log p(z | x) - lambda C(y).
double target_logweight(double prior_logdensity, double cost, double lambda);

// min(1, exp(target(candidate) - target(current))).
double acceptance(const Particle& current, const Particle& candidate, double lambda);

struct Proposal {
  std::vector<double> z;
  int i1 = 0;
  int i2 = 0;
};

// z_k + drift (z_i1 - z_i2) + sqrt(variance) eps with i1, i2 uniform over the
// cloud (forced equal when the cloud has one member).
Proposal propose(std::span<const Particle> cloud, int k, double drift, double variance, Rng& rng);

// Fresh chain: z_0 drawn from the prior, y_0 by sampling the decoder.
ChainState init_chain(const PolicyModel& model, const ProblemInstance& instance, int particles,
                      std::uint64_t seed);

// Random-number stream of particle k at iteration m.
Rng particle_rng(std::uint64_t seed, int k, int m);

struct StepStats {
  int accepted = 0;
  std::vector<std::uint8_t> accepted_flags;
};

// One propose / rollout / accept sweep over all particles. `policy` must be
// bound to chain.model, chain.instance and chain.encoder.
StepStats lgs_step(ChainState& chain, Policy& policy, double lambda, double drift,
                   double variance);

// (1/K) sum_k (C_k - mean C) grad_theta log p(y_k | x, z_k), decoder only.
// With `weights` (summing to 1) the average and the baseline are weighted.
diffnum::Gradients sa_gradient(const PolicyModel& model, const ProblemInstance& instance,
                               const EncoderOutputs& encoder, std::span<const Particle> particles,
                               std::span<const double> weights = {});

// theta <- theta - gamma H (or an Adam step of size gamma). Throws
// NumericError on a non-finite H.
void sa_update(ChainState& chain, double gamma, SaOptimizer optimizer = SaOptimizer::kSgd);

// Completed-iteration counts after which an SA update happens: successive
// schedule entries are gaps, the last one repeating.
bool sa_due(std::span<const int> schedule, int m);

struct InferenceTraceRow {
  int m = 0;
  double best_cost = 0.0;
  double mean_cost = 0.0;
  double acceptance_rate = 0.0;
  int theta_update = 0;
};

struct LatentRow {
  int m = 0;
  int k = 0;
  double z1 = 0.0;
  double z2 = 0.0;
  double cost = 0.0;
  int accepted = 0;
};

struct RunResult {
  Solution best;
  std::vector<InferenceTraceRow> trace;
  std::vector<LatentRow> latents;
  long long rollouts = 0;
  double wall_ms = 0.0;
};

// Dispatches on config.method. With augmentation the 8 symmetric variants
// each get max(1, K/8) particles; variant 0 (identity) uses the base seed,
// so it reproduces the non-augmented run with that particle count.
RunResult run(const PolicyModel& model, const ProblemInstance& instance,
              const InferenceConfig& config);

}  // namespace lgs
