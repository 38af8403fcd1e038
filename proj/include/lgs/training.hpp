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

// Weighted, entropy-regularised REINFORCE over instance minibatches with K
// latent samples per instance.

#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <vector>

#include "lgs/diffnum.hpp"
#include "lgs/model.hpp"
#include "lgs/problems.hpp"

namespace lgs {

struct TrainConfig {
  ProblemKind kind = ProblemKind::TSP;
  int problem_size = 10;
  int batch_size = 64;
  int latent_samples = 8;
  int epochs = 300;
  double entropy_coef = 0.01;
  // tau(e) = tau0 * tau_decay^e; tau0 <= 0 selects twice the mean sampled
  // cost of the first batch.
  double tau0 = 0.0;
  double tau_decay = 0.995;
  double learning_rate = 5e-4;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double weight_decay = 1e-6;
  // Decoder score gradients also reach the encoder trunk through the node
  // embeddings.
  bool decoder_grad_through_encoder = true;
  int eval_instances = 64;
  std::uint64_t seed = 0;
  // When false wall_ms is written as 0 so traces are byte-reproducible.
  bool record_timing = true;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

// Normalised cost weights softmax(-C / tau); smaller cost -> larger weight.
std::vector<double> compute_weights(std::span<const double> costs, double tau);

// Mean of the instance's own sample costs.
double mean_baseline(std::span<const double> costs);

// K latent-solution pairs for one instance.
struct InstanceSamples {
  ProblemInstance instance;
  diffnum::Array latents;                // [K x d_z]
  std::vector<std::vector<int>> visits;  // K solutions
  std::vector<double> costs;             // K costs
};

// (1/B) sum_i sum_k w_ik (C_ik - b_i) grad log p(y_ik | x_i, z_ik)
//   - beta (1/B) sum_i sum_k log p(y_ik | .) grad log p(y_ik | .)
// Weights and baselines are constants. With `through_encoder` the score
// also flows into encoder parameters via the node embeddings; otherwise the
// embeddings are detached and only decoder entries are non-zero.
diffnum::Gradients grad_theta(const PolicyModel& model, std::span<const InstanceSamples> batch,
                              std::span<const std::vector<double>> weights,
                              std::span<const double> baselines, double beta,
                              bool through_encoder = true);

// (1/B) sum_i sum_k w_ik (C_ik - b_i) grad_phi log p_phi(z_ik | x_i), z fixed.
diffnum::Gradients grad_phi(const PolicyModel& model, std::span<const InstanceSamples> batch,
                            std::span<const std::vector<double>> weights,
                            std::span<const double> baselines);

// grad_theta + grad_phi in a single backward pass per instance. Instances are
// processed in parallel and reduced in index order.
diffnum::Gradients training_gradient(const PolicyModel& model,
                                     std::span<const InstanceSamples> batch,
                                     std::span<const std::vector<double>> weights,
                                     std::span<const double> baselines, double beta,
                                     bool through_encoder = true);

// Adam with L2 weight decay folded into the gradient.
class Adam {
 public:
  Adam() = default;
  Adam(double lr, double beta1, double beta2, double eps, double weight_decay);

  void step(diffnum::ParamSet& params, const diffnum::Gradients& grad);

  double learning_rate() const { return lr_; }
  void set_learning_rate(double lr) { lr_ = lr; }
  long long steps() const { return t_; }
  const std::vector<diffnum::Array>& first_moment() const { return m_; }
  const std::vector<diffnum::Array>& second_moment() const { return v_; }
  void restore(long long steps, std::vector<diffnum::Array> m, std::vector<diffnum::Array> v);

 private:
  double lr_ = 1e-3, beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8, weight_decay_ = 0.0;
  long long t_ = 0;
  std::vector<diffnum::Array> m_, v_;
};

struct TraceRow {
  int epoch = 0;
  double mean_cost = 0.0;
  double greedy_cost = 0.0;
  double mean_step_entropy = 0.0;
  double tau = 0.0;
  double wall_ms = 0.0;
};

struct TrainState {
  PolicyModel model;
  Adam optimizer;
  int epoch = 0;    // completed epochs
  double tau0 = 0;  // resolved initial temperature (0 until the first epoch)
};

struct TrainResult {
  std::vector<TraceRow> trace;
  double initial_greedy_cost = 0.0;
};

// Fixed validation instances and their mean greedy cost with z = mu.
std::vector<ProblemInstance> evaluation_set(const TrainConfig& config);
double mean_greedy_cost(const PolicyModel& model, std::span<const ProblemInstance> instances);

// Batch instance `index` of `epoch` (1-based). Empty selects fresh
// instances generated from config.seed.
using InstanceSource = std::function<ProblemInstance(int epoch, int index)>;

// Cycles through a fixed pool in order.
InstanceSource pool_source(std::vector<ProblemInstance> pool, int batch_size);

// One epoch of sampling, gradient estimation and an Adam step.
TraceRow train_epoch(const TrainConfig& config, TrainState& state,
                     std::span<const ProblemInstance> eval_set,
                     const InstanceSource& source = {});

// Runs epochs state.epoch + 1 .. config.epochs. `on_epoch` (optional) is
// called after each epoch. Throws NumericError on a non-finite gradient.
TrainResult train(const TrainConfig& config, TrainState& state,
                  const std::function<void(const TraceRow&, const TrainState&)>& on_epoch = {},
                  const InstanceSource& source = {});

TrainState initial_state(const TrainConfig& config, const ModelConfig& model_config,
                         std::uint64_t init_seed);

}  // namespace lgs
