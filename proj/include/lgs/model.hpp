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

// Instance-conditioned latent policy.
//
// Encoder (group kEncoder): node features -> L attention layers with skip
// connections and instance norm -> mean pooling -> Gaussian head (mu, log
// sigma^2) over a d_z latent.
//
// Decoder (group kDecoder): one multi-head attention glimpse from a context
// query [z, h_prev, h_first] (TSP) or [z, h_prev, remaining/D] (CVRP) over
// the node embeddings, followed by clipped compatibilities
// omega * tanh(q . k_i / sqrt(d_k)) and a masked softmax.
//
// The context query projection is stored as one block per context part, so
// concat(parts) * W_q is computed as the sum of per-part products; this lets
// node-dependent parts be projected once per instance.

#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "lgs/diffnum.hpp"
#include "lgs/problems.hpp"
#include "lgs/rng.hpp"

namespace lgs {

struct ModelConfig {
  ProblemKind kind = ProblemKind::TSP;
  int d_h = 64;
  int n_heads = 4;
  int n_layers = 3;
  int d_ff = 128;
  int d_k = 16;
  int d_z = 16;
  int latent_hidden = 64;
  double omega = 10.0;
  double norm_eps = 1e-5;

  // Throws ConfigError naming the offending field.
  void validate() const;
  int input_dim() const { return kind == ProblemKind::TSP ? 2 : 3; }

  bool operator==(const ModelConfig&) const = default;
};

// Full-size architecture (8 heads, d_h = 128, 6 layers, d_z = 100).
ModelConfig full_scale_config(ProblemKind kind);

enum ParamGroup : int { kEncoder = 0, kDecoder = 1 };

enum class GradScope {
  kNone,     // everything bound as constants
  kDecoder,  // only decoder parameters are differentiable
  kAll,
};

class PolicyModel {
 public:
  struct LayerIds {
    std::size_t w_q, w_k, w_v, w_o;
    std::size_t norm1_gamma, norm1_beta;
    std::size_t ff_w1, ff_b1, ff_w2, ff_b2;
    std::size_t norm2_gamma, norm2_beta;
  };
  struct Ids {
    // encoder
    std::size_t w0, b0, depot_flag;
    std::vector<LayerIds> layers;
    std::size_t mu_w1, mu_b1, mu_w2, mu_b2;
    std::size_t lv_w1, lv_b1, lv_w2, lv_b2;
    // decoder
    std::size_t q_latent, q_prev, q_first, q_capacity, q_bias;
    std::size_t glimpse_k, glimpse_v, glimpse_o, logit_k;
    std::size_t placeholder_prev, placeholder_first;
  };

  // Random initialisation, uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)).
  static PolicyModel initialize(const ModelConfig& config, std::uint64_t seed);

  // Adopts existing parameters; throws ConfigError if names or shapes do
  // not match `config`.
  PolicyModel(ModelConfig config, diffnum::ParamSet params);

  const ModelConfig& config() const { return config_; }
  const diffnum::ParamSet& params() const { return params_; }
  diffnum::ParamSet& params() { return params_; }
  const Ids& ids() const { return ids_; }

  bool operator==(const PolicyModel& o) const {
    return config_ == o.config_ && params_ == o.params_;
  }

 private:
  PolicyModel() = default;
  static diffnum::ParamSet layout(const ModelConfig& config, Ids& ids);

  ModelConfig config_;
  diffnum::ParamSet params_;
  Ids ids_{};
};

using Bound = std::vector<diffnum::Var>;

Bound bind(diffnum::Tape& tape, const PolicyModel& model, GradScope scope);

// Frozen encoder results for one instance.
struct EncoderOutputs {
  diffnum::Array nodes;  // [N x d_h], N = instance.num_nodes()
  diffnum::Array mean;   // [1 x d_h]
  diffnum::Array mu;     // [1 x d_z]
  diffnum::Array logvar; // [1 x d_z]
};

struct EncodedVars {
  diffnum::Var nodes, mean, mu, logvar;
};

// [N x d_x]: (x, y) for TSP; (x, y, d_i / D) for CVRP with row 0 the depot.
diffnum::Array node_features(const ModelConfig& config, const ProblemInstance& instance);

EncodedVars encode(diffnum::Tape& tape, const PolicyModel& model, const Bound& bound,
                   const ProblemInstance& instance);
EncoderOutputs encode(const PolicyModel& model, const ProblemInstance& instance);

// Gaussian latent draw via z = mu + exp(logvar / 2) * eps.
struct LatentSample {
  std::vector<double> z;
  double prior_logdensity = 0.0;
};

double gaussian_logdensity(std::span<const double> z, std::span<const double> mu,
                           std::span<const double> logvar);
LatentSample sample_latent(std::span<const double> mu, std::span<const double> logvar,
                           std::span<const double> eps);
LatentSample draw_latent(const EncoderOutputs& enc, Rng& rng);

// Row-wise log N(z_s; mu, diag exp(logvar)) for constant latents z [S x d_z].
diffnum::Var latent_logdensity(diffnum::Tape& tape, diffnum::Var mu, diffnum::Var logvar,
                               const diffnum::Array& z);

// Per-instance decoder tensors that do not depend on the step.
struct DecoderCache {
  diffnum::Var glimpse_keys;    // [N x d_h]
  diffnum::Var glimpse_values;  // [N x d_h]
  diffnum::Var logit_keys;      // [N x d_h], W^K h_i folded with the glimpse output projection
  diffnum::Var prev_proj;       // [(N+1) x d_h], row 0 = placeholder
  diffnum::Var first_proj;      // [(N+1) x d_h] (TSP)
  diffnum::Var capacity_w;      // [1 x d_h] (CVRP)
  diffnum::Var query_bias;      // [1 x d_h]
  int node_rows = 0;
};

DecoderCache prepare_decoder(diffnum::Tape& tape, const PolicyModel& model, const Bound& bound,
                             diffnum::Var nodes);

// Latent part of the context query, one row per latent: z W_q^{(z)}.
diffnum::Var latent_projection(diffnum::Tape& tape, const PolicyModel& model, const Bound& bound,
                               const diffnum::Array& z_rows);

// One query row per active construction.
struct StepBatch {
  std::vector<int> latent_rows;
  std::vector<int> prev_rows;
  std::vector<int> first_rows;
  std::vector<double> capacity;  // remaining / D
  std::vector<std::uint8_t> mask;  // rows x N, by node row
  std::size_t size() const { return latent_rows.size(); }
  void append(const ProblemInstance& instance, const RouteState& state, int latent_row);
};

// [R x N] step distributions by node row.
diffnum::Var step_probabilities(diffnum::Tape& tape, const PolicyModel& model,
                                const DecoderCache& cache, diffnum::Var latent_proj,
                                const StepBatch& batch);

// Teacher-forced log p(y_s | x, z_s) for each sequence, [S x 1]. Sequence s
// uses row s of `latent_proj`. Throws FeasibilityError on infeasible visits.
diffnum::Var sequence_log_probs(diffnum::Tape& tape, const PolicyModel& model,
                                const DecoderCache& cache, diffnum::Var latent_proj,
                                const ProblemInstance& instance,
                                std::span<const std::vector<int>> visits);

enum class DecodeMode { kGreedy, kSample };

struct RolloutResult {
  Solution solution;
  double log_prob = 0.0;
  double entropy = 0.0;  // sum of per-step Shannon entropies over admissible nodes
};

// Parameter snapshot bound to one instance for value-only decoding. Not
// thread-safe; use one Policy per thread.
class Policy {
 public:
  Policy(const PolicyModel& model, const ProblemInstance& instance);
  Policy(const PolicyModel& model, const ProblemInstance& instance, EncoderOutputs frozen);
  Policy(const Policy&) = delete;
  Policy& operator=(const Policy&) = delete;

  const EncoderOutputs& encoder() const { return enc_; }
  const ProblemInstance& instance() const { return *instance_; }

  // Distribution over labels 0..n (masked labels exactly 0).
  std::vector<double> step_distribution(std::span<const double> z, const RouteState& state);

  RolloutResult rollout(std::span<const double> z, Rng& rng, DecodeMode mode);
  // Row r of `z_rows` is decoded with rngs[r]; results match independent
  // single rollouts.
  std::vector<RolloutResult> rollout_batch(const diffnum::Array& z_rows, std::span<Rng> rngs,
                                           DecodeMode mode);

  double log_prob(std::span<const double> z, std::span<const int> visits);

 private:
  void setup();

  const PolicyModel* model_;
  const ProblemInstance* instance_;
  EncoderOutputs enc_;
  diffnum::Tape tape_{false};
  Bound bound_;
  DecoderCache cache_{};
  std::size_t base_mark_ = 0;
};

struct LogProbGradient {
  double value = 0.0;
  diffnum::Gradients grad;
};

// log p(y | x, z) and its gradient. kDecoder keeps the encoder outputs
// frozen; kAll re-encodes the instance on the tape.
LogProbGradient log_prob_gradient(const PolicyModel& model, const ProblemInstance& instance,
                                  const EncoderOutputs& frozen, std::span<const double> z,
                                  std::span<const int> visits, GradScope scope);

}  // namespace lgs
