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

#include "lgs/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <sstream>

#include "lgs/errors.hpp"

namespace lgs {

using diffnum::Array;
using diffnum::Gradients;
using diffnum::ParamSet;
using diffnum::Tape;
using diffnum::Var;

void TrainConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("train config: " + what); };
  if (problem_size < 2) fail("problem_size must be >= 2");
  if (batch_size < 1) fail("batch_size must be >= 1");
  if (latent_samples < 1) fail("latent_samples must be >= 1");
  if (epochs < 0) fail("epochs must be >= 0");
  if (!(entropy_coef >= 0.0)) fail("entropy_coef must be >= 0");
  if (!(tau_decay > 0.0)) fail("tau_decay must be > 0");
  if (!(learning_rate >= 0.0)) fail("learning_rate must be >= 0");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0)) fail("adam_beta1 must be in [0, 1)");
  if (!(adam_beta2 >= 0.0 && adam_beta2 < 1.0)) fail("adam_beta2 must be in [0, 1)");
  if (!(adam_eps > 0.0)) fail("adam_eps must be > 0");
  if (!(weight_decay >= 0.0)) fail("weight_decay must be >= 0");
  if (eval_instances < 0) fail("eval_instances must be >= 0");
}

std::vector<double> compute_weights(std::span<const double> costs, double tau) {
  if (costs.empty()) throw ArgumentError("compute_weights: no costs");
  if (!(tau > 0.0)) throw ArgumentError("compute_weights: tau must be > 0");
  const double lo = *std::min_element(costs.begin(), costs.end());
  std::vector<double> w(costs.size());
  double total = 0.0;
  for (std::size_t i = 0; i < costs.size(); ++i) {
    w[i] = std::exp(-(costs[i] - lo) / tau);
    total += w[i];
  }
  for (double& v : w) v /= total;
  return w;
}

double mean_baseline(std::span<const double> costs) {
  if (costs.empty()) throw ArgumentError("mean_baseline: no costs");
  double s = 0.0;
  for (double c : costs) s += c;
  return s / static_cast<double>(costs.size());
}

namespace {

void check_batch(std::span<const InstanceSamples> batch,
                 std::span<const std::vector<double>> weights, std::span<const double> baselines) {
  if (batch.empty()) throw ArgumentError("empty batch");
  if (weights.size() != batch.size() || baselines.size() != batch.size()) {
    throw ShapeError("one weight vector and baseline per instance required");
  }
  for (std::size_t i = 0; i < batch.size(); ++i) {
    const auto& s = batch[i];
    const std::size_t k = s.costs.size();
    if (s.visits.size() != k || s.latents.rows() != k || weights[i].size() != k) {
      throw ShapeError("instance " + std::to_string(i) + ": latents, visits, costs and weights " +
                       "must have the same length");
    }
  }
}

struct Terms {
  bool theta = false;
  bool phi = false;
};

Gradients instance_gradient(const PolicyModel& model, const InstanceSamples& s,
                            const std::vector<double>& w, double baseline, double beta,
                            bool through_encoder, Terms terms, double scale) {
  Tape tape(true);
  Bound b = bind(tape, model, GradScope::kAll);
  EncodedVars enc = encode(tape, model, b, s.instance);
  std::vector<double> coef(w.size());
  for (std::size_t k = 0; k < w.size(); ++k) coef[k] = w[k] * (s.costs[k] - baseline);
  Var c = tape.constant(Array::column(coef));
  Var total = tape.constant(Array::scalar(0.0));
  if (terms.theta) {
    Var nodes = through_encoder ? enc.nodes : tape.constant(enc.nodes.value());
    DecoderCache cache = prepare_decoder(tape, model, b, nodes);
    Var zp = latent_projection(tape, model, b, s.latents);
    Var lp = sequence_log_probs(tape, model, cache, zp, s.instance, s.visits);
    total = add(total, diffnum::sum(mul(lp, c)));
    if (beta != 0.0) total = add(total, diffnum::scale(diffnum::sum(mul(lp, lp)), -0.5 * beta));
  }
  if (terms.phi) {
    Var lz = latent_logdensity(tape, enc.mu, enc.logvar, s.latents);
    total = add(total, diffnum::sum(mul(lz, c)));
  }
  total = diffnum::scale(total, scale);
  return tape.gradient(total, model.params().size());
}

Gradients batch_gradient(const PolicyModel& model, std::span<const InstanceSamples> batch,
                         std::span<const std::vector<double>> weights,
                         std::span<const double> baselines, double beta, bool through_encoder,
                         Terms terms) {
  check_batch(batch, weights, baselines);
  const long count = static_cast<long>(batch.size());
  const double inv = 1.0 / static_cast<double>(count);
  std::vector<Gradients> parts(batch.size());
  std::vector<std::string> errors(batch.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    try {
      parts[i] = instance_gradient(model, batch[i], weights[i], baselines[i], beta,
                                   through_encoder, terms, inv);
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i) {
    if (!errors[i].empty()) {
      throw FeasibilityError("instance " + std::to_string(i) + ": " + errors[i]);
    }
  }
  Gradients out = diffnum::zeros_like(model.params());
  for (const auto& g : parts) diffnum::accumulate(out, g);
  return out;
}

}  // namespace

Gradients grad_theta(const PolicyModel& model, std::span<const InstanceSamples> batch,
                     std::span<const std::vector<double>> weights,
                     std::span<const double> baselines, double beta, bool through_encoder) {
  return batch_gradient(model, batch, weights, baselines, beta, through_encoder,
                        Terms{true, false});
}

Gradients grad_phi(const PolicyModel& model, std::span<const InstanceSamples> batch,
                   std::span<const std::vector<double>> weights,
                   std::span<const double> baselines) {
  return batch_gradient(model, batch, weights, baselines, 0.0, true, Terms{false, true});
}

Gradients training_gradient(const PolicyModel& model, std::span<const InstanceSamples> batch,
                            std::span<const std::vector<double>> weights,
                            std::span<const double> baselines, double beta,
                            bool through_encoder) {
  return batch_gradient(model, batch, weights, baselines, beta, through_encoder,
                        Terms{true, true});
}

// ---- Adam -------------------------------------------------------------------

Adam::Adam(double lr, double beta1, double beta2, double eps, double weight_decay)
    : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps), weight_decay_(weight_decay) {}

void Adam::step(ParamSet& params, const Gradients& grad) {
  if (grad.size() != params.size()) throw ShapeError("adam: gradient count mismatch");
  if (m_.empty()) {
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_.emplace_back(params.value(i).rows(), params.value(i).cols());
      v_.emplace_back(params.value(i).rows(), params.value(i).cols());
    }
  }
  ++t_;
  const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto theta = params.value(i).data();
    auto m = m_[i].data();
    auto v = v_[i].data();
    const bool has = !grad[i].empty();
    if (has && grad[i].size() != theta.size()) {
      throw ShapeError("adam: gradient shape mismatch for " + params.name(i));
    }
    for (std::size_t j = 0; j < theta.size(); ++j) {
      const double g = (has ? grad[i][j] : 0.0) + weight_decay_ * theta[j];
      m[j] = beta1_ * m[j] + (1.0 - beta1_) * g;
      v[j] = beta2_ * v[j] + (1.0 - beta2_) * g * g;
      theta[j] -= lr_ * (m[j] / c1) / (std::sqrt(v[j] / c2) + eps_);
    }
  }
}

void Adam::restore(long long steps, std::vector<Array> m, std::vector<Array> v) {
  if (m.size() != v.size()) throw ShapeError("adam: moment count mismatch");
  t_ = steps;
  m_ = std::move(m);
  v_ = std::move(v);
}

// ---- training loop ----------------------------------------------------------

std::vector<ProblemInstance> evaluation_set(const TrainConfig& config) {
  std::vector<ProblemInstance> out;
  out.reserve(config.eval_instances);
  for (int i = 0; i < config.eval_instances; ++i) {
    out.push_back(generate_instance(config.kind, config.problem_size,
                                    derive_seed(config.seed, "train-eval", i)));
  }
  return out;
}

double mean_greedy_cost(const PolicyModel& model, std::span<const ProblemInstance> instances) {
  if (instances.empty()) return 0.0;
  const long count = static_cast<long>(instances.size());
  std::vector<double> costs(instances.size());
#pragma omp parallel for schedule(dynamic, 1)
  for (long i = 0; i < count; ++i) {
    Policy policy(model, instances[i]);
    Rng rng(0);
    costs[i] = policy.rollout(policy.encoder().mu.data(), rng, DecodeMode::kGreedy).solution.cost;
  }
  double s = 0.0;
  for (double c : costs) s += c;
  return s / static_cast<double>(count);
}

InstanceSource pool_source(std::vector<ProblemInstance> pool, int batch_size) {
  if (pool.empty()) throw ArgumentError("pool_source: empty instance pool");
  auto shared = std::make_shared<const std::vector<ProblemInstance>>(std::move(pool));
  return [shared, batch_size](int epoch, int index) {
    const std::size_t at = (static_cast<std::size_t>(epoch - 1) * batch_size + index) % shared->size();
    return (*shared)[at];
  };
}

TraceRow train_epoch(const TrainConfig& config, TrainState& state,
                     std::span<const ProblemInstance> eval_set, const InstanceSource& source) {
  const auto start = std::chrono::steady_clock::now();
  const int epoch = state.epoch + 1;
  const int B = config.batch_size;
  const int K = config.latent_samples;
  const PolicyModel& model = state.model;

  std::vector<InstanceSamples> batch(B);
  std::vector<double> entropy(B, 0.0);
  std::vector<std::string> errors(B);
#pragma omp parallel for schedule(dynamic, 1)
  for (int i = 0; i < B; ++i) {
    try {
      InstanceSamples& s = batch[i];
      s.instance = source ? source(epoch, i)
                          : generate_instance(config.kind, config.problem_size,
                                              derive_seed(config.seed, "train-instance", epoch, i));
      if (s.instance.kind != config.kind) throw ConfigError("instance kind differs from config");
      Policy policy(model, s.instance);
      const EncoderOutputs& enc = policy.encoder();
      const std::size_t dz = enc.mu.cols();
      s.latents = Array(K, dz);
      std::vector<Rng> rngs;
      rngs.reserve(K);
      for (int k = 0; k < K; ++k) {
        Rng zr = make_rng(config.seed, "train-latent", epoch, i, k);
        LatentSample ls = draw_latent(enc, zr);
        std::copy(ls.z.begin(), ls.z.end(), s.latents.row_ptr(k));
        rngs.push_back(make_rng(config.seed, "train-rollout", epoch, i, k));
      }
      auto results = policy.rollout_batch(s.latents, rngs, DecodeMode::kSample);
      for (auto& r : results) {
        s.costs.push_back(r.solution.cost);
        entropy[i] += r.entropy / static_cast<double>(r.solution.visits.size());
        s.visits.push_back(std::move(r.solution.visits));
      }
    } catch (const std::exception& e) {
      errors[i] = e.what();
    }
  }
  for (int i = 0; i < B; ++i) {
    if (!errors[i].empty()) {
      throw NumericError("epoch " + std::to_string(epoch) + ", instance " + std::to_string(i) +
                         ": " + errors[i]);
    }
  }

  double mean_cost = 0.0, mean_entropy = 0.0;
  for (int i = 0; i < B; ++i) {
    for (double c : batch[i].costs) mean_cost += c;
    mean_entropy += entropy[i];
  }
  mean_cost /= static_cast<double>(B * K);
  mean_entropy /= static_cast<double>(B * K);

  if (state.tau0 <= 0.0) state.tau0 = config.tau0 > 0.0 ? config.tau0 : 2.0 * mean_cost;
  const double tau = state.tau0 * std::pow(config.tau_decay, static_cast<double>(epoch - 1));

  std::vector<std::vector<double>> weights(B);
  std::vector<double> baselines(B);
  for (int i = 0; i < B; ++i) {
    weights[i] = compute_weights(batch[i].costs, tau);
    baselines[i] = mean_baseline(batch[i].costs);
  }
  Gradients g = training_gradient(model, batch, weights, baselines, config.entropy_coef,
                                  config.decoder_grad_through_encoder);
  if (!diffnum::all_finite(g)) {
    const ParamSet& p = model.params();
    std::ostringstream msg;
    msg << "non-finite gradient at epoch " << epoch << " (tau " << tau << ", mean cost "
        << mean_cost << ") in";
    for (std::size_t i = 0; i < g.size(); ++i) {
      bool bad = false;
      for (double v : g[i].data()) bad = bad || !std::isfinite(v);
      if (bad) msg << ' ' << p.name(i);
    }
    throw NumericError(msg.str());
  }
  state.optimizer.step(state.model.params(), g);
  state.epoch = epoch;

  TraceRow row;
  row.epoch = epoch;
  row.mean_cost = mean_cost;
  row.greedy_cost = mean_greedy_cost(state.model, eval_set);
  row.mean_step_entropy = mean_entropy;
  row.tau = tau;
  if (config.record_timing) {
    row.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            start)
                      .count();
  }
  return row;
}

TrainResult train(const TrainConfig& config, TrainState& state,
                  const std::function<void(const TraceRow&, const TrainState&)>& on_epoch,
                  const InstanceSource& source) {
  config.validate();
  if (state.model.config().kind != config.kind) {
    throw ConfigError("train: model was built for " + to_string(state.model.config().kind) +
                      " but config asks for " + to_string(config.kind));
  }
  const auto eval_set = evaluation_set(config);
  TrainResult result;
  result.initial_greedy_cost = mean_greedy_cost(state.model, eval_set);
  while (state.epoch < config.epochs) {
    TraceRow row = train_epoch(config, state, eval_set, source);
    result.trace.push_back(row);
    if (on_epoch) on_epoch(row, state);
  }
  return result;
}

TrainState initial_state(const TrainConfig& config, const ModelConfig& model_config,
                         std::uint64_t init_seed) {
  config.validate();
  ModelConfig mc = model_config;
  mc.kind = config.kind;
  return TrainState{PolicyModel::initialize(mc, init_seed),
                    Adam(config.learning_rate, config.adam_beta1, config.adam_beta2,
                         config.adam_eps, config.weight_decay),
                    0, 0.0};
}

}  // namespace lgs
