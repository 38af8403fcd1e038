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

#include "lgs/inference.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>

#include "lgs/errors.hpp"

namespace lgs {

using diffnum::Array;
using diffnum::Gradients;
using diffnum::Tape;
using diffnum::Var;

namespace {

const std::vector<std::string> kMethodNames = {"sampling", "single_mcmc", "parallel_mcmc",
                                               "interacting_mcmc", "lgs"};

}  // namespace

const std::vector<std::string>& method_names() { return kMethodNames; }

std::string to_string(Method m) { return kMethodNames[static_cast<int>(m)]; }

Method parse_method(const std::string& name) {
  for (std::size_t i = 0; i < kMethodNames.size(); ++i) {
    if (kMethodNames[i] == name) return static_cast<Method>(i);
  }
  std::string all;
  for (const auto& n : kMethodNames) all += (all.empty() ? "" : ", ") + n;
  throw ArgumentError("unknown method '" + name + "' (expected one of: " + all + ")");
}

void InferenceConfig::validate() const {
  auto fail = [](const std::string& what) { throw ConfigError("inference config: " + what); };
  if (particles < 1) fail("particles must be >= 1");
  if (iterations < 0) fail("iterations must be >= 0");
  if (!(wall_clock_ms >= 0.0)) fail("wall_clock_ms must be >= 0");
  if (!(lambda >= 0.0)) fail("lambda must be >= 0");
  if (!(proposal_variance > 0.0)) fail("proposal_variance must be > 0");
  if (!std::isfinite(proposal_drift)) fail("proposal_drift must be finite");
  if (!(sa_step >= 0.0)) fail("sa_step must be >= 0");
  if (sa_schedule.empty()) fail("sa_schedule must not be empty");
  for (int s : sa_schedule) {
    if (s < 1) fail("sa_schedule intervals must be positive");
  }
  if (latent_dim < 0) fail("latent_dim must be >= 0");
}

double InferenceConfig::drift_for(ProblemKind kind) const {
  if (proposal_drift >= 0.0) return proposal_drift;
  return kind == ProblemKind::TSP ? 0.319 : 0.379;
}

double target_logweight(double prior_logdensity, double cost, double lambda) {
  return prior_logdensity - lambda * cost;
}

double acceptance(const Particle& current, const Particle& candidate, double lambda) {
  const double delta = target_logweight(candidate.prior_logdensity, candidate.y.cost, lambda) -
                       target_logweight(current.prior_logdensity, current.y.cost, lambda);
  return delta >= 0.0 ? 1.0 : std::exp(delta);
}

Proposal propose(std::span<const Particle> cloud, int k, double drift, double variance,
                 Rng& rng) {
  const int K = static_cast<int>(cloud.size());
  Proposal p;
  std::uniform_int_distribution<int> pick(0, K - 1);
  p.i1 = pick(rng);
  p.i2 = K == 1 ? p.i1 : pick(rng);
  const auto& z = cloud[k].z;
  const auto& a = cloud[p.i1].z;
  const auto& b = cloud[p.i2].z;
  const double sd = std::sqrt(variance);
  p.z.resize(z.size());
  for (std::size_t j = 0; j < z.size(); ++j) {
    p.z[j] = z[j] + drift * (a[j] - b[j]) + sd * standard_normal(rng);
  }
  return p;
}

Rng particle_rng(std::uint64_t seed, int k, int m) { return make_rng(seed, "particle", k, m); }

namespace {

void update_best(Solution& best, const Solution& s) {
  if (best.visits.empty() || s.cost < best.cost) best = s;
}

}  // namespace

ChainState init_chain(const PolicyModel& model, const ProblemInstance& instance, int particles,
                      std::uint64_t seed) {
  if (particles < 1) throw ConfigError("init_chain: particles must be >= 1");
  ChainState chain{instance, encode(model, instance), model, {}, 0, {}, seed, 0, Adam()};
  Policy policy(chain.model, chain.instance, chain.encoder);
  const std::size_t dz = chain.encoder.mu.cols();
  Array zs(particles, dz);
  std::vector<Rng> rngs;
  chain.particles.resize(particles);
  for (int k = 0; k < particles; ++k) {
    rngs.push_back(particle_rng(seed, k, 0));
    LatentSample s = draw_latent(chain.encoder, rngs.back());
    std::copy(s.z.begin(), s.z.end(), zs.row_ptr(k));
    chain.particles[k].z = std::move(s.z);
    chain.particles[k].prior_logdensity = s.prior_logdensity;
  }
  auto results = policy.rollout_batch(zs, rngs, DecodeMode::kSample);
  for (int k = 0; k < particles; ++k) {
    chain.particles[k].y = std::move(results[k].solution);
    update_best(chain.best, chain.particles[k].y);
  }
  return chain;
}

StepStats lgs_step(ChainState& chain, Policy& policy, double lambda, double drift,
                   double variance) {
  const int K = static_cast<int>(chain.particles.size());
  const int m = chain.m + 1;
  const std::size_t dz = chain.encoder.mu.cols();
  const auto& mu = chain.encoder.mu.values();
  const auto& logvar = chain.encoder.logvar.values();
  std::vector<Rng> rngs;
  rngs.reserve(K);
  std::vector<Particle> cand(K);
  Array zs(K, dz);
  for (int k = 0; k < K; ++k) {
    rngs.push_back(particle_rng(chain.seed, k, m));
    Proposal p = propose(chain.particles, k, drift, variance, rngs.back());
    std::copy(p.z.begin(), p.z.end(), zs.row_ptr(k));
    cand[k].prior_logdensity = gaussian_logdensity(p.z, mu, logvar);
    cand[k].z = std::move(p.z);
  }
  auto results = policy.rollout_batch(zs, rngs, DecodeMode::kSample);
  StepStats stats;
  stats.accepted_flags.assign(K, 0);
  for (int k = 0; k < K; ++k) {
    cand[k].y = std::move(results[k].solution);
    update_best(chain.best, cand[k].y);
    const double alpha = acceptance(chain.particles[k], cand[k], lambda);
    if (uniform01(rngs[k]) < alpha) {
      chain.particles[k] = std::move(cand[k]);
      stats.accepted_flags[k] = 1;
      ++stats.accepted;
    }
  }
  chain.m = m;
  return stats;
}

Gradients sa_gradient(const PolicyModel& model, const ProblemInstance& instance,
                      const EncoderOutputs& encoder, std::span<const Particle> particles,
                      std::span<const double> weights) {
  const std::size_t K = particles.size();
  if (K == 0) throw ArgumentError("sa_gradient: no particles");
  if (!weights.empty() && weights.size() != K) throw ShapeError("sa_gradient: one weight per particle");
  auto weight = [&](std::size_t k) {
    return weights.empty() ? 1.0 / static_cast<double>(K) : weights[k];
  };
  double b = 0.0;
  for (std::size_t k = 0; k < K; ++k) b += weight(k) * particles[k].y.cost;
  Tape tape(true);
  Bound bound = bind(tape, model, GradScope::kDecoder);
  DecoderCache cache = prepare_decoder(tape, model, bound, tape.constant(encoder.nodes));
  Array zs(K, encoder.mu.cols());
  std::vector<std::vector<int>> visits;
  std::vector<double> coef;
  for (std::size_t k = 0; k < K; ++k) {
    std::copy(particles[k].z.begin(), particles[k].z.end(), zs.row_ptr(k));
    visits.push_back(particles[k].y.visits);
    coef.push_back(weight(k) * (particles[k].y.cost - b));
  }
  Var zp = latent_projection(tape, model, bound, zs);
  Var lp = sequence_log_probs(tape, model, cache, zp, instance, visits);
  Var total = diffnum::sum(mul(lp, tape.constant(Array::column(coef))));
  return tape.gradient(total, model.params().size());
}

void sa_update(ChainState& chain, double gamma, SaOptimizer optimizer) {
  Gradients h = sa_gradient(chain.model, chain.instance, chain.encoder, chain.particles);
  if (!diffnum::all_finite(h)) {
    throw NumericError("non-finite SA gradient at iteration " + std::to_string(chain.m));
  }
  auto& params = chain.model.params();
  if (optimizer == SaOptimizer::kAdam) {
    if (chain.adam.steps() == 0) chain.adam = Adam(gamma, 0.9, 0.999, 1e-8, 0.0);
    chain.adam.set_learning_rate(gamma);
    chain.adam.step(params, h);
  } else {
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (h[i].empty()) continue;
      auto theta = params.value(i).data();
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= gamma * h[i][j];
    }
  }
  ++chain.sa_updates;
}

bool sa_due(std::span<const int> schedule, int m) {
  if (schedule.empty() || m < 1) return false;
  int at = 0;
  for (std::size_t i = 0;; ++i) {
    at += schedule[std::min(i, schedule.size() - 1)];
    if (at == m) return true;
    if (at > m) return false;
  }
}

namespace {

using Clock = std::chrono::steady_clock;

double elapsed_ms(Clock::time_point start) {
  return std::chrono::duration<double, std::milli>(Clock::now() - start).count();
}

void record_latents(RunResult& out, int m, std::span<const Particle> ps,
                    std::span<const std::uint8_t> accepted) {
  for (std::size_t k = 0; k < ps.size(); ++k) {
    const auto& z = ps[k].z;
    out.latents.push_back({m, static_cast<int>(k), z.empty() ? 0.0 : z[0],
                           z.size() > 1 ? z[1] : 0.0, ps[k].y.cost,
                           accepted.empty() ? 1 : accepted[k]});
  }
}

double mean_cost(std::span<const Particle> ps) {
  double s = 0.0;
  for (const auto& p : ps) s += p.y.cost;
  return s / static_cast<double>(ps.size());
}

// Budget: `iterations` sweeps, or sweeps until `wall_ms` elapses when > 0.
bool more(int m, int iterations, double wall_ms, Clock::time_point start) {
  if (wall_ms > 0.0) return elapsed_ms(start) < wall_ms;
  return m < iterations;
}

RunResult run_sampling(const PolicyModel& model, const ProblemInstance& instance,
                       const InferenceConfig& cfg, int K, int iterations, double wall_ms,
                       std::uint64_t seed) {
  const auto start = Clock::now();
  RunResult out;
  Policy policy(model, instance);
  const EncoderOutputs& enc = policy.encoder();
  std::vector<Particle> ps(K);
  for (int m = 0;; ++m) {
    Array zs(K, enc.mu.cols());
    std::vector<Rng> rngs;
    rngs.reserve(K);
    for (int k = 0; k < K; ++k) {
      rngs.push_back(particle_rng(seed, k, m));
      LatentSample s = draw_latent(enc, rngs.back());
      std::copy(s.z.begin(), s.z.end(), zs.row_ptr(k));
      ps[k].z = std::move(s.z);
      ps[k].prior_logdensity = s.prior_logdensity;
    }
    auto results = policy.rollout_batch(zs, rngs, DecodeMode::kSample);
    for (int k = 0; k < K; ++k) {
      ps[k].y = std::move(results[k].solution);
      update_best(out.best, ps[k].y);
    }
    out.rollouts += K;
    out.trace.push_back({m, out.best.cost, mean_cost(ps), m == 0 ? 0.0 : 1.0, 0});
    if (cfg.record_latents) record_latents(out, m, ps, {});
    if (!more(m, iterations, wall_ms, start)) break;
  }
  out.wall_ms = elapsed_ms(start);
  return out;
}

RunResult run_chain(const PolicyModel& model, const ProblemInstance& instance,
                    const InferenceConfig& cfg, int K, int iterations, double wall_ms,
                    std::uint64_t seed, double drift, bool adapt) {
  const auto start = Clock::now();
  RunResult out;
  ChainState chain = init_chain(model, instance, K, seed);
  out.rollouts += K;
  out.best = chain.best;
  out.trace.push_back({0, chain.best.cost, mean_cost(chain.particles), 0.0, 0});
  if (cfg.record_latents) record_latents(out, 0, chain.particles, {});
  auto policy = std::make_unique<Policy>(chain.model, chain.instance, chain.encoder);
  while (more(chain.m, iterations, wall_ms, start)) {
    StepStats st = lgs_step(chain, *policy, cfg.lambda, drift, cfg.proposal_variance);
    out.rollouts += K;
    int flag = 0;
    if (adapt && sa_due(cfg.sa_schedule, chain.m)) {
      const double gamma = cfg.sa_step / std::sqrt(static_cast<double>(chain.sa_updates + 1));
      sa_update(chain, gamma, cfg.sa_optimizer);
      policy = std::make_unique<Policy>(chain.model, chain.instance, chain.encoder);
      flag = 1;
    }
    out.trace.push_back({chain.m, chain.best.cost, mean_cost(chain.particles),
                         static_cast<double>(st.accepted) / K, flag});
    if (cfg.record_latents) record_latents(out, chain.m, chain.particles, st.accepted_flags);
  }
  out.best = chain.best;
  out.wall_ms = elapsed_ms(start);
  return out;
}

RunResult run_variant(const PolicyModel& model, const ProblemInstance& instance,
                      const InferenceConfig& cfg, int K, double wall_ms, std::uint64_t seed) {
  const int M = cfg.iterations;
  switch (cfg.method) {
    case Method::kSampling:
      return run_sampling(model, instance, cfg, K, M, wall_ms, seed);
    case Method::kSingleMcmc:
      // Same rollout budget as K chains of M sweeps.
      return run_chain(model, instance, cfg, 1, K * (M + 1) - 1, wall_ms, seed,
                       0.0, false);
    case Method::kParallelMcmc:
      return run_chain(model, instance, cfg, K, M, wall_ms, seed, 0.0, false);
    case Method::kInteractingMcmc:
      return run_chain(model, instance, cfg, K, M, wall_ms, seed, cfg.drift_for(instance.kind),
                       false);
    case Method::kLgs:
      return run_chain(model, instance, cfg, K, M, wall_ms, seed, cfg.drift_for(instance.kind),
                       true);
  }
  throw ArgumentError("unknown method");
}

}  // namespace

RunResult run(const PolicyModel& model, const ProblemInstance& instance,
              const InferenceConfig& config) {
  config.validate();
  if (model.config().kind != instance.kind) {
    throw ConfigError("run: checkpoint is for " + to_string(model.config().kind) +
                      " but the instance is " + to_string(instance.kind));
  }
  if (config.latent_dim != 0 && config.latent_dim != model.config().d_z) {
    throw ConfigError("run: latent_dim " + std::to_string(config.latent_dim) +
                      " does not match the checkpoint's d_z " +
                      std::to_string(model.config().d_z));
  }
  if (!config.augment) {
    return run_variant(model, instance, config, config.particles, config.wall_clock_ms,
                       config.seed);
  }
  const auto start = Clock::now();
  const auto variants = augment(instance);
  const int K = std::max(1, config.particles / static_cast<int>(variants.size()));
  const double wall = config.wall_clock_ms / static_cast<double>(variants.size());
  std::vector<RunResult> parts;
  for (std::size_t j = 0; j < variants.size(); ++j) {
    const std::uint64_t seed = j == 0 ? config.seed : derive_seed(config.seed, "augment", j);
    parts.push_back(run_variant(model, variants[j], config, K, wall, seed));
  }
  RunResult out;
  std::size_t rows = 0;
  for (const auto& p : parts) {
    rows = std::max(rows, p.trace.size());
    out.rollouts += p.rollouts;
    // Labels are shared across variants, so the visit order carries over.
    Solution s = make_solution(instance, p.best.visits);
    update_best(out.best, s);
    for (auto r : p.latents) out.latents.push_back(r);
  }
  for (std::size_t i = 0; i < rows; ++i) {
    InferenceTraceRow row;
    row.best_cost = std::numeric_limits<double>::infinity();
    for (const auto& p : parts) {
      const auto& r = p.trace[std::min(i, p.trace.size() - 1)];
      row.m = std::max(row.m, r.m);
      row.best_cost = std::min(row.best_cost, r.best_cost);
      row.mean_cost += r.mean_cost / static_cast<double>(parts.size());
      row.acceptance_rate += r.acceptance_rate / static_cast<double>(parts.size());
      row.theta_update = std::max(row.theta_update, i < p.trace.size() ? r.theta_update : 0);
    }
    out.trace.push_back(row);
  }
  out.wall_ms = elapsed_ms(start);
  return out;
}

}  // namespace lgs
