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

#include <cmath>
#include <filesystem>
#include <functional>
#include <limits>
#include <numeric>

#include "lgs/errors.hpp"
#include "lgs/io.hpp"
#include "lgs/model.hpp"
#include "lgs/training.hpp"
#include "support.hpp"

namespace lgs {
namespace {

using diffnum::Array;
using diffnum::Gradients;
using test::tiny_config;

TEST(Weights, SoftmaxOfNegativeCost) {
  const std::vector<double> c = {1.0, 2.0};
  const auto w = compute_weights(c, 1.0);
  EXPECT_NEAR(w[0], 0.7310585786300049, 1e-12);
  EXPECT_NEAR(w[1], 0.2689414213699951, 1e-12);
  const std::vector<double> many = {3.0, 1.5, 9.0, 2.2};
  const auto u = compute_weights(many, 1e9);
  for (double x : u) EXPECT_NEAR(x, 0.25, 1e-8);
  const std::vector<double> same(5, 4.0);
  for (double x : compute_weights(same, 0.1)) EXPECT_DOUBLE_EQ(x, 0.2);
  // a huge spread must not overflow
  const std::vector<double> spread = {0.0, 1e6};
  const auto s = compute_weights(spread, 1e-3);
  EXPECT_EQ(s[0], 1.0);
  EXPECT_EQ(s[1], 0.0);
  EXPECT_DOUBLE_EQ(mean_baseline(many), (3.0 + 1.5 + 9.0 + 2.2) / 4.0);
}

// Every TSP tour of an instance (all starts, both directions).
std::vector<std::vector<int>> all_tours(int n) {
  std::vector<int> p(n);
  std::iota(p.begin(), p.end(), 1);
  std::vector<std::vector<int>> out;
  do out.push_back(p);
  while (std::next_permutation(p.begin(), p.end()));
  return out;
}

struct Enumerated {
  PolicyModel model;
  ProblemInstance inst;
  std::vector<double> z;
  std::vector<std::vector<int>> tours;
  std::vector<double> cost;
};

Enumerated setup_n4(std::uint64_t seed, int d_z = 4) {
  Enumerated e{PolicyModel::initialize(tiny_config(ProblemKind::TSP, d_z), seed),
               generate_instance(ProblemKind::TSP, 4, seed + 1), {}, all_tours(4), {}};
  Rng rng = make_rng(seed, "z");
  e.z = draw_latent(encode(e.model, e.inst), rng).z;
  for (const auto& t : e.tours) e.cost.push_back(cost(e.inst, t));
  return e;
}

std::vector<double> tour_probs(const PolicyModel& model, const Enumerated& e) {
  Policy policy(model, e.inst);
  std::vector<double> p;
  for (const auto& t : e.tours) p.push_back(std::exp(policy.log_prob(e.z, t)));
  return p;
}

// Samples covering every tour; the weight of a tour is p(y) w(y) so the
// estimator equals its exact expectation.
InstanceSamples enumerated_samples(const Enumerated& e) {
  InstanceSamples s;
  s.instance = e.inst;
  s.latents = Array(e.tours.size(), e.z.size());
  for (std::size_t k = 0; k < e.tours.size(); ++k)
    std::copy(e.z.begin(), e.z.end(), s.latents.row_ptr(k));
  s.visits = e.tours;
  s.costs = e.cost;
  return s;
}

TEST(GradTheta, ExactExpectationMatchesFiniteDifferences) {
  auto e = setup_n4(3);
  const auto p = tour_probs(e.model, e);
  std::vector<double> w(e.tours.size());  // fixed cost-dependent weights
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = std::exp(-e.cost[i]);
  const double b = 2.5;
  std::vector<std::vector<double>> weights(1);
  for (std::size_t i = 0; i < w.size(); ++i) weights[0].push_back(p[i] * w[i]);
  const std::vector<InstanceSamples> batch = {enumerated_samples(e)};
  const std::vector<double> baselines = {b};
  const Gradients g = grad_theta(e.model, batch, weights, baselines, 0.0, true);

  PolicyModel probe = e.model;
  auto objective = [&] {
    const auto q = tour_probs(probe, e);
    double f = 0.0;
    for (std::size_t i = 0; i < q.size(); ++i) f += q[i] * w[i] * (e.cost[i] - b);
    return f;
  };
  double worst = 0.0, scale = 0.0;
  std::size_t checked = 0;
  for (std::size_t pid = 0; pid < probe.params().size(); ++pid) {
    const std::size_t len = probe.params().value(pid).size();
    for (std::size_t i = 0; i < len; i += 7) {
      const double fd = test::central_difference(probe.params(), pid, i, 1e-5, objective);
      worst = std::max(worst, std::abs(fd - test::entry(g, pid, i)));
      scale = std::max(scale, std::abs(fd));
      ++checked;
    }
  }
  EXPECT_GT(checked, 100u);
  EXPECT_GT(scale, 1e-4);
  EXPECT_LT(worst / scale, 1e-5);
}

TEST(GradTheta, DetachedEncoderTouchesOnlyDecoder) {
  auto e = setup_n4(4);
  const std::vector<InstanceSamples> batch = {enumerated_samples(e)};
  const std::vector<std::vector<double>> weights = {std::vector<double>(e.tours.size(), 0.1)};
  const std::vector<double> baselines = {2.0};
  const Gradients g = grad_theta(e.model, batch, weights, baselines, 0.0, false);
  bool decoder_nonzero = false;
  for (std::size_t pid = 0; pid < g.size(); ++pid) {
    for (double v : g[pid].values()) {
      if (e.model.params().group(pid) == kEncoder) EXPECT_EQ(v, 0.0);
      else if (v != 0.0) decoder_nonzero = true;
    }
  }
  EXPECT_TRUE(decoder_nonzero);
}

TEST(GradTheta, BaselineShiftIsInvariantForConstantWeights) {
  auto e = setup_n4(5);
  const auto p = tour_probs(e.model, e);
  const std::vector<InstanceSamples> batch = {enumerated_samples(e)};
  const std::vector<std::vector<double>> weights = {p};
  const std::vector<double> b0 = {1.0}, b1 = {6.0};
  const Gradients g0 = grad_theta(e.model, batch, weights, b0, 0.0);
  const Gradients g1 = grad_theta(e.model, batch, weights, b1, 0.0);
  double diff = 0.0;
  for (std::size_t pid = 0; pid < g0.size(); ++pid)
    for (std::size_t i = 0; i < g0[pid].size(); ++i)
      diff = std::max(diff, std::abs(g0[pid][i] - g1[pid][i]));
  EXPECT_LT(diff, 1e-10);
  EXPECT_GT(test::max_abs(g0), 1e-3);
}

InstanceSamples sampled(const PolicyModel& model, std::uint64_t seed, int K) {
  InstanceSamples s;
  s.instance = generate_instance(ProblemKind::TSP, 6, seed);
  Policy policy(model, s.instance);
  s.latents = Array(K, model.config().d_z);
  Rng rng = make_rng(seed, "sampled");
  for (int k = 0; k < K; ++k) {
    const auto z = draw_latent(policy.encoder(), rng).z;
    std::copy(z.begin(), z.end(), s.latents.row_ptr(k));
    const auto r = policy.rollout(z, rng, DecodeMode::kSample);
    s.visits.push_back(r.solution.visits);
    s.costs.push_back(r.solution.cost);
  }
  return s;
}

TEST(GradTheta, EqualCostsGiveZeroGradient) {
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP), 6);
  auto s = sampled(model, 7, 4);
  std::fill(s.costs.begin(), s.costs.end(), 3.0);
  const std::vector<InstanceSamples> batch = {s};
  const std::vector<std::vector<double>> weights = {compute_weights(s.costs, 1.0)};
  const std::vector<double> baselines = {mean_baseline(s.costs)};
  EXPECT_EQ(test::max_abs(grad_theta(model, batch, weights, baselines, 0.0)), 0.0);
  EXPECT_EQ(test::max_abs(grad_phi(model, batch, weights, baselines)), 0.0);
}

TEST(GradTheta, EntropyTermIsLinearInBeta) {
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP), 8);
  const std::vector<InstanceSamples> batch = {sampled(model, 9, 4), sampled(model, 10, 4)};
  std::vector<std::vector<double>> weights;
  std::vector<double> baselines;
  for (const auto& s : batch) {
    weights.push_back(compute_weights(s.costs, 0.5));
    baselines.push_back(mean_baseline(s.costs));
  }
  const Gradients g0 = grad_theta(model, batch, weights, baselines, 0.0);
  const Gradients g1 = grad_theta(model, batch, weights, baselines, 1.0);
  const Gradients g2 = grad_theta(model, batch, weights, baselines, 2.0);
  for (std::size_t pid = 0; pid < g0.size(); ++pid)
    for (std::size_t i = 0; i < g0[pid].size(); ++i)
      EXPECT_NEAR(g2[pid][i] - g0[pid][i], 2.0 * (g1[pid][i] - g0[pid][i]), 1e-12);
}

TEST(GradTheta, CombinedGradientIsTheSum) {
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP), 11);
  const std::vector<InstanceSamples> batch = {sampled(model, 12, 3), sampled(model, 13, 3)};
  std::vector<std::vector<double>> weights;
  std::vector<double> baselines;
  for (const auto& s : batch) {
    weights.push_back(compute_weights(s.costs, 0.5));
    baselines.push_back(mean_baseline(s.costs));
  }
  Gradients sum = grad_theta(model, batch, weights, baselines, 0.01);
  diffnum::accumulate(sum, grad_phi(model, batch, weights, baselines));
  const Gradients both = training_gradient(model, batch, weights, baselines, 0.01);
  for (std::size_t pid = 0; pid < sum.size(); ++pid)
    for (std::size_t i = 0; i < sum[pid].size(); ++i)
      EXPECT_NEAR(both[pid][i], sum[pid][i], 1e-12);
}

// grad_phi against central differences of the weighted prior log-density,
// one latent dimension.
TEST(GradPhi, MatchesFiniteDifferences) {
  const auto model = PolicyModel::initialize(tiny_config(ProblemKind::TSP, 1), 14);
  const auto s = sampled(model, 15, 5);
  const std::vector<InstanceSamples> batch = {s};
  const std::vector<std::vector<double>> weights = {compute_weights(s.costs, 0.3)};
  const std::vector<double> baselines = {mean_baseline(s.costs) - 0.2};
  const Gradients g = grad_phi(model, batch, weights, baselines);
  PolicyModel probe = model;
  auto objective = [&] {
    const auto enc = encode(probe, s.instance);
    double f = 0.0;
    for (int k = 0; k < 5; ++k) {
      f += weights[0][k] * (s.costs[k] - baselines[0]) *
           gaussian_logdensity(s.latents.row_span(k), enc.mu.data(), enc.logvar.data());
    }
    return f;
  };
  double worst = 0.0, scale = 0.0;
  for (std::size_t pid = 0; pid < probe.params().size(); ++pid) {
    if (probe.params().group(pid) != kEncoder) {
      for (double v : g[pid].values()) EXPECT_EQ(v, 0.0);
      continue;
    }
    for (std::size_t i = 0; i < probe.params().value(pid).size(); i += 3) {
      const double fd = test::central_difference(probe.params(), pid, i, 1e-5, objective);
      worst = std::max(worst, std::abs(fd - test::entry(g, pid, i)));
      scale = std::max(scale, std::abs(fd));
    }
  }
  EXPECT_GT(scale, 1e-4);
  EXPECT_LT(worst / scale, 1e-6);
}

TrainConfig small_train() {
  TrainConfig c;
  c.problem_size = 5;
  c.batch_size = 4;
  c.latent_samples = 3;
  c.epochs = 3;
  c.eval_instances = 4;
  c.seed = 21;
  c.record_timing = false;
  return c;
}

TEST(Train, ZeroLearningRateLeavesParametersBitExact) {
  TrainConfig c = small_train();
  c.learning_rate = 0.0;
  TrainState state = initial_state(c, tiny_config(ProblemKind::TSP), 1);
  const auto before = state.model.params();
  train(c, state);
  EXPECT_EQ(state.model.params(), before);
  EXPECT_EQ(state.epoch, 3);
}

TEST(Train, IdenticalSeedsIdenticalTrajectories) {
  const TrainConfig c = small_train();
  TrainState a = initial_state(c, tiny_config(ProblemKind::TSP), 2);
  TrainState b = initial_state(c, tiny_config(ProblemKind::TSP), 2);
  std::vector<diffnum::ParamSet> snaps_a, snaps_b;
  const auto ra = train(c, a, [&](const TraceRow&, const TrainState& s) {
    snaps_a.push_back(s.model.params());
  });
  const auto rb = train(c, b, [&](const TraceRow&, const TrainState& s) {
    snaps_b.push_back(s.model.params());
  });
  EXPECT_EQ(snaps_a, snaps_b);
  ASSERT_EQ(ra.trace.size(), 3u);
  for (std::size_t i = 0; i < 3; ++i) {
    EXPECT_EQ(ra.trace[i].epoch, static_cast<int>(i) + 1);
    EXPECT_EQ(ra.trace[i].mean_cost, rb.trace[i].mean_cost);
    EXPECT_EQ(ra.trace[i].greedy_cost, rb.trace[i].greedy_cost);
    EXPECT_EQ(ra.trace[i].wall_ms, 0.0);
    EXPECT_NEAR(ra.trace[i].tau, a.tau0 * std::pow(c.tau_decay, static_cast<double>(i)), 1e-12);
  }
  EXPECT_NE(snaps_a.front(), snaps_a.back());
  EXPECT_NEAR(a.tau0, 2.0 * ra.trace[0].mean_cost, 1e-12);
}

TEST(Train, ResumeMatchesUninterruptedRun) {
  TrainConfig c = small_train();
  c.epochs = 4;
  TrainState straight = initial_state(c, tiny_config(ProblemKind::CVRP), 3);
  c.kind = ProblemKind::CVRP;
  straight = initial_state(c, tiny_config(ProblemKind::CVRP), 3);
  train(c, straight);

  TrainConfig half = c;
  half.epochs = 2;
  TrainState first = initial_state(c, tiny_config(ProblemKind::CVRP), 3);
  train(half, first);
  const auto path = std::filesystem::temp_directory_path() / "lgs_resume_test.json";
  io::save_checkpoint(path, first, half);
  auto ck = io::load_checkpoint(path);
  std::filesystem::remove(path);
  TrainState resumed{ck.model, ck.optimizer, ck.epoch, ck.tau0};
  const auto rest = train(c, resumed);
  ASSERT_EQ(rest.trace.size(), 2u);
  EXPECT_EQ(rest.trace[0].epoch, 3);
  EXPECT_EQ(resumed.model.params(), straight.model.params());
  EXPECT_EQ(resumed.optimizer.steps(), straight.optimizer.steps());
}

TEST(Train, FixedPoolSource) {
  TrainConfig c = small_train();
  std::vector<ProblemInstance> pool;
  for (int i = 0; i < 6; ++i) pool.push_back(generate_instance(ProblemKind::TSP, 5, 100 + i));
  const auto src = pool_source(pool, c.batch_size);
  EXPECT_EQ(src(1, 0), pool[0]);
  EXPECT_EQ(src(1, 3), pool[3]);
  EXPECT_EQ(src(2, 0), pool[4]);
  EXPECT_EQ(src(2, 2), pool[0]);
  TrainState s = initial_state(c, tiny_config(ProblemKind::TSP), 4);
  EXPECT_NO_THROW(train(c, s, {}, src));
}

TEST(Train, NonFiniteParametersAbort) {
  const TrainConfig c = small_train();
  TrainState s = initial_state(c, tiny_config(ProblemKind::TSP), 5);
  const auto id = s.model.ids().logit_k;
  s.model.params().value(id)[0] = std::numeric_limits<double>::quiet_NaN();
  EXPECT_THROW(train(c, s), NumericError);
}

TEST(Train, ConfigValidation) {
  TrainConfig c;
  c.batch_size = 0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.tau_decay = 0.0;
  EXPECT_THROW(c.validate(), ConfigError);
  c = TrainConfig{};
  c.problem_size = 1;
  EXPECT_ANY_THROW(c.validate());
}

TEST(Adam, FirstStepMovesByLearningRate) {
  diffnum::ParamSet ps;
  ps.add("w", Array(1, 3, {1.0, -2.0, 0.5}));
  Adam adam(0.1, 0.9, 0.999, 1e-8, 0.0);
  Gradients g = {Array(1, 3, {3.0, -0.5, 0.0})};
  adam.step(ps, g);
  EXPECT_NEAR(ps.value(0)[0], 0.9, 1e-8);
  EXPECT_NEAR(ps.value(0)[1], -1.9, 1e-8);
  EXPECT_EQ(ps.value(0)[2], 0.5);
  EXPECT_EQ(adam.steps(), 1);
}

}  // namespace
}  // namespace lgs
