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

#include "lgs/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <functional>

#include "lgs/errors.hpp"
#include "lgs/inference.hpp"

namespace lgs::verify {

using diffnum::Array;
using diffnum::Gradients;
using diffnum::Mask;
using diffnum::Tape;
using diffnum::Var;

void Report::add(std::string name, double value, double threshold, bool below) {
  Case c{std::move(name), value, threshold, below, below ? value < threshold : value > threshold};
  passed = passed && c.passed;
  cases.push_back(std::move(c));
}

namespace {

const std::vector<std::string> kSuites = {"balance", "stationarity", "normalization",
                                          "gradients", "convergence"};

Array random_array(std::size_t r, std::size_t c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Array a(r, c);
  for (double& v : a.data()) v = lo + (hi - lo) * uniform01(rng);
  return a;
}

using Builder = std::function<Var(Tape&, const std::vector<Var>&)>;

// Loss = sum(f(inputs) * R) for a fixed random R.
double fd_error(const std::vector<Array>& inputs, const Builder& f, Rng& rng) {
  Array weights;
  Gradients grads;
  {
    Tape tape(true);
    std::vector<Var> vars;
    for (std::size_t i = 0; i < inputs.size(); ++i) vars.push_back(tape.parameter(i, inputs[i]));
    Var out = f(tape, vars);
    weights = random_array(out.rows(), out.cols(), rng);
    Var loss = diffnum::sum(diffnum::mul(out, tape.constant(weights)));
    grads = tape.gradient(loss, inputs.size());
  }
  auto value = [&](const std::vector<Array>& xs) {
    Tape tape(false);
    std::vector<Var> vars;
    for (const auto& x : xs) vars.push_back(tape.constant(x));
    Var out = f(tape, vars);
    return diffnum::sum(diffnum::mul(out, tape.constant(weights))).value().item();
  };
  const double h = 1e-6;
  std::vector<double> analytic, numeric;
  std::vector<Array> xs = inputs;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    for (std::size_t j = 0; j < xs[i].size(); ++j) {
      const double keep = xs[i][j];
      xs[i][j] = keep + h;
      const double up = value(xs);
      xs[i][j] = keep - h;
      const double down = value(xs);
      xs[i][j] = keep;
      numeric.push_back((up - down) / (2.0 * h));
      analytic.push_back(grads[i].empty() ? 0.0 : grads[i][j]);
    }
  }
  return oracle::relative_error(analytic, numeric);
}

Mask make_mask(std::size_t rows, std::size_t cols, Rng& rng) {
  auto m = std::make_shared<std::vector<std::uint8_t>>(rows * cols);
  for (std::size_t r = 0; r < rows; ++r) {
    for (std::size_t c = 0; c < cols; ++c) (*m)[r * cols + c] = uniform01(rng) < 0.7;
    (*m)[r * cols + r % cols] = 1;
  }
  return m;
}

}  // namespace

const std::vector<std::string>& suite_names() { return kSuites; }

std::vector<PrimitiveCheck> primitive_gradient_checks(std::uint64_t seed) {
  Rng rng = make_rng(seed, "primitive-fd");
  auto R = [&](std::size_t r, std::size_t c) { return random_array(r, c, rng); };
  std::vector<PrimitiveCheck> out;
  auto check = [&](const std::string& name, std::vector<Array> in, const Builder& f) {
    out.push_back({name, fd_error(in, f, rng)});
  };
  using V = const std::vector<Var>&;
  check("matmul", {R(3, 4), R(4, 2)}, [](Tape&, V v) { return diffnum::matmul(v[0], v[1]); });
  check("matmul_nt", {R(3, 4), R(2, 4)}, [](Tape&, V v) { return diffnum::matmul_nt(v[0], v[1]); });
  check("add", {R(3, 4), R(3, 4)}, [](Tape&, V v) { return diffnum::add(v[0], v[1]); });
  check("sub", {R(3, 4), R(3, 4)}, [](Tape&, V v) { return diffnum::sub(v[0], v[1]); });
  check("mul", {R(3, 4), R(3, 4)}, [](Tape&, V v) { return diffnum::mul(v[0], v[1]); });
  check("add_row", {R(3, 4), R(1, 4)}, [](Tape&, V v) { return diffnum::add_row(v[0], v[1]); });
  check("mul_row", {R(3, 4), R(1, 4)}, [](Tape&, V v) { return diffnum::mul_row(v[0], v[1]); });
  check("scale", {R(3, 4)}, [](Tape&, V v) { return diffnum::scale(v[0], 1.7); });
  check("add_scalar", {R(3, 4)}, [](Tape&, V v) { return diffnum::add_scalar(v[0], -0.3); });
  check("concat_cols", {R(3, 2), R(3, 3)}, [](Tape&, V v) { return diffnum::concat_cols(v); });
  check("concat_rows", {R(2, 3), R(1, 3)}, [](Tape&, V v) { return diffnum::concat_rows(v); });
  check("slice_cols", {R(3, 5)}, [](Tape&, V v) { return diffnum::slice_cols(v[0], 1, 2); });
  check("gather_rows", {R(4, 3)}, [](Tape&, V v) {
    const std::vector<int> rows = {2, 0, 2, 3};
    return diffnum::gather_rows(v[0], rows);
  });
  check("pick", {R(3, 4)}, [](Tape&, V v) {
    const std::vector<int> cols = {1, 3, 0};
    return diffnum::pick(v[0], cols);
  });
  check("tanh", {R(3, 4)}, [](Tape&, V v) { return diffnum::tanh(v[0]); });
  check("exp", {R(3, 4)}, [](Tape&, V v) { return diffnum::exp(v[0]); });
  check("log", {random_array(3, 4, rng, 0.5, 2.0)}, [](Tape&, V v) { return diffnum::log(v[0]); });
  const Mask mask = make_mask(3, 5, rng);
  check("masked_softmax", {R(3, 5)},
        [mask](Tape&, V v) { return diffnum::masked_softmax(v[0], mask); });
  check("softmax", {R(3, 4)}, [](Tape&, V v) { return diffnum::softmax(v[0]); });
  check("sum", {R(3, 4)}, [](Tape&, V v) { return diffnum::sum(v[0]); });
  check("sum_axis0", {R(3, 4)}, [](Tape&, V v) { return diffnum::sum_axis(v[0], 0); });
  check("sum_axis1", {R(3, 4)}, [](Tape&, V v) { return diffnum::sum_axis(v[0], 1); });
  check("mean_axis0", {R(3, 4)}, [](Tape&, V v) { return diffnum::mean_axis(v[0], 0); });
  check("mean_axis1", {R(3, 4)}, [](Tape&, V v) { return diffnum::mean_axis(v[0], 1); });
  check("segment_sum", {R(6, 1)}, [](Tape&, V v) {
    const std::vector<int> lengths = {2, 1, 3};
    return diffnum::segment_sum(v[0], lengths);
  });
  check("instance_norm", {R(5, 3), R(1, 3), R(1, 3)},
        [](Tape&, V v) { return diffnum::instance_norm(v[0], v[1], v[2], 1e-5); });
  const Mask amask = make_mask(3, 5, rng);
  check("attention", {R(3, 4), R(5, 4), R(5, 4)},
        [amask](Tape&, V v) { return diffnum::attention(v[0], v[1], v[2], 2, amask); });
  check("multi_head_attention", {R(3, 4), R(5, 4), R(4, 4), R(4, 4), R(4, 4), R(4, 4)},
        [amask](Tape&, V v) {
          return diffnum::multi_head_attention(v[0], v[1], v[2], v[3], v[4], v[5], 2, amask);
        });
  return out;
}

double log_prob_gradient_error(ProblemKind kind, int n, std::uint64_t seed, std::size_t stride) {
  ModelConfig mc;
  mc.kind = kind;
  PolicyModel model = PolicyModel::initialize(mc, derive_seed(seed, "fd-model"));
  const ProblemInstance inst = generate_instance(kind, n, derive_seed(seed, "fd-instance"));
  const EncoderOutputs enc = encode(model, inst);
  Rng rng = make_rng(seed, "fd-rollout");
  const LatentSample z = draw_latent(enc, rng);
  std::vector<int> visits;
  {
    Policy policy(model, inst, enc);
    visits = policy.rollout(z.z, rng, DecodeMode::kSample).solution.visits;
  }
  const LogProbGradient g = log_prob_gradient(model, inst, enc, z.z, visits, GradScope::kAll);
  auto value = [&](const PolicyModel& m) {
    Policy policy(m, inst);
    return policy.log_prob(z.z, visits);
  };
  const double h = 1e-6;
  PolicyModel probe = model;
  std::vector<double> analytic, numeric;
  for (std::size_t i = 0; i < probe.params().size(); ++i) {
    auto theta = probe.params().value(i).data();
    // Offset by i so small tensors are not always probed at entry 0 only.
    for (std::size_t j = i % stride; j < theta.size(); j += stride) {
      const double keep = theta[j];
      theta[j] = keep + h;
      const double up = value(probe);
      theta[j] = keep - h;
      const double down = value(probe);
      theta[j] = keep;
      numeric.push_back((up - down) / (2.0 * h));
      analytic.push_back(g.grad[i].empty() ? 0.0 : g.grad[i][j]);
    }
  }
  return oracle::relative_error(analytic, numeric);
}

HarnessSetup harness_setup(std::uint64_t seed) {
  ModelConfig mc;
  mc.d_z = 2;
  PolicyModel model = PolicyModel::initialize(mc, derive_seed(seed, "harness-model"));
  ProblemInstance inst = generate_instance(ProblemKind::TSP, 4, derive_seed(seed, "harness-instance"));
  EncoderOutputs enc = encode(model, inst);
  return HarnessSetup{std::move(model), std::move(inst), std::move(enc)};
}

namespace {

std::size_t corner_state(const oracle::GridHarness& h) {
  std::size_t best = 0;
  for (std::size_t t = 1; t < h.tours(); ++t) {
    if (h.policy(0, t) > h.policy(0, best)) best = t;
  }
  return best;
}

std::vector<double> histogram(const std::vector<std::uint32_t>& states, std::size_t size) {
  std::vector<double> out(size, 0.0);
  for (auto s : states) out[s] += 1.0;
  for (double& v : out) v /= static_cast<double>(states.size());
  return out;
}

}  // namespace

ChainConvergence empirical_convergence(const oracle::GridHarness& harness, int chains, int steps,
                                       std::uint64_t seed) {
  Rng rng = make_rng(seed, "chains");
  const auto& pi = harness.target().probabilities;
  std::vector<std::uint32_t> states(chains, static_cast<std::uint32_t>(corner_state(harness)));
  ChainConvergence out;
  for (int m = 1; m <= steps; ++m) {
    for (auto& s : states) s = static_cast<std::uint32_t>(harness.step(s, rng));
    out.tv.push_back(oracle::tv_distance(histogram(states, harness.states()), pi));
  }
  // Fit over the steps before TV first drops below 0.1, well above the
  // sampling noise floor.
  int end = 0;
  while (end < steps && out.tv[end] >= 0.1) ++end;
  out.transient = end;
  if (end >= 2) {
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (int i = 0; i < end; ++i) {
      const double x = i + 1, y = std::log(out.tv[i]);
      sx += x;
      sy += y;
      sxx += x * x;
      sxy += x * y;
    }
    out.slope = (end * sxy - sx * sy) / (end * sxx - sx * sx);
  }
  out.final_tv = out.tv.empty() ? 1.0 : out.tv.back();
  return out;
}

AdaptiveConvergence adaptive_convergence(const HarnessSetup& setup, int particles, int steps,
                                         double gamma0, std::uint64_t seed) {
  PolicyModel model = setup.model;
  oracle::GridHarness harness(model, setup.instance, setup.encoder, kGridPoints, kGridLambda);
  const auto initial_target = harness.target().probabilities;
  const InferenceConfig defaults;
  Rng rng = make_rng(seed, "adaptive-chains");
  std::vector<std::uint32_t> states(particles, static_cast<std::uint32_t>(corner_state(harness)));
  AdaptiveConvergence out;
  const std::size_t T = harness.tours();
  for (int m = 1; m <= steps; ++m) {
    for (auto& s : states) s = static_cast<std::uint32_t>(harness.step(s, rng));
    if (!sa_due(defaults.sa_schedule, m)) continue;
    // Particles in the same state contribute identical score terms.
    const auto freq = histogram(states, harness.states());
    std::vector<Particle> distinct;
    std::vector<double> weights;
    for (std::size_t s = 0; s < freq.size(); ++s) {
      if (freq[s] == 0.0) continue;
      Particle p;
      p.z = harness.target().grid[s / T];
      p.y = make_solution(setup.instance, harness.target().tours[s % T]);
      distinct.push_back(std::move(p));
      weights.push_back(freq[s]);
    }
    const Gradients h = sa_gradient(model, setup.instance, setup.encoder, distinct, weights);
    const double gamma = gamma0 / std::sqrt(static_cast<double>(out.updates + 1));
    auto& params = model.params();
    for (std::size_t i = 0; i < params.size(); ++i) {
      if (h[i].empty()) continue;
      auto theta = params.value(i).data();
      for (std::size_t j = 0; j < theta.size(); ++j) theta[j] -= gamma * h[i][j];
    }
    ++out.updates;
    harness.refresh(model);
  }
  const auto freq = histogram(states, harness.states());
  out.tv_final = oracle::tv_distance(freq, harness.target().probabilities);
  out.tv_initial = oracle::tv_distance(freq, initial_target);
  for (std::size_t i = 0; i < model.params().size(); ++i) {
    const auto a = model.params().value(i).data();
    const auto b = setup.model.params().value(i).data();
    for (std::size_t j = 0; j < a.size(); ++j) {
      out.parameter_change = std::max(out.parameter_change, std::abs(a[j] - b[j]));
    }
  }
  return out;
}

namespace {

void suite_balance(Report& r, std::uint64_t seed) {
  const HarnessSetup s = harness_setup(seed);
  oracle::GridHarness h(s.model, s.instance, s.encoder, kGridPoints, kGridLambda);
  oracle::GridHarness corrupt(s.model, s.instance, s.encoder, kGridPoints, kGridLambda, true);
  r.add("max_relative_violation", oracle::detailed_balance_check(h, kBalancePairs, seed), 1e-10);
  r.add("negative_control_violation", oracle::detailed_balance_check(corrupt, kBalancePairs, seed),
        1e-3, false);
}

void suite_stationarity(Report& r, std::uint64_t seed) {
  const HarnessSetup s = harness_setup(seed);
  oracle::GridHarness h(s.model, s.instance, s.encoder, kGridPoints, kGridLambda);
  const auto& pi = h.target().probabilities;
  r.add("tv_pi_P_vs_pi", oracle::tv_distance(h.apply(pi), pi), 1e-10);
  const ChainConvergence c = empirical_convergence(h, kChains, kChainSteps, seed);
  r.add("empirical_tv_at_m" + std::to_string(kChainSteps), c.final_tv, 0.05);
  r.add("log_tv_slope", c.slope, 0.0);
  double tail = 0.0;
  for (std::size_t m = c.tv.size() / 2; m < c.tv.size(); ++m) tail = std::max(tail, c.tv[m]);
  r.add("max_tv_after_burn_in", tail, 0.05);
}

void suite_normalization(Report& r, std::uint64_t seed) {
  double worst = 0.0, min_step = 1.0;
  for (int i = 0; i < 50; ++i) {
    const bool tsp = i % 2 == 0;
    ModelConfig mc;
    mc.kind = tsp ? ProblemKind::TSP : ProblemKind::CVRP;
    const int n = tsp ? 3 + (i / 2) % 5 : 1 + (i / 2) % 5;
    PolicyModel model = PolicyModel::initialize(mc, derive_seed(seed, "norm-model", i));
    const ProblemInstance inst = generate_instance(mc.kind, n, derive_seed(seed, "norm-instance", i));
    const EncoderOutputs enc = encode(model, inst);
    Rng rng = make_rng(seed, "norm-latent", i);
    const LatentSample z = draw_latent(enc, rng);
    const auto d = oracle::enumerate_policy(model, inst, enc, z.z);
    worst = std::max(worst, std::abs(d.total() - 1.0));
    min_step = std::min(min_step, d.min_admissible_step);
  }
  r.add("max_abs_sum_minus_one", worst, 1e-8);
  r.add("min_admissible_step_probability", min_step, 0.0, false);
}

void suite_gradients(Report& r, std::uint64_t seed) {
  double worst = 0.0;
  for (const auto& c : primitive_gradient_checks(seed)) {
    r.add("primitive_" + c.name, c.error, 1e-6);
    worst = std::max(worst, c.error);
  }
  r.add("log_prob_tsp", log_prob_gradient_error(ProblemKind::TSP, 5, seed, 97), 1e-6);
  r.add("log_prob_cvrp", log_prob_gradient_error(ProblemKind::CVRP, 4, seed, 97), 1e-6);
  ModelConfig mc;
  PolicyModel model = PolicyModel::initialize(mc, derive_seed(seed, "pg-model"));
  const ProblemInstance inst = generate_instance(ProblemKind::TSP, 4, derive_seed(seed, "pg-instance"));
  const EncoderOutputs enc = encode(model, inst);
  Rng rng = make_rng(seed, "pg-latent");
  const LatentSample z = draw_latent(enc, rng);
  const auto a = oracle::policy_gradient_check(model, inst, enc, z.z, 2.0, 13);
  r.add("policy_gradient_check", a.max_relative_error, 1e-5);
  const auto b = oracle::policy_gradient_check(model, inst, enc, z.z, 12.0, 1000000);
  double shift = 0.0;
  for (std::size_t i = 0; i < a.exact.size(); ++i) {
    for (std::size_t j = 0; j < a.exact[i].size(); ++j) {
      shift = std::max(shift, std::abs(a.exact[i][j] - b.exact[i][j]));
    }
  }
  r.add("baseline_shift_difference", shift, 1e-10);
}

void suite_convergence(Report& r, std::uint64_t seed) {
  const HarnessSetup s = harness_setup(seed);
  const AdaptiveConvergence c = adaptive_convergence(s, 100000, 400, 0.5, seed);
  r.add("tv_to_final_target", c.tv_final, 0.1);
  r.add("sa_updates", c.updates, 0.0, false);
  r.add("parameter_change", c.parameter_change, 0.0, false);
}

}  // namespace

Report run_suite(const std::string& name, std::uint64_t seed) {
  const auto start = std::chrono::steady_clock::now();
  Report r;
  r.suite = name;
  if (name == "balance") {
    suite_balance(r, seed);
  } else if (name == "stationarity") {
    suite_stationarity(r, seed);
  } else if (name == "normalization") {
    suite_normalization(r, seed);
  } else if (name == "gradients") {
    suite_gradients(r, seed);
  } else if (name == "convergence") {
    suite_convergence(r, seed);
  } else {
    std::string all;
    for (const auto& s : kSuites) all += (all.empty() ? "" : ", ") + s;
    throw ArgumentError("unknown suite '" + name + "' (expected one of: " + all + ")");
  }
  r.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - start)
                  .count();
  return r;
}

}  // namespace lgs::verify
