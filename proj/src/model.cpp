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

#include "lgs/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numbers>
#include <string>

#include "lgs/errors.hpp"

namespace lgs {

using diffnum::Array;
using diffnum::ParamSet;
using diffnum::Tape;
using diffnum::Var;

namespace {

constexpr std::size_t kUnused = std::numeric_limits<std::size_t>::max();

}  // namespace

void ModelConfig::validate() const {
  auto require = [](bool ok, const std::string& what) {
    if (!ok) throw ConfigError("model config: " + what);
  };
  require(d_h > 0, "d_h must be positive");
  require(n_heads > 0, "n_heads must be positive");
  require(d_h % n_heads == 0, "d_h must be divisible by n_heads");
  require(n_layers >= 0, "n_layers must be non-negative");
  require(d_ff > 0, "d_ff must be positive");
  require(d_k > 0, "d_k must be positive");
  require(d_z > 0, "d_z must be positive");
  require(latent_hidden > 0, "latent_hidden must be positive");
  require(omega > 0.0, "omega must be positive");
  require(norm_eps > 0.0, "norm_eps must be positive");
}

ModelConfig full_scale_config(ProblemKind kind) {
  ModelConfig c;
  c.kind = kind;
  c.d_h = 128;
  c.n_heads = 8;
  c.n_layers = 6;
  c.d_ff = 512;
  c.d_k = 16;
  c.d_z = 100;
  c.latent_hidden = 128;
  return c;
}

ParamSet PolicyModel::layout(const ModelConfig& c, Ids& ids) {
  ParamSet p;
  const auto dh = static_cast<std::size_t>(c.d_h);
  const auto dz = static_cast<std::size_t>(c.d_z);
  const auto dff = static_cast<std::size_t>(c.d_ff);
  const auto lh = static_cast<std::size_t>(c.latent_hidden);
  auto enc = [&](const std::string& name, std::size_t r, std::size_t cols) {
    return p.add(name, Array(r, cols), kEncoder);
  };
  auto dec = [&](const std::string& name, std::size_t r, std::size_t cols) {
    return p.add(name, Array(r, cols), kDecoder);
  };
  ids.w0 = enc("enc.w0", c.input_dim(), dh);
  ids.b0 = enc("enc.b0", 1, dh);
  ids.depot_flag = c.kind == ProblemKind::CVRP ? enc("enc.depot_flag", 1, dh) : kUnused;
  ids.layers.clear();
  for (int l = 0; l < c.n_layers; ++l) {
    const std::string pre = "enc.layer" + std::to_string(l) + ".";
    LayerIds L{};
    L.w_q = enc(pre + "w_q", dh, dh);
    L.w_k = enc(pre + "w_k", dh, dh);
    L.w_v = enc(pre + "w_v", dh, dh);
    L.w_o = enc(pre + "w_o", dh, dh);
    L.norm1_gamma = enc(pre + "norm1.gamma", 1, dh);
    L.norm1_beta = enc(pre + "norm1.beta", 1, dh);
    L.ff_w1 = enc(pre + "ff.w1", dh, dff);
    L.ff_b1 = enc(pre + "ff.b1", 1, dff);
    L.ff_w2 = enc(pre + "ff.w2", dff, dh);
    L.ff_b2 = enc(pre + "ff.b2", 1, dh);
    L.norm2_gamma = enc(pre + "norm2.gamma", 1, dh);
    L.norm2_beta = enc(pre + "norm2.beta", 1, dh);
    ids.layers.push_back(L);
  }
  ids.mu_w1 = enc("enc.mu.w1", dh, lh);
  ids.mu_b1 = enc("enc.mu.b1", 1, lh);
  ids.mu_w2 = enc("enc.mu.w2", lh, dz);
  ids.mu_b2 = enc("enc.mu.b2", 1, dz);
  ids.lv_w1 = enc("enc.logvar.w1", dh, lh);
  ids.lv_b1 = enc("enc.logvar.b1", 1, lh);
  ids.lv_w2 = enc("enc.logvar.w2", lh, dz);
  ids.lv_b2 = enc("enc.logvar.b2", 1, dz);

  ids.q_latent = dec("dec.query.latent", dz, dh);
  ids.q_prev = dec("dec.query.prev", dh, dh);
  if (c.kind == ProblemKind::TSP) {
    ids.q_first = dec("dec.query.first", dh, dh);
    ids.q_capacity = kUnused;
  } else {
    ids.q_first = kUnused;
    ids.q_capacity = dec("dec.query.capacity", 1, dh);
  }
  ids.q_bias = dec("dec.query.bias", 1, dh);
  ids.glimpse_k = dec("dec.glimpse.w_k", dh, dh);
  ids.glimpse_v = dec("dec.glimpse.w_v", dh, dh);
  ids.glimpse_o = dec("dec.glimpse.w_o", dh, dh);
  ids.logit_k = dec("dec.logit.w_k", dh, dh);
  ids.placeholder_prev = dec("dec.placeholder.prev", 1, dh);
  ids.placeholder_first =
      c.kind == ProblemKind::TSP ? dec("dec.placeholder.first", 1, dh) : kUnused;
  return p;
}

PolicyModel PolicyModel::initialize(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  PolicyModel m;
  m.config_ = config;
  m.params_ = layout(config, m.ids_);
  for (std::size_t i = 0; i < m.params_.size(); ++i) {
    const std::string& name = m.params_.name(i);
    Array& v = m.params_.value(i);
    Rng rng = make_rng(seed, "init", i);
    const bool is_gamma = name.ends_with(".gamma");
    const bool is_beta = name.ends_with(".beta");
    if (is_gamma || is_beta) {
      for (auto& x : v.data()) x = is_gamma ? 1.0 : 0.0;
      continue;
    }
    double bound = 1.0;
    if (name.find("placeholder") == std::string::npos && name.find("depot_flag") == std::string::npos) {
      // A [1 x c] tensor is the bias of the weight registered just before it.
      const std::size_t fan_in = v.rows() == 1 && i > 0 ? m.params_.value(i - 1).rows() : v.rows();
      bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
    }
    for (auto& x : v.data()) x = bound * (2.0 * uniform01(rng) - 1.0);
  }
  return m;
}

PolicyModel::PolicyModel(ModelConfig config, ParamSet params) : config_(config) {
  config_.validate();
  ParamSet expected = layout(config_, ids_);
  if (expected.size() != params.size()) {
    throw ConfigError("checkpoint has " + std::to_string(params.size()) +
                      " parameters, config expects " + std::to_string(expected.size()));
  }
  for (std::size_t i = 0; i < expected.size(); ++i) {
    if (expected.name(i) != params.name(i) ||
        expected.value(i).shape() != params.value(i).shape()) {
      throw ConfigError("parameter " + std::to_string(i) + " is '" + params.name(i) + "' " +
                        params.value(i).shape_string() + ", config expects '" + expected.name(i) +
                        "' " + expected.value(i).shape_string());
    }
  }
  for (std::size_t i = 0; i < params.size(); ++i) expected.value(i) = params.value(i);
  params_ = std::move(expected);
}

Bound bind(Tape& tape, const PolicyModel& model, GradScope scope) {
  const ParamSet& p = model.params();
  Bound out;
  out.reserve(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    const bool grad = scope == GradScope::kAll ||
                      (scope == GradScope::kDecoder && p.group(i) == kDecoder);
    out.push_back(grad && tape.recording() ? tape.parameter(i, p.value(i))
                                           : tape.constant(p.value(i)));
  }
  return out;
}

// ---- encoder ----------------------------------------------------------------

Array node_features(const ModelConfig& config, const ProblemInstance& instance) {
  if ((config.kind == ProblemKind::TSP) != (instance.kind == ProblemKind::TSP)) {
    throw ConfigError("model is for " + to_string(config.kind) + " but instance is " +
                      to_string(instance.kind));
  }
  const auto rows = static_cast<std::size_t>(instance.num_nodes());
  const auto dx = static_cast<std::size_t>(config.input_dim());
  Array x(rows, dx);
  for (std::size_t r = 0; r < rows; ++r) {
    x(r, 0) = instance.coords[r].x;
    x(r, 1) = instance.coords[r].y;
    if (dx == 3) x(r, 2) = instance.demands[r] / instance.capacity;
  }
  return x;
}

namespace {

Var feed_forward(Var x, Var w1, Var b1, Var w2, Var b2) {
  return diffnum::add_row(
      diffnum::matmul(diffnum::tanh(diffnum::add_row(diffnum::matmul(x, w1), b1)), w2), b2);
}

}  // namespace

EncodedVars encode(Tape& tape, const PolicyModel& model, const Bound& b,
                   const ProblemInstance& instance) {
  const ModelConfig& c = model.config();
  const auto& ids = model.ids();
  Var x = tape.constant(node_features(c, instance));
  Var h = diffnum::add_row(diffnum::matmul(x, b[ids.w0]), b[ids.b0]);
  if (c.kind == ProblemKind::CVRP) {
    Array onehot(x.rows(), 1);
    onehot[0] = 1.0;
    h = diffnum::add(h, diffnum::matmul(tape.constant(std::move(onehot)), b[ids.depot_flag]));
  }
  for (const auto& L : ids.layers) {
    Var att = diffnum::multi_head_attention(h, h, b[L.w_q], b[L.w_k], b[L.w_v], b[L.w_o],
                                            c.n_heads);
    Var h1 = diffnum::instance_norm(diffnum::add(h, att), b[L.norm1_gamma], b[L.norm1_beta],
                                    c.norm_eps);
    Var ff = feed_forward(h1, b[L.ff_w1], b[L.ff_b1], b[L.ff_w2], b[L.ff_b2]);
    h = diffnum::instance_norm(diffnum::add(h1, ff), b[L.norm2_gamma], b[L.norm2_beta],
                               c.norm_eps);
  }
  Var mean = diffnum::mean_axis(h, 0);
  Var mu = feed_forward(mean, b[ids.mu_w1], b[ids.mu_b1], b[ids.mu_w2], b[ids.mu_b2]);
  Var logvar = feed_forward(mean, b[ids.lv_w1], b[ids.lv_b1], b[ids.lv_w2], b[ids.lv_b2]);
  return {h, mean, mu, logvar};
}

EncoderOutputs encode(const PolicyModel& model, const ProblemInstance& instance) {
  Tape tape(false);
  Bound b = bind(tape, model, GradScope::kNone);
  EncodedVars v = encode(tape, model, b, instance);
  return {v.nodes.value(), v.mean.value(), v.mu.value(), v.logvar.value()};
}

// ---- latent -----------------------------------------------------------------

double gaussian_logdensity(std::span<const double> z, std::span<const double> mu,
                           std::span<const double> logvar) {
  if (z.size() != mu.size() || z.size() != logvar.size()) {
    throw ShapeError("gaussian_logdensity: dimension mismatch");
  }
  const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
  double s = 0.0;
  for (std::size_t j = 0; j < z.size(); ++j) {
    const double d = z[j] - mu[j];
    s += -half_log_2pi - 0.5 * logvar[j] - 0.5 * d * d * std::exp(-logvar[j]);
  }
  return s;
}

LatentSample sample_latent(std::span<const double> mu, std::span<const double> logvar,
                           std::span<const double> eps) {
  if (mu.size() != logvar.size() || mu.size() != eps.size()) {
    throw ShapeError("sample_latent: dimension mismatch");
  }
  LatentSample s;
  s.z.resize(mu.size());
  for (std::size_t j = 0; j < mu.size(); ++j) s.z[j] = mu[j] + std::exp(0.5 * logvar[j]) * eps[j];
  s.prior_logdensity = gaussian_logdensity(s.z, mu, logvar);
  return s;
}

LatentSample draw_latent(const EncoderOutputs& enc, Rng& rng) {
  std::vector<double> eps(enc.mu.size());
  for (auto& e : eps) e = standard_normal(rng);
  return sample_latent(enc.mu.data(), enc.logvar.data(), eps);
}

Var latent_logdensity(Tape& tape, Var mu, Var logvar, const Array& z) {
  const std::size_t s = z.rows();
  const double d = static_cast<double>(z.cols());
  Var diff = diffnum::add_row(tape.constant(z), diffnum::scale(mu, -1.0));
  Var sq = diffnum::mul_row(diffnum::mul(diff, diff), diffnum::exp(diffnum::scale(logvar, -1.0)));
  Var quad = diffnum::sum_axis(sq, 1);  // [S x 1]
  Var logdet = diffnum::matmul(tape.constant(Array(s, 1, 1.0)), diffnum::sum(logvar));
  return diffnum::add_scalar(diffnum::scale(diffnum::add(quad, logdet), -0.5),
                             -0.5 * d * std::log(2.0 * std::numbers::pi));
}

// ---- decoder ----------------------------------------------------------------

DecoderCache prepare_decoder(Tape& /*tape*/, const PolicyModel& model, const Bound& b, Var nodes) {
  const ModelConfig& c = model.config();
  const auto& ids = model.ids();
  DecoderCache cache;
  cache.node_rows = static_cast<int>(nodes.rows());
  cache.glimpse_keys = diffnum::matmul(nodes, b[ids.glimpse_k]);
  cache.glimpse_values = diffnum::matmul(nodes, b[ids.glimpse_v]);
  // q . k_i with q = g W_o equals g . (k_i W_o^T).
  cache.logit_keys = diffnum::matmul_nt(diffnum::matmul(nodes, b[ids.logit_k]), b[ids.glimpse_o]);
  const Var prev_rows[] = {b[ids.placeholder_prev], nodes};
  cache.prev_proj = diffnum::matmul(diffnum::concat_rows(prev_rows), b[ids.q_prev]);
  if (c.kind == ProblemKind::TSP) {
    const Var first_rows[] = {b[ids.placeholder_first], nodes};
    cache.first_proj = diffnum::matmul(diffnum::concat_rows(first_rows), b[ids.q_first]);
  } else {
    cache.capacity_w = b[ids.q_capacity];
  }
  cache.query_bias = b[ids.q_bias];
  return cache;
}

Var latent_projection(Tape& tape, const PolicyModel& model, const Bound& b, const Array& z_rows) {
  if (z_rows.cols() != static_cast<std::size_t>(model.config().d_z)) {
    throw ConfigError("latent has width " + std::to_string(z_rows.cols()) + ", model d_z is " +
                      std::to_string(model.config().d_z));
  }
  return diffnum::matmul(tape.constant(z_rows), b[model.ids().q_latent]);
}

void StepBatch::append(const ProblemInstance& instance, const RouteState& state, int latent_row) {
  latent_rows.push_back(latent_row);
  const bool started = state.steps() > 0;
  prev_rows.push_back(started ? instance.row_of(state.position()) + 1 : 0);
  if (instance.kind == ProblemKind::TSP) {
    first_rows.push_back(started ? instance.row_of(state.first()) + 1 : 0);
  } else {
    capacity.push_back(state.remaining_capacity() / instance.capacity);
  }
  const int rows = instance.num_nodes();
  for (int r = 0; r < rows; ++r) mask.push_back(state.allowed(instance.label_of(r)) ? 1 : 0);
}

Var step_probabilities(Tape& tape, const PolicyModel& model, const DecoderCache& cache,
                       Var latent_proj, const StepBatch& batch) {
  const ModelConfig& c = model.config();
  Var q = diffnum::add(diffnum::gather_rows(cache.prev_proj, batch.prev_rows),
                       diffnum::gather_rows(latent_proj, batch.latent_rows));
  if (c.kind == ProblemKind::TSP) {
    q = diffnum::add(q, diffnum::gather_rows(cache.first_proj, batch.first_rows));
  } else {
    Var cap = tape.constant(Array::column(batch.capacity));
    q = diffnum::add(q, diffnum::matmul(cap, cache.capacity_w));
  }
  q = diffnum::add_row(q, cache.query_bias);
  auto mask = std::make_shared<const std::vector<std::uint8_t>>(batch.mask);
  Var glimpse = diffnum::attention(q, cache.glimpse_keys, cache.glimpse_values, c.n_heads, mask);
  Var compat = diffnum::scale(diffnum::matmul_nt(glimpse, cache.logit_keys),
                              1.0 / std::sqrt(static_cast<double>(c.d_k)));
  Var logits = diffnum::scale(diffnum::tanh(compat), c.omega);
  return diffnum::masked_softmax(logits, mask);
}

Var sequence_log_probs(Tape& tape, const PolicyModel& model, const DecoderCache& cache,
                       Var latent_proj, const ProblemInstance& instance,
                       std::span<const std::vector<int>> visits) {
  StepBatch batch;
  std::vector<int> chosen;
  std::vector<int> lengths;
  for (std::size_t s = 0; s < visits.size(); ++s) {
    RouteState state(instance);
    for (int label : visits[s]) {
      if (!state.allowed(label)) state.apply(label);  // throws with the reason
      batch.append(instance, state, static_cast<int>(s));
      chosen.push_back(instance.row_of(label));
      state.apply(label);
    }
    if (!state.done()) validate_solution(instance, visits[s]);
    lengths.push_back(static_cast<int>(visits[s].size()));
  }
  Var probs = step_probabilities(tape, model, cache, latent_proj, batch);
  return diffnum::segment_sum(diffnum::log(diffnum::pick(probs, chosen)), lengths);
}

// ---- Policy -----------------------------------------------------------------

Policy::Policy(const PolicyModel& model, const ProblemInstance& instance)
    : model_(&model), instance_(&instance) {
  bound_ = bind(tape_, model, GradScope::kNone);
  EncodedVars v = encode(tape_, model, bound_, instance);
  enc_ = {v.nodes.value(), v.mean.value(), v.mu.value(), v.logvar.value()};
  cache_ = prepare_decoder(tape_, model, bound_, v.nodes);
  base_mark_ = tape_.mark();
}

Policy::Policy(const PolicyModel& model, const ProblemInstance& instance, EncoderOutputs frozen)
    : model_(&model), instance_(&instance), enc_(std::move(frozen)) {
  if (enc_.nodes.rows() != static_cast<std::size_t>(instance.num_nodes())) {
    throw ConfigError("frozen encoder outputs have " + std::to_string(enc_.nodes.rows()) +
                      " rows for an instance with " + std::to_string(instance.num_nodes()) +
                      " nodes");
  }
  bound_ = bind(tape_, model, GradScope::kNone);
  cache_ = prepare_decoder(tape_, model, bound_, tape_.constant(enc_.nodes));
  base_mark_ = tape_.mark();
}

std::vector<double> Policy::step_distribution(std::span<const double> z, const RouteState& state) {
  const ProblemInstance& inst = *instance_;
  Var zp = latent_projection(tape_, *model_, bound_, Array::row({z.begin(), z.end()}));
  StepBatch batch;
  batch.append(inst, state, 0);
  const bool any = std::any_of(batch.mask.begin(), batch.mask.end(), [](auto m) { return m != 0; });
  if (!any) {
    tape_.rewind(base_mark_);
    throw FeasibilityError("no admissible node at step " + std::to_string(state.steps() + 1));
  }
  Var probs = step_probabilities(tape_, *model_, cache_, zp, batch);
  std::vector<double> out(inst.num_labels(), 0.0);
  for (int r = 0; r < inst.num_nodes(); ++r) out[inst.label_of(r)] = probs.value()[r];
  tape_.rewind(base_mark_);
  return out;
}

RolloutResult Policy::rollout(std::span<const double> z, Rng& rng, DecodeMode mode) {
  Array zr = Array::row({z.begin(), z.end()});
  return std::move(rollout_batch(zr, std::span<Rng>(&rng, 1), mode).front());
}

std::vector<RolloutResult> Policy::rollout_batch(const Array& z_rows, std::span<Rng> rngs,
                                                 DecodeMode mode) {
  const ProblemInstance& inst = *instance_;
  const std::size_t count = z_rows.rows();
  if (rngs.size() != count) throw ShapeError("rollout_batch: one rng per latent row required");
  std::vector<RolloutResult> results(count);
  std::vector<RouteState> states(count, RouteState(inst));
  Var zp = latent_projection(tape_, *model_, bound_, z_rows);
  const std::size_t step_mark = tape_.mark();
  const int cap = states.empty() ? 0 : states[0].max_steps();
  const int rows = inst.num_nodes();
  std::vector<int> active;
  for (int step = 0;; ++step) {
    active.clear();
    for (std::size_t k = 0; k < count; ++k) {
      if (!states[k].done()) active.push_back(static_cast<int>(k));
    }
    if (active.empty()) break;
    if (step >= cap) {
      tape_.rewind(base_mark_);
      throw NumericError("rollout exceeded the step cap of " + std::to_string(cap));
    }
    StepBatch batch;
    for (int k : active) batch.append(inst, states[k], k);
    Var probs = step_probabilities(tape_, *model_, cache_, zp, batch);
    const Array& p = probs.value();
    for (std::size_t i = 0; i < active.size(); ++i) {
      const int k = active[i];
      const double* pr = p.row_ptr(i);
      int pick = -1;
      if (mode == DecodeMode::kGreedy) {
        for (int r = 0; r < rows; ++r) {
          if (batch.mask[i * rows + r] && (pick < 0 || pr[r] > pr[pick])) pick = r;
        }
      } else {
        const double u = uniform01(rngs[k]);
        double cum = 0.0;
        for (int r = 0; r < rows; ++r) {
          if (!batch.mask[i * rows + r]) continue;
          cum += pr[r];
          pick = r;
          if (u < cum) break;
        }
      }
      if (pick < 0) {
        tape_.rewind(base_mark_);
        throw FeasibilityError("no admissible node at step " + std::to_string(step + 1));
      }
      double h = 0.0;
      for (int r = 0; r < rows; ++r) {
        if (pr[r] > 0.0) h -= pr[r] * std::log(pr[r]);
      }
      RolloutResult& res = results[k];
      res.log_prob += std::log(pr[pick]);
      res.entropy += h;
      const int label = inst.label_of(pick);
      res.solution.visits.push_back(label);
      states[k].apply(label);
    }
    tape_.rewind(step_mark);
  }
  tape_.rewind(base_mark_);
  for (auto& r : results) r.solution.cost = route_length(inst, r.solution.visits);
  return results;
}

double Policy::log_prob(std::span<const double> z, std::span<const int> visits) {
  Var zp = latent_projection(tape_, *model_, bound_, Array::row({z.begin(), z.end()}));
  const std::vector<int> seq(visits.begin(), visits.end());
  double v = 0.0;
  try {
    v = sequence_log_probs(tape_, *model_, cache_, zp, *instance_, std::span(&seq, 1)).value()[0];
  } catch (...) {
    tape_.rewind(base_mark_);
    throw;
  }
  tape_.rewind(base_mark_);
  return v;
}

LogProbGradient log_prob_gradient(const PolicyModel& model, const ProblemInstance& instance,
                                  const EncoderOutputs& frozen, std::span<const double> z,
                                  std::span<const int> visits, GradScope scope) {
  Tape tape(true);
  Bound b = bind(tape, model, scope);
  Var nodes = scope == GradScope::kAll ? encode(tape, model, b, instance).nodes
                                       : tape.constant(frozen.nodes);
  DecoderCache cache = prepare_decoder(tape, model, b, nodes);
  Var zp = latent_projection(tape, model, b, Array::row({z.begin(), z.end()}));
  const std::vector<int> seq(visits.begin(), visits.end());
  Var lp = diffnum::sum(sequence_log_probs(tape, model, cache, zp, instance, std::span(&seq, 1)));
  LogProbGradient out;
  out.value = lp.value().item();
  out.grad = tape.gradient(lp, model.params().size());
  return out;
}

}  // namespace lgs
