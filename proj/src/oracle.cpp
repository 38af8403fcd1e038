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

#include "lgs/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>

#include "lgs/errors.hpp"
#include "lgs/inference.hpp"

namespace lgs::oracle {

using diffnum::Array;
using diffnum::Gradients;
using diffnum::Tape;
using diffnum::Var;

Solution brute_force_tsp(const ProblemInstance& instance) {
  if (instance.kind != ProblemKind::TSP) throw ArgumentError("brute_force_tsp: not a TSP instance");
  const int n = instance.n;
  if (n > kMaxBruteForceTsp) {
    throw SizeError("brute_force_tsp: n = " + std::to_string(n) + " exceeds " +
                    std::to_string(kMaxBruteForceTsp));
  }
  std::vector<int> rest(n - 1);
  std::iota(rest.begin(), rest.end(), 2);
  std::vector<int> best;
  double best_cost = std::numeric_limits<double>::infinity();
  std::vector<int> tour(n);
  tour[0] = 1;
  do {
    // Each cycle appears twice (once per direction); keep one.
    if (rest.size() >= 2 && rest.front() > rest.back()) continue;
    std::copy(rest.begin(), rest.end(), tour.begin() + 1);
    const double c = route_length(instance, tour);
    if (c < best_cost) {
      best_cost = c;
      best = tour;
    }
  } while (std::next_permutation(rest.begin(), rest.end()));
  return Solution{best, best_cost};
}

Solution brute_force_cvrp(const ProblemInstance& instance) {
  if (instance.kind != ProblemKind::CVRP) {
    throw ArgumentError("brute_force_cvrp: not a CVRP instance");
  }
  const int n = instance.n;
  if (n > kMaxBruteForceCvrp) {
    throw SizeError("brute_force_cvrp: " + std::to_string(n) + " customers exceeds " +
                    std::to_string(kMaxBruteForceCvrp));
  }
  const int full = (1 << n) - 1;
  const double inf = std::numeric_limits<double>::infinity();
  auto d = [&](int a, int b) { return distance(instance.at(a), instance.at(b)); };

  // path[mask][j]: shortest depot -> ... -> customer j+1 covering `mask`.
  std::vector<std::vector<double>> path(full + 1, std::vector<double>(n, inf));
  std::vector<std::vector<int>> from(full + 1, std::vector<int>(n, -1));
  for (int j = 0; j < n; ++j) path[1 << j][j] = d(0, j + 1);
  for (int mask = 1; mask <= full; ++mask) {
    for (int j = 0; j < n; ++j) {
      if (!(mask & (1 << j)) || path[mask][j] == inf) continue;
      for (int k = 0; k < n; ++k) {
        if (mask & (1 << k)) continue;
        const int next = mask | (1 << k);
        const double c = path[mask][j] + d(j + 1, k + 1);
        if (c < path[next][k]) {
          path[next][k] = c;
          from[next][k] = j;
        }
      }
    }
  }
  std::vector<double> route(full + 1, inf);
  std::vector<int> route_end(full + 1, -1);
  for (int mask = 1; mask <= full; ++mask) {
    double demand = 0.0;
    for (int j = 0; j < n; ++j) {
      if (mask & (1 << j)) demand += instance.demands[j + 1];
    }
    if (demand > instance.capacity + 1e-12) continue;
    for (int j = 0; j < n; ++j) {
      if (!(mask & (1 << j))) continue;
      const double c = path[mask][j] + d(j + 1, 0);
      if (c < route[mask]) {
        route[mask] = c;
        route_end[mask] = j;
      }
    }
  }
  // Set partitions: the route holding the lowest unserved customer first.
  std::vector<double> best(full + 1, inf);
  std::vector<int> choice(full + 1, 0);
  best[0] = 0.0;
  for (int mask = 1; mask <= full; ++mask) {
    const int low = mask & -mask;
    for (int sub = mask; sub > 0; sub = (sub - 1) & mask) {
      if (!(sub & low) || route[sub] == inf || best[mask ^ sub] == inf) continue;
      const double c = route[sub] + best[mask ^ sub];
      if (c < best[mask]) {
        best[mask] = c;
        choice[mask] = sub;
      }
    }
  }
  if (best[full] == inf) throw FeasibilityError("brute_force_cvrp: no feasible partition");
  std::vector<int> visits;
  for (int mask = full; mask != 0; mask ^= choice[mask]) {
    const int sub = choice[mask];
    std::vector<int> order;
    for (int m = sub, j = route_end[sub]; j >= 0;) {
      order.push_back(j + 1);
      const int prev = from[m][j];
      m ^= 1 << j;
      j = prev;
    }
    visits.insert(visits.end(), order.rbegin(), order.rend());
    visits.push_back(0);
  }
  return Solution{visits, route_length(instance, visits)};
}

Solution brute_force(const ProblemInstance& instance) {
  return instance.kind == ProblemKind::TSP ? brute_force_tsp(instance)
                                           : brute_force_cvrp(instance);
}

double TourDistribution::total() const {
  double s = 0.0;
  for (double p : probabilities) s += p;
  return s;
}

TourDistribution enumerate_policy(const PolicyModel& model, const ProblemInstance& instance,
                                  const EncoderOutputs& encoder, std::span<const double> z) {
  const int limit = instance.kind == ProblemKind::TSP ? kMaxEnumerateTsp : kMaxEnumerateCvrp;
  if (instance.n > limit) {
    throw SizeError("enumerate_policy: n = " + std::to_string(instance.n) + " exceeds " +
                    std::to_string(limit) + " for " + to_string(instance.kind));
  }
  Tape tape(false);
  Bound b = bind(tape, model, GradScope::kNone);
  DecoderCache cache = prepare_decoder(tape, model, b, tape.constant(encoder.nodes));
  Var zp = latent_projection(tape, model, b, Array::row({z.begin(), z.end()}));
  const std::size_t base = tape.mark();

  struct Node {
    RouteState state;
    std::vector<int> visits;
    double p;
  };
  TourDistribution out;
  std::vector<Node> frontier{Node{RouteState(instance), {}, 1.0}};
  const int rows = instance.num_nodes();
  constexpr std::size_t kChunk = 1024;
  while (!frontier.empty()) {
    std::vector<Node> next;
    for (std::size_t lo = 0; lo < frontier.size(); lo += kChunk) {
      const std::size_t hi = std::min(frontier.size(), lo + kChunk);
      StepBatch batch;
      for (std::size_t i = lo; i < hi; ++i) batch.append(instance, frontier[i].state, 0);
      const Array probs = step_probabilities(tape, model, cache, zp, batch).value();
      tape.rewind(base);
      for (std::size_t i = lo; i < hi; ++i) {
        const Node& node = frontier[i];
        for (int r = 0; r < rows; ++r) {
          if (!batch.mask[(i - lo) * rows + r]) continue;
          const double p = probs(i - lo, r);
          out.min_admissible_step = std::min(out.min_admissible_step, p);
          Node child{node.state, node.visits, node.p * p};
          const int label = instance.label_of(r);
          child.state.apply(label);
          child.visits.push_back(label);
          if (child.state.done()) {
            out.tours.push_back(std::move(child.visits));
            out.probabilities.push_back(child.p);
          } else {
            next.push_back(std::move(child));
          }
        }
      }
    }
    frontier = std::move(next);
  }
  // Lexicographic order, independent of sequence length.
  std::vector<std::size_t> order(out.tours.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(),
            [&](std::size_t a, std::size_t c) { return out.tours[a] < out.tours[c]; });
  TourDistribution sorted;
  sorted.min_admissible_step = out.min_admissible_step;
  for (std::size_t i : order) {
    sorted.tours.push_back(std::move(out.tours[i]));
    sorted.probabilities.push_back(out.probabilities[i]);
  }
  return sorted;
}

TourDistribution canonical_tours(const TourDistribution& dist) {
  TourDistribution out;
  out.min_admissible_step = dist.min_admissible_step;
  std::map<std::vector<int>, std::size_t> index;
  for (std::size_t i = 0; i < dist.tours.size(); ++i) {
    std::vector<int> t = dist.tours[i];
    auto it = std::find(t.begin(), t.end(), 1);
    if (it == t.end()) throw ArgumentError("canonical_tours: sequence without label 1");
    std::rotate(t.begin(), it, t.end());
    auto [pos, inserted] = index.try_emplace(t, out.tours.size());
    if (inserted) {
      out.tours.push_back(t);
      out.probabilities.push_back(0.0);
    }
    out.probabilities[pos->second] += dist.probabilities[i];
  }
  return out;
}

std::vector<std::vector<double>> latent_grid(const EncoderOutputs& encoder, int points,
                                             double span) {
  if (encoder.mu.cols() != 2) {
    throw ConfigError("latent_grid: needs d_z = 2, got " + std::to_string(encoder.mu.cols()));
  }
  if (points < 2) throw ArgumentError("latent_grid: points must be >= 2");
  std::vector<std::vector<double>> grid;
  const double sd0 = std::exp(0.5 * encoder.logvar[0]);
  const double sd1 = std::exp(0.5 * encoder.logvar[1]);
  for (int i = 0; i < points; ++i) {
    for (int j = 0; j < points; ++j) {
      const double oi = -span + 2.0 * span * i / (points - 1);
      const double oj = -span + 2.0 * span * j / (points - 1);
      grid.push_back({encoder.mu[0] + sd0 * oi, encoder.mu[1] + sd1 * oj});
    }
  }
  return grid;
}

namespace {

struct GridTables {
  std::vector<std::vector<int>> tours;
  std::vector<double> policy;  // G x T
  std::vector<double> prior;   // log p(z_g | x)
  std::vector<double> cost;    // C(t)
};

GridTables grid_tables(const PolicyModel& model, const ProblemInstance& instance,
                       const EncoderOutputs& encoder,
                       const std::vector<std::vector<double>>& grid) {
  GridTables out;
  for (std::size_t g = 0; g < grid.size(); ++g) {
    TourDistribution d = enumerate_policy(model, instance, encoder, grid[g]);
    if (g == 0) {
      if (grid.size() * d.tours.size() > kMaxGridStates) {
        throw SizeError("exact_target_grid: " + std::to_string(grid.size()) + " x " +
                        std::to_string(d.tours.size()) + " states exceed " +
                        std::to_string(kMaxGridStates));
      }
      out.tours = d.tours;
      for (const auto& t : out.tours) out.cost.push_back(route_length(instance, t));
    }
    out.policy.insert(out.policy.end(), d.probabilities.begin(), d.probabilities.end());
    out.prior.push_back(gaussian_logdensity(grid[g], encoder.mu.values(), encoder.logvar.values()));
  }
  return out;
}

std::vector<double> target_from(const GridTables& t, double lambda) {
  const std::size_t G = t.prior.size(), T = t.tours.size();
  std::vector<double> logw(G * T, -std::numeric_limits<double>::infinity());
  double hi = -std::numeric_limits<double>::infinity();
  for (std::size_t g = 0; g < G; ++g) {
    for (std::size_t k = 0; k < T; ++k) {
      const double p = t.policy[g * T + k];
      if (p <= 0.0) continue;
      logw[g * T + k] = t.prior[g] + std::log(p) - lambda * t.cost[k];
      hi = std::max(hi, logw[g * T + k]);
    }
  }
  std::vector<double> out(G * T);
  double total = 0.0;
  for (std::size_t s = 0; s < out.size(); ++s) {
    out[s] = std::exp(logw[s] - hi);
    total += out[s];
  }
  for (double& v : out) v /= total;
  return out;
}

}  // namespace

GridDistribution exact_target_grid(const PolicyModel& model, const ProblemInstance& instance,
                                   const EncoderOutputs& encoder,
                                   const std::vector<std::vector<double>>& grid, double lambda) {
  if (grid.empty()) throw ArgumentError("exact_target_grid: empty grid");
  GridTables t = grid_tables(model, instance, encoder, grid);
  GridDistribution out;
  out.grid = grid;
  out.probabilities = target_from(t, lambda);
  out.tours = std::move(t.tours);
  return out;
}

GridHarness::GridHarness(const PolicyModel& model, const ProblemInstance& instance,
                         const EncoderOutputs& encoder, int points, double lambda,
                         bool drop_density_ratio)
    : instance_(&instance),
      encoder_(encoder),
      points_(points),
      lambda_(lambda),
      drop_density_ratio_(drop_density_ratio) {
  target_.grid = latent_grid(encoder, points);
  refresh(model);
}

void GridHarness::refresh(const PolicyModel& model) {
  GridTables t = grid_tables(model, *instance_, encoder_, target_.grid);
  target_.probabilities = target_from(t, lambda_);
  target_.tours = std::move(t.tours);
  policy_ = std::move(t.policy);
  prior_ = std::move(t.prior);
  cost_ = std::move(t.cost);
  const std::size_t T = tours();
  policy_cdf_.assign(target_.grid.size(), std::vector<double>(T));
  for (std::size_t g = 0; g < target_.grid.size(); ++g) {
    double c = 0.0;
    for (std::size_t k = 0; k < T; ++k) policy_cdf_[g][k] = c += policy_[g * T + k];
  }
}

std::vector<std::size_t> GridHarness::neighbours(std::size_t g) const {
  const int i = static_cast<int>(g) / points_, j = static_cast<int>(g) % points_;
  std::vector<std::size_t> out;
  if (i > 0) out.push_back(g - points_);
  if (i + 1 < points_) out.push_back(g + points_);
  if (j > 0) out.push_back(g - 1);
  if (j + 1 < points_) out.push_back(g + 1);
  return out;
}

double GridHarness::alpha(std::size_t s, std::size_t s2) const {
  const std::size_t T = tours();
  Particle cur, cand;
  cur.prior_logdensity = drop_density_ratio_ ? 0.0 : prior_[s / T];
  cand.prior_logdensity = drop_density_ratio_ ? 0.0 : prior_[s2 / T];
  cur.y.cost = cost_[s % T];
  cand.y.cost = cost_[s2 % T];
  return acceptance(cur, cand, lambda_);
}

std::vector<double> GridHarness::transition_row(std::size_t s) const {
  const std::size_t T = tours();
  std::vector<double> row(states(), 0.0);
  double moved = 0.0;
  for (std::size_t g2 : neighbours(s / T)) {
    for (std::size_t k = 0; k < T; ++k) {
      const std::size_t s2 = g2 * T + k;
      const double p = 0.25 * policy_[s2] * alpha(s, s2);
      row[s2] = p;
      moved += p;
    }
  }
  row[s] += 1.0 - moved;
  return row;
}

double GridHarness::transition(std::size_t s, std::size_t s2) const {
  const std::size_t T = tours();
  if (s == s2) return transition_row(s)[s];
  const auto nb = neighbours(s / T);
  if (std::find(nb.begin(), nb.end(), s2 / T) == nb.end()) return 0.0;
  return 0.25 * policy_[s2] * alpha(s, s2);
}

std::vector<double> GridHarness::apply(std::span<const double> pi) const {
  if (pi.size() != states()) throw ContractError("GridHarness::apply: length mismatch");
  std::vector<double> out(states(), 0.0);
  for (std::size_t s = 0; s < states(); ++s) {
    if (pi[s] == 0.0) continue;
    const auto row = transition_row(s);
    for (std::size_t s2 = 0; s2 < row.size(); ++s2) out[s2] += pi[s] * row[s2];
  }
  return out;
}

std::size_t GridHarness::step(std::size_t s, Rng& rng) const {
  const std::size_t T = tours();
  const int g = static_cast<int>(s / T);
  const int i = g / points_, j = g % points_;
  const int dir = static_cast<int>(uniform01(rng) * 4.0);
  int i2 = i, j2 = j;
  switch (dir) {
    case 0: --i2; break;
    case 1: ++i2; break;
    case 2: --j2; break;
    default: ++j2; break;
  }
  if (i2 < 0 || j2 < 0 || i2 >= points_ || j2 >= points_) return s;
  const std::size_t g2 = static_cast<std::size_t>(i2 * points_ + j2);
  const auto& cdf = policy_cdf_[g2];
  const double u = uniform01(rng) * cdf.back();
  std::size_t k = std::upper_bound(cdf.begin(), cdf.end(), u) - cdf.begin();
  k = std::min(k, T - 1);
  const std::size_t s2 = g2 * T + k;
  return uniform01(rng) < alpha(s, s2) ? s2 : s;
}

double detailed_balance_check(const GridHarness& harness, std::size_t pairs, std::uint64_t seed,
                              double tiny) {
  Rng rng = make_rng(seed, "balance");
  const std::size_t S = harness.states(), T = harness.tours();
  const int P = harness.points();
  const auto& pi = harness.target().probabilities;
  std::uniform_int_distribution<std::size_t> any(0, S - 1);
  std::uniform_int_distribution<std::size_t> tour(0, T - 1);
  std::uniform_int_distribution<int> dir(0, 3);
  double worst = 0.0;
  for (std::size_t n = 0; n < pairs; ++n) {
    const std::size_t s = any(rng);
    std::size_t s2;
    if (n % 10 == 9) {
      s2 = any(rng);
    } else {
      // Neighbouring grid point, so both transition probabilities can be > 0.
      const int g = static_cast<int>(s / T);
      int i = g / P, j = g % P;
      switch (dir(rng)) {
        case 0: --i; break;
        case 1: ++i; break;
        case 2: --j; break;
        default: ++j; break;
      }
      if (i < 0 || j < 0 || i >= P || j >= P) {
        s2 = s;
      } else {
        s2 = static_cast<std::size_t>(i * P + j) * T + tour(rng);
      }
    }
    const double a = pi[s] * harness.transition(s, s2);
    const double b = pi[s2] * harness.transition(s2, s);
    worst = std::max(worst, std::abs(a - b) / std::max(a, tiny));
  }
  return worst;
}

double tv_distance(std::span<const double> p, std::span<const double> q) {
  if (p.size() != q.size()) {
    throw ContractError("tv_distance: supports differ (" + std::to_string(p.size()) + " vs " +
                        std::to_string(q.size()) + ")");
  }
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) s += std::abs(p[i] - q[i]);
  return 0.5 * s;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw ContractError("relative_error: length mismatch");
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - b[i]));
    na = std::max(na, std::abs(a[i]));
    nb = std::max(nb, std::abs(b[i]));
  }
  const double scale = std::max(na, nb);
  return scale == 0.0 ? 0.0 : diff / scale;
}

namespace {

// sum_t p(t) C(t) over a fixed support.
double expected_cost(const PolicyModel& model, const ProblemInstance& instance,
                     const EncoderOutputs& encoder, std::span<const double> z,
                     const std::vector<std::vector<int>>& tours,
                     const std::vector<double>& costs) {
  Tape tape(false);
  Bound b = bind(tape, model, GradScope::kNone);
  DecoderCache cache = prepare_decoder(tape, model, b, tape.constant(encoder.nodes));
  Array zs(tours.size(), z.size());
  for (std::size_t t = 0; t < tours.size(); ++t) std::copy(z.begin(), z.end(), zs.row_ptr(t));
  Var zp = latent_projection(tape, model, b, zs);
  const Array& lp = sequence_log_probs(tape, model, cache, zp, instance, tours).value();
  double s = 0.0;
  for (std::size_t t = 0; t < tours.size(); ++t) s += std::exp(lp[t]) * costs[t];
  return s;
}

}  // namespace

GradientCheck policy_gradient_check(const PolicyModel& model, const ProblemInstance& instance,
                                    const EncoderOutputs& encoder, std::span<const double> z,
                                    double baseline, std::size_t stride, double step) {
  if (instance.n > 5) throw SizeError("policy_gradient_check: n must be <= 5");
  if (stride == 0) stride = 1;
  const TourDistribution dist = enumerate_policy(model, instance, encoder, z);
  const std::size_t T = dist.tours.size();
  std::vector<double> costs(T);
  for (std::size_t t = 0; t < T; ++t) costs[t] = route_length(instance, dist.tours[t]);

  GradientCheck out;
  {
    Tape tape(true);
    Bound b = bind(tape, model, GradScope::kDecoder);
    DecoderCache cache = prepare_decoder(tape, model, b, tape.constant(encoder.nodes));
    Array zs(T, z.size());
    for (std::size_t t = 0; t < T; ++t) std::copy(z.begin(), z.end(), zs.row_ptr(t));
    Var zp = latent_projection(tape, model, b, zs);
    Var lp = sequence_log_probs(tape, model, cache, zp, instance, dist.tours);
    std::vector<double> coef(T);
    for (std::size_t t = 0; t < T; ++t) coef[t] = dist.probabilities[t] * (costs[t] - baseline);
    Var total = diffnum::sum(mul(lp, tape.constant(Array::column(coef))));
    out.exact = tape.gradient(total, model.params().size());
  }

  PolicyModel probe = model;
  std::vector<double> analytic, numeric;
  for (std::size_t i = 0; i < probe.params().size(); ++i) {
    if (probe.params().group(i) != kDecoder) continue;
    auto theta = probe.params().value(i).data();
    for (std::size_t j = 0; j < theta.size(); j += stride) {
      const double keep = theta[j];
      theta[j] = keep + step;
      const double up = expected_cost(probe, instance, encoder, z, dist.tours, costs);
      theta[j] = keep - step;
      const double down = expected_cost(probe, instance, encoder, z, dist.tours, costs);
      theta[j] = keep;
      numeric.push_back((up - down) / (2.0 * step));
      analytic.push_back(out.exact[i].empty() ? 0.0 : out.exact[i][j]);
    }
  }
  out.components = analytic.size();
  out.max_relative_error = relative_error(analytic, numeric);
  return out;
}

}  // namespace lgs::oracle
