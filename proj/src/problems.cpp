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

#include "lgs/problems.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "lgs/errors.hpp"
#include "lgs/rng.hpp"

namespace lgs {

std::string to_string(ProblemKind kind) {
  return kind == ProblemKind::TSP ? "TSP" : "CVRP";
}

ProblemKind parse_problem_kind(const std::string& text) {
  if (text == "TSP" || text == "tsp") return ProblemKind::TSP;
  if (text == "CVRP" || text == "cvrp") return ProblemKind::CVRP;
  throw ArgumentError("unknown problem kind '" + text + "' (expected TSP or CVRP)");
}

double distance(const Point& a, const Point& b) {
  return std::hypot(a.x - b.x, a.y - b.y);
}

double cvrp_capacity(int n) {
  switch (n) {
    case 100: return 50.0;
    case 125: return 55.0;
    case 150: return 60.0;
    default: return std::round(30.0 + n / 5.0);
  }
}

ProblemInstance generate_instance(ProblemKind kind, int n, std::uint64_t seed) {
  if (kind == ProblemKind::TSP && n < 2) {
    throw ArgumentError("TSP needs n >= 2, got " + std::to_string(n));
  }
  if (kind == ProblemKind::CVRP && n < 1) {
    throw ArgumentError("CVRP needs at least one customer, got " + std::to_string(n));
  }
  ProblemInstance inst;
  inst.kind = kind;
  inst.n = n;
  inst.seed = seed;
  Rng rng = make_rng(seed, "instance");
  const int nodes = kind == ProblemKind::TSP ? n : n + 1;
  inst.coords.reserve(nodes);
  for (int i = 0; i < nodes; ++i) {
    const double x = uniform01(rng);
    const double y = uniform01(rng);
    inst.coords.push_back({x, y});
  }
  if (kind == ProblemKind::CVRP) {
    inst.capacity = cvrp_capacity(n);
    inst.demands.assign(n + 1, 0.0);
    for (int i = 1; i <= n; ++i) inst.demands[i] = 1.0 + 9.0 * uniform01(rng);
  }
  return inst;
}

// ---------------------------------------------------------------------------

RouteState::RouteState(const ProblemInstance& instance)
    : instance_(&instance), visited_(instance.n + 1, 0) {
  if (instance.kind == ProblemKind::CVRP) {
    position_ = 0;
    first_ = 0;
    remaining_ = instance.capacity;
  }
}

int RouteState::max_steps() const {
  return instance_->kind == ProblemKind::TSP ? instance_->n
                                             : 2 * instance_->n + 2;
}

bool RouteState::done() const {
  if (instance_->kind == ProblemKind::TSP) return served_ == instance_->n;
  return served_ == instance_->n && position_ == 0 && steps_ > 0;
}

bool RouteState::allowed(int label) const {
  const ProblemInstance& inst = *instance_;
  if (label < 0 || label > inst.n || done()) return false;
  if (inst.kind == ProblemKind::TSP) return label != 0 && !visited_[label];
  // No depot-to-depot moves; done() already covers the finished state.
  if (label == 0) return position_ != 0;
  return !visited_[label] && inst.demands[label] <= remaining_;
}

int RouteState::write_mask(std::span<std::uint8_t> mask) const {
  int count = 0;
  for (int label = 0; label <= instance_->n; ++label) {
    mask[label] = allowed(label) ? 1 : 0;
    count += mask[label];
  }
  return count;
}

std::vector<std::uint8_t> RouteState::mask() const {
  std::vector<std::uint8_t> m(instance_->n + 1);
  write_mask(m);
  return m;
}

void RouteState::apply(int label) {
  const ProblemInstance& inst = *instance_;
  if (done()) {
    throw FeasibilityError("visit " + std::to_string(label) + " at step " +
                           std::to_string(steps_ + 1) + " after the solution is complete");
  }
  if (!allowed(label)) {
    std::ostringstream msg;
    msg << "step " << steps_ + 1 << ": label " << label;
    if (label < 0 || label > inst.n || (inst.kind == ProblemKind::TSP && label == 0)) {
      msg << " is out of range";
    } else if (label != 0 && visited_[label]) {
      msg << " visited twice";
    } else if (label == 0) {
      msg << " repeats the depot";
    } else {
      msg << " demand " << inst.demands[label] << " exceeds remaining capacity "
          << remaining_;
    }
    throw FeasibilityError(msg.str());
  }
  if (inst.kind == ProblemKind::TSP) {
    if (first_ < 0) first_ = label;
    visited_[label] = 1;
    ++served_;
  } else if (label == 0) {
    remaining_ = inst.capacity;
  } else {
    visited_[label] = 1;
    ++served_;
    remaining_ = std::max(remaining_ - inst.demands[label], 0.0);
  }
  position_ = label;
  ++steps_;
}

// ---------------------------------------------------------------------------

void validate_solution(const ProblemInstance& instance,
                       std::span<const int> visits) {
  RouteState state(instance);
  for (int label : visits) state.apply(label);
  if (!state.done()) {
    if (instance.kind == ProblemKind::TSP) {
      throw FeasibilityError("tour visits " + std::to_string(state.served()) +
                             " of " + std::to_string(instance.n) + " nodes");
    }
    if (state.served() < instance.n) {
      throw FeasibilityError("routes serve " + std::to_string(state.served()) +
                             " of " + std::to_string(instance.n) + " customers");
    }
    throw FeasibilityError("last route does not return to the depot");
  }
}

double route_length(const ProblemInstance& instance,
                    std::span<const int> visits) {
  if (visits.empty()) return 0.0;
  double total = 0.0;
  if (instance.kind == ProblemKind::TSP) {
    for (std::size_t t = 0; t + 1 < visits.size(); ++t) {
      total += distance(instance.at(visits[t]), instance.at(visits[t + 1]));
    }
    total += distance(instance.at(visits.back()), instance.at(visits.front()));
  } else {
    int prev = 0;
    for (int label : visits) {
      total += distance(instance.at(prev), instance.at(label));
      prev = label;
    }
    total += distance(instance.at(prev), instance.at(0));
  }
  return total;
}

double cost(const ProblemInstance& instance, std::span<const int> visits) {
  validate_solution(instance, visits);
  return route_length(instance, visits);
}

Solution make_solution(const ProblemInstance& instance, std::vector<int> visits) {
  Solution s;
  s.cost = cost(instance, visits);
  s.visits = std::move(visits);
  return s;
}

std::vector<bool> feasible_mask(const ProblemInstance& instance,
                                std::span<const int> partial,
                                std::optional<double> remaining_capacity) {
  RouteState state(instance);
  for (int label : partial) state.apply(label);
  if (remaining_capacity && instance.kind == ProblemKind::CVRP) {
    state.set_remaining_capacity(*remaining_capacity);
  }
  std::vector<bool> mask(instance.n + 1);
  for (int label = 0; label <= instance.n; ++label) mask[label] = state.allowed(label);
  return mask;
}

Point dihedral_transform(const Point& p, int which) {
  const double x = p.x;
  const double y = p.y;
  switch (which) {
    case 0: return {x, y};
    case 1: return {y, x};
    case 2: return {x, 1.0 - y};
    case 3: return {y, 1.0 - x};
    case 4: return {1.0 - x, y};
    case 5: return {1.0 - y, x};
    case 6: return {1.0 - x, 1.0 - y};
    case 7: return {1.0 - y, 1.0 - x};
    default: throw ArgumentError("dihedral index must be in [0, 8)");
  }
}

std::vector<ProblemInstance> augment(const ProblemInstance& instance) {
  std::vector<ProblemInstance> out(8, instance);
  for (int j = 0; j < 8; ++j) {
    for (auto& p : out[j].coords) p = dihedral_transform(p, j);
  }
  return out;
}

double gap_percent(double cost, double reference) {
  if (!(reference > 0.0)) throw ArgumentError("gap_percent: reference cost must be > 0");
  return (cost / reference - 1.0) * 100.0;
}

}  // namespace lgs
