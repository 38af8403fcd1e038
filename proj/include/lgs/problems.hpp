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

#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace lgs {

enum class ProblemKind { TSP, CVRP };

std::string to_string(ProblemKind kind);
ProblemKind parse_problem_kind(const std::string& text);

struct Point {
  double x = 0.0;
  double y = 0.0;
  bool operator==(const Point&) const = default;
};

double distance(const Point& a, const Point& b);

// One routing problem.
//
// Node labels are the values that appear in visit sequences and masks:
//   TSP:  labels 1..n, stored in coords[label - 1]; label 0 is never valid.
//   CVRP: label 0 is the depot, customers are 1..n, stored in coords[label].
// For CVRP `n` counts customers only; `demands` has n + 1 entries with
// demands[0] == 0. TSP instances leave `demands` empty and `capacity` at 0.
struct ProblemInstance {
  ProblemKind kind = ProblemKind::TSP;
  int n = 0;
  std::vector<Point> coords;
  std::vector<double> demands;
  double capacity = 0.0;
  std::uint64_t seed = 0;

  int num_labels() const { return n + 1; }
  int num_nodes() const { return static_cast<int>(coords.size()); }
  // Row in `coords` for a label; -1 for the unused TSP label 0.
  int row_of(int label) const {
    return kind == ProblemKind::TSP ? label - 1 : label;
  }
  int label_of(int row) const {
    return kind == ProblemKind::TSP ? row + 1 : row;
  }
  const Point& at(int label) const { return coords[row_of(label)]; }

  bool operator==(const ProblemInstance&) const = default;
};

struct Solution {
  std::vector<int> visits;
  double cost = 0.0;
};

// Capacity D for a CVRP instance with n customers: 50/55/60 for
// n = 100/125/150, otherwise round(30 + n / 5).
double cvrp_capacity(int n);

ProblemInstance generate_instance(ProblemKind kind, int n, std::uint64_t seed);

// Throws FeasibilityError naming the first violated constraint.
void validate_solution(const ProblemInstance& instance,
                       std::span<const int> visits);

// Validates, then returns the tour / route length.
double cost(const ProblemInstance& instance, std::span<const int> visits);

// Length only; the caller guarantees feasibility.
double route_length(const ProblemInstance& instance,
                    std::span<const int> visits);

Solution make_solution(const ProblemInstance& instance, std::vector<int> visits);

// Percentage gap to a reference cost: (cost / reference - 1) * 100.
double gap_percent(double cost, double reference);

// Incremental construction state shared by masks, rollouts and
// teacher-forced evaluation.
class RouteState {
 public:
  explicit RouteState(const ProblemInstance& instance);

  // Writes the admissibility of every label into `mask` (size n + 1).
  // Returns the number of admissible labels.
  int write_mask(std::span<std::uint8_t> mask) const;
  std::vector<std::uint8_t> mask() const;
  bool allowed(int label) const;

  // Throws FeasibilityError if `label` is not admissible.
  void apply(int label);

  bool done() const;
  int steps() const { return steps_; }
  int position() const { return position_; }  // -1 before the first TSP step
  int first() const { return first_; }        // -1 before the first TSP step
  int served() const { return served_; }
  double remaining_capacity() const { return remaining_; }
  void set_remaining_capacity(double value) { remaining_ = value; }
  bool visited(int label) const { return visited_[label] != 0; }
  // Step cap: n for TSP, 2n + 2 for CVRP.
  int max_steps() const;

 private:
  const ProblemInstance* instance_;
  std::vector<std::uint8_t> visited_;
  int position_ = -1;
  int first_ = -1;
  int served_ = 0;
  int steps_ = 0;
  double remaining_ = 0.0;
};

// Admissible next labels after `partial`. When `remaining_capacity` is
// given it replaces the capacity tracked along the prefix (CVRP only).
std::vector<bool> feasible_mask(const ProblemInstance& instance,
                                std::span<const int> partial,
                                std::optional<double> remaining_capacity = {});

// The eight dihedral symmetries of the unit square; element 0 is identity.
Point dihedral_transform(const Point& p, int which);
std::vector<ProblemInstance> augment(const ProblemInstance& instance);

}  // namespace lgs
