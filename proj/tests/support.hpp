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

// Shared helpers for the unit tests.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lgs/model.hpp"
#include "lgs/problems.hpp"

namespace lgs::test {

inline ModelConfig tiny_config(ProblemKind kind, int d_z = 4) {
  ModelConfig c;
  c.kind = kind;
  c.d_h = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 24;
  c.d_k = 8;
  c.d_z = d_z;
  c.latent_hidden = 12;
  return c;
}

inline std::string fixture_path(const std::string& name) {
  return std::string(LGS_FIXTURE_DIR) + "/" + name;
}

// Central differences of f over one parameter entry.
inline double central_difference(diffnum::ParamSet& params, std::size_t p, std::size_t i,
                                 double h, const std::function<double()>& f) {
  double& x = params.value(p)[i];
  const double saved = x;
  x = saved + h;
  const double up = f();
  x = saved - h;
  const double down = f();
  x = saved;
  return (up - down) / (2.0 * h);
}

inline double entry(const diffnum::Gradients& g, std::size_t p, std::size_t i) {
  return g[p].empty() ? 0.0 : g[p][i];
}

inline double max_abs(const diffnum::Gradients& g) {
  double m = 0.0;
  for (const auto& a : g)
    for (double v : a.values()) m = std::max(m, std::abs(v));
  return m;
}

}  // namespace lgs::test
