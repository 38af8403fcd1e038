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

#include <cstdint>
#include <random>
#include <string_view>

namespace lgs {

using Rng = std::mt19937_64;

// Seed splitting: every random stream is keyed by (root seed, purpose tag,
// up to three integer coordinates) and mixed through SplitMix64. Streams for
// different tags or coordinates are statistically independent, and a stream
// never depends on the order in which other streams were consumed.
std::uint64_t splitmix64(std::uint64_t x);
std::uint64_t derive_seed(std::uint64_t root, std::string_view tag,
                          std::uint64_t a = 0, std::uint64_t b = 0,
                          std::uint64_t c = 0);

inline Rng make_rng(std::uint64_t root, std::string_view tag,
                    std::uint64_t a = 0, std::uint64_t b = 0,
                    std::uint64_t c = 0) {
  return Rng(derive_seed(root, tag, a, b, c));
}

// Uniform on [0, 1).
inline double uniform01(Rng& rng) {
  return std::generate_canonical<double, 53>(rng);
}

double standard_normal(Rng& rng);

}  // namespace lgs
