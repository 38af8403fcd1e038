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

#include <vector>

#include "lgs/kernels.hpp"
#include "lgs/rng.hpp"

namespace lgs::kernels {
namespace {

std::vector<double> random(std::size_t n, Rng& rng) {
  std::vector<double> v(n);
  for (auto& x : v) x = 2.0 * uniform01(rng) - 1.0;
  return v;
}

struct Dims {
  std::size_t m, k, n;
};

class KernelParity : public ::testing::TestWithParam<Dims> {};

TEST_P(KernelParity, SerialAndParallelAgreeBitwise) {
  const auto [m, k, n] = GetParam();
  Rng rng = make_rng(m * 131 + k * 7 + n, "kernel");
  const auto a = random(m * k, rng);
  const auto b = random(k * n, rng);
  const auto bt = random(n * k, rng);
  const auto at = random(m * k, rng);
  const auto bm = random(m * n, rng);
  for (bool acc : {false, true}) {
    const auto c0 = random(m * n, rng);
    auto s = c0, p = c0;
    gemm_serial(a.data(), b.data(), s.data(), m, k, n, acc);
    gemm(a.data(), b.data(), p.data(), m, k, n, acc);
    EXPECT_EQ(s, p);
    s = c0;
    p = c0;
    gemm_nt_serial(a.data(), bt.data(), s.data(), m, k, n, acc);
    gemm_nt(a.data(), bt.data(), p.data(), m, k, n, acc);
    EXPECT_EQ(s, p);
    const auto d0 = random(k * n, rng);
    auto s2 = d0, p2 = d0;
    gemm_tn_serial(at.data(), bm.data(), s2.data(), m, k, n, acc);
    gemm_tn(at.data(), bm.data(), p2.data(), m, k, n, acc);
    EXPECT_EQ(s2, p2);
  }
}

INSTANTIATE_TEST_SUITE_P(Shapes, KernelParity,
                         ::testing::Values(Dims{1, 1, 1}, Dims{3, 5, 7}, Dims{17, 33, 9},
                                           Dims{64, 64, 64}, Dims{200, 128, 96},
                                           Dims{513, 7, 130}));

TEST(Kernels, ParityHoldsForAnyThreadCount) {
  Rng rng = make_rng(1, "threads");
  const std::size_t m = 150, k = 90, n = 110;
  const auto a = random(m * k, rng), b = random(k * n, rng);
  std::vector<double> ref(m * n);
  gemm_serial(a.data(), b.data(), ref.data(), m, k, n, false);
  const int saved = max_threads();
  for (int threads : {1, 2, 3, 4}) {
    set_threads(threads);
    std::vector<double> c(m * n);
    gemm(a.data(), b.data(), c.data(), m, k, n, false);
    EXPECT_EQ(c, ref) << threads << " threads";
  }
  set_threads(saved);
}

TEST(Kernels, SmallProductByHand) {
  const double a[] = {1, 2, 3, 4, 5, 6};     // 2x3
  const double b[] = {1, 0, 0, 1, 1, 1};     // 3x2
  double c[4] = {10, 10, 10, 10};
  gemm(a, b, c, 2, 3, 2, true);
  EXPECT_EQ(c[0], 14);
  EXPECT_EQ(c[1], 15);
  EXPECT_EQ(c[2], 20);
  EXPECT_EQ(c[3], 21);
}

}  // namespace
}  // namespace lgs::kernels
