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

#include "lgs/kernels.hpp"

#include <omp.h>

#include <cstdint>

namespace lgs::kernels {
namespace {

inline void gemm_row(const double* a, const double* b, double* c,
                     std::size_t k, std::size_t n, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
  }
  for (std::size_t p = 0; p < k; ++p) {
    const double av = a[p];
    const double* brow = b + p * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

inline void gemm_nt_row(const double* a, const double* b, double* c,
                        std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t j = 0; j < n; ++j) {
    const double* brow = b + j * k;
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t p = 0;
    for (; p + 4 <= k; p += 4) {
      s0 += a[p] * brow[p];
      s1 += a[p + 1] * brow[p + 1];
      s2 += a[p + 2] * brow[p + 2];
      s3 += a[p + 3] * brow[p + 3];
    }
    for (; p < k; ++p) s0 += a[p] * brow[p];
    const double s = (s0 + s1) + (s2 + s3);
    c[j] = accumulate ? c[j] + s : s;
  }
}

// Row `r` of A^T B, i.e. sum over i of A[i][r] * B[i][:].
inline void gemm_tn_row(const double* a, const double* b, double* c,
                        std::size_t r, std::size_t m, std::size_t k,
                        std::size_t n, bool accumulate) {
  if (!accumulate) {
    for (std::size_t j = 0; j < n; ++j) c[j] = 0.0;
  }
  for (std::size_t i = 0; i < m; ++i) {
    const double av = a[i * k + r];
    if (av == 0.0) continue;
    const double* brow = b + i * n;
    for (std::size_t j = 0; j < n; ++j) c[j] += av * brow[j];
  }
}

}  // namespace

void gemm_serial(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold && m > 1)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_row(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t i = 0; i < m; ++i) gemm_nt_row(a + i * k, b, c + i * n, k, n, accumulate);
}

void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(m);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold && m > 1)
  for (std::int64_t i = 0; i < rows; ++i) {
    gemm_nt_row(a + i * k, b, c + i * n, k, n, accumulate);
  }
}

void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate) {
  for (std::size_t r = 0; r < k; ++r) gemm_tn_row(a, b, c + r * n, r, m, k, n, accumulate);
}

void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate) {
  const auto rows = static_cast<std::int64_t>(k);
#pragma omp parallel for schedule(static) if (m * k * n >= kParallelThreshold && k > 1)
  for (std::int64_t r = 0; r < rows; ++r) {
    gemm_tn_row(a, b, c + r * n, static_cast<std::size_t>(r), m, k, n, accumulate);
  }
}

int max_threads() { return omp_get_max_threads(); }

void set_threads(int threads) {
  if (threads > 0) omp_set_num_threads(threads);
}

}  // namespace lgs::kernels
