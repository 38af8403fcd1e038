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

#include <cstddef>

// Dense row-major kernels. Each kernel has a serial reference (`*_serial`)
// and an OpenMP version that partitions output rows across threads. Every
// output element is accumulated in the same order in both, so the two agree
// bit-for-bit regardless of thread count.
namespace lgs::kernels {

// C[m x n] (+)= A[m x k] * B[k x n]
void gemm_serial(const double* a, const double* b, double* c, std::size_t m,
                 std::size_t k, std::size_t n, bool accumulate);
void gemm(const double* a, const double* b, double* c, std::size_t m,
          std::size_t k, std::size_t n, bool accumulate);

// C[m x n] (+)= A[m x k] * B^T, B stored [n x k]
void gemm_nt_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate);
void gemm_nt(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

// C[k x n] (+)= A^T * B, A stored [m x k], B stored [m x n]
void gemm_tn_serial(const double* a, const double* b, double* c, std::size_t m,
                    std::size_t k, std::size_t n, bool accumulate);
void gemm_tn(const double* a, const double* b, double* c, std::size_t m,
             std::size_t k, std::size_t n, bool accumulate);

// Below this many multiply-adds the OpenMP kernels run inline.
inline constexpr std::size_t kParallelThreshold = 1u << 16;

int max_threads();
void set_threads(int threads);

}  // namespace lgs::kernels
