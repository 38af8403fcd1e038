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

// Serial reference vs OpenMP kernels, plus whole training and inference steps.

#include <benchmark/benchmark.h>

#include <vector>

#include "lgs/inference.hpp"
#include "lgs/kernels.hpp"
#include "lgs/model.hpp"
#include "lgs/rng.hpp"
#include "lgs/training.hpp"

namespace {

using Kernel = void (*)(const double*, const double*, double*, std::size_t, std::size_t,
                        std::size_t, bool);

template <Kernel K>
void BM_Gemm(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  lgs::Rng rng(1);
  std::vector<double> a(n * n), b(n * n), c(n * n);
  for (auto& v : a) v = lgs::uniform01(rng);
  for (auto& v : b) v = lgs::uniform01(rng);
  for (auto _ : state) {
    K(a.data(), b.data(), c.data(), n, n, n, false);
    benchmark::DoNotOptimize(c.data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<long>(n * n * n));
}

BENCHMARK(BM_Gemm<lgs::kernels::gemm_serial>)->Name("gemm_serial")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<lgs::kernels::gemm>)->Name("gemm_omp")->RangeMultiplier(2)->Range(32, 256);
BENCHMARK(BM_Gemm<lgs::kernels::gemm_nt_serial>)->Name("gemm_nt_serial")->Arg(128);
BENCHMARK(BM_Gemm<lgs::kernels::gemm_nt>)->Name("gemm_nt_omp")->Arg(128);
BENCHMARK(BM_Gemm<lgs::kernels::gemm_tn_serial>)->Name("gemm_tn_serial")->Arg(128);
BENCHMARK(BM_Gemm<lgs::kernels::gemm_tn>)->Name("gemm_tn_omp")->Arg(128);

void BM_TrainEpoch(benchmark::State& state) {
  lgs::TrainConfig tc;
  tc.problem_size = static_cast<int>(state.range(0));
  tc.batch_size = 16;
  tc.eval_instances = 4;
  lgs::TrainState s = lgs::initial_state(tc, lgs::ModelConfig{}, 0);
  const auto eval = lgs::evaluation_set(tc);
  for (auto _ : state) benchmark::DoNotOptimize(lgs::train_epoch(tc, s, eval));
}
BENCHMARK(BM_TrainEpoch)->Arg(10)->Arg(20)->Unit(benchmark::kMillisecond);

void BM_LgsSolve(benchmark::State& state) {
  const auto model = lgs::PolicyModel::initialize(lgs::ModelConfig{}, 0);
  const auto inst = lgs::generate_instance(lgs::ProblemKind::TSP, 10, 3);
  lgs::InferenceConfig ic;
  ic.iterations = static_cast<int>(state.range(0));
  for (auto _ : state) benchmark::DoNotOptimize(lgs::run(model, inst, ic).best.cost);
}
BENCHMARK(BM_LgsSolve)->Arg(50)->Unit(benchmark::kMillisecond);

}  // namespace

BENCHMARK_MAIN();
