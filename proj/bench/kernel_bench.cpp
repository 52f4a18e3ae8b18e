/*
 * Copyright 2026 The LCRReg Authors.
 *
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */

// Serial reference kernels vs the OpenMP kernels on network-sized shapes.

#include <random>
#include <vector>

#include "benchmark/benchmark.h"
#include "lcrreg/kernels.hpp"

namespace {

using lcrreg::kernels::ConvGeometry;

std::vector<double> random_vector(std::size_t n) {
  std::mt19937_64 rng(42);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  std::vector<double> v(n);
  for (double& x : v) x = u(rng);
  return v;
}

// Blocks of the default network at batch 16: (in_ch, out_ch, side).
ConvGeometry block(int index) {
  static const std::size_t plan[][3] = {{3, 8, 64}, {8, 16, 32}, {16, 32, 16}, {32, 64, 8}};
  const auto& p = plan[index];
  return ConvGeometry{16, p[0], p[2], p[2], p[1], 3, 1, 1};
}

template <bool kParallel>
void BM_ConvForward(benchmark::State& state) {
  const ConvGeometry g = block(static_cast<int>(state.range(0)));
  const auto in = random_vector(g.batch * g.in_channels * g.in_h * g.in_w);
  const auto w = random_vector(g.out_channels * g.patch());
  const auto b = random_vector(g.out_channels);
  std::vector<double> out(g.batch * g.out_channels * g.out_h() * g.out_w());
  for (auto _ : state) {
    if constexpr (kParallel) {
      lcrreg::kernels::parallel::conv2d_forward(g, in.data(), w.data(), b.data(), out.data());
    } else {
      lcrreg::kernels::serial::conv2d_forward(g, in.data(), w.data(), b.data(), out.data());
    }
    benchmark::DoNotOptimize(out.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch);
}

template <bool kParallel>
void BM_ConvBackward(benchmark::State& state) {
  const ConvGeometry g = block(static_cast<int>(state.range(0)));
  const auto in = random_vector(g.batch * g.in_channels * g.in_h * g.in_w);
  const auto w = random_vector(g.out_channels * g.patch());
  const auto dout = random_vector(g.batch * g.out_channels * g.out_h() * g.out_w());
  std::vector<double> din(in.size()), dw(w.size()), db(g.out_channels);
  for (auto _ : state) {
    if constexpr (kParallel) {
      lcrreg::kernels::parallel::conv2d_backward(g, in.data(), w.data(), dout.data(),
                                                 din.data(), dw.data(), db.data());
    } else {
      lcrreg::kernels::serial::conv2d_backward(g, in.data(), w.data(), dout.data(), din.data(),
                                               dw.data(), db.data());
    }
    benchmark::DoNotOptimize(din.data());
  }
  state.SetItemsProcessed(state.iterations() * g.batch);
}

template <bool kParallel>
void BM_Matmul(benchmark::State& state) {
  const std::size_t n = static_cast<std::size_t>(state.range(0));
  const auto a = random_vector(n * n);
  const auto b = random_vector(n * n);
  std::vector<double> c(n * n);
  for (auto _ : state) {
    if constexpr (kParallel) {
      lcrreg::kernels::parallel::matmul(n, n, n, a.data(), b.data(), c.data());
    } else {
      lcrreg::kernels::serial::matmul(n, n, n, a.data(), b.data(), c.data());
    }
    benchmark::DoNotOptimize(c.data());
  }
}

BENCHMARK(BM_ConvForward<false>)->Name("conv_forward/serial")->DenseRange(0, 3);
BENCHMARK(BM_ConvForward<true>)->Name("conv_forward/parallel")->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<false>)->Name("conv_backward/serial")->DenseRange(0, 3);
BENCHMARK(BM_ConvBackward<true>)->Name("conv_backward/parallel")->DenseRange(0, 3);
BENCHMARK(BM_Matmul<false>)->Name("matmul/serial")->Arg(64)->Arg(256);
BENCHMARK(BM_Matmul<true>)->Name("matmul/parallel")->Arg(64)->Arg(256);

}  // namespace

BENCHMARK_MAIN();
