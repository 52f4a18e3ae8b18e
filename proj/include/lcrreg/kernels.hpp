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

#ifndef LCRREG_KERNELS_HPP_
#define LCRREG_KERNELS_HPP_

// Dense compute kernels behind the autodiff primitives.
//
// Two implementations share one signature set:
//   serial::   direct loop nests, kept as the reference for tests.
//   parallel:: im2col/GEMM formulations with OpenMP over the batch or the
//              output rows. Every output element is produced by a fixed
//              sequence of floating-point operations that does not depend on
//              the thread count, so results are bitwise reproducible.
//
// Backward kernels overwrite their outputs; accumulation happens in the graph.

#include <cstddef>

namespace lcrreg::kernels {

struct ConvGeometry {
  std::size_t batch = 1;
  std::size_t in_channels = 1;
  std::size_t in_h = 1;
  std::size_t in_w = 1;
  std::size_t out_channels = 1;
  std::size_t kernel = 3;
  std::size_t stride = 1;
  std::size_t pad = 0;

  std::size_t out_h() const { return (in_h + 2 * pad - kernel) / stride + 1; }
  std::size_t out_w() const { return (in_w + 2 * pad - kernel) / stride + 1; }
  std::size_t patch() const { return in_channels * kernel * kernel; }
};

struct PoolGeometry {
  std::size_t planes = 1;  // batch * channels
  std::size_t in_h = 2;
  std::size_t in_w = 2;
  std::size_t out_h() const { return in_h / 2; }
  std::size_t out_w() const { return in_w / 2; }
};

#define LCRREG_KERNEL_DECLS                                                    \
  void conv2d_forward(const ConvGeometry& g, const double* in,                 \
                      const double* weight, const double* bias, double* out);  \
  void conv2d_backward(const ConvGeometry& g, const double* in,                \
                       const double* weight, const double* dout, double* din,  \
                       double* dweight, double* dbias);                        \
  /* c[m,n] = a[m,k] * b[k,n] */                                               \
  void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a,    \
              const double* b, double* c);                                     \
  /* c[k,n] = a[m,k]^T * b[m,n] */                                             \
  void matmul_tn(std::size_t m, std::size_t k, std::size_t n, const double* a, \
                 const double* b, double* c);                                  \
  /* c[m,k] = a[m,n] * b[k,n]^T */                                             \
  void matmul_nt(std::size_t m, std::size_t k, std::size_t n, const double* a, \
                 const double* b, double* c);                                  \
  /* argmax receives the flat input index chosen for every output. */          \
  void maxpool2_forward(const PoolGeometry& g, const double* in, double* out,  \
                        std::size_t* argmax);                                  \
  void maxpool2_backward(const PoolGeometry& g, const double* dout,            \
                         const std::size_t* argmax, double* din);

namespace serial {
LCRREG_KERNEL_DECLS
}  // namespace serial

namespace parallel {
LCRREG_KERNEL_DECLS
}  // namespace parallel

#undef LCRREG_KERNEL_DECLS

// Thread control for the parallel kernels; no-ops without OpenMP.
void set_num_threads(int threads);
int max_threads();

}  // namespace lcrreg::kernels

#endif  // LCRREG_KERNELS_HPP_
