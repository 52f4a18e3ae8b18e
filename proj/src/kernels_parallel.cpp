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

#include <algorithm>
#include <vector>

#include "lcrreg/kernels.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace lcrreg::kernels {

void set_num_threads(int threads) {
#ifdef _OPENMP
  if (threads > 0) omp_set_num_threads(threads);
#else
  (void)threads;
#endif
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

namespace {

// Eight-lane partial sums with a fixed combination order.
inline double dot(const double* a, const double* b, std::size_t n) {
  double acc[8] = {0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0};
  std::size_t i = 0;
  for (; i + 8 <= n; i += 8) {
    for (std::size_t t = 0; t < 8; ++t) acc[t] += a[i + t] * b[i + t];
  }
  for (; i < n; ++i) acc[0] += a[i] * b[i];
  return ((acc[0] + acc[4]) + (acc[1] + acc[5])) + ((acc[2] + acc[6]) + (acc[3] + acc[7]));
}

inline void axpy(double alpha, const double* x, double* y, std::size_t n) {
  for (std::size_t i = 0; i < n; ++i) y[i] += alpha * x[i];
}

// col[(ic*k + ky)*k + kx][oy*ow + ox]
void im2col(const ConvGeometry& g, const double* img, double* col) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), ks = g.kernel;
  const long pad = static_cast<long>(g.pad);
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    const double* plane = img + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < ks; ++ky) {
      for (std::size_t kx = 0; kx < ks; ++kx) {
        double* dst = col + ((ic * ks + ky) * ks + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          double* drow = dst + oy * ow;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) {
            std::fill_n(drow, ow, 0.0);
            continue;
          }
          const double* srow = plane + iy * g.in_w;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            drow[ox] = (ix < 0 || ix >= static_cast<long>(g.in_w)) ? 0.0 : srow[ix];
          }
        }
      }
    }
  }
}

void col2im(const ConvGeometry& g, const double* col, double* img) {
  const std::size_t oh = g.out_h(), ow = g.out_w(), ks = g.kernel;
  const long pad = static_cast<long>(g.pad);
  std::fill_n(img, g.in_channels * g.in_h * g.in_w, 0.0);
  for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
    double* plane = img + ic * g.in_h * g.in_w;
    for (std::size_t ky = 0; ky < ks; ++ky) {
      for (std::size_t kx = 0; kx < ks; ++kx) {
        const double* src = col + ((ic * ks + ky) * ks + kx) * oh * ow;
        for (std::size_t oy = 0; oy < oh; ++oy) {
          const long iy = static_cast<long>(oy * g.stride + ky) - pad;
          if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
          double* drow = plane + iy * g.in_w;
          const double* srow = src + oy * ow;
          for (std::size_t ox = 0; ox < ow; ++ox) {
            const long ix = static_cast<long>(ox * g.stride + kx) - pad;
            if (ix >= 0 && ix < static_cast<long>(g.in_w)) drow[ix] += srow[ox];
          }
        }
      }
    }
  }
}

}  // namespace

namespace parallel {

void conv2d_forward(const ConvGeometry& g, const double* in,
                    const double* weight, const double* bias, double* out) {
  const std::size_t hw = g.out_h() * g.out_w();
  const std::size_t kk = g.patch();
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const long batch = static_cast<long>(g.batch);
#pragma omp parallel
  {
    std::vector<double> col(kk * hw);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      im2col(g, in + n * in_stride, col.data());
      double* out_n = out + n * g.out_channels * hw;
      for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
        double* row = out_n + oc * hw;
        std::fill_n(row, hw, bias ? bias[oc] : 0.0);
        const double* w = weight + oc * kk;
        for (std::size_t k = 0; k < kk; ++k) axpy(w[k], col.data() + k * hw, row, hw);
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const double* in,
                     const double* weight, const double* dout, double* din,
                     double* dweight, double* dbias) {
  const std::size_t hw = g.out_h() * g.out_w();
  const std::size_t kk = g.patch();
  const std::size_t wsize = g.out_channels * kk;
  const std::size_t in_stride = g.in_channels * g.in_h * g.in_w;
  const long batch = static_cast<long>(g.batch);
  // Per-sample weight/bias partials are reduced afterwards in sample order so
  // the result does not depend on how samples were split across threads.
  std::vector<double> wpart(dweight ? g.batch * wsize : 0);
  std::vector<double> bpart(dbias ? g.batch * g.out_channels : 0);
#pragma omp parallel
  {
    std::vector<double> col(kk * hw);
    std::vector<double> dcol(din ? kk * hw : 0);
#pragma omp for schedule(static)
    for (long n = 0; n < batch; ++n) {
      const double* dout_n = dout + n * g.out_channels * hw;
      if (dweight) {
        im2col(g, in + n * in_stride, col.data());
        double* wp = wpart.data() + n * wsize;
        for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
          for (std::size_t k = 0; k < kk; ++k) {
            wp[oc * kk + k] = dot(dout_n + oc * hw, col.data() + k * hw, hw);
          }
        }
      }
      if (dbias) {
        for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
          double s = 0.0;
          const double* r = dout_n + oc * hw;
          for (std::size_t j = 0; j < hw; ++j) s += r[j];
          bpart[n * g.out_channels + oc] = s;
        }
      }
      if (din) {
        for (std::size_t k = 0; k < kk; ++k) {
          double* drow = dcol.data() + k * hw;
          std::fill_n(drow, hw, 0.0);
          for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
            axpy(weight[oc * kk + k], dout_n + oc * hw, drow, hw);
          }
        }
        col2im(g, dcol.data(), din + n * in_stride);
      }
    }
  }
  if (dweight) {
    std::fill_n(dweight, wsize, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      axpy(1.0, wpart.data() + n * wsize, dweight, wsize);
    }
  }
  if (dbias) {
    std::fill_n(dbias, g.out_channels, 0.0);
    for (std::size_t n = 0; n < g.batch; ++n) {
      axpy(1.0, bpart.data() + n * g.out_channels, dbias, g.out_channels);
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    double* row = c + i * n;
    std::fill_n(row, n, 0.0);
    for (std::size_t p = 0; p < k; ++p) axpy(a[i * k + p], b + p * n, row, n);
  }
}

void matmul_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
               const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long p = 0; p < static_cast<long>(k); ++p) {
    double* row = c + p * n;
    std::fill_n(row, n, 0.0);
    for (std::size_t i = 0; i < m; ++i) axpy(a[i * k + p], b + i * n, row, n);
  }
}

void matmul_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
               const double* b, double* c) {
#pragma omp parallel for schedule(static) if (m * k * n > 32768)
  for (long i = 0; i < static_cast<long>(m); ++i) {
    for (std::size_t p = 0; p < k; ++p) c[i * k + p] = dot(a + i * n, b + p * n, n);
  }
}

void maxpool2_forward(const PoolGeometry& g, const double* in, double* out,
                      std::size_t* argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(g.planes); ++p) {
    const std::size_t base = p * g.in_h * g.in_w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      const double* r0 = in + base + (2 * oy) * g.in_w;
      const double* r1 = r0 + g.in_w;
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * g.in_w + 2 * ox;
        double v = r0[2 * ox];
        if (r0[2 * ox + 1] > v) { v = r0[2 * ox + 1]; best += 1; }
        const std::size_t below = base + (2 * oy + 1) * g.in_w + 2 * ox;
        if (r1[2 * ox] > v) { v = r1[2 * ox]; best = below; }
        if (r1[2 * ox + 1] > v) { v = r1[2 * ox + 1]; best = below + 1; }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = v;
        argmax[o] = best;
      }
    }
  }
}

void maxpool2_backward(const PoolGeometry& g, const double* dout,
                       const std::size_t* argmax, double* din) {
  const std::size_t plane_in = g.in_h * g.in_w;
  const std::size_t plane_out = g.out_h() * g.out_w();
#pragma omp parallel for schedule(static)
  for (long p = 0; p < static_cast<long>(g.planes); ++p) {
    std::fill_n(din + p * plane_in, plane_in, 0.0);
    for (std::size_t o = p * plane_out; o < (p + 1) * plane_out; ++o) {
      din[argmax[o]] += dout[o];
    }
  }
}

}  // namespace parallel
}  // namespace lcrreg::kernels
