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
#include <cstring>

#include "lcrreg/kernels.hpp"

namespace lcrreg::kernels::serial {

void conv2d_forward(const ConvGeometry& g, const double* in,
                    const double* weight, const double* bias, double* out) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ks = g.kernel;
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          double acc = bias ? bias[oc] : 0.0;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < ks; ++ky) {
              const long iy = static_cast<long>(oy * g.stride + ky) -
                              static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long ix = static_cast<long>(ox * g.stride + kx) -
                                static_cast<long>(g.pad);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                acc += weight[((oc * g.in_channels + ic) * ks + ky) * ks + kx] *
                       in[((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix];
              }
            }
          }
          out[((n * g.out_channels + oc) * oh + oy) * ow + ox] = acc;
        }
      }
    }
  }
}

void conv2d_backward(const ConvGeometry& g, const double* in,
                     const double* weight, const double* dout, double* din,
                     double* dweight, double* dbias) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  const std::size_t ks = g.kernel;
  if (din) std::fill_n(din, g.batch * g.in_channels * g.in_h * g.in_w, 0.0);
  if (dweight) std::fill_n(dweight, g.out_channels * g.patch(), 0.0);
  if (dbias) std::fill_n(dbias, g.out_channels, 0.0);
  for (std::size_t n = 0; n < g.batch; ++n) {
    for (std::size_t oc = 0; oc < g.out_channels; ++oc) {
      for (std::size_t oy = 0; oy < oh; ++oy) {
        for (std::size_t ox = 0; ox < ow; ++ox) {
          const double go = dout[((n * g.out_channels + oc) * oh + oy) * ow + ox];
          if (dbias) dbias[oc] += go;
          for (std::size_t ic = 0; ic < g.in_channels; ++ic) {
            for (std::size_t ky = 0; ky < ks; ++ky) {
              const long iy = static_cast<long>(oy * g.stride + ky) -
                              static_cast<long>(g.pad);
              if (iy < 0 || iy >= static_cast<long>(g.in_h)) continue;
              for (std::size_t kx = 0; kx < ks; ++kx) {
                const long ix = static_cast<long>(ox * g.stride + kx) -
                                static_cast<long>(g.pad);
                if (ix < 0 || ix >= static_cast<long>(g.in_w)) continue;
                const std::size_t wi = ((oc * g.in_channels + ic) * ks + ky) * ks + kx;
                const std::size_t ii =
                    ((n * g.in_channels + ic) * g.in_h + iy) * g.in_w + ix;
                if (dweight) dweight[wi] += go * in[ii];
                if (din) din[ii] += go * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

void matmul(std::size_t m, std::size_t k, std::size_t n, const double* a,
            const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t p = 0; p < k; ++p) acc += a[i * k + p] * b[p * n + j];
      c[i * n + j] = acc;
    }
  }
}

void matmul_tn(std::size_t m, std::size_t k, std::size_t n, const double* a,
               const double* b, double* c) {
  for (std::size_t p = 0; p < k; ++p) {
    for (std::size_t j = 0; j < n; ++j) {
      double acc = 0.0;
      for (std::size_t i = 0; i < m; ++i) acc += a[i * k + p] * b[i * n + j];
      c[p * n + j] = acc;
    }
  }
}

void matmul_nt(std::size_t m, std::size_t k, std::size_t n, const double* a,
               const double* b, double* c) {
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += a[i * n + j] * b[p * n + j];
      c[i * k + p] = acc;
    }
  }
}

void maxpool2_forward(const PoolGeometry& g, const double* in, double* out,
                      std::size_t* argmax) {
  const std::size_t oh = g.out_h(), ow = g.out_w();
  for (std::size_t p = 0; p < g.planes; ++p) {
    const std::size_t base = p * g.in_h * g.in_w;
    for (std::size_t oy = 0; oy < oh; ++oy) {
      for (std::size_t ox = 0; ox < ow; ++ox) {
        std::size_t best = base + (2 * oy) * g.in_w + 2 * ox;
        for (std::size_t dy = 0; dy < 2; ++dy) {
          for (std::size_t dx = 0; dx < 2; ++dx) {
            const std::size_t idx = base + (2 * oy + dy) * g.in_w + 2 * ox + dx;
            if (in[idx] > in[best]) best = idx;
          }
        }
        const std::size_t o = (p * oh + oy) * ow + ox;
        out[o] = in[best];
        argmax[o] = best;
      }
    }
  }
}

void maxpool2_backward(const PoolGeometry& g, const double* dout,
                       const std::size_t* argmax, double* din) {
  std::fill_n(din, g.planes * g.in_h * g.in_w, 0.0);
  const std::size_t outs = g.planes * g.out_h() * g.out_w();
  for (std::size_t o = 0; o < outs; ++o) din[argmax[o]] += dout[o];
}

}  // namespace lcrreg::kernels::serial
