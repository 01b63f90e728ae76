// Copyright 2026 The cpriv Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     https://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#ifndef CPRIV_REFERENCE_KERNELS_H_
#define CPRIV_REFERENCE_KERNELS_H_

// Serial direct-loop kernels. Templated on the scalar so gradient checks can
// run in double precision. Not used on any production path.

#include <cmath>
#include <cstddef>
#include <span>

#include "cpriv/kernels.h"

namespace cpriv::reference {

template <typename T>
void Conv2dForward(const ConvGeometry& g, int n, int h, int w,
                   std::span<const T> x, std::span<const T> weight,
                   std::span<const T> bias, std::span<T> y) {
  const int oh = g.OutSize(h), ow = g.OutSize(w);
  const int k = g.kernel;
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < g.out_channels; ++oc) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          T acc = bias[oc];
          for (int ic = 0; ic < g.in_channels; ++ic) {
            for (int ki = 0; ki < k; ++ki) {
              const int yi = i * g.stride - g.pad + ki;
              if (yi < 0 || yi >= h) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int xj = j * g.stride - g.pad + kj;
                if (xj < 0 || xj >= w) continue;
                acc += weight[((oc * g.in_channels + ic) * k + ki) * k + kj] *
                       x[((static_cast<std::size_t>(b) * g.in_channels + ic) *
                              h + yi) * w + xj];
              }
            }
          }
          y[((static_cast<std::size_t>(b) * g.out_channels + oc) * oh + i) *
                ow + j] = acc;
        }
      }
    }
  }
}

// dx (if non-empty) is overwritten; dweight/dbias accumulate.
template <typename T>
void Conv2dBackward(const ConvGeometry& g, int n, int h, int w,
                    std::span<const T> x, std::span<const T> weight,
                    std::span<const T> dy, std::span<T> dx,
                    std::span<T> dweight, std::span<T> dbias) {
  const int oh = g.OutSize(h), ow = g.OutSize(w);
  const int k = g.kernel;
  for (auto& v : dx) v = T(0);
  for (int b = 0; b < n; ++b) {
    for (int oc = 0; oc < g.out_channels; ++oc) {
      for (int i = 0; i < oh; ++i) {
        for (int j = 0; j < ow; ++j) {
          const T grad =
              dy[((static_cast<std::size_t>(b) * g.out_channels + oc) * oh +
                  i) * ow + j];
          if (!dbias.empty()) dbias[oc] += grad;
          for (int ic = 0; ic < g.in_channels; ++ic) {
            for (int ki = 0; ki < k; ++ki) {
              const int yi = i * g.stride - g.pad + ki;
              if (yi < 0 || yi >= h) continue;
              for (int kj = 0; kj < k; ++kj) {
                const int xj = j * g.stride - g.pad + kj;
                if (xj < 0 || xj >= w) continue;
                const std::size_t wi =
                    ((oc * g.in_channels + ic) * k + ki) * k + kj;
                const std::size_t xi =
                    ((static_cast<std::size_t>(b) * g.in_channels + ic) * h +
                     yi) * w + xj;
                if (!dweight.empty()) dweight[wi] += grad * x[xi];
                if (!dx.empty()) dx[xi] += grad * weight[wi];
              }
            }
          }
        }
      }
    }
  }
}

template <typename T>
void MaxPool2Forward(int n, int c, int h, int w, std::span<const T> x,
                     std::span<T> y) {
  const int oh = h / 2, ow = w / 2;
  for (int p = 0; p < n * c; ++p) {
    for (int i = 0; i < oh; ++i) {
      for (int j = 0; j < ow; ++j) {
        const T* base = x.data() + static_cast<std::size_t>(p) * h * w;
        T best = base[(2 * i) * w + 2 * j];
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj)
            best = std::max(best, base[(2 * i + di) * w + 2 * j + dj]);
        y[(static_cast<std::size_t>(p) * oh + i) * ow + j] = best;
      }
    }
  }
}

template <typename T>
void Upsample2Forward(int n, int c, int h, int w, std::span<const T> x,
                      std::span<T> y) {
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        y[(static_cast<std::size_t>(p) * 2 * h + i) * 2 * w + j] =
            x[(static_cast<std::size_t>(p) * h + i / 2) * w + j / 2];
}

template <typename T>
void Upsample2Backward(int n, int c, int h, int w, std::span<const T> dy,
                       std::span<T> dx) {
  for (auto& v : dx) v = T(0);
  for (int p = 0; p < n * c; ++p)
    for (int i = 0; i < 2 * h; ++i)
      for (int j = 0; j < 2 * w; ++j)
        dx[(static_cast<std::size_t>(p) * h + i / 2) * w + j / 2] +=
            dy[(static_cast<std::size_t>(p) * 2 * h + i) * 2 * w + j];
}

template <typename T>
T LeakyRelu(T v, T slope) {
  return v > T(0) ? v : slope * v;
}

template <typename T>
T Sigmoid(T v) {
  return T(1) / (T(1) + std::exp(-v));
}

template <typename T>
void DenseForward(std::span<const T> weight, std::span<const T> bias,
                  int in_features, int out_features, int n,
                  std::span<const T> x, std::span<T> y) {
  for (int b = 0; b < n; ++b)
    for (int o = 0; o < out_features; ++o) {
      T acc = bias[o];
      for (int i = 0; i < in_features; ++i)
        acc += weight[static_cast<std::size_t>(o) * in_features + i] *
               x[static_cast<std::size_t>(b) * in_features + i];
      y[static_cast<std::size_t>(b) * out_features + o] = acc;
    }
}

}  // namespace cpriv::reference

#endif  // CPRIV_REFERENCE_KERNELS_H_
