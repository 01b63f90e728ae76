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
#include "cpriv/kernels.h"

#include <cblas.h>

#include <algorithm>
#include <cmath>
#include <cstring>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "cpriv/error.h"

namespace cpriv {
namespace {

int g_threads = 0;

int ThreadCount() {
#ifdef _OPENMP
  return g_threads > 0 ? g_threads : omp_get_max_threads();
#else
  return 1;
#endif
}

struct BlasSingleThreaded {
  // Parallelism comes from the OpenMP batch loop; nested BLAS threads would
  // oversubscribe.
  BlasSingleThreaded() { openblas_set_num_threads(1); }
};
const BlasSingleThreaded kBlasInit;

// Valid output-column range [lo, hi) for kernel column kj.
inline void ValidRange(int kj, int ow, int w, const ConvGeometry& g, int& lo,
                       int& hi) {
  // Need 0 <= j*stride - pad + kj < w.
  const int off = kj - g.pad;
  lo = off >= 0 ? 0 : (-off + g.stride - 1) / g.stride;
  hi = (w - off + g.stride - 1) / g.stride;
  hi = std::clamp(hi, 0, ow);
  lo = std::min(lo, hi);
}

void Im2Col(const float* x, int c, int h, int w, const ConvGeometry& g,
            float* col) {
  const int oh = g.OutSize(h), ow = g.OutSize(w), k = g.kernel;
  const int plane = oh * ow;
  for (int ic = 0; ic < c; ++ic) {
    const float* src = x + static_cast<std::size_t>(ic) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        float* dst = col + static_cast<std::size_t>((ic * k + ki) * k + kj) *
                               plane;
        int lo, hi;
        ValidRange(kj, ow, w, g, lo, hi);
        const int off = kj - g.pad;
        for (int i = 0; i < oh; ++i) {
          const int yi = i * g.stride - g.pad + ki;
          float* row = dst + i * ow;
          if (yi < 0 || yi >= h) {
            std::fill(row, row + ow, 0.0f);
            continue;
          }
          const float* srow = src + yi * w + off;
          std::fill(row, row + lo, 0.0f);
          if (g.stride == 1) {
            std::copy(srow + lo, srow + hi, row + lo);
          } else {
            for (int j = lo; j < hi; ++j) row[j] = srow[j * g.stride];
          }
          std::fill(row + hi, row + ow, 0.0f);
        }
      }
    }
  }
}

void Col2Im(const float* col, int c, int h, int w, const ConvGeometry& g,
            float* x) {
  const int oh = g.OutSize(h), ow = g.OutSize(w), k = g.kernel;
  const int plane = oh * ow;
  std::memset(x, 0, sizeof(float) * static_cast<std::size_t>(c) * h * w);
  for (int ic = 0; ic < c; ++ic) {
    float* dst = x + static_cast<std::size_t>(ic) * h * w;
    for (int ki = 0; ki < k; ++ki) {
      for (int kj = 0; kj < k; ++kj) {
        const float* src =
            col + static_cast<std::size_t>((ic * k + ki) * k + kj) * plane;
        int lo, hi;
        ValidRange(kj, ow, w, g, lo, hi);
        const int off = kj - g.pad;
        for (int i = 0; i < oh; ++i) {
          const int yi = i * g.stride - g.pad + ki;
          if (yi < 0 || yi >= h) continue;
          float* drow = dst + yi * w + off;
          const float* row = src + i * ow;
          if (g.stride == 1) {
#pragma omp simd
            for (int j = lo; j < hi; ++j) drow[j] += row[j];
          } else {
            for (int j = lo; j < hi; ++j) drow[j * g.stride] += row[j];
          }
        }
      }
    }
  }
}

bool IsPointwise(const ConvGeometry& g) {
  return g.kernel == 1 && g.stride == 1 && g.pad == 0;
}

void CheckConvInput(const ConvGeometry& g, const Tensor& x) {
  if (x.shape().c != g.in_channels) {
    throw DomainError("conv2d expects " + std::to_string(g.in_channels) +
                      " input channels, got " + x.shape().ToString());
  }
}

}  // namespace

void SetKernelThreads(int n) {
  g_threads = n > 0 ? n : 0;
#ifdef _OPENMP
  if (n > 0) omp_set_num_threads(n);
#endif
}

int KernelThreads() { return ThreadCount(); }

void Conv2dForward(const ConvGeometry& g, const Tensor& x,
                   std::span<const float> weight, std::span<const float> bias,
                   Tensor& y) {
  CheckConvInput(g, x);
  const Shape in = x.shape();
  const int oh = g.OutSize(in.h), ow = g.OutSize(in.w);
  const Shape out{in.n, g.out_channels, oh, ow};
  if (y.shape() != out) y = Tensor(out);
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const int plane = oh * ow;
  const bool pointwise = IsPointwise(g);

#pragma omp parallel num_threads(ThreadCount())
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) *
                                               plane);
#pragma omp for schedule(static)
    for (int b = 0; b < in.n; ++b) {
      const float* src = x.sample(b);
      if (!pointwise) {
        Im2Col(src, in.c, in.h, in.w, g, col.data());
        src = col.data();
      }
      float* dst = y.sample(b);
      for (int oc = 0; oc < g.out_channels; ++oc)
        std::fill(dst + oc * plane, dst + (oc + 1) * plane, bias[oc]);
      cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, g.out_channels,
                  plane, kdim, 1.0f, weight.data(), kdim, src, plane, 1.0f,
                  dst, plane);
    }
  }
}

void Conv2dBackward(const ConvGeometry& g, const Tensor& x,
                    std::span<const float> weight, const Tensor& dy,
                    Tensor* dx, std::span<float> dweight,
                    std::span<float> dbias) {
  CheckConvInput(g, x);
  const Shape in = x.shape();
  const int oh = g.OutSize(in.h), ow = g.OutSize(in.w);
  const int kdim = g.in_channels * g.kernel * g.kernel;
  const int plane = oh * ow;
  const bool pointwise = IsPointwise(g);
  const bool want_w = !dweight.empty();
  const bool want_b = !dbias.empty();
  if (dx != nullptr && dx->shape() != in) *dx = Tensor(in);

#pragma omp parallel num_threads(ThreadCount())
  {
    std::vector<float> col(pointwise ? 0 : static_cast<std::size_t>(kdim) *
                                               plane);
    std::vector<float> dcol(
        (dx != nullptr && !pointwise) ? static_cast<std::size_t>(kdim) * plane
                                      : 0);
    std::vector<float> local_dw(want_w ? dweight.size() : 0, 0.0f);
    std::vector<float> local_db(want_b ? dbias.size() : 0, 0.0f);
#pragma omp for schedule(static)
    for (int b = 0; b < in.n; ++b) {
      const float* grad = dy.sample(b);
      if (want_w) {
        const float* src = x.sample(b);
        if (!pointwise) {
          Im2Col(src, in.c, in.h, in.w, g, col.data());
          src = col.data();
        }
        cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, g.out_channels,
                    kdim, plane, 1.0f, grad, plane, src, plane, 1.0f,
                    local_dw.data(), kdim);
      }
      if (want_b) {
        for (int oc = 0; oc < g.out_channels; ++oc) {
          float s = 0.0f;
          for (int p = 0; p < plane; ++p) s += grad[oc * plane + p];
          local_db[oc] += s;
        }
      }
      if (dx != nullptr) {
        float* target = pointwise ? dx->sample(b) : dcol.data();
        cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, kdim, plane,
                    g.out_channels, 1.0f, weight.data(), kdim, grad, plane,
                    0.0f, target, plane);
        if (!pointwise) Col2Im(dcol.data(), in.c, in.h, in.w, g, dx->sample(b));
      }
    }
#pragma omp critical
    {
      for (std::size_t i = 0; i < local_dw.size(); ++i) dweight[i] += local_dw[i];
      for (std::size_t i = 0; i < local_db.size(); ++i) dbias[i] += local_db[i];
    }
  }
}

void MaxPool2Forward(const Tensor& x, Tensor& y, std::vector<int32_t>& argmax) {
  const Shape in = x.shape();
  const Shape out{in.n, in.c, in.h / 2, in.w / 2};
  if (y.shape() != out) y = Tensor(out);
  argmax.resize(out.numel());
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static) num_threads(ThreadCount())
  for (int p = 0; p < planes; ++p) {
    const std::size_t in_base = static_cast<std::size_t>(p) * in.h * in.w;
    const std::size_t out_base = static_cast<std::size_t>(p) * out.h * out.w;
    for (int i = 0; i < out.h; ++i) {
      for (int j = 0; j < out.w; ++j) {
        std::size_t best = in_base + (2 * i) * in.w + 2 * j;
        for (int di = 0; di < 2; ++di)
          for (int dj = 0; dj < 2; ++dj) {
            const std::size_t idx = in_base + (2 * i + di) * in.w + 2 * j + dj;
            if (x.data()[idx] > x.data()[best]) best = idx;
          }
        y.data()[out_base + i * out.w + j] = x.data()[best];
        argmax[out_base + i * out.w + j] = static_cast<int32_t>(best);
      }
    }
  }
}

void MaxPool2Backward(const Tensor& dy, const std::vector<int32_t>& argmax,
                      Shape input_shape, Tensor& dx) {
  if (dx.shape() != input_shape) dx = Tensor(input_shape);
  dx.Fill(0.0f);
  // Windows do not overlap, so each argmax target is written by one output.
  const std::size_t count = dy.size();
#pragma omp parallel for schedule(static) num_threads(ThreadCount())
  for (std::size_t i = 0; i < count; ++i) dx.data()[argmax[i]] += dy.data()[i];
}

void Upsample2Forward(const Tensor& x, Tensor& y) {
  const Shape in = x.shape();
  const Shape out{in.n, in.c, in.h * 2, in.w * 2};
  if (y.shape() != out) y = Tensor(out);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static) num_threads(ThreadCount())
  for (int p = 0; p < planes; ++p) {
    const float* src = x.data() + static_cast<std::size_t>(p) * in.h * in.w;
    float* dst = y.data() + static_cast<std::size_t>(p) * out.h * out.w;
    for (int i = 0; i < out.h; ++i) {
      const float* srow = src + (i / 2) * in.w;
      float* drow = dst + i * out.w;
      for (int j = 0; j < out.w; ++j) drow[j] = srow[j / 2];
    }
  }
}

void Upsample2Backward(const Tensor& dy, Tensor& dx) {
  const Shape out = dy.shape();
  const Shape in{out.n, out.c, out.h / 2, out.w / 2};
  if (dx.shape() != in) dx = Tensor(in);
  const int planes = in.n * in.c;
#pragma omp parallel for schedule(static) num_threads(ThreadCount())
  for (int p = 0; p < planes; ++p) {
    const float* src = dy.data() + static_cast<std::size_t>(p) * out.h * out.w;
    float* dst = dx.data() + static_cast<std::size_t>(p) * in.h * in.w;
    for (int i = 0; i < in.h; ++i)
      for (int j = 0; j < in.w; ++j)
        dst[i * in.w + j] = src[(2 * i) * out.w + 2 * j] +
                            src[(2 * i) * out.w + 2 * j + 1] +
                            src[(2 * i + 1) * out.w + 2 * j] +
                            src[(2 * i + 1) * out.w + 2 * j + 1];
  }
}

void ConcatChannels(const Tensor& a, const Tensor& b, Tensor& out) {
  const Shape sa = a.shape(), sb = b.shape();
  if (sa.n != sb.n || sa.h != sb.h || sa.w != sb.w) {
    throw DomainError("concat shape mismatch " + sa.ToString() + " vs " +
                      sb.ToString());
  }
  const Shape so{sa.n, sa.c + sb.c, sa.h, sa.w};
  if (out.shape() != so) out = Tensor(so);
  for (int i = 0; i < sa.n; ++i) {
    std::copy_n(a.sample(i), sa.sample_size(), out.sample(i));
    std::copy_n(b.sample(i), sb.sample_size(),
                out.sample(i) + sa.sample_size());
  }
}

void SplitChannels(const Tensor& d, int a_channels, Tensor& da, Tensor& db) {
  const Shape s = d.shape();
  const Shape sa{s.n, a_channels, s.h, s.w};
  const Shape sb{s.n, s.c - a_channels, s.h, s.w};
  if (da.shape() != sa) da = Tensor(sa);
  if (db.shape() != sb) db = Tensor(sb);
  for (int i = 0; i < s.n; ++i) {
    std::copy_n(d.sample(i), sa.sample_size(), da.sample(i));
    std::copy_n(d.sample(i) + sa.sample_size(), sb.sample_size(),
                db.sample(i));
  }
}

void LeakyReluInPlace(Tensor& t, float slope) {
  float* p = t.data();
  const std::size_t count = t.size();
#pragma omp simd
  for (std::size_t i = 0; i < count; ++i) p[i] = p[i] > 0.0f ? p[i] : slope * p[i];
}

void LeakyReluBackwardInPlace(const Tensor& y, Tensor& dy, float slope) {
  const float* a = y.data();
  float* g = dy.data();
  const std::size_t count = dy.size();
#pragma omp simd
  for (std::size_t i = 0; i < count; ++i) g[i] = a[i] > 0.0f ? g[i] : slope * g[i];
}

void SigmoidInPlace(Tensor& t) {
  for (float& v : t.values()) v = 1.0f / (1.0f + std::exp(-v));
}

void SigmoidBackwardInPlace(const Tensor& y, Tensor& dy) {
  const float* a = y.data();
  float* g = dy.data();
  const std::size_t count = dy.size();
  for (std::size_t i = 0; i < count; ++i) g[i] *= a[i] * (1.0f - a[i]);
}

void DenseForward(std::span<const float> weight, std::span<const float> bias,
                  int in_features, int out_features, const Tensor& x,
                  Tensor& y) {
  const int n = x.shape().n;
  if (static_cast<int>(x.shape().sample_size()) != in_features) {
    throw DomainError("dense expects " + std::to_string(in_features) +
                      " features, got " + x.shape().ToString());
  }
  const Shape out{n, out_features, 1, 1};
  if (y.shape() != out) y = Tensor(out);
  for (int b = 0; b < n; ++b)
    std::copy_n(bias.data(), out_features, y.sample(b));
  cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasTrans, n, out_features,
              in_features, 1.0f, x.data(), in_features, weight.data(),
              in_features, 1.0f, y.data(), out_features);
}

void DenseBackward(std::span<const float> weight, int in_features,
                   int out_features, const Tensor& x, const Tensor& dy,
                   Tensor* dx, std::span<float> dweight,
                   std::span<float> dbias) {
  const int n = x.shape().n;
  if (!dweight.empty()) {
    cblas_sgemm(CblasRowMajor, CblasTrans, CblasNoTrans, out_features,
                in_features, n, 1.0f, dy.data(), out_features, x.data(),
                in_features, 1.0f, dweight.data(), in_features);
  }
  if (!dbias.empty()) {
    for (int b = 0; b < n; ++b)
      for (int o = 0; o < out_features; ++o)
        dbias[o] += dy.data()[static_cast<std::size_t>(b) * out_features + o];
  }
  if (dx != nullptr) {
    if (dx->shape() != x.shape()) *dx = Tensor(x.shape());
    cblas_sgemm(CblasRowMajor, CblasNoTrans, CblasNoTrans, n, in_features,
                out_features, 1.0f, dy.data(), out_features, weight.data(),
                in_features, 0.0f, dx->data(), in_features);
  }
}

void SoftmaxRows(const Tensor& logits, Tensor& probs) {
  const int n = logits.shape().n;
  const int k = static_cast<int>(logits.shape().sample_size());
  if (probs.shape() != logits.shape()) probs = Tensor(logits.shape());
  for (int b = 0; b < n; ++b) {
    const float* z = logits.sample(b);
    float* p = probs.sample(b);
    const float m = *std::max_element(z, z + k);
    double sum = 0.0;
    for (int i = 0; i < k; ++i) {
      p[i] = std::exp(z[i] - m);
      sum += p[i];
    }
    const float inv = static_cast<float>(1.0 / sum);
    for (int i = 0; i < k; ++i) p[i] *= inv;
  }
}

}  // namespace cpriv
