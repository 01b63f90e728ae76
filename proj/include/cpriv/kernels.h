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
#ifndef CPRIV_KERNELS_H_
#define CPRIV_KERNELS_H_

// Production compute kernels: im2col + SGEMM convolutions, OpenMP-parallel
// over the batch dimension. cpriv/reference_kernels.h holds the serial
// direct-loop implementation the tests and benchmarks compare against.

#include <cstdint>
#include <span>
#include <vector>

#include "cpriv/tensor.h"

namespace cpriv {

struct ConvGeometry {
  int in_channels = 0;
  int out_channels = 0;
  int kernel = 3;
  int stride = 1;
  int pad = 1;

  int OutSize(int in) const { return (in + 2 * pad - kernel) / stride + 1; }
  std::size_t weight_count() const {
    return static_cast<std::size_t>(out_channels) * in_channels * kernel *
           kernel;
  }
  bool operator==(const ConvGeometry&) const = default;
};

// Sets the worker count used by every kernel (OpenMP). n <= 0 keeps the
// runtime default.
void SetKernelThreads(int n);
int KernelThreads();

// y is resized to [n, out_channels, OutSize(h), OutSize(w)].
void Conv2dForward(const ConvGeometry& g, const Tensor& x,
                   std::span<const float> weight, std::span<const float> bias,
                   Tensor& y);

// Accumulates into dweight/dbias when non-empty; overwrites *dx when non-null.
void Conv2dBackward(const ConvGeometry& g, const Tensor& x,
                    std::span<const float> weight, const Tensor& dy,
                    Tensor* dx, std::span<float> dweight,
                    std::span<float> dbias);

// 2x2, stride 2. argmax stores the flat input index of each output element.
void MaxPool2Forward(const Tensor& x, Tensor& y, std::vector<int32_t>& argmax);
void MaxPool2Backward(const Tensor& dy, const std::vector<int32_t>& argmax,
                      Shape input_shape, Tensor& dx);

void Upsample2Forward(const Tensor& x, Tensor& y);
void Upsample2Backward(const Tensor& dy, Tensor& dx);

// out = [a channels..., b channels...]
void ConcatChannels(const Tensor& a, const Tensor& b, Tensor& out);
void SplitChannels(const Tensor& d, int a_channels, Tensor& da, Tensor& db);

// slope = 0 gives ReLU.
void LeakyReluInPlace(Tensor& t, float slope);
// dy *= f'(.), evaluated from the activation output y (same sign as input).
void LeakyReluBackwardInPlace(const Tensor& y, Tensor& dy, float slope);
void SigmoidInPlace(Tensor& t);
void SigmoidBackwardInPlace(const Tensor& y, Tensor& dy);

// y[n, out] = x[n, in] * W^T + b, W row-major [out, in].
void DenseForward(std::span<const float> weight, std::span<const float> bias,
                  int in_features, int out_features, const Tensor& x,
                  Tensor& y);
void DenseBackward(std::span<const float> weight, int in_features,
                   int out_features, const Tensor& x, const Tensor& dy,
                   Tensor* dx, std::span<float> dweight,
                   std::span<float> dbias);

// Row-wise softmax over the channel dimension of [n, k] logits.
void SoftmaxRows(const Tensor& logits, Tensor& probs);

}  // namespace cpriv

#endif  // CPRIV_KERNELS_H_
