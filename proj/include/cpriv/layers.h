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
#ifndef CPRIV_LAYERS_H_
#define CPRIV_LAYERS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "cpriv/kernels.h"
#include "cpriv/rng.h"

namespace cpriv {

// A trainable buffer and its gradient accumulator.
struct ParamRef {
  std::span<float> value;
  std::span<float> grad;
};

struct Conv2d {
  ConvGeometry geom;
  std::vector<float> weight;
  std::vector<float> bias;
  std::vector<float> grad_weight;
  std::vector<float> grad_bias;

  Conv2d() = default;
  Conv2d(ConvGeometry g, Rng& rng, double gain);

  void ZeroGrad();
  void AppendParams(std::vector<ParamRef>& out);
};

struct Dense {
  int in_features = 0;
  int out_features = 0;
  std::vector<float> weight;  // [out, in]
  std::vector<float> bias;
  std::vector<float> grad_weight;
  std::vector<float> grad_bias;

  Dense() = default;
  Dense(int in, int out, Rng& rng, double gain);

  void ZeroGrad();
  void AppendParams(std::vector<ParamRef>& out);
};

// FNV-1a over the raw bytes of every buffer in order.
class ParameterHasher {
 public:
  void Add(std::span<const float> values);
  uint64_t digest() const { return state_; }

 private:
  uint64_t state_ = 0xcbf29ce484222325ULL;
};

struct AdamOptions {
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  // Linear ramp of the learning rate over the first steps.
  int64_t warmup_steps = 0;
};

// The parameter buffers must outlive the optimizer and must not reallocate.
class Adam {
 public:
  Adam(std::vector<ParamRef> params, AdamOptions options);

  void Step();
  void ZeroGrad();
  int64_t steps() const { return steps_; }
  double learning_rate() const { return options_.learning_rate; }
  void set_learning_rate(double lr) { options_.learning_rate = lr; }

 private:
  std::vector<ParamRef> params_;
  AdamOptions options_;
  std::vector<std::vector<float>> m_;
  std::vector<std::vector<float>> v_;
  int64_t steps_ = 0;
};

}  // namespace cpriv

#endif  // CPRIV_LAYERS_H_
