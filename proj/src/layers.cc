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
#include "cpriv/layers.h"

#include <algorithm>
#include <cmath>
#include <cstring>

namespace cpriv {
namespace {

void FillUniform(std::vector<float>& v, double bound, Rng& rng) {
  std::uniform_real_distribution<double> dist(-bound, bound);
  for (float& x : v) x = static_cast<float>(dist(rng));
}

}  // namespace

Conv2d::Conv2d(ConvGeometry g, Rng& rng, double gain)
    : geom(g),
      weight(g.weight_count()),
      bias(g.out_channels, 0.0f),
      grad_weight(g.weight_count(), 0.0f),
      grad_bias(g.out_channels, 0.0f) {
  const double fan_in = static_cast<double>(g.in_channels) * g.kernel * g.kernel;
  FillUniform(weight, gain * std::sqrt(3.0 / fan_in), rng);
}

void Conv2d::ZeroGrad() {
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

void Conv2d::AppendParams(std::vector<ParamRef>& out) {
  out.push_back({weight, grad_weight});
  out.push_back({bias, grad_bias});
}

Dense::Dense(int in, int out, Rng& rng, double gain)
    : in_features(in),
      out_features(out),
      weight(static_cast<std::size_t>(in) * out),
      bias(out, 0.0f),
      grad_weight(static_cast<std::size_t>(in) * out, 0.0f),
      grad_bias(out, 0.0f) {
  FillUniform(weight, gain * std::sqrt(3.0 / in), rng);
}

void Dense::ZeroGrad() {
  std::fill(grad_weight.begin(), grad_weight.end(), 0.0f);
  std::fill(grad_bias.begin(), grad_bias.end(), 0.0f);
}

void Dense::AppendParams(std::vector<ParamRef>& out) {
  out.push_back({weight, grad_weight});
  out.push_back({bias, grad_bias});
}

void ParameterHasher::Add(std::span<const float> values) {
  const auto* bytes = reinterpret_cast<const unsigned char*>(values.data());
  const std::size_t n = values.size() * sizeof(float);
  for (std::size_t i = 0; i < n; ++i) {
    state_ ^= bytes[i];
    state_ *= 0x100000001b3ULL;
  }
}

Adam::Adam(std::vector<ParamRef> params, AdamOptions options)
    : params_(std::move(params)), options_(options) {
  m_.reserve(params_.size());
  v_.reserve(params_.size());
  for (const ParamRef& p : params_) {
    m_.emplace_back(p.value.size(), 0.0f);
    v_.emplace_back(p.value.size(), 0.0f);
  }
}

void Adam::Step() {
  ++steps_;
  const double b1 = options_.beta1, b2 = options_.beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(steps_));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(steps_));
  double lr = options_.learning_rate;
  if (steps_ < options_.warmup_steps) {
    lr *= static_cast<double>(steps_) / static_cast<double>(options_.warmup_steps);
  }
  const float step = static_cast<float>(lr / c1);
  const float inv_c2 = static_cast<float>(1.0 / c2);
  const float eps = static_cast<float>(options_.epsilon);
  const float fb1 = static_cast<float>(b1), fb2 = static_cast<float>(b2);
  for (std::size_t k = 0; k < params_.size(); ++k) {
    float* w = params_[k].value.data();
    const float* g = params_[k].grad.data();
    float* m = m_[k].data();
    float* v = v_[k].data();
    const std::size_t n = params_[k].value.size();
    for (std::size_t i = 0; i < n; ++i) {
      m[i] = fb1 * m[i] + (1.0f - fb1) * g[i];
      v[i] = fb2 * v[i] + (1.0f - fb2) * g[i] * g[i];
      w[i] -= step * m[i] / (std::sqrt(v[i] * inv_c2) + eps);
    }
  }
}

void Adam::ZeroGrad() {
  for (ParamRef& p : params_) std::fill(p.grad.begin(), p.grad.end(), 0.0f);
}

}  // namespace cpriv
