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
#include "cpriv/metrics.h"

#include <algorithm>
#include <numeric>
#include <random>

#include "cpriv/error.h"
#include "cpriv/rng.h"

namespace cpriv {

Tensor SliceRows(const Tensor& t, int begin, int count) {
  Shape s = t.shape();
  s.n = count;
  Tensor out(s);
  std::copy_n(t.sample(begin), s.numel(), out.data());
  return out;
}

Tensor GatherRows(const Tensor& t, std::span<const int> rows) {
  Shape s = t.shape();
  s.n = static_cast<int>(rows.size());
  Tensor out(s);
  for (std::size_t i = 0; i < rows.size(); ++i)
    std::copy_n(t.sample(rows[i]), s.sample_size(),
                out.sample(static_cast<int>(i)));
  return out;
}

namespace {

template <typename Fn>
Tensor Chunked(const Tensor& images, int chunk, Fn&& fn) {
  const int n = images.shape().n;
  Tensor out;
  for (int begin = 0; begin < n; begin += chunk) {
    const int count = std::min(chunk, n - begin);
    Tensor part = fn(SliceRows(images, begin, count));
    if (out.empty()) {
      Shape s = part.shape();
      s.n = n;
      out = Tensor(s);
    }
    std::copy_n(part.data(), part.size(), out.sample(begin));
  }
  return out;
}

}  // namespace

Tensor PredictProbs(const Classifier& model, const Tensor& images, int chunk) {
  return Chunked(images, chunk,
                 [&](const Tensor& x) { return model.Forward(x); });
}

Tensor PredictFeatures(const Classifier& model, const Tensor& images,
                       int chunk) {
  return Chunked(images, chunk,
                 [&](const Tensor& x) { return model.Features(x); });
}

Tensor RunUNet(const UNet& unet, const Tensor& images, int chunk) {
  return Chunked(images, chunk,
                 [&](const Tensor& x) { return unet.Forward(x); });
}

double TopKAccuracy(const Tensor& probs, std::span<const int> labels, int k,
                    uint64_t tie_seed) {
  const int n = probs.shape().n;
  const int classes = static_cast<int>(probs.shape().sample_size());
  if (k < 1 || k > classes) {
    throw DomainError("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(classes) + "]");
  }
  if (static_cast<int>(labels.size()) != n) {
    throw DomainError("label count does not match posterior rows");
  }
  if (n == 0) return 0.0;
  Rng rng(tie_seed);
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = probs.sample(i);
    const float truth = row[labels[i]];
    int greater = 0, ties = 0;
    for (int c = 0; c < classes; ++c) {
      if (c == labels[i]) continue;
      if (row[c] > truth) ++greater;
      else if (row[c] == truth) ++ties;
    }
    int position = 0;
    if (ties > 0) position = std::uniform_int_distribution<int>(0, ties)(rng);
    if (greater + position < k) ++hits;
  }
  return static_cast<double>(hits) / n;
}

double Accuracy(const Tensor& probs, std::span<const int> labels) {
  const int n = probs.shape().n;
  const int classes = static_cast<int>(probs.shape().sample_size());
  if (static_cast<int>(labels.size()) != n) {
    throw DomainError("label count does not match posterior rows");
  }
  if (n == 0) return 0.0;
  int hits = 0;
  for (int i = 0; i < n; ++i) {
    const float* row = probs.sample(i);
    const int arg = static_cast<int>(std::max_element(row, row + classes) - row);
    hits += arg == labels[i];
  }
  return static_cast<double>(hits) / n;
}

std::vector<int> TopKIndices(std::span<const float> row, int k) {
  std::vector<int> idx(row.size());
  std::iota(idx.begin(), idx.end(), 0);
  k = std::clamp(k, 0, static_cast<int>(row.size()));
  std::partial_sort(idx.begin(), idx.begin() + k, idx.end(),
                    [&](int a, int b) {
                      return row[a] > row[b] || (row[a] == row[b] && a < b);
                    });
  idx.resize(k);
  return idx;
}

}  // namespace cpriv
