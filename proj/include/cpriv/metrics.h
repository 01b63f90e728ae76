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
#ifndef CPRIV_METRICS_H_
#define CPRIV_METRICS_H_

#include <cstdint>
#include <span>
#include <vector>

#include "cpriv/models.h"
#include "cpriv/tensor.h"

namespace cpriv {

inline constexpr int kInferenceChunk = 256;

// Classifier posteriors over a large batch, evaluated in chunks.
Tensor PredictProbs(const Classifier& model, const Tensor& images,
                    int chunk = kInferenceChunk);
Tensor PredictFeatures(const Classifier& model, const Tensor& images,
                       int chunk = kInferenceChunk);
Tensor RunUNet(const UNet& unet, const Tensor& images,
               int chunk = kInferenceChunk);

// Rows [begin, begin + count) of a batched tensor.
Tensor SliceRows(const Tensor& t, int begin, int count);
Tensor GatherRows(const Tensor& t, std::span<const int> rows);

// Fraction of rows whose true label ranks among the k largest probabilities.
// Ties with the true label are broken uniformly at random from tie_seed.
double TopKAccuracy(const Tensor& probs, std::span<const int> labels, int k,
                    uint64_t tie_seed = 0);

// Argmax accuracy (ties resolved toward the lower index).
double Accuracy(const Tensor& probs, std::span<const int> labels);

// Indices of the k largest entries of row, descending by probability.
std::vector<int> TopKIndices(std::span<const float> row, int k);

}  // namespace cpriv

#endif  // CPRIV_METRICS_H_
