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
#ifndef CPRIV_MODELS_H_
#define CPRIV_MODELS_H_

#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "cpriv/layers.h"
#include "cpriv/tensor.h"
#include "cpriv/toy_data.h"

namespace cpriv {

// conv3x3(C->16)+ReLU, maxpool2, conv3x3(16->32)+ReLU, maxpool2, flatten,
// dense(->64)+ReLU form the backbone; dense(64->K) is the final layer and
// softmax produces the posterior.
class Classifier {
 public:
  static constexpr int kHidden = 64;

  struct Cache {
    Tensor x;
    Tensor conv1;
    Tensor pool1;
    std::vector<int32_t> pool1_argmax;
    Tensor conv2;
    Tensor pool2;
    std::vector<int32_t> pool2_argmax;
    Tensor hidden;
    Tensor logits;
    Tensor probs;
  };

  Classifier() = default;
  Classifier(ImageShape input, int num_classes, uint64_t seed);

  ImageShape input_shape() const { return input_; }
  int num_classes() const { return num_classes_; }
  bool frozen_backbone() const { return frozen_backbone_; }
  void set_frozen_backbone(bool frozen) { frozen_backbone_ = frozen; }

  // Posterior probabilities [n, K]. Throws DomainError on shape mismatch.
  Tensor Forward(const Tensor& x) const;
  void Forward(const Tensor& x, Cache& cache) const;
  // Backbone output [n, 64].
  Tensor Features(const Tensor& x) const;
  Tensor HeadLogits(const Tensor& features) const;
  Tensor HeadProbs(const Tensor& features) const;

  // Accumulates parameter gradients for the selected parts and writes the
  // input gradient to *dx when non-null.
  void Backward(const Cache& cache, const Tensor& dlogits, bool backbone_grads,
                bool head_grads, Tensor* dx);
  // Input gradient only; parameters untouched.
  void BackwardInput(const Cache& cache, const Tensor& dlogits,
                     Tensor& dx) const;
  // Final-layer parameter gradients from precomputed features.
  void HeadBackward(const Tensor& features, const Tensor& dlogits);

  std::vector<ParamRef> BackboneParams();
  std::vector<ParamRef> HeadParams();
  void ZeroGrad();

  // Same backbone, freshly initialized final layer.
  Classifier CloneFinalLayer(uint64_t seed) const;
  void ZeroHead();

  uint64_t ParameterHash() const;
  uint64_t BackboneHash() const;

  // Layer access for checkpointing.
  Conv2d& conv1() { return conv1_; }
  Conv2d& conv2() { return conv2_; }
  Dense& fc() { return fc_; }
  Dense& head() { return head_; }
  const Conv2d& conv1() const { return conv1_; }
  const Conv2d& conv2() const { return conv2_; }
  const Dense& fc() const { return fc_; }
  const Dense& head() const { return head_; }

 private:
  void CheckInput(const Tensor& x) const;
  void BackwardImpl(const Cache& cache, const Tensor& dlogits,
                    Dense* head_grad, Conv2d* conv1_grad, Conv2d* conv2_grad,
                    Dense* fc_grad, Tensor* dx) const;

  ImageShape input_;
  int num_classes_ = 0;
  bool frozen_backbone_ = false;
  Conv2d conv1_;
  Conv2d conv2_;
  Dense fc_;
  Dense head_;
};

// UNET-S. Layer order: enc1, down1, down2, mid, up1, up2, out.
class UNet {
 public:
  static constexpr float kSlope = 0.2f;
  static constexpr int kConvCount = 7;

  struct Cache {
    Tensor x;
    Tensor enc1;
    Tensor down1;
    Tensor down2;
    Tensor mid;
    Tensor cat1;
    Tensor up1;
    Tensor cat2;
    Tensor up2;
    Tensor out;
  };

  UNet() = default;
  UNet(ImageShape input, uint64_t seed);
  // Builds from explicit layers (import path). Validates the topology.
  UNet(ImageShape input, std::vector<Conv2d> convs);

  ImageShape input_shape() const { return input_; }

  Tensor Forward(const Tensor& x) const;
  void Forward(const Tensor& x, Cache& cache) const;
  // Accumulates all parameter gradients. dx is optional.
  void Backward(const Cache& cache, const Tensor& dout, Tensor* dx);

  std::vector<ParamRef> Params();
  void ZeroGrad();
  uint64_t ParameterHash() const;

  const Conv2d& conv(int i) const { return convs_.at(i); }
  Conv2d& conv(int i) { return convs_.at(i); }

  // Expected geometry of each conv for a given channel count.
  static std::vector<ConvGeometry> Topology(int channels);

 private:
  void CheckInput(const Tensor& x) const;

  ImageShape input_;
  std::vector<Conv2d> convs_;
};

enum class SanitizerKind { kDeterministic, kStochastic };

const char* SanitizerKindName(SanitizerKind kind);
SanitizerKind ParseSanitizerKind(const std::string& name);

// S(x): deterministic = UNET-S; stochastic = attribute overwrite drawn from
// the prior followed by UNET-S.
class SanitizerModel {
 public:
  SanitizerModel() = default;
  static SanitizerModel Deterministic(ImageShape input, uint64_t seed);
  static SanitizerModel Stochastic(DatasetSpec generator, uint64_t seed);
  static SanitizerModel FromUNet(SanitizerKind kind, UNet unet,
                                 std::optional<DatasetSpec> generator);

  SanitizerKind kind() const { return kind_; }
  ImageShape input_shape() const { return unet_.input_shape(); }
  const UNet& unet() const { return unet_; }
  UNet& unet() { return unet_; }
  const std::optional<DatasetSpec>& generator() const { return generator_; }

  Tensor SanitizeDeterministic(const Tensor& images) const;
  Tensor SanitizeStochastic(const Sample& sample, const Prior& prior,
                            Rng& rng) const;

  // What the UNET consumes for the given samples: the raw images for the
  // deterministic kind, per-visit attribute-resampled renders otherwise.
  Tensor PrepareInputs(const Dataset& data, std::span<const int> indices,
                       const Prior& prior, Rng& rng) const;
  Tensor Sanitize(const Dataset& data, std::span<const int> indices,
                  const Prior& prior, Rng& rng) const;

 private:
  SanitizerKind kind_ = SanitizerKind::kDeterministic;
  UNet unet_;
  std::optional<DatasetSpec> generator_;
};

int DrawAttribute(const Prior& prior, Rng& rng);

}  // namespace cpriv

#endif  // CPRIV_MODELS_H_
