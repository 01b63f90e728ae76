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
#include "cpriv/models.h"

#include <algorithm>
#include <numeric>

#include "cpriv/error.h"
#include "cpriv/kernels.h"

namespace cpriv {
namespace {

constexpr double kReluGain = 1.4142135623730951;

std::span<const float> Const(const std::vector<float>& v) { return v; }

void ConvForward(const Conv2d& c, const Tensor& x, Tensor& y) {
  Conv2dForward(c.geom, x, Const(c.weight), Const(c.bias), y);
}

void ConvBackward(Conv2d& c, const Tensor& x, const Tensor& dy, Tensor* dx) {
  Conv2dBackward(c.geom, x, Const(c.weight), dy, dx, c.grad_weight,
                 c.grad_bias);
}

}  // namespace

// ---------------------------------------------------------------- Classifier

Classifier::Classifier(ImageShape input, int num_classes, uint64_t seed)
    : input_(input), num_classes_(num_classes) {
  if (num_classes < 2) throw ConfigError("classifier needs >= 2 classes");
  if (input.height % 4 != 0 || input.width % 4 != 0) {
    throw ConfigError("classifier input H, W must be divisible by 4");
  }
  Rng rng(seed);
  conv1_ = Conv2d({input.channels, 16, 3, 1, 1}, rng, kReluGain);
  conv2_ = Conv2d({16, 32, 3, 1, 1}, rng, kReluGain);
  fc_ = Dense(32 * (input.height / 4) * (input.width / 4), kHidden, rng,
              kReluGain);
  head_ = Dense(kHidden, num_classes, rng, 1.0);
}

void Classifier::CheckInput(const Tensor& x) const {
  if (x.shape().image() != input_) {
    throw DomainError("classifier expects " + input_.ToString() + ", got " +
                      x.shape().ToString());
  }
}

void Classifier::Forward(const Tensor& x, Cache& cache) const {
  CheckInput(x);
  cache.x = x;
  ConvForward(conv1_, x, cache.conv1);
  LeakyReluInPlace(cache.conv1, 0.0f);
  MaxPool2Forward(cache.conv1, cache.pool1, cache.pool1_argmax);
  ConvForward(conv2_, cache.pool1, cache.conv2);
  LeakyReluInPlace(cache.conv2, 0.0f);
  MaxPool2Forward(cache.conv2, cache.pool2, cache.pool2_argmax);
  DenseForward(fc_.weight, fc_.bias, fc_.in_features, fc_.out_features,
               cache.pool2, cache.hidden);
  LeakyReluInPlace(cache.hidden, 0.0f);
  DenseForward(head_.weight, head_.bias, head_.in_features,
               head_.out_features, cache.hidden, cache.logits);
  SoftmaxRows(cache.logits, cache.probs);
}

Tensor Classifier::Forward(const Tensor& x) const {
  Cache cache;
  Forward(x, cache);
  return std::move(cache.probs);
}

Tensor Classifier::Features(const Tensor& x) const {
  CheckInput(x);
  Tensor a, b;
  std::vector<int32_t> argmax;
  ConvForward(conv1_, x, a);
  LeakyReluInPlace(a, 0.0f);
  MaxPool2Forward(a, b, argmax);
  ConvForward(conv2_, b, a);
  LeakyReluInPlace(a, 0.0f);
  MaxPool2Forward(a, b, argmax);
  Tensor hidden;
  DenseForward(fc_.weight, fc_.bias, fc_.in_features, fc_.out_features, b,
               hidden);
  LeakyReluInPlace(hidden, 0.0f);
  return hidden;
}

Tensor Classifier::HeadLogits(const Tensor& features) const {
  Tensor logits;
  DenseForward(head_.weight, head_.bias, head_.in_features, head_.out_features,
               features, logits);
  return logits;
}

Tensor Classifier::HeadProbs(const Tensor& features) const {
  Tensor probs;
  SoftmaxRows(HeadLogits(features), probs);
  return probs;
}

void Classifier::Backward(const Cache& cache, const Tensor& dlogits,
                          bool backbone_grads, bool head_grads, Tensor* dx) {
  Dense* head_grad = head_grads ? &head_ : nullptr;
  if (backbone_grads) {
    BackwardImpl(cache, dlogits, head_grad, &conv1_, &conv2_, &fc_, dx);
  } else {
    BackwardImpl(cache, dlogits, head_grad, nullptr, nullptr, nullptr, dx);
  }
}

void Classifier::BackwardInput(const Cache& cache, const Tensor& dlogits,
                               Tensor& dx) const {
  BackwardImpl(cache, dlogits, nullptr, nullptr, nullptr, nullptr, &dx);
}

void Classifier::BackwardImpl(const Cache& cache, const Tensor& dlogits,
                              Dense* head_grad, Conv2d* conv1_grad,
                              Conv2d* conv2_grad, Dense* fc_grad,
                              Tensor* dx) const {
  const auto span_of = [](std::vector<float>* v) {
    return v != nullptr ? std::span<float>(*v) : std::span<float>();
  };
  const bool backbone = fc_grad != nullptr;
  const bool need_hidden = backbone || dx != nullptr;
  Tensor dhidden;
  DenseBackward(head_.weight, head_.in_features, head_.out_features,
                cache.hidden, dlogits, need_hidden ? &dhidden : nullptr,
                span_of(head_grad ? &head_grad->grad_weight : nullptr),
                span_of(head_grad ? &head_grad->grad_bias : nullptr));
  if (!need_hidden) return;

  LeakyReluBackwardInPlace(cache.hidden, dhidden, 0.0f);
  Tensor dpool2;
  DenseBackward(fc_.weight, fc_.in_features, fc_.out_features, cache.pool2,
                dhidden, &dpool2,
                span_of(backbone ? &fc_grad->grad_weight : nullptr),
                span_of(backbone ? &fc_grad->grad_bias : nullptr));
  Tensor dconv2;
  MaxPool2Backward(dpool2, cache.pool2_argmax, cache.conv2.shape(), dconv2);
  LeakyReluBackwardInPlace(cache.conv2, dconv2, 0.0f);
  Tensor dpool1;
  Conv2dBackward(conv2_.geom, cache.pool1, Const(conv2_.weight), dconv2,
                 &dpool1,
                 span_of(backbone ? &conv2_grad->grad_weight : nullptr),
                 span_of(backbone ? &conv2_grad->grad_bias : nullptr));
  Tensor dconv1;
  MaxPool2Backward(dpool1, cache.pool1_argmax, cache.conv1.shape(), dconv1);
  LeakyReluBackwardInPlace(cache.conv1, dconv1, 0.0f);
  Conv2dBackward(conv1_.geom, cache.x, Const(conv1_.weight), dconv1, dx,
                 span_of(backbone ? &conv1_grad->grad_weight : nullptr),
                 span_of(backbone ? &conv1_grad->grad_bias : nullptr));
}

void Classifier::HeadBackward(const Tensor& features, const Tensor& dlogits) {
  DenseBackward(head_.weight, head_.in_features, head_.out_features, features,
                dlogits, nullptr, head_.grad_weight, head_.grad_bias);
}

std::vector<ParamRef> Classifier::BackboneParams() {
  std::vector<ParamRef> out;
  conv1_.AppendParams(out);
  conv2_.AppendParams(out);
  fc_.AppendParams(out);
  return out;
}

std::vector<ParamRef> Classifier::HeadParams() {
  std::vector<ParamRef> out;
  head_.AppendParams(out);
  return out;
}

void Classifier::ZeroGrad() {
  conv1_.ZeroGrad();
  conv2_.ZeroGrad();
  fc_.ZeroGrad();
  head_.ZeroGrad();
}

Classifier Classifier::CloneFinalLayer(uint64_t seed) const {
  Classifier c = *this;
  Rng rng(seed);
  c.head_ = Dense(kHidden, num_classes_, rng, 1.0);
  c.frozen_backbone_ = true;
  return c;
}

void Classifier::ZeroHead() {
  std::fill(head_.weight.begin(), head_.weight.end(), 0.0f);
  std::fill(head_.bias.begin(), head_.bias.end(), 0.0f);
}

namespace {

void HashBackbone(ParameterHasher& h, const Conv2d& c1, const Conv2d& c2,
                  const Dense& fc) {
  for (const Conv2d* c : {&c1, &c2}) {
    h.Add(c->weight);
    h.Add(c->bias);
  }
  h.Add(fc.weight);
  h.Add(fc.bias);
}

}  // namespace

uint64_t Classifier::BackboneHash() const {
  ParameterHasher h;
  HashBackbone(h, conv1_, conv2_, fc_);
  return h.digest();
}

uint64_t Classifier::ParameterHash() const {
  ParameterHasher h;
  HashBackbone(h, conv1_, conv2_, fc_);
  h.Add(head_.weight);
  h.Add(head_.bias);
  return h.digest();
}

// --------------------------------------------------------------------- UNet

std::vector<ConvGeometry> UNet::Topology(int c) {
  return {
      {c, 16, 3, 1, 1},   // enc1
      {16, 32, 3, 2, 1},  // down1
      {32, 64, 3, 2, 1},  // down2
      {64, 64, 3, 1, 1},  // mid
      {96, 32, 3, 1, 1},  // up1: upsample(mid) ++ down1
      {48, 16, 3, 1, 1},  // up2: upsample(up1) ++ enc1
      {16, c, 1, 1, 0},   // out
  };
}

UNet::UNet(ImageShape input, uint64_t seed) : input_(input) {
  Rng rng(seed);
  const auto topo = Topology(input.channels);
  for (std::size_t i = 0; i < topo.size(); ++i) {
    const bool last = i + 1 == topo.size();
    convs_.emplace_back(topo[i], rng, last ? 1.0 : kReluGain);
  }
}

UNet::UNet(ImageShape input, std::vector<Conv2d> convs)
    : input_(input), convs_(std::move(convs)) {
  const auto topo = Topology(input.channels);
  if (convs_.size() != topo.size()) {
    throw FormatError("op_list", "UNET-S needs " + std::to_string(topo.size()) +
                                     " convolutions");
  }
  for (std::size_t i = 0; i < topo.size(); ++i) {
    if (!(convs_[i].geom == topo[i])) {
      throw FormatError("conv" + std::to_string(i),
                        "geometry does not match UNET-S");
    }
    if (convs_[i].weight.size() != topo[i].weight_count() ||
        convs_[i].bias.size() != static_cast<std::size_t>(topo[i].out_channels)) {
      throw FormatError("conv" + std::to_string(i), "parameter length mismatch");
    }
    convs_[i].grad_weight.assign(convs_[i].weight.size(), 0.0f);
    convs_[i].grad_bias.assign(convs_[i].bias.size(), 0.0f);
  }
}

void UNet::CheckInput(const Tensor& x) const {
  if (x.shape().image() != input_) {
    throw DomainError("sanitizer expects " + input_.ToString() + ", got " +
                      x.shape().ToString());
  }
}

void UNet::Forward(const Tensor& x, Cache& c) const {
  CheckInput(x);
  c.x = x;
  ConvForward(convs_[0], x, c.enc1);
  LeakyReluInPlace(c.enc1, kSlope);
  ConvForward(convs_[1], c.enc1, c.down1);
  LeakyReluInPlace(c.down1, kSlope);
  ConvForward(convs_[2], c.down1, c.down2);
  LeakyReluInPlace(c.down2, kSlope);
  ConvForward(convs_[3], c.down2, c.mid);
  LeakyReluInPlace(c.mid, kSlope);
  Tensor up;
  Upsample2Forward(c.mid, up);
  ConcatChannels(up, c.down1, c.cat1);
  ConvForward(convs_[4], c.cat1, c.up1);
  LeakyReluInPlace(c.up1, kSlope);
  Upsample2Forward(c.up1, up);
  ConcatChannels(up, c.enc1, c.cat2);
  ConvForward(convs_[5], c.cat2, c.up2);
  LeakyReluInPlace(c.up2, kSlope);
  ConvForward(convs_[6], c.up2, c.out);
  SigmoidInPlace(c.out);
}

Tensor UNet::Forward(const Tensor& x) const {
  Cache c;
  Forward(x, c);
  return std::move(c.out);
}

void UNet::Backward(const Cache& c, const Tensor& dout, Tensor* dx) {
  Tensor g = dout;
  SigmoidBackwardInPlace(c.out, g);
  Tensor dup2;
  ConvBackward(convs_[6], c.up2, g, &dup2);
  LeakyReluBackwardInPlace(c.up2, dup2, kSlope);
  Tensor dcat2;
  ConvBackward(convs_[5], c.cat2, dup2, &dcat2);
  Tensor dup_u1, denc1_skip;
  SplitChannels(dcat2, c.up1.shape().c, dup_u1, denc1_skip);
  Tensor dup1;
  Upsample2Backward(dup_u1, dup1);
  LeakyReluBackwardInPlace(c.up1, dup1, kSlope);
  Tensor dcat1;
  ConvBackward(convs_[4], c.cat1, dup1, &dcat1);
  Tensor dup_mid, ddown1_skip;
  SplitChannels(dcat1, c.mid.shape().c, dup_mid, ddown1_skip);
  Tensor dmid;
  Upsample2Backward(dup_mid, dmid);
  LeakyReluBackwardInPlace(c.mid, dmid, kSlope);
  Tensor ddown2;
  ConvBackward(convs_[3], c.down2, dmid, &ddown2);
  LeakyReluBackwardInPlace(c.down2, ddown2, kSlope);
  Tensor ddown1;
  ConvBackward(convs_[2], c.down1, ddown2, &ddown1);
  for (std::size_t i = 0; i < ddown1.size(); ++i)
    ddown1.data()[i] += ddown1_skip.data()[i];
  LeakyReluBackwardInPlace(c.down1, ddown1, kSlope);
  Tensor denc1;
  ConvBackward(convs_[1], c.enc1, ddown1, &denc1);
  for (std::size_t i = 0; i < denc1.size(); ++i)
    denc1.data()[i] += denc1_skip.data()[i];
  LeakyReluBackwardInPlace(c.enc1, denc1, kSlope);
  ConvBackward(convs_[0], c.x, denc1, dx);
}

std::vector<ParamRef> UNet::Params() {
  std::vector<ParamRef> out;
  for (Conv2d& c : convs_) c.AppendParams(out);
  return out;
}

void UNet::ZeroGrad() {
  for (Conv2d& c : convs_) c.ZeroGrad();
}

uint64_t UNet::ParameterHash() const {
  ParameterHasher h;
  for (const Conv2d& c : convs_) {
    h.Add(c.weight);
    h.Add(c.bias);
  }
  return h.digest();
}

// ----------------------------------------------------------- SanitizerModel

const char* SanitizerKindName(SanitizerKind kind) {
  return kind == SanitizerKind::kDeterministic ? "deterministic" : "stochastic";
}

SanitizerKind ParseSanitizerKind(const std::string& name) {
  if (name == "deterministic") return SanitizerKind::kDeterministic;
  if (name == "stochastic") return SanitizerKind::kStochastic;
  throw ConfigError("unknown sanitizer kind '" + name + "'");
}

int DrawAttribute(const Prior& prior, Rng& rng) {
  std::bernoulli_distribution one(std::clamp(prior[1], 0.0, 1.0));
  return one(rng) ? 1 : 0;
}

SanitizerModel SanitizerModel::Deterministic(ImageShape input, uint64_t seed) {
  SanitizerModel m;
  m.kind_ = SanitizerKind::kDeterministic;
  m.unet_ = UNet(input, seed);
  return m;
}

SanitizerModel SanitizerModel::Stochastic(DatasetSpec generator,
                                          uint64_t seed) {
  generator.Validate();
  SanitizerModel m;
  m.kind_ = SanitizerKind::kStochastic;
  m.unet_ = UNet(generator.image_shape, seed);
  m.generator_ = std::move(generator);
  return m;
}

SanitizerModel SanitizerModel::FromUNet(SanitizerKind kind, UNet unet,
                                        std::optional<DatasetSpec> generator) {
  if (kind == SanitizerKind::kStochastic && !generator) {
    throw ConfigError("stochastic sanitizer requires a generator spec");
  }
  SanitizerModel m;
  m.kind_ = kind;
  m.unet_ = std::move(unet);
  m.generator_ = std::move(generator);
  return m;
}

Tensor SanitizerModel::SanitizeDeterministic(const Tensor& images) const {
  if (kind_ != SanitizerKind::kDeterministic) {
    throw ConfigError("SanitizeDeterministic on a stochastic sanitizer");
  }
  return unet_.Forward(images);
}

Tensor SanitizerModel::SanitizeStochastic(const Sample& sample,
                                          const Prior& prior, Rng& rng) const {
  if (kind_ != SanitizerKind::kStochastic || !generator_) {
    throw ConfigError("stochastic sanitization requires a generator spec");
  }
  const int forced = DrawAttribute(prior, rng);
  Tensor input(1, generator_->image_shape);
  RenderInto(sample.utility_label, forced, *generator_, sample.noise_seed,
             input.values());
  return unet_.Forward(input);
}

Tensor SanitizerModel::PrepareInputs(const Dataset& data,
                                     std::span<const int> indices,
                                     const Prior& prior, Rng& rng) const {
  if (kind_ == SanitizerKind::kDeterministic) return data.GatherImages(indices);
  if (!generator_) {
    throw ConfigError("stochastic sanitization requires a generator spec");
  }
  if (data.noise_seeds.empty()) {
    throw ConfigError("stochastic sanitization requires per-sample noise seeds");
  }
  const int n = static_cast<int>(indices.size());
  std::vector<int> forced(n);
  for (int b = 0; b < n; ++b) forced[b] = DrawAttribute(prior, rng);
  Tensor batch(n, generator_->image_shape);
#pragma omp parallel for schedule(static)
  for (int b = 0; b < n; ++b) {
    const int i = indices[b];
    RenderInto(data.utility_labels[i], forced[b], *generator_,
               data.noise_seeds[i], batch.sample_span(b));
  }
  return batch;
}

Tensor SanitizerModel::Sanitize(const Dataset& data,
                                std::span<const int> indices,
                                const Prior& prior, Rng& rng) const {
  return unet_.Forward(PrepareInputs(data, indices, prior, rng));
}

}  // namespace cpriv
