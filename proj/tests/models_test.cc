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
#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "cpriv/error.h"
#include "cpriv/metrics.h"
#include "cpriv/models.h"
#include "test_util.h"

namespace cpriv {
namespace {

using testing::RandomTensor;
using testing::SmallSpec;

constexpr ImageShape kSmall{3, 16, 16};

double Dot(std::span<const float> a, std::span<const float> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += static_cast<double>(a[i]) * b[i];
  return s;
}

TEST(ClassifierTest, ForwardGivesDistributions) {
  const Classifier c(kSmall, 8, 1);
  const Tensor x = RandomTensor({5, 3, 16, 16}, 2, 0.0f, 1.0f);
  const Tensor p = c.Forward(x);
  ASSERT_EQ(p.shape(), (Shape{5, 8, 1, 1}));
  for (int i = 0; i < 5; ++i) {
    double s = 0.0;
    for (float v : p.sample_span(i)) {
      EXPECT_GE(v, 0.0f);
      s += v;
    }
    EXPECT_NEAR(s, 1.0, 1e-5);
  }
  EXPECT_THROW(c.Forward(RandomTensor({1, 3, 8, 8}, 3)), DomainError);
}

TEST(ClassifierTest, DeterministicInitPerSeed) {
  EXPECT_EQ(Classifier(kSmall, 4, 7).ParameterHash(),
            Classifier(kSmall, 4, 7).ParameterHash());
  EXPECT_NE(Classifier(kSmall, 4, 7).ParameterHash(),
            Classifier(kSmall, 4, 8).ParameterHash());
}

TEST(ClassifierTest, HeadOnFeaturesMatchesForward) {
  const Classifier c(kSmall, 2, 4);
  const Tensor x = RandomTensor({3, 3, 16, 16}, 5, 0.0f, 1.0f);
  const Tensor p = c.Forward(x);
  const Tensor ph = c.HeadProbs(c.Features(x));
  for (std::size_t i = 0; i < p.size(); ++i) {
    EXPECT_NEAR(p.values()[i], ph.values()[i], 1e-6);
  }
}

TEST(ClassifierTest, CloneFinalLayerKeepsBackbone) {
  const Classifier c(kSmall, 2, 4);
  const Classifier fresh = c.CloneFinalLayer(99);
  EXPECT_EQ(fresh.BackboneHash(), c.BackboneHash());
  EXPECT_NE(fresh.ParameterHash(), c.ParameterHash());
}

// d<g, logits>/dx against central differences at individual pixels.
TEST(ClassifierTest, InputGradientMatchesFiniteDifference) {
  const Classifier c(kSmall, 4, 6);
  const Tensor x = RandomTensor({2, 3, 16, 16}, 7, 0.2f, 0.8f);
  const Tensor g = RandomTensor({2, 4, 1, 1}, 8);
  Classifier::Cache cache;
  c.Forward(x, cache);
  Tensor dx;
  c.BackwardInput(cache, g, dx);

  auto objective = [&](std::size_t idx, float step) {
    Tensor xs = x;
    xs.values()[idx] += step;
    Classifier::Cache cc;
    c.Forward(xs, cc);
    return Dot(cc.logits.values(), g.values());
  };
  const float h = 3e-3f;
  for (std::size_t idx : {0u, 17u, 300u, 700u, 1000u, 1500u}) {
    const double fd = (objective(idx, h) - objective(idx, -h)) / (2 * h);
    EXPECT_NEAR(dx.values()[idx], fd, 5e-2 * std::abs(fd) + 2e-3) << "pixel " << idx;
  }
}

TEST(ClassifierTest, FrozenBackboneGetsNoGradient) {
  Classifier c(kSmall, 2, 10);
  c.set_frozen_backbone(true);
  const Tensor x = RandomTensor({2, 3, 16, 16}, 11, 0.0f, 1.0f);
  Classifier::Cache cache;
  c.Forward(x, cache);
  c.ZeroGrad();
  c.Backward(cache, RandomTensor({2, 2, 1, 1}, 12), false, true, nullptr);
  for (const ParamRef& p : c.BackboneParams()) {
    for (float v : p.grad) ASSERT_EQ(v, 0.0f);
  }
  double head = 0.0;
  for (const ParamRef& p : c.HeadParams()) {
    for (float v : p.grad) head += std::abs(v);
  }
  EXPECT_GT(head, 0.0);
}

TEST(UNetTest, OutputInUnitRangeAndShapePreserved) {
  const UNet u(kSmall, 1);
  const Tensor x = RandomTensor({3, 3, 16, 16}, 2, 0.0f, 1.0f);
  const Tensor y = u.Forward(x);
  EXPECT_EQ(y.shape(), x.shape());
  for (float v : y.values()) {
    ASSERT_GT(v, 0.0f);
    ASSERT_LT(v, 1.0f);
  }
  EXPECT_THROW(u.Forward(RandomTensor({1, 1, 16, 16}, 3)), DomainError);
}

TEST(UNetTest, TopologyHasSevenConvsAndSkipChannels) {
  const auto topo = UNet::Topology(3);
  ASSERT_EQ(static_cast<int>(topo.size()), UNet::kConvCount);
  EXPECT_EQ(topo.front().in_channels, 3);
  EXPECT_EQ(topo.back().out_channels, 3);
  EXPECT_EQ(topo.back().kernel, 1);
}

TEST(UNetTest, ParameterGradientMatchesFiniteDifference) {
  UNet u(kSmall, 4);
  const Tensor x = RandomTensor({2, 3, 16, 16}, 5, 0.0f, 1.0f);
  const Tensor g = RandomTensor(x.shape(), 6);
  UNet::Cache cache;
  u.Forward(x, cache);
  u.ZeroGrad();
  Tensor dx;
  u.Backward(cache, g, &dx);

  auto objective = [&]() { return Dot(u.Forward(x).values(), g.values()); };
  for (int layer : {0, 3, 6}) {
    Conv2d& conv = u.conv(layer);
    for (std::size_t idx : {std::size_t{0}, conv.weight.size() / 2}) {
      const float saved = conv.weight[idx];
      const float h = 3e-3f;
      conv.weight[idx] = saved + h;
      const double up = objective();
      conv.weight[idx] = saved - h;
      const double down = objective();
      conv.weight[idx] = saved;
      const double fd = (up - down) / (2 * h);
      EXPECT_NEAR(conv.grad_weight[idx], fd, 3e-2 * std::abs(fd) + 3e-3)
          << "layer " << layer << " index " << idx;
    }
  }

  for (std::size_t idx : {0u, 17u, 300u, 700u, 1000u}) {
    const float h = 3e-3f;
    Tensor up = x, down = x;
    up.values()[idx] += h;
    down.values()[idx] -= h;
    const double fd = (Dot(u.Forward(up).values(), g.values()) -
                       Dot(u.Forward(down).values(), g.values())) / (2 * h);
    EXPECT_NEAR(dx.values()[idx], fd, 5e-2 * std::abs(fd) + 2e-3) << "pixel " << idx;
  }
}

TEST(SanitizerModelTest, StochasticResamplesAttributeOnly) {
  const DatasetSpec spec = SmallSpec();
  const DatasetSplits d = GenerateDataset(spec);
  const SanitizerModel s = SanitizerModel::Stochastic(spec, 3);
  EXPECT_EQ(s.kind(), SanitizerKind::kStochastic);
  const Prior prior = spec.prior;
  std::vector<int> idx(d.test.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(4);
  const Tensor prepared = s.PrepareInputs(d.test, idx, prior, rng);
  const std::vector<uint8_t> mask = AttributeCueMask(spec);
  int differing_samples = 0;
  for (int i = 0; i < d.test.size(); ++i) {
    const auto a = prepared.sample_span(i), b = d.test.images.sample_span(i);
    bool differs = false;
    for (std::size_t p = 0; p < a.size(); ++p) {
      if (!mask[p]) {
        ASSERT_EQ(a[p], b[p]);
      }
      differs |= a[p] != b[p];
    }
    differing_samples += differs;
  }
  EXPECT_GT(differing_samples, 0);
  EXPECT_LT(differing_samples, d.test.size());
}

TEST(SanitizerModelTest, DeterministicPreparesRawImages) {
  const DatasetSplits d = GenerateDataset(SmallSpec());
  const SanitizerModel s = SanitizerModel::Deterministic(kSmall, 3);
  std::vector<int> idx{0, 1, 2};
  Rng rng(1);
  EXPECT_EQ(s.PrepareInputs(d.test, idx, d.test.spec.prior, rng),
            d.test.GatherImages(idx));
  EXPECT_EQ(s.Sanitize(d.test, idx, d.test.spec.prior, rng),
            s.unet().Forward(d.test.GatherImages(idx)));
}

TEST(SanitizerModelTest, KindNamesRoundTrip) {
  for (SanitizerKind k : {SanitizerKind::kDeterministic, SanitizerKind::kStochastic}) {
    EXPECT_EQ(ParseSanitizerKind(SanitizerKindName(k)), k);
  }
  EXPECT_THROW(ParseSanitizerKind("fader"), ConfigError);
}

TEST(DrawAttributeTest, FollowsPrior) {
  Rng rng(5);
  const Prior prior{0.625, 0.375};
  int ones = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) ones += DrawAttribute(prior, rng);
  EXPECT_NEAR(static_cast<double>(ones) / n, 0.375, 0.015);
}

}  // namespace
}  // namespace cpriv
