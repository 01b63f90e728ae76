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

#include <array>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

#include "cpriv/error.h"
#include "cpriv/kernels.h"
#include "cpriv/objectives.h"

namespace cpriv {
namespace {

constexpr double kLn2 = std::numbers::ln2;
constexpr double kTight = 1e-6;
constexpr double kTinyEps = 1e-12;

double Kl(std::vector<double> p, std::vector<double> q, double eps = kTinyEps) {
  return KlDivergence<double, double>(p, q, eps);
}

double Bce(std::vector<double> y, std::vector<double> q, double eps = kTinyEps) {
  return BinaryCrossEntropy<double, double>(y, q, eps);
}

std::vector<double> RandomSimplex(std::mt19937_64& rng, int k) {
  std::gamma_distribution<double> g(0.7, 1.0);
  std::vector<double> v(k);
  double s = 0.0;
  for (double& x : v) s += (x = g(rng) + 1e-12);
  for (double& x : v) x /= s;
  return v;
}

TEST(KlDivergenceTest, ClosedForms) {
  EXPECT_NEAR(Kl({0.5, 0.5}, {0.5, 0.5}), 0.0, kTight);
  EXPECT_NEAR(Kl({1.0, 0.0}, {0.5, 0.5}), 0.6931471806, kTight);
  EXPECT_NEAR(Kl({0.625, 0.375}, {0.5, 0.5}),
              0.625 * std::log(1.25) + 0.375 * std::log(0.75), kTight);
  EXPECT_NEAR(Kl({0.625, 0.375}, {0.5, 0.5}), 0.0315839, 1e-6);
}

TEST(KlDivergenceTest, LengthMismatchIsDomainError) {
  EXPECT_THROW(Kl({0.5, 0.5}, {0.2, 0.3, 0.5}), DomainError);
}

TEST(KlDivergenceTest, SelfDivergenceIsZeroAndGibbsHolds) {
  std::mt19937_64 rng(3);
  for (int trial = 0; trial < 500; ++trial) {
    const int k = 2 + trial % 15;
    const auto p = RandomSimplex(rng, k);
    const auto q = RandomSimplex(rng, k);
    EXPECT_LT(std::abs(Kl(p, p, kDefaultEpsilon)), 10 * kDefaultEpsilon);
    EXPECT_GE(Kl(p, q, kDefaultEpsilon), -1e-9);
  }
}

TEST(KlDivergenceTest, SaturatedPosteriorStaysFinite) {
  const double v = Kl({1.0, 0.0}, {0.0, 1.0}, kDefaultEpsilon);
  EXPECT_TRUE(std::isfinite(v));
  EXPECT_NEAR(v, std::log((1.0 + kDefaultEpsilon) / kDefaultEpsilon), 1e-9);
}

TEST(BinaryCrossEntropyTest, ClosedForms) {
  EXPECT_NEAR(Bce({1, 0}, {1, 0}), 0.0, kTight);
  EXPECT_NEAR(Bce({1, 0}, {0.5, 0.5}), kLn2, kTight);
  EXPECT_NEAR(Bce({0, 1}, {0.9, 0.1}), 2.302585093, kTight);
}

TEST(SanitizationLossTest, ClosedForms) {
  const std::vector<double> prior{0.625, 0.375};
  std::vector<double> u_raw(16, 0.0), u_uniform(16, 1.0 / 16);
  u_raw[0] = 1.0;
  const std::vector<double> half{0.5, 0.5};

  LossConfig cfg{0.0, kTinyEps};
  EXPECT_NEAR(SanitizationLoss<double>(u_raw, u_raw, prior, {{0.99, 0.01}}, cfg),
              0.0, kTight);
  cfg.alpha = 1.0;
  EXPECT_NEAR(SanitizationLoss<double>(u_raw, u_uniform, prior, prior, cfg), 0.0,
              kTight);
  cfg.alpha = 0.5;
  const double expected =
      0.5 * std::log(16.0) +
      0.5 * (0.625 * std::log(1.25) + 0.375 * std::log(0.75));
  EXPECT_NEAR(SanitizationLoss<double>(u_raw, u_uniform, prior, half, cfg),
              expected, kTight);
  EXPECT_NEAR(expected, 1.4021, 1e-4);
}

TEST(SanitizationLossTest, AffineInAlpha) {
  std::mt19937_64 rng(9);
  for (int trial = 0; trial < 50; ++trial) {
    const auto ur = RandomSimplex(rng, 16), us = RandomSimplex(rng, 16);
    const auto pr = RandomSimplex(rng, 2), ps = RandomSimplex(rng, 2);
    auto at = [&](double a) {
      return SanitizationLoss<double>(ur, us, pr, ps, LossConfig{a, kDefaultEpsilon});
    };
    const double l0 = at(0.0), l1 = at(0.3), l2 = at(0.9);
    const double slope01 = (l1 - l0) / 0.3, slope02 = (l2 - l0) / 0.9;
    EXPECT_NEAR(slope01, slope02, 1e-9 * (1.0 + std::abs(slope02)));
  }
}

TEST(SanitizationLossTest, InvalidAlphaIsConfigError) {
  const std::vector<double> p{0.5, 0.5};
  EXPECT_THROW(SanitizationLoss<double>(p, p, p, p, LossConfig{1.5, 1e-7}),
               ConfigError);
  EXPECT_THROW(SanitizationLoss<double>(p, p, p, p, LossConfig{0.5, 0.0}),
               ConfigError);
}

TEST(PrivacyLossTest, ClosedForms) {
  using V = std::vector<double>;
  EXPECT_NEAR(PrivacyLoss<double>(V{1, 0}, V{1, 0}, V{1, 0}, kTinyEps), 0.0, kTight);
  EXPECT_NEAR(PrivacyLoss<double>(V{1, 0}, V{1, 0}, V{0.5, 0.5}, kTinyEps), kLn2,
              kTight);
  EXPECT_NEAR(PrivacyLoss<double>(V{0, 1}, V{0.5, 0.5}, V{0.5, 0.5}, kTinyEps),
              2 * kLn2, kTight);
}

std::vector<double> SoftmaxD(const std::vector<double>& z) {
  double m = z[0];
  for (double v : z) m = std::max(m, v);
  std::vector<double> p(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += (p[i] = std::exp(z[i] - m));
  for (double& v : p) v /= s;
  return p;
}

TEST(SanitizationLossTest, BatchGradientMatchesFiniteDifference) {
  std::mt19937_64 rng(21);
  std::normal_distribution<double> nd(0.0, 1.5);
  const int n = 4, k = 16;
  const Prior prior{0.625, 0.375};
  for (int trial = 0; trial < 10; ++trial) {
    const double alpha = 0.1 + 0.08 * trial;
    std::vector<std::vector<double>> ur(n), zu(n), zp(n);
    Tensor u_raw({n, k, 1, 1}), u_san({n, k, 1, 1}), p_san({n, 2, 1, 1});
    for (int i = 0; i < n; ++i) {
      ur[i] = RandomSimplex(rng, k);
      zu[i].resize(k);
      zp[i].resize(2);
      for (double& v : zu[i]) v = nd(rng);
      for (double& v : zp[i]) v = nd(rng);
      const auto qu = SoftmaxD(zu[i]), qp = SoftmaxD(zp[i]);
      for (int j = 0; j < k; ++j) {
        u_raw.at(i, j, 0, 0) = static_cast<float>(ur[i][j]);
        u_san.at(i, j, 0, 0) = static_cast<float>(qu[j]);
      }
      for (int j = 0; j < 2; ++j) p_san.at(i, j, 0, 0) = static_cast<float>(qp[j]);
    }
    const LossConfig cfg{alpha, kDefaultEpsilon};
    const SanitizationBatchLoss out =
        SanitizationLossBatch(u_raw, u_san, prior, p_san, cfg);

    auto loss = [&](int row, bool privacy, int j, double delta) {
      auto zu2 = zu[row];
      auto zp2 = zp[row];
      (privacy ? zp2 : zu2)[j] += delta;
      std::vector<double> urf(k);
      for (int t = 0; t < k; ++t) urf[t] = u_raw.at(row, t, 0, 0);
      return SanitizationLoss<double>(urf, SoftmaxD(zu2),
                                      std::vector<double>(prior.begin(), prior.end()), SoftmaxD(zp2), cfg) /
             n;
    };
    const double h = 1e-5;
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < k; ++j) {
        const double fd = (loss(i, false, j, h) - loss(i, false, j, -h)) / (2 * h);
        EXPECT_NEAR(out.utility_dlogits.at(i, j, 0, 0), fd, 1e-3 * std::abs(fd) + 1e-6);
      }
      for (int j = 0; j < 2; ++j) {
        const double fd = (loss(i, true, j, h) - loss(i, true, j, -h)) / (2 * h);
        EXPECT_NEAR(out.privacy_dlogits.at(i, j, 0, 0), fd, 1e-3 * std::abs(fd) + 1e-6);
      }
    }
  }
}

TEST(PrivacyLossTest, BatchMeanAndGradient) {
  const std::vector<int> labels{0, 1};
  Tensor raw({2, 2, 1, 1}), san({2, 2, 1, 1});
  const float rv[] = {1.0f, 0.0f, 0.5f, 0.5f};
  const float sv[] = {0.5f, 0.5f, 0.5f, 0.5f};
  std::copy(rv, rv + 4, raw.data());
  std::copy(sv, sv + 4, san.data());
  const PrivacyBatchLoss out = PrivacyLossBatch(labels, raw, san);
  EXPECT_NEAR(out.loss, (kLn2 + 2 * kLn2) / 2, 1e-6);
  EXPECT_NEAR(out.san_dlogits.at(0, 0, 0, 0), -0.25, 1e-6);
  EXPECT_NEAR(out.san_dlogits.at(0, 1, 0, 0), 0.25, 1e-6);
  EXPECT_THROW(PrivacyLossBatch(std::vector<int>{0}, raw, san), DomainError);
}

TEST(CrossEntropyTest, GradientIsProbsMinusOneHot) {
  Tensor logits({2, 3, 1, 1});
  const float lv[] = {0.2f, -1.0f, 0.5f, 2.0f, 0.0f, -0.3f};
  std::copy(lv, lv + 6, logits.data());
  Tensor p;
  SoftmaxRows(logits, p);
  const std::vector<int> labels{2, 0};
  const CrossEntropyBatch ce = CrossEntropyLoss(labels, p, 0.0);
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 3; ++j) {
      const double expected =
          (p.at(i, j, 0, 0) - (j == labels[i] ? 1.0 : 0.0)) / 2.0;
      EXPECT_NEAR(ce.dlogits.at(i, j, 0, 0), expected, 1e-6);
    }
  }
  EXPECT_THROW(CrossEntropyLoss(std::vector<int>{3, 0}, p), DomainError);
}

}  // namespace
}  // namespace cpriv
