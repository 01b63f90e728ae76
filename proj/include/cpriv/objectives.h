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
#ifndef CPRIV_OBJECTIVES_H_
#define CPRIV_OBJECTIVES_H_

// Divergences and losses in nats. Every log is clamped as log(v + epsilon).
//
//   Loss_S = (1 - alpha) KL(P(u|x) || P(u|S(x))) + alpha KL(P(p) || P(p|S(x)))
//   Loss_P = BCE(y_p, P(p|x)) + BCE(y_p, P(p|S(x)))
//
// Batch variants reduce per-sample losses by their mean and return gradients
// with respect to the softmax logits of the networks that produced the
// posteriors. Raw posteriors and the prior are treated as constants.

#include <cmath>
#include <span>
#include <string>

#include "cpriv/error.h"
#include "cpriv/tensor.h"
#include "cpriv/toy_data.h"

namespace cpriv {

inline constexpr double kDefaultEpsilon = 1e-7;

struct LossConfig {
  double alpha = 0.5;
  double epsilon = kDefaultEpsilon;

  void Validate() const {
    if (!(alpha >= 0.0 && alpha <= 1.0)) {
      throw ConfigError("alpha must lie in [0, 1], got " + std::to_string(alpha));
    }
    if (!(epsilon > 0.0)) throw ConfigError("epsilon_clamp must be > 0");
  }
};

template <typename P, typename Q>
double KlDivergence(std::span<const P> p, std::span<const Q> q,
                    double epsilon = kDefaultEpsilon) {
  if (p.size() != q.size()) {
    throw DomainError("kl_divergence length mismatch: " +
                      std::to_string(p.size()) + " vs " +
                      std::to_string(q.size()));
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    const double pi = static_cast<double>(p[i]);
    if (pi == 0.0) continue;
    sum += pi * std::log((pi + epsilon) / (static_cast<double>(q[i]) + epsilon));
  }
  return sum;
}

template <typename Y, typename Q>
double BinaryCrossEntropy(std::span<const Y> one_hot, std::span<const Q> pred,
                          double epsilon = kDefaultEpsilon) {
  if (one_hot.size() != pred.size()) {
    throw DomainError("binary_cross_entropy length mismatch");
  }
  double sum = 0.0;
  for (std::size_t i = 0; i < one_hot.size(); ++i) {
    const double y = static_cast<double>(one_hot[i]);
    if (y == 0.0) continue;
    sum -= y * std::log(static_cast<double>(pred[i]) + epsilon);
  }
  return sum;
}

template <typename T>
double SanitizationLoss(std::span<const T> u_raw, std::span<const T> u_san,
                        std::span<const T> prior, std::span<const T> p_san,
                        const LossConfig& cfg) {
  cfg.Validate();
  return (1.0 - cfg.alpha) * KlDivergence(u_raw, u_san, cfg.epsilon) +
         cfg.alpha * KlDivergence(prior, p_san, cfg.epsilon);
}

template <typename T>
double PrivacyLoss(std::span<const T> one_hot, std::span<const T> p_raw,
                   std::span<const T> p_san, double epsilon = kDefaultEpsilon) {
  return BinaryCrossEntropy(one_hot, p_raw, epsilon) +
         BinaryCrossEntropy(one_hot, p_san, epsilon);
}

// Gradient of  -scale * sum_i target_i log(q_i + eps)  with respect to the
// logits z, q = softmax(z). KL(target || q) and cross-entropy share it.
template <typename T, typename Q, typename G>
void TargetLogLikelihoodLogitGrad(std::span<const T> target,
                                  std::span<const Q> q, double epsilon,
                                  double scale, std::span<G> dlogits) {
  double dot = 0.0;
  const std::size_t k = q.size();
  for (std::size_t i = 0; i < k; ++i) {
    const double g = -static_cast<double>(target[i]) /
                     (static_cast<double>(q[i]) + epsilon);
    dot += static_cast<double>(q[i]) * g;
  }
  for (std::size_t i = 0; i < k; ++i) {
    const double qi = static_cast<double>(q[i]);
    const double g = -static_cast<double>(target[i]) / (qi + epsilon);
    dlogits[i] += static_cast<G>(scale * qi * (g - dot));
  }
}

struct SanitizationBatchLoss {
  double loss = 0.0;          // mean Loss_S
  double utility_kl = 0.0;    // mean KL(P(u|x) || P(u|S(x)))
  double privacy_kl = 0.0;    // mean KL(P(p) || P(p|S(x)))
  Tensor utility_dlogits;     // d mean Loss_S / d utility logits on S(x)
  Tensor privacy_dlogits;     // d mean Loss_S / d privacy logits on S(x)
};

SanitizationBatchLoss SanitizationLossBatch(const Tensor& u_raw,
                                            const Tensor& u_san,
                                            const Prior& prior,
                                            const Tensor& p_san,
                                            const LossConfig& cfg);

struct PrivacyBatchLoss {
  double loss = 0.0;  // mean Loss_P
  Tensor raw_dlogits;
  Tensor san_dlogits;
};

PrivacyBatchLoss PrivacyLossBatch(std::span<const int> labels,
                                  const Tensor& p_raw, const Tensor& p_san,
                                  double epsilon = kDefaultEpsilon);

struct CrossEntropyBatch {
  double loss = 0.0;
  Tensor dlogits;
};

// Mean categorical cross-entropy against integer labels.
CrossEntropyBatch CrossEntropyLoss(std::span<const int> labels,
                                   const Tensor& probs,
                                   double epsilon = kDefaultEpsilon);

}  // namespace cpriv

#endif  // CPRIV_OBJECTIVES_H_
