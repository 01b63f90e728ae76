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
#include "cpriv/objectives.h"

#include <vector>

namespace cpriv {
namespace {

std::span<const float> Row(const Tensor& t, int i) { return t.sample_span(i); }

void CheckLabels(std::span<const int> labels, const Tensor& probs) {
  if (static_cast<int>(labels.size()) != probs.shape().n) {
    throw DomainError("label count does not match batch size");
  }
}

}  // namespace

SanitizationBatchLoss SanitizationLossBatch(const Tensor& u_raw,
                                            const Tensor& u_san,
                                            const Prior& prior,
                                            const Tensor& p_san,
                                            const LossConfig& cfg) {
  cfg.Validate();
  if (u_raw.shape() != u_san.shape()) {
    throw DomainError("utility posterior shapes differ: " +
                      u_raw.shape().ToString() + " vs " +
                      u_san.shape().ToString());
  }
  if (p_san.shape().sample_size() != 2 || p_san.shape().n != u_san.shape().n) {
    throw DomainError("privacy posterior must be [n, 2]");
  }
  const int n = u_san.shape().n;
  SanitizationBatchLoss out;
  out.utility_dlogits = Tensor(u_san.shape());
  out.privacy_dlogits = Tensor(p_san.shape());
  const double inv_n = 1.0 / n;
  const std::span<const double> prior_span(prior);
  for (int i = 0; i < n; ++i) {
    const double ukl = KlDivergence(Row(u_raw, i), Row(u_san, i), cfg.epsilon);
    const double pkl = KlDivergence(prior_span, Row(p_san, i), cfg.epsilon);
    out.utility_kl += ukl * inv_n;
    out.privacy_kl += pkl * inv_n;
    if (cfg.alpha < 1.0) {
      TargetLogLikelihoodLogitGrad(Row(u_raw, i), Row(u_san, i), cfg.epsilon,
                                   (1.0 - cfg.alpha) * inv_n,
                                   out.utility_dlogits.sample_span(i));
    }
    if (cfg.alpha > 0.0) {
      TargetLogLikelihoodLogitGrad(prior_span, Row(p_san, i), cfg.epsilon,
                                   cfg.alpha * inv_n,
                                   out.privacy_dlogits.sample_span(i));
    }
  }
  out.loss = (1.0 - cfg.alpha) * out.utility_kl + cfg.alpha * out.privacy_kl;
  return out;
}

PrivacyBatchLoss PrivacyLossBatch(std::span<const int> labels,
                                  const Tensor& p_raw, const Tensor& p_san,
                                  double epsilon) {
  CheckLabels(labels, p_raw);
  CheckLabels(labels, p_san);
  const int n = p_raw.shape().n;
  PrivacyBatchLoss out;
  out.raw_dlogits = Tensor(p_raw.shape());
  out.san_dlogits = Tensor(p_san.shape());
  const double inv_n = 1.0 / n;
  for (int i = 0; i < n; ++i) {
    std::array<float, 2> y{labels[i] == 0 ? 1.0f : 0.0f,
                           labels[i] == 1 ? 1.0f : 0.0f};
    const std::span<const float> ys(y);
    out.loss += PrivacyLoss(ys, Row(p_raw, i), Row(p_san, i), epsilon) * inv_n;
    TargetLogLikelihoodLogitGrad(ys, Row(p_raw, i), epsilon, inv_n,
                                 out.raw_dlogits.sample_span(i));
    TargetLogLikelihoodLogitGrad(ys, Row(p_san, i), epsilon, inv_n,
                                 out.san_dlogits.sample_span(i));
  }
  return out;
}

CrossEntropyBatch CrossEntropyLoss(std::span<const int> labels,
                                   const Tensor& probs, double epsilon) {
  CheckLabels(labels, probs);
  const int n = probs.shape().n;
  const int k = static_cast<int>(probs.shape().sample_size());
  CrossEntropyBatch out;
  out.dlogits = Tensor(probs.shape());
  const double inv_n = 1.0 / n;
  std::vector<float> target(k, 0.0f);
  for (int i = 0; i < n; ++i) {
    if (labels[i] < 0 || labels[i] >= k) throw DomainError("label out of range");
    target[labels[i]] = 1.0f;
    const std::span<const float> t(target);
    out.loss += BinaryCrossEntropy(t, Row(probs, i), epsilon) * inv_n;
    TargetLogLikelihoodLogitGrad(t, Row(probs, i), epsilon, inv_n,
                                 out.dlogits.sample_span(i));
    target[labels[i]] = 0.0f;
  }
  return out;
}

}  // namespace cpriv
