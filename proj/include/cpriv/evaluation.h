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
#ifndef CPRIV_EVALUATION_H_
#define CPRIV_EVALUATION_H_

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpriv/models.h"
#include "cpriv/objectives.h"
#include "cpriv/toy_data.h"
#include "cpriv/training.h"
#include "json.hpp"

namespace cpriv {

struct EvalConfig {
  int k = 3;
  uint64_t seed = 99;  // stochastic resampling and top-k tie-breaking
  double epsilon = kDefaultEpsilon;
};

// Posteriors of one sanitizer over a test split.
struct SanitizedPosteriors {
  Tensor utility_raw;      // P(u|x)
  Tensor utility_san;      // P(u|S(x))
  Tensor privacy_raw;      // P(p|x)
  Tensor privacy_san;      // P(p|S(x))
};

// sanitizer == nullptr evaluates the raw pathway (S = identity).
SanitizedPosteriors ComputePosteriors(const SanitizerModel* sanitizer,
                                      const Classifier& utility,
                                      const Classifier& privacy,
                                      const Prior& prior, const Dataset& test,
                                      uint64_t seed);

struct TradeoffPoint {
  double alpha = 0.0;
  double utility_kl = 0.0;   // mean KL(P(u|x) || P(u|S(x))), nats
  double privacy_kl = 0.0;   // mean KL(P(p) || P(p|S(x))), nats
  double top1 = 0.0;
  double topk = 0.0;
  double privacy_accuracy = 0.0;  // attribute argmax accuracy on S(x)
  int sample_count = 0;

  bool operator==(const TradeoffPoint&) const = default;
};

struct TradeoffReport {
  std::string architecture;
  std::string mode;
  std::string units = "nats";
  int k = 3;
  Prior prior{0.0, 0.0};
  // Classifiers applied to x directly. utility_kl is 0 by construction.
  TradeoffPoint raw;
  std::vector<TradeoffPoint> points;

  bool operator==(const TradeoffReport&) const = default;
};

TradeoffPoint SummarizePosteriors(const SanitizedPosteriors& post,
                                  const Dataset& test, const Prior& prior,
                                  double alpha, const EvalConfig& cfg);

// One trained sanitizer per alpha. privacy overrides the shared privacy
// classifier for that cell (adversarial cells carry their own).
struct SanitizerCell {
  double alpha = 0.0;
  const SanitizerModel* sanitizer = nullptr;
  const Classifier* privacy = nullptr;
};

TradeoffReport EvaluateTradeoff(std::span<const SanitizerCell> cells,
                                const Classifier& utility,
                                const Classifier& privacy, const Prior& prior,
                                const Dataset& test,
                                std::span<const double> alphas,
                                const EvalConfig& cfg);

struct BoxStats {
  int count = 0;
  double median = 0.0;
  double q1 = 0.0;
  double q3 = 0.0;
  double whisker_low = 0.0;
  double whisker_high = 0.0;
  std::vector<double> outliers;

  bool operator==(const BoxStats&) const = default;
};

// Quartiles by linear interpolation between order statistics; whiskers reach
// the most extreme data within 1.5 IQR; the rest are outliers.
BoxStats ComputeBoxStats(std::vector<double> values);

// Linear-interpolation quantile of sorted data, q in [0, 1].
double Quantile(std::span<const double> sorted, double q);

struct ConditionalBreakdown {
  std::optional<double> alpha;  // nullopt: raw data
  double prior_class1 = 0.0;    // reference line
  // groups[a]: P(p(S(x)) = 1) over samples whose true attribute is a.
  std::array<BoxStats, 2> groups;
  std::vector<std::string> warnings;

  bool operator==(const ConditionalBreakdown&) const = default;
};

inline constexpr int kMinGroupSize = 5;

ConditionalBreakdown BreakdownFromPosteriors(const Tensor& privacy_probs,
                                             std::span<const int> labels,
                                             std::optional<double> alpha,
                                             const Prior& prior);

// sanitizer == nullptr gives the raw-data breakdown.
ConditionalBreakdown ConditionalBreakdownFor(const SanitizerModel* sanitizer,
                                             const Classifier& privacy,
                                             const Dataset& test,
                                             std::optional<double> alpha,
                                             const Prior& prior, uint64_t seed);

// Top-k utility accuracy on S(x) (x when sanitizer is null).
double TopKUtilityAccuracy(const Classifier& utility,
                           const SanitizerModel* sanitizer, const Dataset& test,
                           int k, const Prior& prior, uint64_t seed);

struct AttackResult {
  Classifier attacker;
  double privacy_kl_after = 0.0;
  double accuracy_after = 0.0;
  // Attacker accuracy on raw test data, for reference.
  double raw_accuracy_after = 0.0;
};

// Clones privacy with a fresh final layer, retrains that layer on sanitized
// training data with the true attribute labels, and scores it on the
// sanitized test split.
AttackResult AttackRetrain(const SanitizerModel& sanitizer,
                           const Classifier& privacy, const Dataset& train,
                           const Dataset& test, const Prior& prior,
                           const PretrainConfig& budget, uint64_t seed);

void to_json(nlohmann::json& j, const TradeoffPoint& p);
void from_json(const nlohmann::json& j, TradeoffPoint& p);
void to_json(nlohmann::json& j, const TradeoffReport& r);
void from_json(const nlohmann::json& j, TradeoffReport& r);
void to_json(nlohmann::json& j, const BoxStats& b);
void from_json(const nlohmann::json& j, BoxStats& b);
void to_json(nlohmann::json& j, const ConditionalBreakdown& c);
void from_json(const nlohmann::json& j, ConditionalBreakdown& c);

}  // namespace cpriv

#endif  // CPRIV_EVALUATION_H_
