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
#include "cpriv/evaluation.h"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "cpriv/error.h"
#include "cpriv/metrics.h"
#include "cpriv/objectives.h"
#include "cpriv/rng.h"

namespace cpriv {
namespace {

constexpr uint64_t kEvalResampleTag = 0x4556414cULL;

Tensor SanitizeAll(const SanitizerModel& sanitizer, const Dataset& data,
                   const Prior& prior, uint64_t seed) {
  std::vector<int> idx(data.size());
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(DeriveSeed(seed, kEvalResampleTag));
  Tensor out;
  for (int begin = 0; begin < data.size(); begin += kInferenceChunk) {
    const int count = std::min(kInferenceChunk, data.size() - begin);
    const Tensor part = sanitizer.Sanitize(
        data, std::span<const int>(idx.data() + begin, count), prior, rng);
    if (out.empty()) out = Tensor(data.size(), part.shape().image());
    std::copy_n(part.data(), part.size(), out.sample(begin));
  }
  return out;
}

double MeanPrivacyKl(const Tensor& p, const Prior& prior, double eps) {
  const int n = p.shape().n;
  if (n == 0) return 0.0;
  const std::span<const double> ps(prior);
  double sum = 0.0;
  for (int i = 0; i < n; ++i) sum += KlDivergence(ps, p.sample_span(i), eps);
  return sum / n;
}

}  // namespace

SanitizedPosteriors ComputePosteriors(const SanitizerModel* sanitizer,
                                      const Classifier& utility,
                                      const Classifier& privacy,
                                      const Prior& prior, const Dataset& test,
                                      uint64_t seed) {
  SanitizedPosteriors out;
  out.utility_raw = PredictProbs(utility, test.images);
  out.privacy_raw = PredictProbs(privacy, test.images);
  if (sanitizer == nullptr) {
    out.utility_san = out.utility_raw;
    out.privacy_san = out.privacy_raw;
    return out;
  }
  const Tensor sanitized = SanitizeAll(*sanitizer, test, prior, seed);
  out.utility_san = PredictProbs(utility, sanitized);
  out.privacy_san = PredictProbs(privacy, sanitized);
  return out;
}

TradeoffPoint SummarizePosteriors(const SanitizedPosteriors& post,
                                  const Dataset& test, const Prior& prior,
                                  double alpha, const EvalConfig& cfg) {
  TradeoffPoint p;
  p.alpha = alpha;
  p.sample_count = test.size();
  const int n = test.size();
  if (n == 0) return p;
  double ukl = 0.0;
  for (int i = 0; i < n; ++i) {
    ukl += KlDivergence(post.utility_raw.sample_span(i),
                        post.utility_san.sample_span(i), cfg.epsilon);
  }
  p.utility_kl = ukl / n;
  p.privacy_kl = MeanPrivacyKl(post.privacy_san, prior, cfg.epsilon);
  p.top1 = TopKAccuracy(post.utility_san, test.utility_labels, 1, cfg.seed);
  p.topk = TopKAccuracy(post.utility_san, test.utility_labels, cfg.k, cfg.seed);
  p.privacy_accuracy = Accuracy(post.privacy_san, test.privacy_labels);
  return p;
}

TradeoffReport EvaluateTradeoff(std::span<const SanitizerCell> cells,
                                const Classifier& utility,
                                const Classifier& privacy, const Prior& prior,
                                const Dataset& test,
                                std::span<const double> alphas,
                                const EvalConfig& cfg) {
  TradeoffReport report;
  report.k = cfg.k;
  report.prior = prior;
  const SanitizedPosteriors raw =
      ComputePosteriors(nullptr, utility, privacy, prior, test, cfg.seed);
  report.raw = SummarizePosteriors(raw, test, prior, 0.0, cfg);
  for (double alpha : alphas) {
    auto it = std::find_if(cells.begin(), cells.end(), [&](const SanitizerCell& c) {
      return c.alpha == alpha && c.sanitizer != nullptr;
    });
    if (it == cells.end()) {
      throw ConfigError("no trained sanitizer for alpha=" + std::to_string(alpha));
    }
    const Classifier& p = it->privacy != nullptr ? *it->privacy : privacy;
    const SanitizedPosteriors post =
        ComputePosteriors(it->sanitizer, utility, p, prior, test, cfg.seed);
    report.points.push_back(SummarizePosteriors(post, test, prior, alpha, cfg));
  }
  return report;
}

double Quantile(std::span<const double> sorted, double q) {
  if (sorted.empty()) return 0.0;
  const double pos = q * static_cast<double>(sorted.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  const double frac = pos - static_cast<double>(lo);
  return sorted[lo] + (sorted[hi] - sorted[lo]) * frac;
}

BoxStats ComputeBoxStats(std::vector<double> values) {
  BoxStats b;
  b.count = static_cast<int>(values.size());
  if (values.empty()) return b;
  std::sort(values.begin(), values.end());
  b.q1 = Quantile(values, 0.25);
  b.median = Quantile(values, 0.5);
  b.q3 = Quantile(values, 0.75);
  const double iqr = b.q3 - b.q1;
  const double lo_fence = b.q1 - 1.5 * iqr;
  const double hi_fence = b.q3 + 1.5 * iqr;
  b.whisker_low = b.q1;
  b.whisker_high = b.q3;
  for (double v : values) {
    if (v < lo_fence || v > hi_fence) {
      b.outliers.push_back(v);
    } else {
      b.whisker_low = std::min(b.whisker_low, v);
      b.whisker_high = std::max(b.whisker_high, v);
    }
  }
  return b;
}

ConditionalBreakdown BreakdownFromPosteriors(const Tensor& privacy_probs,
                                             std::span<const int> labels,
                                             std::optional<double> alpha,
                                             const Prior& prior) {
  if (static_cast<int>(labels.size()) != privacy_probs.shape().n) {
    throw DomainError("label count does not match posterior rows");
  }
  ConditionalBreakdown out;
  out.alpha = alpha;
  out.prior_class1 = prior[1];
  std::array<std::vector<double>, 2> values;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    values[labels[i]].push_back(privacy_probs.sample(static_cast<int>(i))[1]);
  }
  for (int g = 0; g < 2; ++g) {
    if (static_cast<int>(values[g].size()) < kMinGroupSize) {
      out.warnings.push_back("group " + std::to_string(g) + " has only " +
                             std::to_string(values[g].size()) + " samples");
    }
    out.groups[g] = ComputeBoxStats(std::move(values[g]));
  }
  return out;
}

ConditionalBreakdown ConditionalBreakdownFor(const SanitizerModel* sanitizer,
                                             const Classifier& privacy,
                                             const Dataset& test,
                                             std::optional<double> alpha,
                                             const Prior& prior,
                                             uint64_t seed) {
  const Tensor probs =
      sanitizer == nullptr
          ? PredictProbs(privacy, test.images)
          : PredictProbs(privacy, SanitizeAll(*sanitizer, test, prior, seed));
  return BreakdownFromPosteriors(probs, test.privacy_labels, alpha, prior);
}

double TopKUtilityAccuracy(const Classifier& utility,
                           const SanitizerModel* sanitizer, const Dataset& test,
                           int k, const Prior& prior, uint64_t seed) {
  if (k < 1 || k > utility.num_classes()) {
    throw DomainError("k=" + std::to_string(k) + " outside [1, " +
                      std::to_string(utility.num_classes()) + "]");
  }
  const Tensor probs =
      sanitizer == nullptr
          ? PredictProbs(utility, test.images)
          : PredictProbs(utility, SanitizeAll(*sanitizer, test, prior, seed));
  return TopKAccuracy(probs, test.utility_labels, k, seed);
}

AttackResult AttackRetrain(const SanitizerModel& sanitizer,
                           const Classifier& privacy, const Dataset& train,
                           const Dataset& test, const Prior& prior,
                           const PretrainConfig& budget, uint64_t seed) {
  AttackResult out{privacy.CloneFinalLayer(DeriveSeed(seed, 1))};
  const Tensor train_features = PredictFeatures(
      out.attacker, SanitizeAll(sanitizer, train, prior, DeriveSeed(seed, 2)));
  PretrainConfig cfg = budget;
  cfg.seed = DeriveSeed(seed, 3);
  TrainHead(out.attacker, train_features, train.privacy_labels, cfg);

  const Tensor test_probs = PredictProbs(
      out.attacker, SanitizeAll(sanitizer, test, prior, DeriveSeed(seed, 4)));
  out.accuracy_after = Accuracy(test_probs, test.privacy_labels);
  out.privacy_kl_after = MeanPrivacyKl(test_probs, prior, kDefaultEpsilon);
  out.raw_accuracy_after =
      Accuracy(PredictProbs(out.attacker, test.images), test.privacy_labels);
  return out;
}

// ---------------------------------------------------------------------- JSON

void to_json(nlohmann::json& j, const TradeoffPoint& p) {
  j = {{"alpha", p.alpha},           {"utility_kl", p.utility_kl},
       {"privacy_kl", p.privacy_kl}, {"top1", p.top1},
       {"topk", p.topk},             {"privacy_accuracy", p.privacy_accuracy},
       {"sample_count", p.sample_count}};
}

void from_json(const nlohmann::json& j, TradeoffPoint& p) {
  j.at("alpha").get_to(p.alpha);
  j.at("utility_kl").get_to(p.utility_kl);
  j.at("privacy_kl").get_to(p.privacy_kl);
  j.at("top1").get_to(p.top1);
  j.at("topk").get_to(p.topk);
  j.at("privacy_accuracy").get_to(p.privacy_accuracy);
  j.at("sample_count").get_to(p.sample_count);
}

void to_json(nlohmann::json& j, const TradeoffReport& r) {
  j = {{"architecture", r.architecture},
       {"mode", r.mode},
       {"units", r.units},
       {"k", r.k},
       {"prior", r.prior},
       {"raw", r.raw},
       {"points", r.points}};
}

void from_json(const nlohmann::json& j, TradeoffReport& r) {
  j.at("architecture").get_to(r.architecture);
  j.at("mode").get_to(r.mode);
  j.at("units").get_to(r.units);
  j.at("k").get_to(r.k);
  j.at("prior").get_to(r.prior);
  j.at("raw").get_to(r.raw);
  j.at("points").get_to(r.points);
}

void to_json(nlohmann::json& j, const BoxStats& b) {
  j = {{"count", b.count},
       {"median", b.median},
       {"q1", b.q1},
       {"q3", b.q3},
       {"whisker_low", b.whisker_low},
       {"whisker_high", b.whisker_high},
       {"outliers", b.outliers}};
}

void from_json(const nlohmann::json& j, BoxStats& b) {
  j.at("count").get_to(b.count);
  j.at("median").get_to(b.median);
  j.at("q1").get_to(b.q1);
  j.at("q3").get_to(b.q3);
  j.at("whisker_low").get_to(b.whisker_low);
  j.at("whisker_high").get_to(b.whisker_high);
  j.at("outliers").get_to(b.outliers);
}

void to_json(nlohmann::json& j, const ConditionalBreakdown& c) {
  j = {{"alpha", c.alpha ? nlohmann::json(*c.alpha) : nlohmann::json(nullptr)},
       {"prior_class1", c.prior_class1},
       {"groups", c.groups},
       {"warnings", c.warnings}};
}

void from_json(const nlohmann::json& j, ConditionalBreakdown& c) {
  if (j.at("alpha").is_null()) {
    c.alpha.reset();
  } else {
    c.alpha = j.at("alpha").get<double>();
  }
  j.at("prior_class1").get_to(c.prior_class1);
  j.at("groups").get_to(c.groups);
  j.at("warnings").get_to(c.warnings);
}

}  // namespace cpriv
