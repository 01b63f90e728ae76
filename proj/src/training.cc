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
#include "cpriv/training.h"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <numbers>
#include <sstream>

#include "cpriv/error.h"
#include "cpriv/metrics.h"
#include "cpriv/rng.h"

namespace cpriv {
namespace {

constexpr uint64_t kPermTag = 0x5045524dULL;
constexpr uint64_t kResampleTag = 0x52534d50ULL;

std::vector<int> Permutation(int n, uint64_t seed, int epoch) {
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(DeriveSeed(seed, kPermTag, static_cast<uint64_t>(epoch)));
  std::shuffle(idx.begin(), idx.end(), rng);
  return idx;
}

// Half-cosine from lr at the first epoch down to 5% of lr at the last.
double CosineRate(double lr, int epoch, int epochs) {
  if (epochs <= 1) return lr;
  const double t = static_cast<double>(epoch) / (epochs - 1);
  return lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(std::numbers::pi * t)));
}

AdamOptions SanitizerAdam(const TrainConfig& cfg) {
  AdamOptions o;
  o.learning_rate = cfg.sanitizer_learning_rate;
  o.warmup_steps = cfg.warmup_steps;
  return o;
}

template <typename Fn>
void ForEachBatch(const std::vector<int>& order, int batch_size, Fn&& fn) {
  const int n = static_cast<int>(order.size());
  for (int begin = 0; begin < n; begin += batch_size) {
    const int count = std::min(batch_size, n - begin);
    fn(std::span<const int>(order.data() + begin, count));
  }
}

std::vector<int> Pick(const std::vector<int>& labels, std::span<const int> idx) {
  std::vector<int> out(idx.size());
  for (std::size_t i = 0; i < idx.size(); ++i) out[i] = labels[idx[i]];
  return out;
}

void AddInPlace(Tensor& acc, const Tensor& v) {
  float* a = acc.data();
  const float* b = v.data();
  for (std::size_t i = 0; i < acc.size(); ++i) a[i] += b[i];
}

void CheckFinite(double value, const char* what, int64_t iteration,
                 const TrainLog& log) {
  if (!std::isfinite(value)) {
    throw TrainingError(std::string("non-finite ") + what + " at iteration " +
                            std::to_string(iteration),
                        log.ToCsv());
  }
}

void CheckTrainInputs(const SanitizerModel& sanitizer,
                      const Classifier& utility, const Classifier& privacy,
                      const Dataset& data, const TrainConfig& cfg) {
  cfg.Validate();
  if (data.size() == 0) throw DomainError("training data is empty");
  const ImageShape s = data.image_shape();
  if (sanitizer.input_shape() != s || utility.input_shape() != s ||
      privacy.input_shape() != s) {
    throw ConfigError("model input shapes do not match the dataset " +
                      s.ToString());
  }
  if (privacy.num_classes() != 2) {
    throw ConfigError("privacy classifier must be binary");
  }
}

struct SanitizerStep {
  SanitizationBatchLoss loss;
  UNet::Cache unet;
  Classifier::Cache utility;
  Classifier::Cache privacy;
};

// Forward S(x) through both classifiers, evaluate Loss_S and backpropagate
// into the UNET's (zeroed) gradient buffers. Classifier parameters are not
// touched.
void RunSanitizerStep(UNet& unet, const Tensor& inputs,
                      const Classifier& utility, const Tensor& u_raw,
                      const Classifier& privacy, const Prior& prior,
                      const LossConfig& lc, SanitizerStep& step) {
  unet.Forward(inputs, step.unet);
  const Tensor& sanitized = step.unet.out;
  utility.Forward(sanitized, step.utility);
  privacy.Forward(sanitized, step.privacy);
  step.loss = SanitizationLossBatch(u_raw, step.utility.probs, prior,
                                    step.privacy.probs, lc);
  if (!std::isfinite(step.loss.loss)) return;

  Tensor dsan(sanitized.shape());
  Tensor part;
  if (lc.alpha < 1.0) {
    utility.BackwardInput(step.utility, step.loss.utility_dlogits, part);
    AddInPlace(dsan, part);
  }
  if (lc.alpha > 0.0) {
    privacy.BackwardInput(step.privacy, step.loss.privacy_dlogits, part);
    AddInPlace(dsan, part);
  }
  unet.ZeroGrad();
  unet.Backward(step.unet, dsan, nullptr);
}

LossConfig LossFor(const TrainConfig& cfg) {
  LossConfig lc{cfg.alpha, cfg.epsilon};
  lc.Validate();
  return lc;
}

}  // namespace

const char* TrainModeName(TrainMode mode) {
  switch (mode) {
    case TrainMode::kPlugAndPlay: return "plug_and_play";
    case TrainMode::kAdversarial: return "adversarial";
    case TrainMode::kCollaborative: return "collaborative";
  }
  return "?";
}

TrainMode ParseTrainMode(const std::string& name) {
  if (name == "plug_and_play") return TrainMode::kPlugAndPlay;
  if (name == "adversarial") return TrainMode::kAdversarial;
  if (name == "collaborative") return TrainMode::kCollaborative;
  throw ConfigError("unknown training mode '" + name + "'");
}

const char* ComponentName(Component c) {
  switch (c) {
    case Component::kSanitizer: return "sanitizer";
    case Component::kPrivacy: return "privacy";
    case Component::kSanitizerAndUtility: return "sanitizer+utility";
  }
  return "?";
}

Component ParseComponent(const std::string& name) {
  if (name == "sanitizer") return Component::kSanitizer;
  if (name == "privacy") return Component::kPrivacy;
  if (name == "sanitizer+utility") return Component::kSanitizerAndUtility;
  throw FormatError("active_component", "unknown component '" + name + "'");
}

void TrainConfig::Validate() const {
  if (!(alpha >= 0.0 && alpha <= 1.0)) throw ConfigError("alpha must lie in [0, 1]");
  if (epochs < 0) throw ConfigError("epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  if (alternation_period < 1) throw ConfigError("alternation_period must be >= 1");
  if (!(sanitizer_learning_rate > 0.0) || !(privacy_learning_rate > 0.0)) {
    throw ConfigError("learning rates must be > 0");
  }
  // Zero is allowed for the utility rate: it reduces collaborative training
  // to plug-and-play.
  if (!(utility_learning_rate >= 0.0)) {
    throw ConfigError("utility learning rate must be >= 0");
  }
  if (!(epsilon > 0.0)) throw ConfigError("epsilon must be > 0");
  if (warmup_steps < 0) throw ConfigError("warmup_steps must be >= 0");
}

void PretrainConfig::Validate() const {
  if (epochs < 0) throw ConfigError("pretrain epochs must be >= 0");
  if (batch_size < 1) throw ConfigError("pretrain batch_size must be >= 1");
  if (!(learning_rate > 0.0)) throw ConfigError("pretrain learning rate must be > 0");
}

// ------------------------------------------------------------------ TrainLog

std::string TrainLog::ToCsv() const {
  std::ostringstream os;
  os.precision(17);
  os << "iteration,loss_s,loss_p,active_component\n";
  for (const TrainLogRecord& r : records) {
    os << r.iteration << ',' << r.loss_s << ',';
    if (r.loss_p) os << *r.loss_p;
    os << ',' << ComponentName(r.active) << '\n';
  }
  return os.str();
}

TrainLog TrainLog::FromCsv(const std::string& csv) {
  TrainLog log;
  std::istringstream is(csv);
  std::string line;
  if (!std::getline(is, line) ||
      line != "iteration,loss_s,loss_p,active_component") {
    throw FormatError("header", "unexpected train log header");
  }
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cols;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cols.push_back(cell);
    if (cols.size() == 3) cols.emplace_back();
    if (cols.size() != 4) throw FormatError("row", "expected 4 columns: " + line);
    TrainLogRecord r;
    try {
      r.iteration = std::stoll(cols[0]);
      r.loss_s = std::stod(cols[1]);
      if (!cols[2].empty()) r.loss_p = std::stod(cols[2]);
    } catch (const std::exception&) {
      throw FormatError("row", "unparsable numbers: " + line);
    }
    r.active = ParseComponent(cols[3]);
    log.records.push_back(r);
  }
  return log;
}

void TrainLog::WriteCsv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!(os << ToCsv())) throw IoError("cannot write " + path.string());
}

// --------------------------------------------------------------- pretraining

void TrainClassifier(Classifier& model, const Tensor& images,
                     std::span<const int> labels, const PretrainConfig& cfg) {
  cfg.Validate();
  const int n = images.shape().n;
  if (n == 0) throw DomainError("training data is empty");
  std::vector<ParamRef> params = model.BackboneParams();
  for (ParamRef p : model.HeadParams()) params.push_back(p);
  Adam adam(params, {cfg.learning_rate});
  std::vector<int> label_vec(labels.begin(), labels.end());
  Classifier::Cache cache;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_learning_rate(CosineRate(cfg.learning_rate, epoch, cfg.epochs));
    ForEachBatch(Permutation(n, cfg.seed, epoch), cfg.batch_size,
                 [&](std::span<const int> idx) {
                   model.Forward(GatherRows(images, idx), cache);
                   const auto ce = CrossEntropyLoss(Pick(label_vec, idx),
                                                    cache.probs);
                   if (!std::isfinite(ce.loss)) {
                     throw TrainingError("non-finite cross-entropy in pretraining");
                   }
                   model.ZeroGrad();
                   model.Backward(cache, ce.dlogits, true, true, nullptr);
                   adam.Step();
                 });
  }
}

void TrainHead(Classifier& model, const Tensor& features,
               std::span<const int> labels, const PretrainConfig& cfg) {
  cfg.Validate();
  const int n = features.shape().n;
  if (n == 0) throw DomainError("training data is empty");
  Adam adam(model.HeadParams(), {cfg.learning_rate});
  std::vector<int> label_vec(labels.begin(), labels.end());
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    adam.set_learning_rate(CosineRate(cfg.learning_rate, epoch, cfg.epochs));
    ForEachBatch(Permutation(n, cfg.seed, epoch), cfg.batch_size,
                 [&](std::span<const int> idx) {
                   const Tensor f = GatherRows(features, idx);
                   const auto ce =
                       CrossEntropyLoss(Pick(label_vec, idx), model.HeadProbs(f));
                   if (!std::isfinite(ce.loss)) {
                     throw TrainingError("non-finite cross-entropy in head training");
                   }
                   adam.ZeroGrad();
                   model.HeadBackward(f, ce.dlogits);
                   adam.Step();
                 });
  }
}

PretrainResult PretrainClassifiers(const Dataset& train,
                                   const PretrainConfig& cfg,
                                   const Dataset* eval) {
  cfg.Validate();
  if (train.size() == 0) throw DomainError("training data is empty");
  const ImageShape s = train.image_shape();
  PretrainResult out{
      Classifier(s, train.spec.num_subjects, DeriveSeed(cfg.seed, 1)),
      Classifier(s, 2, DeriveSeed(cfg.seed, 2))};
  PretrainConfig ucfg = cfg, pcfg = cfg;
  ucfg.seed = DeriveSeed(cfg.seed, 3);
  pcfg.seed = DeriveSeed(cfg.seed, 4);
  TrainClassifier(out.utility, train.images, train.utility_labels, ucfg);
  TrainClassifier(out.privacy, train.images, train.privacy_labels, pcfg);

  const Dataset& e = eval != nullptr ? *eval : train;
  const Tensor up = PredictProbs(out.utility, e.images);
  out.utility_top1 = TopKAccuracy(up, e.utility_labels, 1);
  out.utility_top3 =
      TopKAccuracy(up, e.utility_labels, std::min(3, e.spec.num_subjects));
  out.privacy_accuracy =
      Accuracy(PredictProbs(out.privacy, e.images), e.privacy_labels);
  return out;
}

double WarmStartSanitizer(SanitizerModel& sanitizer, const Dataset& data,
                          const Prior& prior, int epochs, int batch_size,
                          double learning_rate, uint64_t seed) {
  if (data.size() == 0) throw DomainError("training data is empty");
  UNet& unet = sanitizer.unet();
  Adam adam(unet.Params(), {learning_rate});
  Rng resample(DeriveSeed(seed, kResampleTag));
  UNet::Cache cache;
  double last_epoch_mse = 0.0;
  for (int epoch = 0; epoch < epochs; ++epoch) {
    double sum = 0.0;
    int count = 0;
    ForEachBatch(Permutation(data.size(), seed, epoch), batch_size,
                 [&](std::span<const int> idx) {
                   const Tensor in =
                       sanitizer.PrepareInputs(data, idx, prior, resample);
                   unet.Forward(in, cache);
                   Tensor grad(in.shape());
                   double mse = 0.0;
                   const float scale = 2.0f / static_cast<float>(in.size());
                   for (std::size_t i = 0; i < in.size(); ++i) {
                     const float d = cache.out.data()[i] - in.data()[i];
                     mse += static_cast<double>(d) * d;
                     grad.data()[i] = scale * d;
                   }
                   mse /= static_cast<double>(in.size());
                   if (!std::isfinite(mse)) {
                     throw TrainingError("non-finite reconstruction loss");
                   }
                   unet.ZeroGrad();
                   unet.Backward(cache, grad, nullptr);
                   adam.Step();
                   sum += mse * idx.size();
                   count += static_cast<int>(idx.size());
                 });
    last_epoch_mse = sum / count;
  }
  return last_epoch_mse;
}

// ------------------------------------------------------------ plug-and-play

TrainLog TrainPlugAndPlay(SanitizerModel& sanitizer, const Classifier& utility,
                          const Classifier& privacy, const Prior& prior,
                          const Dataset& data, const TrainConfig& cfg) {
  CheckTrainInputs(sanitizer, utility, privacy, data, cfg);
  const LossConfig lc = LossFor(cfg);
  UNet& unet = sanitizer.unet();
  Adam adam(unet.Params(), SanitizerAdam(cfg));
  const Tensor u_raw_all = PredictProbs(utility, data.images);
  Rng resample(DeriveSeed(cfg.seed, kResampleTag));

  TrainLog log;
  int64_t iteration = 0;
  SanitizerStep step;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ForEachBatch(Permutation(data.size(), cfg.seed, epoch), cfg.batch_size,
                 [&](std::span<const int> idx) {
                   const Tensor in =
                       sanitizer.PrepareInputs(data, idx, prior, resample);
                   RunSanitizerStep(unet, in, utility, GatherRows(u_raw_all, idx),
                                    privacy, prior, lc, step);
                   CheckFinite(step.loss.loss, "Loss_S", iteration, log);
                   adam.Step();
                   log.records.push_back(
                       {iteration++, step.loss.loss, std::nullopt,
                        Component::kSanitizer});
                 });
  }
  return log;
}

// -------------------------------------------------------------- adversarial

Component AdversarialPhase(int epoch, int alternation_period) {
  return (epoch / std::max(1, alternation_period)) % 2 == 0
             ? Component::kSanitizer
             : Component::kPrivacy;
}

TrainLog TrainAdversarial(SanitizerModel& sanitizer, const Classifier& utility,
                          Classifier& privacy, const Prior& prior,
                          const Dataset& data, const TrainConfig& cfg) {
  CheckTrainInputs(sanitizer, utility, privacy, data, cfg);
  const LossConfig lc = LossFor(cfg);
  privacy.set_frozen_backbone(true);
  UNet& unet = sanitizer.unet();
  Adam unet_adam(unet.Params(), SanitizerAdam(cfg));
  Adam head_adam(privacy.HeadParams(), {cfg.privacy_learning_rate});

  const Tensor u_raw_all = PredictProbs(utility, data.images);
  // Backbone is frozen, so raw-data features never change.
  const Tensor f_raw_all = PredictFeatures(privacy, data.images);
  Rng resample(DeriveSeed(cfg.seed, kResampleTag));

  TrainLog log;
  int64_t iteration = 0;
  SanitizerStep step;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const Component phase = AdversarialPhase(epoch, cfg.alternation_period);
    ForEachBatch(
        Permutation(data.size(), cfg.seed, epoch), cfg.batch_size,
        [&](std::span<const int> idx) {
          const std::vector<int> labels = Pick(data.privacy_labels, idx);
          const Tensor in = sanitizer.PrepareInputs(data, idx, prior, resample);
          const Tensor u_raw = GatherRows(u_raw_all, idx);
          const Tensor f_raw = GatherRows(f_raw_all, idx);
          TrainLogRecord rec{iteration, 0.0, std::nullopt, phase};
          if (phase == Component::kSanitizer) {
            RunSanitizerStep(unet, in, utility, u_raw, privacy, prior, lc, step);
            CheckFinite(step.loss.loss, "Loss_S", iteration, log);
            unet_adam.Step();
            rec.loss_s = step.loss.loss;
            rec.loss_p = PrivacyLossBatch(labels, privacy.HeadProbs(f_raw),
                                          step.privacy.probs, cfg.epsilon)
                             .loss;
          } else {
            const Tensor sanitized = unet.Forward(in);
            const Tensor f_san = privacy.Features(sanitized);
            const Tensor p_san = privacy.HeadProbs(f_san);
            const PrivacyBatchLoss lp = PrivacyLossBatch(
                labels, privacy.HeadProbs(f_raw), p_san, cfg.epsilon);
            CheckFinite(lp.loss, "Loss_P", iteration, log);
            head_adam.ZeroGrad();
            privacy.HeadBackward(f_raw, lp.raw_dlogits);
            privacy.HeadBackward(f_san, lp.san_dlogits);
            head_adam.Step();
            rec.loss_p = lp.loss;
            rec.loss_s = SanitizationLossBatch(u_raw, utility.Forward(sanitized),
                                               prior, p_san, lc)
                             .loss;
          }
          log.records.push_back(rec);
          ++iteration;
        });
  }
  return log;
}

// ------------------------------------------------------------ collaborative

TrainLog TrainCollaborative(SanitizerModel& sanitizer, Classifier& utility,
                            const Classifier& privacy, const Prior& prior,
                            const Dataset& data, const TrainConfig& cfg) {
  CheckTrainInputs(sanitizer, utility, privacy, data, cfg);
  const LossConfig lc = LossFor(cfg);
  const bool full = cfg.collaborative_full_finetune;
  utility.set_frozen_backbone(!full);
  UNet& unet = sanitizer.unet();
  Adam unet_adam(unet.Params(), SanitizerAdam(cfg));
  std::vector<ParamRef> utility_params = utility.HeadParams();
  if (full) {
    for (ParamRef p : utility.BackboneParams()) utility_params.push_back(p);
  }
  Adam utility_adam(utility_params, {cfg.utility_learning_rate});

  Tensor f_raw_all;
  if (!full) f_raw_all = PredictFeatures(utility, data.images);
  Rng resample(DeriveSeed(cfg.seed, kResampleTag));

  TrainLog log;
  int64_t iteration = 0;
  SanitizerStep step;
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ForEachBatch(
        Permutation(data.size(), cfg.seed, epoch), cfg.batch_size,
        [&](std::span<const int> idx) {
          const Tensor in = sanitizer.PrepareInputs(data, idx, prior, resample);
          // P(u|x) under the current utility model.
          const Tensor u_raw =
              full ? utility.Forward(data.GatherImages(idx))
                   : utility.HeadProbs(GatherRows(f_raw_all, idx));
          RunSanitizerStep(unet, in, utility, u_raw, privacy, prior, lc, step);
          CheckFinite(step.loss.loss, "Loss_S", iteration, log);
          const auto ce =
              CrossEntropyLoss(Pick(data.utility_labels, idx), step.utility.probs);
          CheckFinite(ce.loss, "utility cross-entropy", iteration, log);
          utility_adam.ZeroGrad();
          utility.Backward(step.utility, ce.dlogits, full, true, nullptr);
          unet_adam.Step();
          utility_adam.Step();
          log.records.push_back({iteration++, step.loss.loss, std::nullopt,
                                 Component::kSanitizerAndUtility});
        });
  }
  return log;
}

}  // namespace cpriv
