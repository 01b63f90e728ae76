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
#ifndef CPRIV_TRAINING_H_
#define CPRIV_TRAINING_H_

// Trainers for the three collaboration levels:
//   plug-and-play   only the sanitizer learns; both classifiers are const.
//   adversarial     sanitizer epochs (Loss_S, privacy frozen) alternate with
//                   privacy final-layer epochs (Loss_P, sanitizer frozen).
//   collaborative   each step updates the sanitizer on Loss_S and the utility
//                   final layer on cross-entropy over sanitized inputs.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cpriv/models.h"
#include "cpriv/objectives.h"
#include "cpriv/toy_data.h"

namespace cpriv {

enum class TrainMode { kPlugAndPlay, kAdversarial, kCollaborative };

const char* TrainModeName(TrainMode mode);
TrainMode ParseTrainMode(const std::string& name);

struct TrainConfig {
  TrainMode mode = TrainMode::kPlugAndPlay;
  double alpha = 0.5;
  int epochs = 12;
  int batch_size = 32;
  double sanitizer_learning_rate = 1e-3;
  double privacy_learning_rate = 1e-3;
  double utility_learning_rate = 1e-3;
  // Sanitizer learning-rate ramp, in iterations.
  int warmup_steps = 200;
  // Epochs per phase in adversarial mode.
  int alternation_period = 1;
  uint64_t seed = 1;
  double epsilon = kDefaultEpsilon;
  // Collaborative mode: also fine-tune the utility backbone.
  bool collaborative_full_finetune = false;

  void Validate() const;
};

struct PretrainConfig {
  int epochs = 5;
  int batch_size = 32;
  double learning_rate = 1e-3;
  uint64_t seed = 11;

  void Validate() const;
};

enum class Component { kSanitizer, kPrivacy, kSanitizerAndUtility };

const char* ComponentName(Component c);
Component ParseComponent(const std::string& name);

struct TrainLogRecord {
  int64_t iteration = 0;
  double loss_s = 0.0;
  std::optional<double> loss_p;
  Component active = Component::kSanitizer;

  bool operator==(const TrainLogRecord&) const = default;
};

struct TrainLog {
  std::vector<TrainLogRecord> records;

  // CSV: iteration,loss_s,loss_p,active_component. loss_p empty when absent.
  std::string ToCsv() const;
  static TrainLog FromCsv(const std::string& csv);
  void WriteCsv(const std::filesystem::path& path) const;

  bool operator==(const TrainLog&) const = default;
};

struct PretrainResult {
  Classifier utility;
  Classifier privacy;
  // Accuracies on the evaluation split (training split when none given).
  double utility_top1 = 0.0;
  double utility_top3 = 0.0;
  double privacy_accuracy = 0.0;
};

// Trains both classifiers from scratch on raw data with cross-entropy.
PretrainResult PretrainClassifiers(const Dataset& train,
                                   const PretrainConfig& cfg,
                                   const Dataset* eval = nullptr);

// Cross-entropy training of every parameter of one classifier.
void TrainClassifier(Classifier& model, const Tensor& images,
                     std::span<const int> labels, const PretrainConfig& cfg);

// Final layer only, from precomputed backbone features.
void TrainHead(Classifier& model, const Tensor& features,
               std::span<const int> labels, const PretrainConfig& cfg);

// MSE reconstruction of the UNET input; starts every sanitizer close to the
// identity so Loss_S only has to move it from there.
double WarmStartSanitizer(SanitizerModel& sanitizer, const Dataset& data,
                          const Prior& prior, int epochs, int batch_size,
                          double learning_rate, uint64_t seed);

TrainLog TrainPlugAndPlay(SanitizerModel& sanitizer, const Classifier& utility,
                          const Classifier& privacy, const Prior& prior,
                          const Dataset& data, const TrainConfig& cfg);

// privacy's backbone is frozen; only its final layer changes.
TrainLog TrainAdversarial(SanitizerModel& sanitizer, const Classifier& utility,
                          Classifier& privacy, const Prior& prior,
                          const Dataset& data, const TrainConfig& cfg);

// utility's final layer (and backbone when collaborative_full_finetune)
// changes.
TrainLog TrainCollaborative(SanitizerModel& sanitizer, Classifier& utility,
                            const Classifier& privacy, const Prior& prior,
                            const Dataset& data, const TrainConfig& cfg);

// Phase of an adversarial epoch.
Component AdversarialPhase(int epoch, int alternation_period);

}  // namespace cpriv

#endif  // CPRIV_TRAINING_H_
