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
#include <limits>

#include "cpriv/error.h"
#include "cpriv/metrics.h"
#include "cpriv/training.h"
#include "test_util.h"

namespace cpriv {
namespace {

using testing::SmallSpec;

class TrainingTest : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    data_ = new DatasetSplits(GenerateDataset(SmallSpec(96, 48)));
    PretrainConfig pc;
    pc.epochs = 2;
    pretrained_ = new PretrainResult(PretrainClassifiers(data_->train, pc, &data_->test));
  }
  static void TearDownTestSuite() {
    delete data_;
    delete pretrained_;
  }

  static TrainConfig Config(TrainMode mode, double alpha, int epochs = 2) {
    TrainConfig c;
    c.mode = mode;
    c.alpha = alpha;
    c.epochs = epochs;
    c.warmup_steps = 2;
    c.seed = 17;
    return c;
  }

  static SanitizerModel Fresh() {
    return SanitizerModel::Deterministic(data_->train.image_shape(), 3);
  }

  static const Prior& prior() { return data_->train.spec.prior; }

  static DatasetSplits* data_;
  static PretrainResult* pretrained_;
};

DatasetSplits* TrainingTest::data_ = nullptr;
PretrainResult* TrainingTest::pretrained_ = nullptr;

TEST_F(TrainingTest, ZeroEpochPretrainReturnsInitializedModels) {
  PretrainConfig pc;
  pc.epochs = 0;
  const PretrainResult r = PretrainClassifiers(data_->train, pc);
  EXPECT_EQ(r.utility.num_classes(), 8);
  EXPECT_EQ(r.privacy.num_classes(), 2);
  EXPECT_LT(r.utility_top1, 0.5);
}

TEST_F(TrainingTest, PlugAndPlayUpdatesOnlySanitizer) {
  SanitizerModel s = Fresh();
  const uint64_t u0 = pretrained_->utility.ParameterHash();
  const uint64_t p0 = pretrained_->privacy.ParameterHash();
  const uint64_t s0 = s.unet().ParameterHash();
  const TrainLog log = TrainPlugAndPlay(s, pretrained_->utility, pretrained_->privacy,
                                        prior(), data_->train,
                                        Config(TrainMode::kPlugAndPlay, 0.5));
  EXPECT_EQ(pretrained_->utility.ParameterHash(), u0);
  EXPECT_EQ(pretrained_->privacy.ParameterHash(), p0);
  EXPECT_NE(s.unet().ParameterHash(), s0);
  ASSERT_EQ(log.records.size(), 6u);
  for (std::size_t i = 0; i < log.records.size(); ++i) {
    EXPECT_EQ(log.records[i].iteration, static_cast<int64_t>(i));
    EXPECT_TRUE(std::isfinite(log.records[i].loss_s));
    EXPECT_FALSE(log.records[i].loss_p.has_value());
    EXPECT_EQ(log.records[i].active, Component::kSanitizer);
  }
}

TEST_F(TrainingTest, PlugAndPlayIsReproducible) {
  SanitizerModel a = Fresh(), b = Fresh();
  const TrainConfig c = Config(TrainMode::kPlugAndPlay, 0.3);
  const TrainLog la = TrainPlugAndPlay(a, pretrained_->utility, pretrained_->privacy,
                                       prior(), data_->train, c);
  const TrainLog lb = TrainPlugAndPlay(b, pretrained_->utility, pretrained_->privacy,
                                       prior(), data_->train, c);
  EXPECT_EQ(la, lb);
  EXPECT_EQ(a.unet().ParameterHash(), b.unet().ParameterHash());
}

TEST_F(TrainingTest, AdversarialAlternatesAndFreezesBackbone) {
  for (int period : {1, 2}) {
    SanitizerModel s = Fresh();
    Classifier privacy = pretrained_->privacy;
    const uint64_t backbone = privacy.BackboneHash();
    const uint64_t head = privacy.ParameterHash();
    const uint64_t u0 = pretrained_->utility.ParameterHash();
    TrainConfig c = Config(TrainMode::kAdversarial, 0.8, 4);
    c.alternation_period = period;
    const TrainLog log = TrainAdversarial(s, pretrained_->utility, privacy, prior(),
                                          data_->train, c);
    EXPECT_EQ(privacy.BackboneHash(), backbone);
    EXPECT_NE(privacy.ParameterHash(), head);
    EXPECT_EQ(pretrained_->utility.ParameterHash(), u0);
    ASSERT_EQ(log.records.size(), 12u);
    for (const TrainLogRecord& r : log.records) {
      const int epoch = static_cast<int>(r.iteration / 3);
      EXPECT_EQ(r.active, (epoch / period) % 2 == 0 ? Component::kSanitizer
                                                     : Component::kPrivacy);
      ASSERT_TRUE(r.loss_p.has_value());
      EXPECT_TRUE(std::isfinite(*r.loss_p));
    }
  }
}

TEST(AdversarialPhaseTest, Schedule) {
  EXPECT_EQ(AdversarialPhase(0, 1), Component::kSanitizer);
  EXPECT_EQ(AdversarialPhase(1, 1), Component::kPrivacy);
  EXPECT_EQ(AdversarialPhase(2, 1), Component::kSanitizer);
  EXPECT_EQ(AdversarialPhase(1, 2), Component::kSanitizer);
  EXPECT_EQ(AdversarialPhase(2, 2), Component::kPrivacy);
  EXPECT_EQ(AdversarialPhase(4, 2), Component::kSanitizer);
}

TEST_F(TrainingTest, CollaborativeTrainsOnlyUtilityHead) {
  SanitizerModel s = Fresh();
  Classifier utility = pretrained_->utility;
  const uint64_t backbone = utility.BackboneHash();
  const uint64_t full = utility.ParameterHash();
  const uint64_t p0 = pretrained_->privacy.ParameterHash();
  const TrainLog log = TrainCollaborative(s, utility, pretrained_->privacy, prior(),
                                          data_->train,
                                          Config(TrainMode::kCollaborative, 0.5));
  EXPECT_EQ(utility.BackboneHash(), backbone);
  EXPECT_NE(utility.ParameterHash(), full);
  EXPECT_EQ(pretrained_->privacy.ParameterHash(), p0);
  for (const TrainLogRecord& r : log.records) {
    EXPECT_EQ(r.active, Component::kSanitizerAndUtility);
  }
}

TEST_F(TrainingTest, CollaborativeWithZeroUtilityRateMatchesPlugAndPlay) {
  SanitizerModel a = Fresh(), b = Fresh();
  TrainConfig c = Config(TrainMode::kCollaborative, 0.5);
  c.utility_learning_rate = 0.0;
  Classifier utility = pretrained_->utility;
  const TrainLog collab = TrainCollaborative(a, utility, pretrained_->privacy,
                                             prior(), data_->train, c);
  EXPECT_EQ(utility.ParameterHash(), pretrained_->utility.ParameterHash());
  c.mode = TrainMode::kPlugAndPlay;
  const TrainLog pnp = TrainPlugAndPlay(b, pretrained_->utility,
                                        pretrained_->privacy, prior(),
                                        data_->train, c);
  ASSERT_EQ(collab.records.size(), pnp.records.size());
  for (std::size_t i = 0; i < pnp.records.size(); ++i) {
    EXPECT_NEAR(collab.records[i].loss_s, pnp.records[i].loss_s,
                1e-4 * (1.0 + pnp.records[i].loss_s));
  }
}

TEST_F(TrainingTest, NonFiniteLossRaisesTrainingErrorWithLog) {
  SanitizerModel s = Fresh();
  TrainConfig c = Config(TrainMode::kPlugAndPlay, 0.5, 3);
  c.warmup_steps = 0;
  c.sanitizer_learning_rate = std::numeric_limits<double>::max();
  try {
    TrainPlugAndPlay(s, pretrained_->utility, pretrained_->privacy, prior(),
                     data_->train, c);
    FAIL() << "expected TrainingError";
  } catch (const TrainingError& e) {
    EXPECT_NE(e.log_csv().find("iteration,loss_s,loss_p,active_component"),
              std::string::npos);
  }
}

TEST_F(TrainingTest, ShapeMismatchIsConfigError) {
  SanitizerModel s = SanitizerModel::Deterministic({3, 32, 32}, 1);
  EXPECT_THROW(TrainPlugAndPlay(s, pretrained_->utility, pretrained_->privacy,
                                prior(), data_->train,
                                Config(TrainMode::kPlugAndPlay, 0.5)),
               ConfigError);
}

TEST(TrainConfigTest, Validation) {
  TrainConfig c;
  EXPECT_NO_THROW(c.Validate());
  c.alpha = -0.1;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TrainConfig{};
  c.alternation_period = 0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TrainConfig{};
  c.sanitizer_learning_rate = 0.0;
  EXPECT_THROW(c.Validate(), ConfigError);
  c = TrainConfig{};
  c.utility_learning_rate = 0.0;
  EXPECT_NO_THROW(c.Validate());
  PretrainConfig p;
  p.batch_size = 0;
  EXPECT_THROW(p.Validate(), ConfigError);
  EXPECT_THROW(ParseTrainMode("gan"), ConfigError);
}

TEST(TrainLogTest, CsvRoundTrip) {
  TrainLog log;
  log.records.push_back({0, 0.5, std::nullopt, Component::kSanitizer});
  log.records.push_back({1, 0.25, 1.375, Component::kPrivacy});
  log.records.push_back({2, 0.125, std::nullopt, Component::kSanitizerAndUtility});
  const std::string csv = log.ToCsv();
  EXPECT_EQ(csv.substr(0, csv.find('\n')), "iteration,loss_s,loss_p,active_component");
  EXPECT_EQ(TrainLog::FromCsv(csv), log);
  EXPECT_THROW(TrainLog::FromCsv("iteration,loss_s,loss_p,active_component\n0,x,,sanitizer\n"),
               FormatError);
}

TEST(AdamTest, WarmupRampsStepSize) {
  std::vector<float> w{0.0f}, g{1.0f};
  Adam adam({ParamRef{w, g}}, AdamOptions{1.0, 0.9, 0.999, 1e-8, 4});
  adam.Step();
  EXPECT_NEAR(w[0], -0.25f, 1e-5f);
  adam.Step();
  EXPECT_NEAR(w[0], -0.75f, 1e-5f);
}

}  // namespace
}  // namespace cpriv
