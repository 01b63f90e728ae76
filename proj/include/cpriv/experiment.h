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
#ifndef CPRIV_EXPERIMENT_H_
#define CPRIV_EXPERIMENT_H_

// Run directory layout (run_<config hash>/):
//   config.json             full configuration
//   manifest.json           stage status, timings, failure reason
//   models/                 utility.clf, privacy.clf, pretrain.json,
//                           warmstart.psf1
//   cells/<cell>/           sanitizer.psf1 (+ .meta.json), trainlog.csv,
//                           metrics.json, privacy.clf (adversarial),
//                           utility.clf (collaborative)
//   report/                 report.json, CSV tables, SVG plots
// Datasets are regenerated from config.json on demand.

#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cpriv/evaluation.h"
#include "cpriv/models.h"
#include "cpriv/report.h"
#include "cpriv/toy_data.h"
#include "cpriv/training.h"
#include "json.hpp"

namespace cpriv {

struct RunConfig {
  uint64_t seed = 2026;
  std::string output_root = "runs";
  DatasetSpec dataset = DatasetSpec::Default();
  PretrainConfig pretrain;
  int warm_start_epochs = 2;
  double warm_start_learning_rate = 1e-3;
  TrainConfig train;  // mode and alpha are set per cell
  // Adversarial runs spend every other epoch on the privacy head; this keeps
  // the number of sanitizer epochs equal across modes.
  int adversarial_epoch_factor = 2;
  std::vector<double> alphas{0.0, 0.05, 0.2, 0.5, 0.8};
  std::vector<std::string> architectures{"deterministic", "stochastic"};
  std::vector<std::string> modes{"plug_and_play", "adversarial"};
  EvalConfig eval;
  PretrainConfig attack;  // attacker budget; defaults to the pretraining one
  int workers = 1;        // kernel threads

  void Validate() const;
  // Hex digest of the canonical JSON (output_root and workers excluded).
  std::string Hash() const;
  static RunConfig Default();
};

void to_json(nlohmann::json& j, const RunConfig& c);
// Missing keys keep their defaults.
void from_json(const nlohmann::json& j, RunConfig& c);
RunConfig LoadRunConfig(const std::filesystem::path& path);

class RunDirectory {
 public:
  explicit RunDirectory(std::filesystem::path root) : root_(std::move(root)) {}
  static RunDirectory For(const RunConfig& config);

  const std::filesystem::path& root() const { return root_; }
  std::filesystem::path config() const { return root_ / "config.json"; }
  std::filesystem::path manifest() const { return root_ / "manifest.json"; }
  std::filesystem::path models() const { return root_ / "models"; }
  std::filesystem::path utility() const { return models() / "utility.clf"; }
  std::filesystem::path privacy() const { return models() / "privacy.clf"; }
  std::filesystem::path pretrain_summary() const { return models() / "pretrain.json"; }
  std::filesystem::path warm_start() const { return models() / "warmstart.psf1"; }
  std::filesystem::path cell(const CellKey& key) const {
    return root_ / "cells" / CellName(key);
  }
  std::filesystem::path report() const { return root_ / "report"; }

 private:
  std::filesystem::path root_;
};

struct StageRecord {
  std::string name;
  std::string status;  // ok | failed | cached
  double seconds = 0.0;
  std::string error;
};

// Written after every stage so a crash leaves an accurate trail.
class Manifest {
 public:
  Manifest(std::filesystem::path path, std::string config_hash);
  void Record(StageRecord stage);
  void Finish(const std::string& status, const std::string& error = {});
  const std::vector<StageRecord>& stages() const { return stages_; }

 private:
  void Write() const;

  std::filesystem::path path_;
  std::string config_hash_;
  std::string started_;
  std::string status_ = "running";
  std::string error_;
  std::vector<StageRecord> stages_;
};

struct PretrainedModels {
  Classifier utility;
  Classifier privacy;
  double utility_top1 = 0.0;
  double utility_top3 = 0.0;
  double privacy_accuracy = 0.0;
};

struct CellOutcome {
  CellKey key;
  SanitizerModel sanitizer;
  Classifier utility;  // the classifier the cell was evaluated with
  Classifier privacy;
  TrainLog log;
  TradeoffPoint point;
  ConditionalBreakdown breakdown;
  double seconds = 0.0;
};

// Observer for progress lines; may be empty.
using Progress = std::function<void(const std::string&)>;

class Experiment {
 public:
  Experiment(RunConfig config, Progress progress = {});

  const RunConfig& config() const { return config_; }
  const RunDirectory& dir() const { return dir_; }
  const DatasetSplits& data();
  const Prior& prior();

  // Each stage loads its artifacts when present and trains them otherwise.
  const PretrainedModels& Pretrained();
  const SanitizerModel& WarmStart();
  CellOutcome RunCell(const CellKey& key);
  // Loads a trained cell; ConfigError when its checkpoints are missing.
  CellOutcome LoadCell(const CellKey& key);

  // Every (architecture, mode, alpha) cell plus the report.
  ReportBundle Sweep();
  // Rebuilds the report from trained cells only.
  ReportBundle Report();
  std::vector<AttackRow> Attack();
  AttackRow AttackCell(const CellKey& key);

  Manifest& manifest() { return manifest_; }
  uint64_t CellSeed(const CellKey& key) const;

 private:
  ReportBundle BuildReport(bool train);
  void RequireTrained() const;
  template <typename Fn>
  auto Stage(const std::string& name, Fn&& fn);
  void Log(const std::string& line) const;

  RunConfig config_;
  RunDirectory dir_;
  Progress progress_;
  Manifest manifest_;
  std::optional<DatasetSplits> data_;
  std::optional<Prior> prior_;
  std::optional<PretrainedModels> pretrained_;
  std::optional<SanitizerModel> warm_;
};

SanitizerKind ArchitectureKind(const std::string& architecture);

}  // namespace cpriv

#endif  // CPRIV_EXPERIMENT_H_
