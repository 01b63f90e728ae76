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
#include "cpriv/experiment.h"

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <set>

#include "cpriv/byte_io.h"
#include "cpriv/error.h"
#include "cpriv/export.h"
#include "cpriv/kernels.h"
#include "cpriv/metrics.h"
#include "cpriv/rng.h"

namespace cpriv {
namespace {

uint64_t Fnv1a(const std::string& s) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

nlohmann::json PretrainJson(const PretrainConfig& p) {
  return {{"epochs", p.epochs},
          {"batch_size", p.batch_size},
          {"learning_rate", p.learning_rate},
          {"seed", p.seed}};
}

void ReadPretrain(const nlohmann::json& j, PretrainConfig& p) {
  p.epochs = j.value("epochs", p.epochs);
  p.batch_size = j.value("batch_size", p.batch_size);
  p.learning_rate = j.value("learning_rate", p.learning_rate);
  p.seed = j.value("seed", p.seed);
}

double Seconds(std::chrono::steady_clock::time_point since) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - since)
      .count();
}

nlohmann::json ReadJson(const std::filesystem::path& path) {
  try {
    return nlohmann::json::parse(ReadTextFile(path));
  } catch (const nlohmann::json::exception& e) {
    throw FormatError(path.filename().string(), e.what());
  }
}

void WriteJson(const std::filesystem::path& path, const nlohmann::json& j) {
  WriteTextAtomic(path, j.dump(2) + "\n");
}

}  // namespace

SanitizerKind ArchitectureKind(const std::string& architecture) {
  return ParseSanitizerKind(architecture);
}

// ----------------------------------------------------------------- RunConfig

RunConfig RunConfig::Default() { return RunConfig{}; }

void RunConfig::Validate() const {
  dataset.Validate();
  pretrain.Validate();
  train.Validate();
  attack.Validate();
  if (warm_start_epochs < 0) throw ConfigError("warm_start.epochs must be >= 0");
  if (!(warm_start_learning_rate > 0.0)) {
    throw ConfigError("warm_start.learning_rate must be > 0");
  }
  if (adversarial_epoch_factor < 1) {
    throw ConfigError("train.adversarial_epoch_factor must be >= 1");
  }
  if (alphas.empty()) throw ConfigError("alphas must not be empty");
  for (std::size_t i = 0; i < alphas.size(); ++i) {
    if (!(alphas[i] >= 0.0 && alphas[i] <= 1.0)) {
      throw ConfigError("alpha " + FormatAlpha(alphas[i]) + " outside [0, 1]");
    }
    if (i > 0 && !(alphas[i] > alphas[i - 1])) {
      throw ConfigError("alphas must be sorted ascending without duplicates");
    }
  }
  for (const auto& a : architectures) ParseSanitizerKind(a);
  for (const auto& m : modes) ParseTrainMode(m);
  if (eval.k < 1 || eval.k > dataset.num_subjects) {
    throw ConfigError("evaluation.k must lie in [1, num_subjects]");
  }
  if (workers < 1) throw ConfigError("workers must be >= 1");
}

std::string RunConfig::Hash() const {
  nlohmann::json j = *this;
  j.erase("output_root");
  j.erase("workers");
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx",
                static_cast<unsigned long long>(Fnv1a(j.dump())));
  return buf;
}

void to_json(nlohmann::json& j, const RunConfig& c) {
  j = {{"seed", c.seed},
       {"output_root", c.output_root},
       {"workers", c.workers},
       {"dataset", c.dataset},
       {"pretrain", PretrainJson(c.pretrain)},
       {"warm_start",
        {{"epochs", c.warm_start_epochs},
         {"learning_rate", c.warm_start_learning_rate}}},
       {"train",
        {{"epochs", c.train.epochs},
         {"batch_size", c.train.batch_size},
         {"sanitizer_learning_rate", c.train.sanitizer_learning_rate},
         {"privacy_learning_rate", c.train.privacy_learning_rate},
         {"utility_learning_rate", c.train.utility_learning_rate},
         {"alternation_period", c.train.alternation_period},
         {"warmup_steps", c.train.warmup_steps},
         {"epsilon", c.train.epsilon},
         {"collaborative_full_finetune", c.train.collaborative_full_finetune},
         {"adversarial_epoch_factor", c.adversarial_epoch_factor}}},
       {"alphas", c.alphas},
       {"architectures", c.architectures},
       {"modes", c.modes},
       {"evaluation", {{"k", c.eval.k}, {"seed", c.eval.seed}}},
       {"attack", PretrainJson(c.attack)}};
}

void from_json(const nlohmann::json& j, RunConfig& c) {
  c = RunConfig{};
  c.seed = j.value("seed", c.seed);
  c.output_root = j.value("output_root", c.output_root);
  c.workers = j.value("workers", c.workers);
  if (j.contains("dataset")) c.dataset = j.at("dataset").get<DatasetSpec>();
  if (j.contains("pretrain")) ReadPretrain(j.at("pretrain"), c.pretrain);
  c.attack = c.pretrain;
  if (j.contains("attack")) ReadPretrain(j.at("attack"), c.attack);
  if (j.contains("warm_start")) {
    const auto& w = j.at("warm_start");
    c.warm_start_epochs = w.value("epochs", c.warm_start_epochs);
    c.warm_start_learning_rate = w.value("learning_rate", c.warm_start_learning_rate);
  }
  if (j.contains("train")) {
    const auto& t = j.at("train");
    TrainConfig& tc = c.train;
    tc.epochs = t.value("epochs", tc.epochs);
    tc.batch_size = t.value("batch_size", tc.batch_size);
    tc.sanitizer_learning_rate = t.value("sanitizer_learning_rate", tc.sanitizer_learning_rate);
    tc.privacy_learning_rate = t.value("privacy_learning_rate", tc.privacy_learning_rate);
    tc.utility_learning_rate = t.value("utility_learning_rate", tc.utility_learning_rate);
    tc.alternation_period = t.value("alternation_period", tc.alternation_period);
    tc.warmup_steps = t.value("warmup_steps", tc.warmup_steps);
    tc.epsilon = t.value("epsilon", tc.epsilon);
    tc.collaborative_full_finetune =
        t.value("collaborative_full_finetune", tc.collaborative_full_finetune);
    c.adversarial_epoch_factor =
        t.value("adversarial_epoch_factor", c.adversarial_epoch_factor);
  }
  c.alphas = j.value("alphas", c.alphas);
  c.architectures = j.value("architectures", c.architectures);
  c.modes = j.value("modes", c.modes);
  if (j.contains("evaluation")) {
    c.eval.k = j.at("evaluation").value("k", c.eval.k);
    c.eval.seed = j.at("evaluation").value("seed", c.eval.seed);
  }
}

RunConfig LoadRunConfig(const std::filesystem::path& path) {
  try {
    return ReadJson(path).get<RunConfig>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(path.string() + ": " + e.what());
  } catch (const FormatError& e) {
    throw ConfigError(e.what());
  } catch (const IoError& e) {
    throw ConfigError(e.what());
  }
}

RunDirectory RunDirectory::For(const RunConfig& config) {
  return RunDirectory(std::filesystem::path(config.output_root) /
                      ("run_" + config.Hash()));
}

// ------------------------------------------------------------------ Manifest

Manifest::Manifest(std::filesystem::path path, std::string config_hash)
    : path_(std::move(path)),
      config_hash_(std::move(config_hash)),
      started_(UtcTimestamp()) {}

void Manifest::Record(StageRecord stage) {
  stages_.push_back(std::move(stage));
  Write();
}

void Manifest::Finish(const std::string& status, const std::string& error) {
  status_ = status;
  error_ = error;
  Write();
}

void Manifest::Write() const {
  nlohmann::json stages = nlohmann::json::array();
  for (const auto& s : stages_) {
    nlohmann::json e = {{"name", s.name}, {"status", s.status}, {"seconds", s.seconds}};
    if (!s.error.empty()) e["error"] = s.error;
    stages.push_back(std::move(e));
  }
  nlohmann::json j = {{"config_hash", config_hash_},
                      {"status", status_},
                      {"started", started_},
                      {"updated", UtcTimestamp()},
                      {"stages", stages}};
  if (!error_.empty()) j["error"] = error_;
  WriteJson(path_, j);
}

// ---------------------------------------------------------------- Experiment

Experiment::Experiment(RunConfig config, Progress progress)
    : config_(std::move(config)),
      dir_(RunDirectory::For(config_)),
      progress_(std::move(progress)),
      manifest_(dir_.manifest(), config_.Hash()) {
  config_.Validate();
  SetKernelThreads(config_.workers);
  std::filesystem::create_directories(dir_.models());
  WriteJson(dir_.config(), config_);
}

void Experiment::Log(const std::string& line) const {
  if (progress_) progress_(line);
}

template <typename Fn>
auto Experiment::Stage(const std::string& name, Fn&& fn) {
  const auto start = std::chrono::steady_clock::now();
  try {
    bool cached = false;
    auto result = fn(cached);
    manifest_.Record({name, cached ? "cached" : "ok", Seconds(start), {}});
    Log(name + (cached ? " (cached)" : "") + " " +
        std::to_string(static_cast<int>(Seconds(start))) + "s");
    return result;
  } catch (const std::exception& e) {
    manifest_.Record({name, "failed", Seconds(start), e.what()});
    manifest_.Finish("failed", name + ": " + e.what());
    throw;
  }
}

const DatasetSplits& Experiment::data() {
  if (!data_) data_ = GenerateDataset(config_.dataset);
  return *data_;
}

const Prior& Experiment::prior() {
  if (!prior_) prior_ = EmpiricalPrior(data().train);
  return *prior_;
}

uint64_t Experiment::CellSeed(const CellKey& key) const {
  return DeriveSeed(config_.seed, Fnv1a(CellName(key)));
}

const PretrainedModels& Experiment::Pretrained() {
  if (pretrained_) return *pretrained_;
  pretrained_ = Stage("pretrain", [&](bool& cached) {
    const ImageShape shape = config_.dataset.image_shape;
    if (std::filesystem::exists(dir_.pretrain_summary()) &&
        std::filesystem::exists(dir_.utility()) &&
        std::filesystem::exists(dir_.privacy())) {
      cached = true;
      const auto j = ReadJson(dir_.pretrain_summary());
      PretrainedModels m{LoadClassifier(dir_.utility()), LoadClassifier(dir_.privacy())};
      if (m.utility.input_shape() != shape || m.privacy.input_shape() != shape) {
        throw FormatError("input_shape", "checkpoint does not match dataset");
      }
      m.utility_top1 = j.at("utility_top1").get<double>();
      m.utility_top3 = j.at("utility_top3").get<double>();
      m.privacy_accuracy = j.at("privacy_accuracy").get<double>();
      return m;
    }
    PretrainResult r = PretrainClassifiers(data().train, config_.pretrain, &data().test);
    SaveClassifier(r.utility, dir_.utility());
    SaveClassifier(r.privacy, dir_.privacy());
    WriteJson(dir_.pretrain_summary(),
              {{"utility_top1", r.utility_top1},
               {"utility_top3", r.utility_top3},
               {"privacy_accuracy", r.privacy_accuracy},
               {"evaluated_on", "test"}});
    return PretrainedModels{std::move(r.utility), std::move(r.privacy),
                            r.utility_top1, r.utility_top3, r.privacy_accuracy};
  });
  return *pretrained_;
}

const SanitizerModel& Experiment::WarmStart() {
  if (warm_) return *warm_;
  warm_ = Stage("warm_start", [&](bool& cached) {
    const ImageShape shape = config_.dataset.image_shape;
    if (std::filesystem::exists(dir_.warm_start())) {
      cached = true;
      UNet unet = LoadUNet(dir_.warm_start());
      if (unet.input_shape() != shape) {
        throw FormatError("input_shape", "warm start does not match dataset");
      }
      return SanitizerModel::FromUNet(SanitizerKind::kDeterministic, std::move(unet),
                                      std::nullopt);
    }
    SanitizerModel s =
        SanitizerModel::Deterministic(shape, DeriveSeed(config_.seed, 0x554e4554));
    WarmStartSanitizer(s, data().train, prior(), config_.warm_start_epochs,
                       config_.train.batch_size, config_.warm_start_learning_rate,
                       DeriveSeed(config_.seed, 0x5741524d));
    SaveUNet(s.unet(), dir_.warm_start());
    return s;
  });
  return *warm_;
}

CellOutcome Experiment::RunCell(const CellKey& key) {
  const auto cell_dir = dir_.cell(key);
  if (std::filesystem::exists(cell_dir / "metrics.json") &&
      std::filesystem::exists(cell_dir / "sanitizer.psf1")) {
    return Stage("cell " + CellName(key), [&](bool& cached) {
      cached = true;
      return LoadCell(key);
    });
  }
  const PretrainedModels& base = Pretrained();
  const SanitizerModel& warm = WarmStart();
  return Stage("cell " + CellName(key), [&](bool&) {
    const auto start = std::chrono::steady_clock::now();
    const SanitizerKind kind = ArchitectureKind(key.architecture);
    CellOutcome out;
    out.key = key;
    out.sanitizer = SanitizerModel::FromUNet(
        kind, warm.unet(),
        kind == SanitizerKind::kStochastic
            ? std::optional<DatasetSpec>(config_.dataset)
            : std::nullopt);
    out.utility = base.utility;
    out.privacy = base.privacy;
    TrainConfig tc = config_.train;
    tc.mode = ParseTrainMode(key.mode);
    tc.alpha = key.alpha;
    tc.seed = CellSeed(key);
    if (tc.mode == TrainMode::kAdversarial) tc.epochs *= config_.adversarial_epoch_factor;
    std::filesystem::create_directories(cell_dir);

    const uint64_t utility_before = out.utility.ParameterHash();
    const uint64_t privacy_before = out.privacy.ParameterHash();
    const uint64_t privacy_backbone_before = out.privacy.BackboneHash();
    try {
      switch (tc.mode) {
        case TrainMode::kPlugAndPlay:
          out.log = TrainPlugAndPlay(out.sanitizer, out.utility, out.privacy,
                                     prior(), data().train, tc);
          break;
        case TrainMode::kAdversarial:
          out.log = TrainAdversarial(out.sanitizer, out.utility, out.privacy,
                                     prior(), data().train, tc);
          SaveClassifier(out.privacy, cell_dir / "privacy.clf");
          break;
        case TrainMode::kCollaborative:
          out.log = TrainCollaborative(out.sanitizer, out.utility, out.privacy,
                                       prior(), data().train, tc);
          SaveClassifier(out.utility, cell_dir / "utility.clf");
          break;
      }
    } catch (const TrainingError& e) {
      if (!e.log_csv().empty()) {
        WriteTextAtomic(cell_dir / "trainlog.csv", e.log_csv());
      }
      throw;
    }
    out.log.WriteCsv(cell_dir / "trainlog.csv");
    BundleMetadata meta;
    meta.alpha = key.alpha;
    meta.mode = key.mode;
    meta.seed = tc.seed;
    ExportSanitizer(out.sanitizer, meta, cell_dir / "sanitizer.psf1");

    const SanitizedPosteriors post =
        ComputePosteriors(&out.sanitizer, out.utility, out.privacy, prior(),
                          data().test, config_.eval.seed);
    out.point = SummarizePosteriors(post, data().test, prior(), key.alpha, config_.eval);
    out.breakdown = BreakdownFromPosteriors(post.privacy_san, data().test.privacy_labels,
                                            key.alpha, prior());
    out.seconds = Seconds(start);
    const double privacy_raw_accuracy =
        Accuracy(post.privacy_raw, data().test.privacy_labels);
    WriteJson(cell_dir / "metrics.json",
              {{"cell", key},
               {"point", out.point},
               {"breakdown", out.breakdown},
               {"seconds", out.seconds},
               {"train_epochs", tc.epochs},
               {"seed", tc.seed},
               {"privacy_raw_accuracy", privacy_raw_accuracy},
               {"hashes",
                {{"utility_before", utility_before},
                 {"utility_after", out.utility.ParameterHash()},
                 {"privacy_before", privacy_before},
                 {"privacy_after", out.privacy.ParameterHash()},
                 {"privacy_backbone_before", privacy_backbone_before},
                 {"privacy_backbone_after", out.privacy.BackboneHash()}}}});
    return out;
  });
}

CellOutcome Experiment::LoadCell(const CellKey& key) {
  const auto cell_dir = dir_.cell(key);
  if (!std::filesystem::exists(cell_dir / "metrics.json") ||
      !std::filesystem::exists(cell_dir / "sanitizer.psf1")) {
    throw ConfigError("missing checkpoints for cell " + CellName(key) + " in " +
                      cell_dir.string());
  }
  const PretrainedModels& base = Pretrained();
  ImportedSanitizer imported =
      ImportSanitizer(cell_dir / "sanitizer.psf1", config_.dataset.image_shape);
  CellOutcome out;
  out.key = key;
  out.sanitizer = std::move(imported.model);
  out.utility = base.utility;
  out.privacy = base.privacy;
  if (std::filesystem::exists(cell_dir / "privacy.clf")) {
    out.privacy = LoadClassifier(cell_dir / "privacy.clf");
  }
  if (std::filesystem::exists(cell_dir / "utility.clf")) {
    out.utility = LoadClassifier(cell_dir / "utility.clf");
  }
  if (std::filesystem::exists(cell_dir / "trainlog.csv")) {
    out.log = TrainLog::FromCsv(ReadTextFile(cell_dir / "trainlog.csv"));
  }
  const auto j = ReadJson(cell_dir / "metrics.json");
  try {
    j.at("point").get_to(out.point);
    j.at("breakdown").get_to(out.breakdown);
    out.seconds = j.value("seconds", 0.0);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("metrics.json", e.what());
  }
  return out;
}

ReportBundle Experiment::Sweep() { return BuildReport(true); }

ReportBundle Experiment::Report() {
  RequireTrained();
  return BuildReport(false);
}

void Experiment::RequireTrained() const {
  if (!std::filesystem::exists(dir_.utility()) ||
      !std::filesystem::exists(dir_.privacy())) {
    throw ConfigError("no pretrained classifiers in " + dir_.root().string() +
                      "; run the sweep first");
  }
}

ReportBundle Experiment::BuildReport(bool train) {
  const PretrainedModels& base = Pretrained();
  if (train) WarmStart();
  const SanitizedPosteriors raw_post = ComputePosteriors(
      nullptr, base.utility, base.privacy, prior(), data().test, config_.eval.seed);
  const TradeoffPoint raw =
      SummarizePosteriors(raw_post, data().test, prior(), 0.0, config_.eval);
  const ConditionalBreakdown raw_breakdown = BreakdownFromPosteriors(
      raw_post.privacy_raw, data().test.privacy_labels, std::nullopt, prior());

  ReportBundle bundle;
  for (const auto& arch : config_.architectures) {
    for (const auto& mode : config_.modes) {
      TradeoffReport report;
      report.architecture = arch;
      report.mode = mode;
      report.k = config_.eval.k;
      report.prior = prior();
      report.raw = raw;
      bundle.breakdowns.push_back({arch, mode, raw_breakdown});
      for (double alpha : config_.alphas) {
        CellOutcome cell = train ? RunCell({arch, mode, alpha})
                                 : LoadCell({arch, mode, alpha});
        report.points.push_back(cell.point);
        bundle.breakdowns.push_back({arch, mode, cell.breakdown});
        bundle.logs.push_back({cell.key, std::move(cell.log)});
      }
      bundle.tradeoffs.push_back(std::move(report));
    }
  }
  Stage("report", [&](bool&) {
    EmitReport(bundle, dir_.report());
    return 0;
  });
  manifest_.Finish("ok");
  return bundle;
}

AttackRow Experiment::AttackCell(const CellKey& key) {
  RequireTrained();
  const PretrainedModels& base = Pretrained();
  const CellOutcome cell = LoadCell(key);
  return Stage("attack " + CellName(key), [&](bool&) {
    AttackRow row;
    row.cell = key;
    const SanitizedPosteriors post =
        ComputePosteriors(&cell.sanitizer, base.utility, base.privacy, prior(),
                          data().test, config_.eval.seed);
    const TradeoffPoint before =
        SummarizePosteriors(post, data().test, prior(), key.alpha, config_.eval);
    row.accuracy_before = before.privacy_accuracy;
    row.privacy_kl_before = before.privacy_kl;
    const AttackResult attack =
        AttackRetrain(cell.sanitizer, base.privacy, data().train, data().test,
                      prior(), config_.attack, DeriveSeed(CellSeed(key), 0x41544b));
    row.accuracy_after = attack.accuracy_after;
    row.privacy_kl_after = attack.privacy_kl_after;
    row.raw_accuracy_after = attack.raw_accuracy_after;
    return row;
  });
}

std::vector<AttackRow> Experiment::Attack() {
  RequireTrained();
  std::vector<AttackRow> rows;
  for (const auto& arch : config_.architectures)
    for (const auto& mode : config_.modes)
      for (double alpha : config_.alphas) rows.push_back(AttackCell({arch, mode, alpha}));
  Stage("attack report", [&](bool&) {
    ReportBundle bundle;
    if (std::filesystem::exists(dir_.report() / "report.json")) {
      bundle = ReadReportJson(dir_.report() / "report.json");
    }
    bundle.attacks = rows;
    EmitReport(bundle, dir_.report());
    return 0;
  });
  manifest_.Finish("ok");
  return rows;
}

}  // namespace cpriv
