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
// cpriv: dataset generation, pretraining, sanitizer sweeps, attacks, bundle
// export and the entity service.

#include <atomic>
#include <chrono>
#include <csignal>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "cpriv/byte_io.h"
#include "cpriv/entity_service.h"
#include "cpriv/error.h"
#include "cpriv/experiment.h"
#include "cpriv/export.h"
#include "cpriv/metrics.h"
#include "json.hpp"

namespace fs = std::filesystem;
using namespace cpriv;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitRuntime = 2;

std::atomic<bool> g_stop{false};

void OnSignal(int) { g_stop = true; }

void Progress(const std::string& line) {
  const std::time_t t = std::time(nullptr);
  char buf[16];
  std::strftime(buf, sizeof(buf), "%H:%M:%S", std::localtime(&t));
  std::cerr << "[" << buf << "] " << line << std::endl;
}

// Options shared by every subcommand that needs a run configuration.
struct ConfigFlags {
  std::string config_path;
  std::string run_dir;
  std::optional<uint64_t> seed;
  std::optional<std::string> output_root;
  std::optional<int> workers;
  std::optional<int> epochs;
  std::optional<int> pretrain_epochs;
  std::optional<int> topk;
  std::vector<double> alphas;
  std::vector<std::string> architectures;
  std::vector<std::string> modes;

  void Attach(CLI::App* app, bool sweep_options) {
    app->add_option("-c,--config", config_path, "JSON run configuration")
        ->check(CLI::ExistingFile);
    app->add_option("--run-dir", run_dir,
                    "Existing run directory (its config.json is used)")
        ->check(CLI::ExistingDirectory);
    app->add_option("--seed", seed, "Global seed");
    app->add_option("--output-root", output_root, "Parent of run directories");
    app->add_option("--workers", workers, "Kernel threads")->check(CLI::PositiveNumber);
    if (!sweep_options) return;
    app->add_option("--epochs", epochs, "Sanitizer epochs per cell")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--pretrain-epochs", pretrain_epochs, "Classifier epochs")
        ->check(CLI::NonNegativeNumber);
    app->add_option("--topk", topk, "k for top-k utility accuracy")
        ->check(CLI::PositiveNumber);
    app->add_option("--alphas", alphas, "Alpha list")->delimiter(',');
    app->add_option("--architectures", architectures,
                    "deterministic,stochastic")->delimiter(',');
    app->add_option("--modes", modes,
                    "plug_and_play,adversarial,collaborative")->delimiter(',');
  }

  // defaults < config file (or run dir) < environment < flags
  RunConfig Resolve() const {
    RunConfig c;
    if (!run_dir.empty()) {
      c = LoadRunConfig(fs::path(run_dir) / "config.json");
      c.output_root = fs::path(run_dir).lexically_normal().parent_path().string();
      if (c.output_root.empty()) c.output_root = ".";
    } else if (!config_path.empty()) {
      c = LoadRunConfig(config_path);
    }
    if (const char* env = std::getenv("CPRIV_OUTPUT_ROOT"); env && *env && run_dir.empty()) {
      c.output_root = env;
    }
    if (const char* env = std::getenv("CPRIV_WORKERS"); env && *env) {
      try {
        c.workers = std::stoi(env);
      } catch (const std::exception&) {
        throw ConfigError("CPRIV_WORKERS must be an integer");
      }
    }
    if (seed) c.seed = *seed;
    if (output_root) c.output_root = *output_root;
    if (workers) c.workers = *workers;
    if (epochs) c.train.epochs = *epochs;
    if (pretrain_epochs) {
      c.pretrain.epochs = *pretrain_epochs;
      c.attack.epochs = *pretrain_epochs;
    }
    if (topk) c.eval.k = *topk;
    if (!alphas.empty()) c.alphas = alphas;
    if (!architectures.empty()) c.architectures = architectures;
    if (!modes.empty()) c.modes = modes;
    c.Validate();
    if (!run_dir.empty()) {
      const fs::path expected = RunDirectory::For(c).root();
      if (fs::weakly_canonical(expected) != fs::weakly_canonical(run_dir)) {
        throw ConfigError("overrides change the configuration hash of " + run_dir);
      }
    }
    return c;
  }
};

CellKey ParseCell(const std::string& text) {
  const auto a = text.find('/');
  const auto b = text.find('/', a == std::string::npos ? a : a + 1);
  if (a == std::string::npos || b == std::string::npos) {
    throw ConfigError("cell must look like architecture/mode/alpha, got " + text);
  }
  CellKey key{text.substr(0, a), text.substr(a + 1, b - a - 1), 0.0};
  try {
    key.alpha = std::stod(text.substr(b + 1));
  } catch (const std::exception&) {
    throw ConfigError("bad alpha in " + text);
  }
  ParseSanitizerKind(key.architecture);
  ParseTrainMode(key.mode);
  return key;
}

void PrintJson(const nlohmann::json& j) { std::cout << j.dump(2) << std::endl; }

int CmdGenData(const RunConfig& cfg, const std::string& out) {
  const fs::path dir = out.empty() ? RunDirectory::For(cfg).root() / "data" : fs::path(out);
  const DatasetSplits d = GenerateDataset(cfg.dataset);
  WriteDataset(d.train, dir / "train");
  WriteDataset(d.test, dir / "test");
  PrintJson({{"train", (dir / "train").string()},
             {"test", (dir / "test").string()},
             {"train_size", d.train.size()},
             {"test_size", d.test.size()},
             {"prior", EmpiricalPrior(d.train)}});
  return kExitOk;
}

int CmdPretrain(const RunConfig& cfg) {
  Experiment exp(cfg, Progress);
  const PretrainedModels& m = exp.Pretrained();
  exp.manifest().Finish("ok");
  PrintJson({{"run_dir", exp.dir().root().string()},
             {"utility_top1", m.utility_top1},
             {"utility_top3", m.utility_top3},
             {"privacy_accuracy", m.privacy_accuracy}});
  return kExitOk;
}

int CmdSweep(const RunConfig& cfg) {
  Experiment exp(cfg, Progress);
  const ReportBundle bundle = exp.Sweep();
  nlohmann::json summary = nlohmann::json::array();
  for (const auto& t : bundle.tradeoffs) summary.push_back(t);
  PrintJson({{"run_dir", exp.dir().root().string()},
             {"report", exp.dir().report().string()},
             {"tradeoffs", summary}});
  return kExitOk;
}

int CmdAttack(const RunConfig& cfg) {
  Experiment exp(cfg, Progress);
  const auto rows = exp.Attack();
  std::cout << AttackCsv(rows);
  return kExitOk;
}

int CmdReport(const RunConfig& cfg) {
  Experiment exp(cfg, Progress);
  exp.Report();
  exp.manifest().Finish("ok");
  PrintJson({{"report", exp.dir().report().string()}});
  return kExitOk;
}

int CmdExport(const RunConfig& cfg, const std::string& cell_text,
              const std::string& out, const std::string& golden_dir,
              int golden_count) {
  Experiment exp(cfg, Progress);
  const CellKey key = ParseCell(cell_text);
  const CellOutcome cell = exp.LoadCell(key);
  BundleMetadata meta;
  meta.alpha = key.alpha;
  meta.mode = key.mode;
  meta.seed = exp.CellSeed(key);
  const SanitizerBundle b = ExportSanitizer(cell.sanitizer, meta, out);
  nlohmann::json result = {{"bundle", out},
                           {"metadata", b.metadata},
                           {"ops", b.ops.size()}};
  if (!golden_dir.empty()) {
    const Dataset inputs = exp.data().test.Head(golden_count);
    const Tensor outputs = cell.sanitizer.unet().Forward(inputs.images);
    WriteDataset(inputs, fs::path(golden_dir) / "inputs");
    ByteWriter w;
    w.F32s(outputs.values());
    WriteFileAtomic(fs::path(golden_dir) / "outputs.f32", w.buffer());
    WriteTextAtomic(fs::path(golden_dir) / "golden.json",
                    nlohmann::json{{"count", inputs.size()},
                                   {"shape", {inputs.image_shape().channels,
                                              inputs.image_shape().height,
                                              inputs.image_shape().width}},
                                   {"inputs", "inputs"},
                                   {"outputs", "outputs.f32"},
                                   {"bundle", fs::absolute(out).string()}}
                            .dump(2));
    result["golden"] = golden_dir;
  }
  PrintJson(result);
  return kExitOk;
}

struct ServiceFlags {
  std::string host = "127.0.0.1";
  int port = kDefaultPort;
  int topk = 3;
  uint32_t max_frame_bytes = 16u << 20;
  std::string utility_path;
  std::string privacy_path;
  std::string sanitizer_path;
  int limit = 100;
  bool send_raw = false;
  std::string out;
};

int CmdServe(const ConfigFlags& cf, const ServiceFlags& sf) {
  fs::path utility = sf.utility_path, privacy = sf.privacy_path;
  if (utility.empty() || privacy.empty()) {
    const RunDirectory dir = RunDirectory::For(cf.Resolve());
    if (utility.empty()) utility = dir.utility();
    if (privacy.empty()) privacy = dir.privacy();
  }
  if (!fs::exists(utility) || !fs::exists(privacy)) {
    throw ConfigError("classifier checkpoints not found (" + utility.string() +
                      ", " + privacy.string() + "); run pretrain first");
  }
  ServerConfig sc{sf.host, static_cast<uint16_t>(sf.port), sf.topk, sf.max_frame_bytes};
  EntityServer server(LoadClassifier(utility), LoadClassifier(privacy), sc);
  std::signal(SIGINT, OnSignal);
  std::signal(SIGTERM, OnSignal);
  server.Start();
  Progress("serving on " + sf.host + ":" + std::to_string(server.port()));
  while (!g_stop) std::this_thread::sleep_for(std::chrono::milliseconds(100));
  server.Stop();
  const ServerStats st = server.stats();
  PrintJson({{"connections", st.connections},
             {"frames", st.frames},
             {"errors", st.errors},
             {"dropped", st.dropped}});
  return kExitOk;
}

int CmdCapture(const ConfigFlags& cf, const ServiceFlags& sf) {
  const RunConfig cfg = cf.Resolve();
  const DatasetSplits data = GenerateDataset(cfg.dataset);
  const Prior prior = EmpiricalPrior(data.train);
  std::optional<ImportedSanitizer> sanitizer;
  if (!sf.sanitizer_path.empty()) {
    sanitizer = ImportSanitizer(sf.sanitizer_path, cfg.dataset.image_shape);
  }
  CaptureConfig cc;
  cc.client.host = sf.host;
  cc.client.port = static_cast<uint16_t>(sf.port);
  cc.limit = sf.limit;
  cc.send_raw = sf.send_raw;
  cc.eval_k = cfg.eval.k;
  cc.seed = cfg.eval.seed;
  CaptureReport report = SimulateCapture(
      data.test, sanitizer ? &sanitizer->model : nullptr, prior, cc);
  if (sanitizer) report.summary.alpha = sanitizer->metadata.alpha;
  const nlohmann::json j = report;
  if (!sf.out.empty()) WriteTextAtomic(sf.out, j.dump(2) + "\n");
  PrintJson({{"sanitized", report.sanitized},
             {"frames", report.records.size()},
             {"summary", j.at("summary")},
             {"error", j.at("error")}});
  return report.error ? kExitRuntime : kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Collaborative sanitization of image data for privacy-aware inference"};
  app.require_subcommand(1);

  ConfigFlags cf;
  ServiceFlags sf;
  std::string out, cell, golden_dir;
  int golden_count = 100;

  auto* gen = app.add_subcommand("gen-data", "Write the synthetic train/test splits (TDS1)");
  cf.Attach(gen, false);
  gen->add_option("--out", out, "Output directory (default <run>/data)");

  auto* pretrain = app.add_subcommand("pretrain", "Train the utility and privacy classifiers");
  cf.Attach(pretrain, true);

  auto* sweep = app.add_subcommand("sweep", "Train and evaluate every sanitizer cell");
  cf.Attach(sweep, true);

  auto* attack = app.add_subcommand("attack", "Retrain fresh attacker heads on trained sanitizers");
  cf.Attach(attack, true);

  auto* report = app.add_subcommand("report", "Rebuild report files from trained cells");
  cf.Attach(report, true);

  auto* exp = app.add_subcommand("export", "Write a trained sanitizer as a PSF1 bundle");
  cf.Attach(exp, true);
  exp->add_option("--cell", cell, "architecture/mode/alpha, e.g. deterministic/adversarial/0.8")
      ->required();
  exp->add_option("--out", out, "Bundle path")->required();
  exp->add_option("--golden-dir", golden_dir, "Also write inputs and reference outputs");
  exp->add_option("--golden-count", golden_count, "Golden sample count")
      ->check(CLI::PositiveNumber);

  auto add_service = [&](CLI::App* sub) {
    sub->add_option("--host", sf.host, "Server address");
    sub->add_option("--port", sf.port, "TCP port")->check(CLI::Range(0, 65535));
  };
  auto* serve = app.add_subcommand("serve", "Run the entity inference server");
  cf.Attach(serve, false);
  add_service(serve);
  serve->add_option("--topk", sf.topk, "Utility entries per result")->check(CLI::PositiveNumber);
  serve->add_option("--max-frame-bytes", sf.max_frame_bytes, "Largest accepted payload")
      ->check(CLI::PositiveNumber);
  serve->add_option("--utility", sf.utility_path, "Utility checkpoint")->check(CLI::ExistingFile);
  serve->add_option("--privacy", sf.privacy_path, "Privacy checkpoint")->check(CLI::ExistingFile);

  auto* capture = app.add_subcommand("capture", "Stream test frames to a running server");
  cf.Attach(capture, false);
  add_service(capture);
  capture->add_option("--sanitizer", sf.sanitizer_path, "PSF1 bundle; omit to send raw frames")
      ->check(CLI::ExistingFile);
  capture->add_option("--limit", sf.limit, "Frames to send")->check(CLI::PositiveNumber);
  capture->add_flag("--send-raw", sf.send_raw, "Also send x to measure utility KL");
  capture->add_option("--out", sf.out, "Capture report JSON");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitOk : kExitUsage;
  }

  try {
    if (*gen) return CmdGenData(cf.Resolve(), out);
    if (*pretrain) return CmdPretrain(cf.Resolve());
    if (*sweep) return CmdSweep(cf.Resolve());
    if (*attack) return CmdAttack(cf.Resolve());
    if (*report) return CmdReport(cf.Resolve());
    if (*exp) return CmdExport(cf.Resolve(), cell, out, golden_dir, golden_count);
    if (*serve) return CmdServe(cf, sf);
    if (*capture) return CmdCapture(cf, sf);
  } catch (const ConfigError& e) {
    std::cerr << "configuration error: " << e.what() << std::endl;
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << std::endl;
    return kExitRuntime;
  }
  return kExitUsage;
}
