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
#ifndef CPRIV_REPORT_H_
#define CPRIV_REPORT_H_

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "cpriv/evaluation.h"
#include "cpriv/training.h"
#include "json.hpp"

namespace cpriv {

struct CellKey {
  std::string architecture;  // deterministic | stochastic
  std::string mode;          // plug_and_play | adversarial | collaborative
  double alpha = 0.0;

  bool operator==(const CellKey&) const = default;
};

// Directory-safe cell name, e.g. "deterministic_adversarial_a0.8".
std::string CellName(const CellKey& key);
std::string FormatAlpha(double alpha);

struct LabeledBreakdown {
  std::string architecture;
  std::string mode;
  ConditionalBreakdown breakdown;

  bool operator==(const LabeledBreakdown&) const = default;
};

struct LabeledLog {
  CellKey cell;
  TrainLog log;
};

struct AttackRow {
  CellKey cell;
  double accuracy_before = 0.0;    // frozen privacy classifier on S(x)
  double privacy_kl_before = 0.0;
  double accuracy_after = 0.0;     // retrained final layer on S(x)
  double privacy_kl_after = 0.0;
  double raw_accuracy_after = 0.0;

  bool operator==(const AttackRow&) const = default;
};

struct ReportBundle {
  std::vector<TradeoffReport> tradeoffs;  // one per (architecture, mode)
  std::vector<LabeledBreakdown> breakdowns;
  std::vector<AttackRow> attacks;
  std::vector<LabeledLog> logs;  // plotted, not serialized into report.json

  bool operator==(const ReportBundle& o) const {
    return tradeoffs == o.tradeoffs && breakdowns == o.breakdowns &&
           attacks == o.attacks;
  }
};

struct EmittedFiles {
  std::vector<std::filesystem::path> files;
};

// report.json, tradeoff.csv, breakdown.csv, attack.csv (when attacks exist)
// and SVG plots: tradeoff.svg, topk_accuracy.svg, one whisker panel per
// (architecture, mode), one loss-curve plot per logged cell.
EmittedFiles EmitReport(const ReportBundle& bundle,
                        const std::filesystem::path& out_dir);

ReportBundle ReadReportJson(const std::filesystem::path& path);

std::string TradeoffCsv(const std::vector<TradeoffReport>& reports);
std::string BreakdownCsv(const std::vector<LabeledBreakdown>& breakdowns);
std::string AttackCsv(const std::vector<AttackRow>& rows);

void to_json(nlohmann::json& j, const CellKey& c);
void from_json(const nlohmann::json& j, CellKey& c);
void to_json(nlohmann::json& j, const LabeledBreakdown& b);
void from_json(const nlohmann::json& j, LabeledBreakdown& b);
void to_json(nlohmann::json& j, const AttackRow& r);
void from_json(const nlohmann::json& j, AttackRow& r);

}  // namespace cpriv

#endif  // CPRIV_REPORT_H_
