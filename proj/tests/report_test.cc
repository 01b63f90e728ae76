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

#include <filesystem>
#include <sstream>

#include "cpriv/byte_io.h"
#include "cpriv/error.h"
#include "cpriv/report.h"
#include "test_util.h"

namespace cpriv {
namespace {

using testing::TempDir;

ReportBundle SampleBundle() {
  ReportBundle b;
  for (const char* mode : {"plug_and_play", "adversarial"}) {
    TradeoffReport r;
    r.architecture = "deterministic";
    r.mode = mode;
    r.prior = {0.625, 0.375};
    r.raw = {0.0, 0.0, 0.4, 0.96, 0.99, 1.0, 64};
    for (double a : {0.0, 0.05, 0.2, 0.5, 0.8}) {
      r.points.push_back({a, 0.01 + a / 4, 0.4 * (1 - a), 0.95 - a / 5, 0.99 - a / 10,
                          1.0 - a / 2, 64});
    }
    b.tradeoffs.push_back(r);
    LabeledBreakdown lb;
    lb.architecture = "deterministic";
    lb.mode = mode;
    lb.breakdown.alpha = 0.8;
    lb.breakdown.prior_class1 = 0.375;
    lb.breakdown.groups[0] = ComputeBoxStats({0.1, 0.2, 0.3, 0.35, 0.9});
    lb.breakdown.groups[1] = ComputeBoxStats({0.3, 0.4, 0.5, 0.6, 0.7});
    b.breakdowns.push_back(lb);
    LabeledBreakdown raw = lb;
    raw.breakdown.alpha.reset();
    b.breakdowns.push_back(raw);
    b.attacks.push_back({{"deterministic", mode, 0.8}, 0.62, 0.01, 0.64, 0.02, 0.99});
    TrainLog log;
    for (int i = 0; i < 40; ++i) {
      log.records.push_back({i, 1.0 / (1 + i), i % 2 ? std::optional<double>(0.5 + i / 100.0)
                                                     : std::nullopt,
                             Component::kSanitizer});
    }
    b.logs.push_back({{"deterministic", mode, 0.8}, log});
  }
  return b;
}

TEST(CellNameTest, Format) {
  EXPECT_EQ(CellName({"stochastic", "adversarial", 0.05}), "stochastic_adversarial_a0.05");
  EXPECT_EQ(CellName({"deterministic", "plug_and_play", 0.0}),
            "deterministic_plug_and_play_a0");
}

TEST(ReportTest, EmitsFilesAndJsonRoundTrips) {
  TempDir dir("report");
  const ReportBundle b = SampleBundle();
  const EmittedFiles files = EmitReport(b, dir.path() / "out");
  for (const char* name : {"report.json", "tradeoff.csv", "breakdown.csv", "attack.csv",
                           "tradeoff.svg", "topk_accuracy.svg",
                           "breakdown_deterministic_adversarial.svg",
                           "loss_deterministic_plug_and_play_a0.8.svg"}) {
    const auto p = dir.path() / "out" / name;
    ASSERT_TRUE(std::filesystem::exists(p)) << name;
    EXPECT_GT(std::filesystem::file_size(p), 50u) << name;
  }
  EXPECT_GE(files.files.size(), 8u);
  const std::string svg = ReadTextFile(dir.path() / "out" / "tradeoff.svg");
  EXPECT_NE(svg.find("<svg"), std::string::npos);
  EXPECT_NE(svg.find("</svg>"), std::string::npos);

  const ReportBundle back = ReadReportJson(dir.path() / "out" / "report.json");
  EXPECT_EQ(back, b);
  const auto j = nlohmann::json::parse(ReadTextFile(dir.path() / "out" / "report.json"));
  EXPECT_EQ(j.at("units"), "nats");
}

TEST(ReportTest, CsvShapes) {
  const ReportBundle b = SampleBundle();
  auto lines = [](const std::string& s) {
    std::vector<std::string> out;
    std::istringstream is(s);
    for (std::string l; std::getline(is, l);) out.push_back(l);
    return out;
  };
  const auto t = lines(TradeoffCsv(b.tradeoffs));
  ASSERT_EQ(t.size(), 1u + 2 * 6);  // header + (raw + 5 alphas) per series
  EXPECT_NE(t[0].find("utility_kl"), std::string::npos);
  EXPECT_NE(t[0].find("privacy_kl"), std::string::npos);
  const auto a = lines(AttackCsv(b.attacks));
  EXPECT_EQ(a.size(), 3u);
  const auto br = lines(BreakdownCsv(b.breakdowns));
  EXPECT_EQ(br.size(), 1u + 4 * 2);
}

TEST(ReportTest, UnwritableDirectoryIsIoError) {
  TempDir dir("report_bad");
  WriteTextAtomic(dir.path() / "file", "x");
  EXPECT_THROW(EmitReport(SampleBundle(), dir.path() / "file" / "sub"), IoError);
}

TEST(ReportTest, MissingReportIsError) {
  TempDir dir("report_missing");
  EXPECT_THROW(ReadReportJson(dir.path() / "none.json"), Error);
}

}  // namespace
}  // namespace cpriv
