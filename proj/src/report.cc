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
#include "cpriv/report.h"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <sstream>

#include "cpriv/byte_io.h"
#include "cpriv/error.h"

namespace cpriv {
namespace {

constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c", "#9467bd",
                                    "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f"};

std::string Num(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

std::string Short(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.3g", v);
  return buf;
}

std::string Escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '&': out += "&amp;"; break;
      default: out += c;
    }
  }
  return out;
}

class SvgCanvas {
 public:
  SvgCanvas(int width, int height) : width_(width), height_(height) {}

  void Line(double x1, double y1, double x2, double y2,
            const std::string& color, double width = 1.0, bool dashed = false) {
    body_ << "<line x1=\"" << x1 << "\" y1=\"" << y1 << "\" x2=\"" << x2
          << "\" y2=\"" << y2 << "\" stroke=\"" << color << "\" stroke-width=\""
          << width << "\"" << (dashed ? " stroke-dasharray=\"4,3\"" : "")
          << "/>\n";
  }

  void Rect(double x, double y, double w, double h, const std::string& fill,
            const std::string& stroke = "none") {
    body_ << "<rect x=\"" << x << "\" y=\"" << y << "\" width=\"" << w
          << "\" height=\"" << h << "\" fill=\"" << fill << "\" stroke=\""
          << stroke << "\"/>\n";
  }

  void Circle(double x, double y, double r, const std::string& fill) {
    body_ << "<circle cx=\"" << x << "\" cy=\"" << y << "\" r=\"" << r
          << "\" fill=\"" << fill << "\"/>\n";
  }

  void Text(double x, double y, const std::string& text, int size = 11,
            const char* anchor = "start", double rotate = 0.0) {
    body_ << "<text x=\"" << x << "\" y=\"" << y << "\" font-size=\"" << size
          << "\" font-family=\"sans-serif\" text-anchor=\"" << anchor << "\"";
    if (rotate != 0.0) {
      body_ << " transform=\"rotate(" << rotate << " " << x << " " << y << ")\"";
    }
    body_ << ">" << Escape(text) << "</text>\n";
  }

  void Polyline(const std::vector<std::pair<double, double>>& pts,
                const std::string& color, double width = 1.5) {
    if (pts.empty()) return;
    body_ << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\""
          << width << "\" points=\"";
    for (const auto& [x, y] : pts) body_ << x << "," << y << " ";
    body_ << "\"/>\n";
  }

  std::string Finish() const {
    std::ostringstream os;
    os << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
       << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << width_
       << "\" height=\"" << height_ << "\" viewBox=\"0 0 " << width_ << " "
       << height_ << "\">\n"
       << "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n"
       << body_.str() << "</svg>\n";
    return os.str();
  }

 private:
  int width_;
  int height_;
  std::ostringstream body_;
};

// Plot area with data-to-pixel mapping.
struct Axes {
  double left, top, width, height;
  double x0, x1, y0, y1;

  double X(double v) const { return left + (v - x0) / (x1 - x0) * width; }
  double Y(double v) const { return top + height - (v - y0) / (y1 - y0) * height; }

  void Draw(SvgCanvas& svg, const std::string& title, const std::string& xlabel,
            const std::string& ylabel, bool x_ticks = true) const {
    svg.Rect(left, top, width, height, "none", "#444");
    for (int i = 0; i <= 4; ++i) {
      const double fy = y0 + (y1 - y0) * i / 4.0;
      svg.Line(left - 4, Y(fy), left, Y(fy), "#444");
      svg.Line(left, Y(fy), left + width, Y(fy), "#eee");
      svg.Text(left - 6, Y(fy) + 4, Short(fy), 10, "end");
      if (!x_ticks) continue;
      const double fx = x0 + (x1 - x0) * i / 4.0;
      svg.Line(X(fx), top + height, X(fx), top + height + 4, "#444");
      svg.Text(X(fx), top + height + 16, Short(fx), 10, "middle");
    }
    svg.Text(left + width / 2, top - 10, title, 13, "middle");
    svg.Text(left + width / 2, top + height + 34, xlabel, 11, "middle");
    svg.Text(left - 44, top + height / 2, ylabel, 11, "middle", -90);
  }
};

double PaddedMax(double v) { return v <= 0.0 ? 1.0 : v * 1.1; }

std::string TradeoffSvg(const std::vector<TradeoffReport>& reports) {
  SvgCanvas svg(640, 460);
  double xmax = 0.0, ymax = 0.0;
  for (const auto& r : reports) {
    ymax = std::max(ymax, r.raw.privacy_kl);
    for (const auto& p : r.points) {
      xmax = std::max(xmax, p.utility_kl);
      ymax = std::max(ymax, p.privacy_kl);
    }
  }
  const Axes ax{80, 40, 400, 360, 0.0, PaddedMax(xmax), 0.0, PaddedMax(ymax)};
  ax.Draw(svg, "Privacy vs. utility KL (nats)", "mean utility KL",
          "mean privacy KL");
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const std::string color = kPalette[i % std::size(kPalette)];
    std::vector<std::pair<double, double>> pts;
    for (const auto& p : reports[i].points) {
      pts.emplace_back(ax.X(p.utility_kl), ax.Y(p.privacy_kl));
      svg.Circle(pts.back().first, pts.back().second, 3.5, color);
      svg.Text(pts.back().first + 5, pts.back().second - 5,
               "a=" + FormatAlpha(p.alpha), 9);
    }
    svg.Polyline(pts, color);
    const double ly = 50 + 18 * static_cast<double>(i);
    svg.Line(495, ly, 515, ly, color, 2.0);
    svg.Text(520, ly + 4, reports[i].architecture + " / " + reports[i].mode, 10);
  }
  return svg.Finish();
}

std::string AccuracySvg(const std::vector<TradeoffReport>& reports) {
  std::vector<double> alphas;
  for (const auto& r : reports)
    for (const auto& p : r.points) alphas.push_back(p.alpha);
  std::sort(alphas.begin(), alphas.end());
  alphas.erase(std::unique(alphas.begin(), alphas.end()), alphas.end());
  const int groups = static_cast<int>(alphas.size()) + 1;  // raw first
  const int k = reports.empty() ? 3 : reports.front().k;
  SvgCanvas svg(160 + 90 * groups, 460);
  const Axes ax{80, 40, 90.0 * groups, 340, 0.0, 1.0, 0.0, 1.0};
  ax.Draw(svg, "Top-" + std::to_string(k) + " utility accuracy on S(x)", "alpha",
          "accuracy", false);
  const double slot = ax.width / groups;
  const double bar = (slot - 16) / std::max<std::size_t>(1, reports.size());
  for (int g = 0; g < groups; ++g) {
    const double gx = ax.left + g * slot + 8;
    svg.Text(gx + (slot - 16) / 2, ax.top + ax.height + 16,
             g == 0 ? "raw" : FormatAlpha(alphas[g - 1]), 10, "middle");
    for (std::size_t i = 0; i < reports.size(); ++i) {
      double v = reports[i].raw.topk;
      if (g > 0) {
        auto it = std::find_if(reports[i].points.begin(), reports[i].points.end(),
                               [&](const TradeoffPoint& p) { return p.alpha == alphas[g - 1]; });
        if (it == reports[i].points.end()) continue;
        v = it->topk;
      }
      svg.Rect(gx + bar * i, ax.Y(v), bar - 1, ax.Y(0.0) - ax.Y(v),
               kPalette[i % std::size(kPalette)]);
    }
  }
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const double ly = ax.top + ax.height + 50 + 14 * static_cast<double>(i);
    svg.Rect(ax.left, ly - 8, 10, 10, kPalette[i % std::size(kPalette)]);
    svg.Text(ax.left + 16, ly, reports[i].architecture + " / " + reports[i].mode, 10);
  }
  return svg.Finish();
}

void DrawBox(SvgCanvas& svg, const Axes& ax, double cx, double w,
             const BoxStats& b, const std::string& color) {
  if (b.count == 0) return;
  svg.Line(cx, ax.Y(b.whisker_low), cx, ax.Y(b.q1), color);
  svg.Line(cx, ax.Y(b.q3), cx, ax.Y(b.whisker_high), color);
  svg.Line(cx - w / 4, ax.Y(b.whisker_low), cx + w / 4, ax.Y(b.whisker_low), color);
  svg.Line(cx - w / 4, ax.Y(b.whisker_high), cx + w / 4, ax.Y(b.whisker_high), color);
  svg.Rect(cx - w / 2, ax.Y(b.q3), w, std::max(1.0, ax.Y(b.q1) - ax.Y(b.q3)),
           "none", color);
  svg.Line(cx - w / 2, ax.Y(b.median), cx + w / 2, ax.Y(b.median), color, 2.0);
  for (double o : b.outliers) svg.Circle(cx, ax.Y(o), 1.5, color);
}

std::string BreakdownSvg(const std::string& title,
                         std::vector<const ConditionalBreakdown*> panels) {
  std::sort(panels.begin(), panels.end(), [](auto* a, auto* b) {
    return a->alpha.value_or(-1.0) < b->alpha.value_or(-1.0);
  });
  const int n = static_cast<int>(panels.size());
  SvgCanvas svg(160 + 100 * std::max(1, n), 440);
  const Axes ax{80, 40, 100.0 * std::max(1, n), 340, 0.0, 1.0, 0.0, 1.0};
  ax.Draw(svg, title, "alpha (raw = unsanitized)", "P(attribute = 1)", false);
  for (int i = 0; i < n; ++i) {
    const double cx = ax.left + 100.0 * i + 50;
    DrawBox(svg, ax, cx - 18, 24, panels[i]->groups[0], kPalette[0]);
    DrawBox(svg, ax, cx + 18, 24, panels[i]->groups[1], kPalette[1]);
    svg.Text(cx, ax.top + ax.height + 16,
             panels[i]->alpha ? FormatAlpha(*panels[i]->alpha) : "raw", 10, "middle");
  }
  if (n > 0) {
    const double prior = panels.front()->prior_class1;
    svg.Line(ax.left, ax.Y(prior), ax.left + ax.width, ax.Y(prior), "#1f3fbf",
             1.2, true);
  }
  svg.Rect(ax.left + ax.width + 10, 50, 10, 10, kPalette[0]);
  svg.Text(ax.left + ax.width + 24, 59, "attr 0", 10);
  svg.Rect(ax.left + ax.width + 10, 66, 10, 10, kPalette[1]);
  svg.Text(ax.left + ax.width + 24, 75, "attr 1", 10);
  return svg.Finish();
}

std::string LossSvg(const LabeledLog& entry) {
  const auto& recs = entry.log.records;
  double ymax = 0.0;
  for (const auto& r : recs) {
    ymax = std::max(ymax, r.loss_s);
    if (r.loss_p) ymax = std::max(ymax, *r.loss_p);
  }
  SvgCanvas svg(640, 420);
  const double xmax = recs.empty() ? 1.0 : static_cast<double>(recs.back().iteration) + 1;
  const Axes ax{80, 40, 440, 320, 0.0, xmax, 0.0, PaddedMax(ymax)};
  ax.Draw(svg, "Losses: " + CellName(entry.cell), "iteration", "loss (nats)");
  std::vector<std::pair<double, double>> s, p;
  for (const auto& r : recs) {
    s.emplace_back(ax.X(static_cast<double>(r.iteration)), ax.Y(r.loss_s));
    if (r.loss_p) p.emplace_back(ax.X(static_cast<double>(r.iteration)), ax.Y(*r.loss_p));
  }
  svg.Polyline(s, kPalette[0], 1.0);
  svg.Polyline(p, kPalette[1], 1.0);
  svg.Line(535, 50, 555, 50, kPalette[0], 2.0);
  svg.Text(560, 54, "Loss_S", 10);
  if (!p.empty()) {
    svg.Line(535, 66, 555, 66, kPalette[1], 2.0);
    svg.Text(560, 70, "Loss_P", 10);
  }
  return svg.Finish();
}

}  // namespace

std::string FormatAlpha(double alpha) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", alpha);
  return buf;
}

std::string CellName(const CellKey& key) {
  return key.architecture + "_" + key.mode + "_a" + FormatAlpha(key.alpha);
}

std::string TradeoffCsv(const std::vector<TradeoffReport>& reports) {
  std::ostringstream os;
  os << "architecture,mode,row,alpha,utility_kl,privacy_kl,top1,topk,k,"
        "privacy_accuracy,sample_count\n";
  auto row = [&](const TradeoffReport& r, const char* kind, const TradeoffPoint& p) {
    os << r.architecture << "," << r.mode << "," << kind << ","
       << (std::string(kind) == "raw" ? "" : Num(p.alpha)) << ","
       << Num(p.utility_kl) << "," << Num(p.privacy_kl) << "," << Num(p.top1)
       << "," << Num(p.topk) << "," << r.k << "," << Num(p.privacy_accuracy)
       << "," << p.sample_count << "\n";
  };
  for (const auto& r : reports) {
    row(r, "raw", r.raw);
    for (const auto& p : r.points) row(r, "sanitized", p);
  }
  return os.str();
}

std::string BreakdownCsv(const std::vector<LabeledBreakdown>& breakdowns) {
  std::ostringstream os;
  os << "architecture,mode,alpha,attribute,count,median,q1,q3,whisker_low,"
        "whisker_high,outliers,prior_class1\n";
  for (const auto& lb : breakdowns) {
    for (int g = 0; g < 2; ++g) {
      const BoxStats& b = lb.breakdown.groups[g];
      os << lb.architecture << "," << lb.mode << ","
         << (lb.breakdown.alpha ? Num(*lb.breakdown.alpha) : "raw") << "," << g
         << "," << b.count << "," << Num(b.median) << "," << Num(b.q1) << ","
         << Num(b.q3) << "," << Num(b.whisker_low) << "," << Num(b.whisker_high)
         << "," << b.outliers.size() << "," << Num(lb.breakdown.prior_class1)
         << "\n";
    }
  }
  return os.str();
}

std::string AttackCsv(const std::vector<AttackRow>& rows) {
  std::ostringstream os;
  os << "architecture,mode,alpha,accuracy_before,privacy_kl_before,"
        "accuracy_after,privacy_kl_after,raw_accuracy_after\n";
  for (const auto& r : rows) {
    os << r.cell.architecture << "," << r.cell.mode << "," << Num(r.cell.alpha)
       << "," << Num(r.accuracy_before) << "," << Num(r.privacy_kl_before) << ","
       << Num(r.accuracy_after) << "," << Num(r.privacy_kl_after) << ","
       << Num(r.raw_accuracy_after) << "\n";
  }
  return os.str();
}

EmittedFiles EmitReport(const ReportBundle& bundle,
                        const std::filesystem::path& out_dir) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec || !std::filesystem::is_directory(out_dir)) {
    throw IoError("cannot create report directory " + out_dir.string());
  }
  EmittedFiles out;
  auto put = [&](const std::string& name, const std::string& text) {
    const auto path = out_dir / name;
    WriteTextAtomic(path, text);
    out.files.push_back(path);
  };

  nlohmann::json j = {{"units", "nats"},
                      {"tradeoffs", bundle.tradeoffs},
                      {"breakdowns", bundle.breakdowns},
                      {"attacks", bundle.attacks}};
  nlohmann::json logs = nlohmann::json::array();
  for (const auto& l : bundle.logs) logs.push_back(CellName(l.cell));
  j["loss_logs"] = logs;
  put("report.json", j.dump(2) + "\n");
  put("tradeoff.csv", TradeoffCsv(bundle.tradeoffs));
  put("breakdown.csv", BreakdownCsv(bundle.breakdowns));
  if (!bundle.attacks.empty()) put("attack.csv", AttackCsv(bundle.attacks));

  if (!bundle.tradeoffs.empty()) {
    put("tradeoff.svg", TradeoffSvg(bundle.tradeoffs));
    put("topk_accuracy.svg", AccuracySvg(bundle.tradeoffs));
  }
  std::map<std::pair<std::string, std::string>, std::vector<const ConditionalBreakdown*>> panels;
  for (const auto& lb : bundle.breakdowns) {
    panels[{lb.architecture, lb.mode}].push_back(&lb.breakdown);
  }
  for (const auto& [key, list] : panels) {
    put("breakdown_" + key.first + "_" + key.second + ".svg",
        BreakdownSvg("P(attribute = 1 | S(x)) by true attribute: " + key.first +
                         " / " + key.second,
                     list));
  }
  for (const auto& l : bundle.logs) put("loss_" + CellName(l.cell) + ".svg", LossSvg(l));
  return out;
}

ReportBundle ReadReportJson(const std::filesystem::path& path) {
  ReportBundle b;
  try {
    const auto j = nlohmann::json::parse(ReadTextFile(path));
    j.at("tradeoffs").get_to(b.tradeoffs);
    j.at("breakdowns").get_to(b.breakdowns);
    j.at("attacks").get_to(b.attacks);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("report", e.what());
  }
  return b;
}

void to_json(nlohmann::json& j, const CellKey& c) {
  j = {{"architecture", c.architecture}, {"mode", c.mode}, {"alpha", c.alpha}};
}

void from_json(const nlohmann::json& j, CellKey& c) {
  j.at("architecture").get_to(c.architecture);
  j.at("mode").get_to(c.mode);
  j.at("alpha").get_to(c.alpha);
}

void to_json(nlohmann::json& j, const LabeledBreakdown& b) {
  j = {{"architecture", b.architecture}, {"mode", b.mode}, {"breakdown", b.breakdown}};
}

void from_json(const nlohmann::json& j, LabeledBreakdown& b) {
  j.at("architecture").get_to(b.architecture);
  j.at("mode").get_to(b.mode);
  j.at("breakdown").get_to(b.breakdown);
}

void to_json(nlohmann::json& j, const AttackRow& r) {
  j = {{"cell", r.cell},
       {"accuracy_before", r.accuracy_before},
       {"privacy_kl_before", r.privacy_kl_before},
       {"accuracy_after", r.accuracy_after},
       {"privacy_kl_after", r.privacy_kl_after},
       {"raw_accuracy_after", r.raw_accuracy_after}};
}

void from_json(const nlohmann::json& j, AttackRow& r) {
  j.at("cell").get_to(r.cell);
  j.at("accuracy_before").get_to(r.accuracy_before);
  j.at("privacy_kl_before").get_to(r.privacy_kl_before);
  j.at("accuracy_after").get_to(r.accuracy_after);
  j.at("privacy_kl_after").get_to(r.privacy_kl_after);
  j.at("raw_accuracy_after").get_to(r.raw_accuracy_after);
}

}  // namespace cpriv
