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
// Acceptance checks for the synthetic privacy task. Prints one PASS/FAIL line
// per criterion and exits non-zero when any criterion fails.
//
// CPRIV_ACCEPTANCE_ROOT selects the run root (reused across invocations);
// otherwise a fresh temporary directory is used and removed afterwards.

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstring>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <iostream>
#include <map>
#include <numeric>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "cpriv/entity_service.h"
#include "cpriv/evaluation.h"
#include "cpriv/experiment.h"
#include "cpriv/metrics.h"
#include "cpriv/objectives.h"

namespace fs = std::filesystem;
using namespace cpriv;

namespace {

struct Verdict {
  int id;
  std::string name;
  bool pass;
  std::string detail;
};

std::vector<Verdict> g_verdicts;

void Report(int id, const std::string& name, bool pass, const std::string& detail) {
  g_verdicts.push_back({id, name, pass, detail});
  std::printf("[%s] criterion %d: %s | %s\n", pass ? "PASS" : "FAIL", id,
              name.c_str(), detail.c_str());
  std::fflush(stdout);
}

std::string Fmt(const char* fmt, double v) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), fmt, v);
  return buf;
}

void Log(const std::string& line) { std::cerr << "  .. " << line << std::endl; }

// ------------------------------------------------------------ loss oracles

// Scalar reference formulas, written out independently of the library.
double OracleKl(const std::vector<double>& p, const std::vector<double>& q) {
  double s = 0.0;
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] > 0) s += p[i] * std::log(p[i] / q[i]);
  }
  return s;
}

std::vector<double> OracleSoftmax(const std::vector<double>& z) {
  const double m = *std::max_element(z.begin(), z.end());
  std::vector<double> e(z.size());
  double s = 0.0;
  for (std::size_t i = 0; i < z.size(); ++i) s += e[i] = std::exp(z[i] - m);
  for (double& v : e) v /= s;
  return e;
}

double RelError(const std::vector<double>& a, const std::vector<double>& b) {
  double num = 0.0, den = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    num += (a[i] - b[i]) * (a[i] - b[i]);
    den += b[i] * b[i];
  }
  return std::sqrt(num) / std::max(std::sqrt(den), 1e-12);
}

void CheckLossOracles() {
  using V = std::vector<double>;
  const double eps = kDefaultEpsilon;
  const double limit = 1e-12;  // closed forms are taken as eps -> 0
  struct Case {
    const char* what;
    double got;
    double want;
  };
  const V prior{0.625, 0.375}, half{0.5, 0.5};
  V onehot16(16, 0.0), uniform16(16, 1.0 / 16);
  onehot16[0] = 1.0;
  const std::vector<Case> cases{
      {"kl((1,0)||(.5,.5))", KlDivergence<double, double>(V{1, 0}, half, limit),
       std::log(2.0)},
      {"kl(prior||(.5,.5))", KlDivergence<double, double>(prior, half, limit),
       0.625 * std::log(1.25) + 0.375 * std::log(0.75)},
      {"bce((1,0),(.5,.5))", BinaryCrossEntropy<double, double>(V{1, 0}, half, limit),
       std::log(2.0)},
      {"bce((0,1),(.9,.1))", BinaryCrossEntropy<double, double>(V{0, 1}, V{0.9, 0.1}, limit),
       -std::log(0.1)},
      {"loss_s alpha=.5", SanitizationLoss<double>(onehot16, uniform16, prior, half,
                                                  LossConfig{0.5, limit}),
       0.5 * std::log(16.0) + 0.5 * OracleKl(prior, half)},
      {"loss_p y=(0,1)", PrivacyLoss<double>(V{0, 1}, half, half, limit), 2 * std::log(2.0)},
  };
  double worst = 0.0;
  std::string worst_case;
  for (const Case& c : cases) {
    const double d = std::abs(c.got - c.want);
    if (d >= worst) {
      worst = d;
      worst_case = c.what;
    }
  }
  const bool hand_values =
      std::abs(OracleKl(prior, half) - 0.0315839424) < 1e-9 &&
      std::abs(0.5 * std::log(16.0) + 0.5 * OracleKl(prior, half) - 1.4020863323) < 1e-9;

  // Affinity in alpha on random posteriors.
  std::mt19937_64 rng(2026);
  std::gamma_distribution<double> gam(0.8, 1.0);
  auto simplex = [&](int k) {
    V v(k);
    double s = 0.0;
    for (double& x : v) s += x = gam(rng) + 1e-9;
    for (double& x : v) x /= s;
    return v;
  };
  double collinear_dev = 0.0;
  for (int t = 0; t < 50; ++t) {
    const V ur = simplex(16), us = simplex(16), ps = simplex(2);
    auto at = [&](double a) {
      return SanitizationLoss<double>(ur, us, prior, ps, LossConfig{a, eps});
    };
    const double a0 = at(0.0), a1 = at(0.35), a2 = at(0.9);
    collinear_dev = std::max(collinear_dev,
                             std::abs((a1 - a0) * 0.9 - (a2 - a0) * 0.35));
  }

  // Logit gradients against central differences of the oracle losses.
  std::normal_distribution<double> nd(0.0, 1.5);
  std::uniform_real_distribution<double> ua(0.0, 1.0);
  double worst_grad = 0.0;
  for (int t = 0; t < 50; ++t) {
    const double alpha = ua(rng);
    const V ur = simplex(16);
    V zu(16), zp(2);
    for (double& z : zu) z = nd(rng);
    for (double& z : zp) z = nd(rng);
    const int label = t % 2;
    const V pr = simplex(2);

    Tensor u_raw({1, 16, 1, 1}), u_san({1, 16, 1, 1}), p_san({1, 2, 1, 1}),
        p_raw({1, 2, 1, 1});
    const V qu = OracleSoftmax(zu), qp = OracleSoftmax(zp);
    V urf(16);
    for (int j = 0; j < 16; ++j) {
      u_raw.values()[j] = static_cast<float>(ur[j]);
      urf[j] = u_raw.values()[j];
      u_san.values()[j] = static_cast<float>(qu[j]);
    }
    for (int j = 0; j < 2; ++j) {
      p_san.values()[j] = static_cast<float>(qp[j]);
      p_raw.values()[j] = static_cast<float>(pr[j]);
    }
    const auto ls = SanitizationLossBatch(u_raw, u_san, Prior{prior[0], prior[1]}, p_san,
                                          LossConfig{alpha, eps});
    const auto lp = PrivacyLossBatch(std::vector<int>{label}, p_raw, p_san, eps);

    auto loss_s = [&](const V& a, const V& b) {
      return (1 - alpha) * OracleKl(urf, OracleSoftmax(a)) +
             alpha * OracleKl(prior, OracleSoftmax(b));
    };
    auto loss_p = [&](const V& b) {
      const V q = OracleSoftmax(b);
      return -std::log(static_cast<double>(p_raw.values()[label])) - std::log(q[label]);
    };
    const double h = 1e-5;
    V fd_s, an_s, fd_p, an_p;
    for (int j = 0; j < 18; ++j) {
      V a = zu, b = zp, a2 = zu, b2 = zp;
      if (j < 16) {
        a[j] += h;
        a2[j] -= h;
      } else {
        b[j - 16] += h;
        b2[j - 16] -= h;
      }
      fd_s.push_back((loss_s(a, b) - loss_s(a2, b2)) / (2 * h));
      an_s.push_back(j < 16 ? ls.utility_dlogits.values()[j]
                            : ls.privacy_dlogits.values()[j - 16]);
    }
    for (int j = 0; j < 2; ++j) {
      V b = zp, b2 = zp;
      b[j] += h;
      b2[j] -= h;
      fd_p.push_back((loss_p(b) - loss_p(b2)) / (2 * h));
      an_p.push_back(lp.san_dlogits.values()[j]);
    }
    worst_grad = std::max({worst_grad, RelError(an_s, fd_s), RelError(an_p, fd_p)});
  }

  const bool pass = worst < 1e-6 && hand_values && collinear_dev < 1e-9 &&
                    worst_grad < 1e-3;
  std::ostringstream d;
  d << "max closed-form error " << Fmt("%.2e", worst) << " (" << worst_case << ")"
    << ", collinearity deviation " << Fmt("%.1e", collinear_dev)
    << ", worst gradient rel. error over 50 instances " << Fmt("%.2e", worst_grad);
  Report(1, "loss oracles", pass, d.str());
}

// ------------------------------------------------------------ training runs

double QuarterMean(const std::vector<double>& v, bool last) {
  const std::size_t q = v.size() / 4;
  const auto begin = last ? v.end() - static_cast<long>(q) : v.begin();
  return std::accumulate(begin, begin + static_cast<long>(q), 0.0) / q;
}

double QuarterVariance(const std::vector<double>& v, bool last) {
  const std::size_t q = v.size() / 4;
  const auto begin = last ? v.end() - static_cast<long>(q) : v.begin();
  const double m = QuarterMean(v, last);
  double s = 0.0;
  for (auto it = begin; it != begin + static_cast<long>(q); ++it) s += (*it - m) * (*it - m);
  return s / q;
}

struct Runs {
  std::map<std::string, CellOutcome> cells;
  const CellOutcome& at(const std::string& arch, const std::string& mode, double a) const {
    return cells.at(CellName({arch, mode, a}));
  }
};

// ------------------------------------------------------------- service

int RawConnect(uint16_t port) {
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_port = htons(port);
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
    ::close(fd);
    return -1;
  }
  timeval tv{2, 0};
  ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
  return fd;
}

// Sends bytes, half-closes, and drains whatever the server answers.
bool FuzzOnce(uint16_t port, const std::vector<uint8_t>& msg) {
  const int fd = RawConnect(port);
  if (fd < 0) return false;
  std::size_t off = 0;
  while (off < msg.size()) {
    const ssize_t n = ::send(fd, msg.data() + off, msg.size() - off, MSG_NOSIGNAL);
    if (n <= 0) break;
    off += static_cast<std::size_t>(n);
  }
  ::shutdown(fd, SHUT_WR);
  uint8_t buf[4096];
  while (::recv(fd, buf, sizeof(buf), 0) > 0) {
  }
  ::close(fd);
  return true;
}

std::vector<uint8_t> FuzzMessage(std::mt19937_64& rng, int i, ImageShape shape) {
  std::uniform_int_distribution<int> byte(0, 255);
  auto random_bytes = [&](std::size_t n) {
    std::vector<uint8_t> v(n);
    for (auto& b : v) b = static_cast<uint8_t>(byte(rng));
    return v;
  };
  std::uniform_int_distribution<int> small(0, 64);
  switch (i % 8) {
    case 0:  // pure noise
      return random_bytes(small(rng) + 1);
    case 1: {  // valid magic, random type and payload
      auto payload = random_bytes(small(rng));
      auto m = EncodeMessage(MessageType::kFrame, payload);
      m[4] = static_cast<uint8_t>(byte(rng));
      return m;
    }
    case 2: {  // frame header with garbage pixels
      std::vector<float> px(shape.numel(), 0.5f);
      auto m = EncodeFrame(MakeFrame(px, shape, true));
      for (int k = 0; k < 40; ++k) {
        m[kCprvHeaderSize + std::uniform_int_distribution<std::size_t>(
                                0, m.size() - kCprvHeaderSize - 1)(rng)] =
            static_cast<uint8_t>(byte(rng));
      }
      return m;
    }
    case 3: {  // declared length far beyond the payload
      auto m = EncodeMessage(MessageType::kFrame, random_bytes(16));
      const uint32_t len = static_cast<uint32_t>(rng());
      std::memcpy(m.data() + 5, &len, 4);
      return m;
    }
    case 4: {  // truncated valid frame
      std::vector<float> px(shape.numel(), 0.25f);
      auto m = EncodeFrame(MakeFrame(px, shape, false));
      m.resize(std::uniform_int_distribution<std::size_t>(1, m.size() - 1)(rng));
      return m;
    }
    case 5: {  // wrong image shape
      const ImageShape s{1 + byte(rng) % 4, 4 + byte(rng) % 9, 4 + byte(rng) % 9};
      std::vector<float> px(s.numel(), 0.5f);
      return EncodeFrame(MakeFrame(px, s, false));
    }
    case 6: {  // several frames back to back, one corrupted header
      std::vector<float> px(shape.numel(), 0.75f);
      auto f = EncodeFrame(MakeFrame(px, shape, true));
      std::vector<uint8_t> m;
      for (int k = 0; k < 3; ++k) m.insert(m.end(), f.begin(), f.end());
      m[f.size() + byte(rng) % 4] ^= 0xFF;
      return m;
    }
    default: {  // NaN and out-of-range pixels
      std::vector<float> px(shape.numel(), 0.5f);
      auto payload = EncodeFramePayload(MakeFrame(px, shape, false));
      const float bad[] = {std::nanf(""), -1.0f, 7.0f, INFINITY};
      const float v = bad[byte(rng) % 4];
      std::memcpy(payload.data() + kFrameHeaderSize + 4 * (byte(rng) % 16), &v, 4);
      return EncodeMessage(MessageType::kFrame, payload);
    }
  }
}

void CheckService(Experiment& exp, const CellOutcome& cell) {
  const PretrainedModels& base = exp.Pretrained();
  const Dataset& test = exp.data().test;
  const int k_all = base.utility.num_classes();
  ServerConfig sc;
  sc.port = 0;
  sc.topk = k_all;
  sc.max_frame_bytes = 1 << 20;
  EntityServer server(base.utility, base.privacy, sc);
  server.Start();

  CaptureConfig cc;
  cc.client.port = server.port();
  cc.limit = 100;
  cc.send_raw = true;
  cc.eval_k = exp.config().eval.k;
  const CaptureReport rep = SimulateCapture(test, &cell.sanitizer, exp.prior(), cc);

  const Dataset head = test.Head(100);
  const SanitizedPosteriors offline = ComputePosteriors(
      &cell.sanitizer, base.utility, base.privacy, exp.prior(), head, exp.config().eval.seed);
  double worst = 0.0;
  bool complete = !rep.error && rep.records.size() == 100;
  for (std::size_t i = 0; complete && i < rep.records.size(); ++i) {
    const CaptureRecord& r = rep.records[i];
    const int row = static_cast<int>(i);
    for (int a = 0; a < 2; ++a) {
      worst = std::max(worst, std::abs(r.result.privacy_probs[a] -
                                       offline.privacy_san.at(row, a, 0, 0)));
      worst = std::max(worst, std::abs(r.raw_result->privacy_probs[a] -
                                       offline.privacy_raw.at(row, a, 0, 0)));
    }
    complete &= static_cast<int>(r.result.utility_topk.size()) == k_all;
    for (const TopKEntry& e : r.result.utility_topk) {
      worst = std::max(worst, std::abs(e.probability -
                                       offline.utility_san.at(row, e.subject, 0, 0)));
    }
    for (const TopKEntry& e : r.raw_result->utility_topk) {
      worst = std::max(worst, std::abs(e.probability -
                                       offline.utility_raw.at(row, e.subject, 0, 0)));
    }
  }

  std::mt19937_64 rng(7787);
  int sent = 0;
  for (int i = 0; i < 1000; ++i) {
    sent += FuzzOnce(server.port(), FuzzMessage(rng, i, test.image_shape()));
  }
  bool alive = server.running();
  InferenceResult after;
  try {
    EntityClient client(cc.client);
    client.Connect();
    const FrameMessage f = MakeFrame(head.images.sample_span(0), head.image_shape(), false);
    after = client.Infer(f);
    alive &= std::abs(after.privacy_probs[1] - offline.privacy_raw.at(0, 1, 0, 0)) < 1e-5;
  } catch (const std::exception& e) {
    Log(std::string("post-fuzz request failed: ") + e.what());
    alive = false;
  }
  const ServerStats st = server.stats();
  server.Stop();

  const bool pass = complete && worst < 1e-5 && sent == 1000 && alive;
  std::ostringstream d;
  d << rep.records.size() << " frames, max |server - offline| " << Fmt("%.2e", worst)
    << "; fuzz " << sent << "/1000 delivered, server alive " << (alive ? "yes" : "no")
    << " (" << st.errors << " error replies, " << st.dropped << " dropped)";
  if (rep.error) d << "; capture error: " << *rep.error;
  Report(8, "service equivalence and fuzzing", pass, d.str());
}

}  // namespace

int main() {
  const auto t0 = std::chrono::steady_clock::now();
  CheckLossOracles();

  fs::path root;
  bool temporary = false;
  if (const char* env = std::getenv("CPRIV_ACCEPTANCE_ROOT"); env && *env) {
    root = env;
  } else {
    root = fs::temp_directory_path() /
           ("cpriv_acceptance_" + std::to_string(::getpid()));
    temporary = true;
  }
  RunConfig cfg = RunConfig::Default();
  cfg.output_root = root.string();
  Experiment exp(cfg, [](const std::string& s) { Log(s); });
  Log("run directory " + exp.dir().root().string());

  const PretrainedModels& base = exp.Pretrained();
  const Dataset& test = exp.data().test;
  const Prior& prior = exp.prior();
  const SanitizedPosteriors raw_post = ComputePosteriors(
      nullptr, base.utility, base.privacy, prior, test, cfg.eval.seed);
  const TradeoffPoint raw = SummarizePosteriors(raw_post, test, prior, 0.0, cfg.eval);
  Log("raw baseline top1 " + Fmt("%.4f", raw.top1) + " top3 " + Fmt("%.4f", raw.topk) +
      " privacy acc " + Fmt("%.4f", raw.privacy_accuracy));

  Runs runs;
  auto run = [&](const std::string& arch, const std::string& mode, double a) {
    CellOutcome c = exp.RunCell({arch, mode, a});
    Log(CellName(c.key) + ": utility KL " + Fmt("%.4f", c.point.utility_kl) +
        ", privacy KL " + Fmt("%.4f", c.point.privacy_kl) + ", top1 " +
        Fmt("%.3f", c.point.top1) + ", top3 " + Fmt("%.3f", c.point.topk));
    runs.cells.emplace(CellName(c.key), std::move(c));
  };
  for (double a : cfg.alphas) run("deterministic", "plug_and_play", a);

  // 2: alpha = 0 fidelity.
  {
    const CellOutcome& c = runs.at("deterministic", "plug_and_play", 0.0);
    const double drop = std::abs(raw.top1 - c.point.top1);
    Report(2, "alpha=0 fidelity (plug-and-play, deterministic)",
           c.point.utility_kl < 0.05 && drop <= 0.02,
           "utility KL " + Fmt("%.4f", c.point.utility_kl) + " nats (< 0.05), top-1 " +
               Fmt("%.4f", c.point.top1) + " vs raw " + Fmt("%.4f", raw.top1) +
               " (|diff| " + Fmt("%.4f", drop) + " <= 0.02)");
  }

  for (double a : cfg.alphas) run("deterministic", "adversarial", a);
  run("stochastic", "adversarial", 0.8);

  // 3: prior convergence at alpha = 0.8.
  {
    bool pass = true;
    std::ostringstream d;
    for (const char* arch : {"deterministic", "stochastic"}) {
      const CellOutcome& c = runs.at(arch, "adversarial", 0.8);
      const double m0 = c.breakdown.groups[0].median, m1 = c.breakdown.groups[1].median;
      const bool ok = c.point.privacy_kl < 0.05 && std::abs(m0 - prior[1]) <= 0.1 &&
                      std::abs(m1 - prior[1]) <= 0.1 && c.point.topk >= 0.70;
      pass &= ok;
      d << arch << ": privacy KL " << Fmt("%.4f", c.point.privacy_kl) << ", medians "
        << Fmt("%.3f", m0) << "/" << Fmt("%.3f", m1) << " vs prior "
        << Fmt("%.3f", prior[1]) << ", top-3 " << Fmt("%.3f", c.point.topk) << "; ";
    }
    Report(3, "prior convergence at alpha=0.8 (adversarial)", pass, d.str());
  }

  // 4: monotone trade-off per deterministic series.
  {
    bool pass = true;
    std::ostringstream d;
    for (const char* mode : {"plug_and_play", "adversarial"}) {
      double worst_p = -1e9, worst_u = -1e9;
      for (std::size_t i = 1; i < cfg.alphas.size(); ++i) {
        const TradeoffPoint& lo = runs.at("deterministic", mode, cfg.alphas[i - 1]).point;
        const TradeoffPoint& hi = runs.at("deterministic", mode, cfg.alphas[i]).point;
        worst_p = std::max(worst_p, hi.privacy_kl - lo.privacy_kl);
        worst_u = std::max(worst_u, lo.utility_kl - hi.utility_kl);
      }
      const bool ok = worst_p <= 0.02 && worst_u <= 0.02;
      pass &= ok;
      d << mode << ": privacy KL";
      for (double a : cfg.alphas) {
        d << " " << Fmt("%.4f", runs.at("deterministic", mode, a).point.privacy_kl);
      }
      d << ", utility KL";
      for (double a : cfg.alphas) {
        d << " " << Fmt("%.4f", runs.at("deterministic", mode, a).point.utility_kl);
      }
      d << " (worst violations " << Fmt("%.4f", worst_p) << "/" << Fmt("%.4f", worst_u)
        << "); ";
    }
    Report(4, "monotone trade-off over alpha", pass, d.str());
  }

  // 5: retrained attacker.
  {
    const AttackRow adv = exp.AttackCell({"deterministic", "adversarial", 0.8});
    const AttackRow pnp = exp.AttackCell({"deterministic", "plug_and_play", 0.8});
    const double bound = std::max(prior[0], prior[1]) + 0.05;
    Report(5, "robustness to a retrained attacker at alpha=0.8",
           adv.accuracy_after <= bound && pnp.accuracy_after > adv.accuracy_after,
           "adversarial " + Fmt("%.4f", adv.accuracy_after) + " (<= " + Fmt("%.3f", bound) +
               "), plug-and-play " + Fmt("%.4f", pnp.accuracy_after) +
               " (must be higher)");
  }

  // 6: raw-data preservation and frozen utility.
  {
    bool pass = true;
    std::ostringstream d;
    double worst_drop = 0.0;
    for (double a : cfg.alphas) {
      const CellOutcome& c = runs.at("deterministic", "adversarial", a);
      const double acc = Accuracy(PredictProbs(c.privacy, test.images), test.privacy_labels);
      worst_drop = std::max(worst_drop, base.privacy_accuracy - acc);
    }
    {
      const CellOutcome& c = runs.at("stochastic", "adversarial", 0.8);
      const double acc = Accuracy(PredictProbs(c.privacy, test.images), test.privacy_labels);
      worst_drop = std::max(worst_drop, base.privacy_accuracy - acc);
    }
    pass &= worst_drop <= 0.02;
    int unchanged = 0;
    for (const auto& [name, c] : runs.cells) {
      unchanged += c.utility.ParameterHash() == base.utility.ParameterHash();
    }
    pass &= unchanged == static_cast<int>(runs.cells.size());
    d << "privacy raw accuracy before " << Fmt("%.4f", base.privacy_accuracy)
      << ", largest drop after adversarial training " << Fmt("%.4f", worst_drop)
      << " (<= 0.02); utility hash unchanged in " << unchanged << "/" << runs.cells.size()
      << " cells";
    Report(6, "raw-data preservation", pass, d.str());
  }

  // 7: loss evolution for adversarial runs with alpha >= 0.5.
  {
    bool pass = true;
    std::ostringstream d;
    for (const auto& [arch, a] : std::vector<std::pair<std::string, double>>{
             {"deterministic", 0.5}, {"deterministic", 0.8}, {"stochastic", 0.8}}) {
      const TrainLog& log = runs.at(arch, "adversarial", a).log;
      std::vector<double> lp, ls;
      for (const TrainLogRecord& r : log.records) {
        lp.push_back(r.loss_p.value_or(std::nan("")));
        ls.push_back(r.loss_s);
      }
      const double p1 = QuarterMean(lp, false), p4 = QuarterMean(lp, true);
      const double v1 = QuarterVariance(ls, false), v4 = QuarterVariance(ls, true);
      const bool ok = p4 >= p1 && v4 < v1;
      pass &= ok;
      d << arch << " a=" << FormatAlpha(a) << ": Loss_P " << Fmt("%.4f", p1) << " -> "
        << Fmt("%.4f", p4) << ", Loss_S var " << Fmt("%.2e", v1) << " -> "
        << Fmt("%.2e", v4) << (ok ? "" : " [fails]") << "; ";
    }
    Report(7, "loss-evolution logging", pass, d.str());
  }

  CheckService(exp, runs.at("deterministic", "adversarial", 0.8));

  const double minutes =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count() / 60;
  std::sort(g_verdicts.begin(), g_verdicts.end(),
            [](const Verdict& a, const Verdict& b) { return a.id < b.id; });
  int failed = 0;
  std::printf("\nsummary (%.1f min):\n", minutes);
  for (const Verdict& v : g_verdicts) {
    std::printf("  criterion %d %s: %s\n", v.id, v.pass ? "PASS" : "FAIL", v.name.c_str());
    failed += !v.pass;
  }
  if (temporary) {
    std::error_code ec;
    fs::remove_all(root, ec);
  }
  return failed == 0 ? 0 : 1;
}
