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
#include "cpriv/entity_service.h"

#include <arpa/inet.h>
#include <netdb.h>
#include <netinet/in.h>
#include <netinet/tcp.h>
#include <sys/socket.h>
#include <unistd.h>

#include <cerrno>
#include <cstring>
#include <numeric>

#include "cpriv/error.h"
#include "cpriv/objectives.h"
#include "cpriv/rng.h"

namespace cpriv {
namespace {

constexpr uint32_t kMaxResponseBytes = 64u << 20;
constexpr uint64_t kCaptureTag = 0x43415054ULL;

bool WriteAll(int fd, std::span<const uint8_t> bytes) {
  std::size_t done = 0;
  while (done < bytes.size()) {
    const ssize_t n =
        ::send(fd, bytes.data() + done, bytes.size() - done, MSG_NOSIGNAL);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    done += static_cast<std::size_t>(n);
  }
  return true;
}

bool ReadExact(int fd, uint8_t* out, std::size_t len) {
  std::size_t done = 0;
  while (done < len) {
    const ssize_t n = ::recv(fd, out + done, len - done, 0);
    if (n < 0 && errno == EINTR) continue;
    if (n <= 0) return false;
    done += static_cast<std::size_t>(n);
  }
  return true;
}

std::string Errno(const std::string& what) {
  return what + ": " + std::strerror(errno);
}

void SendError(int fd, const std::string& reason) {
  WriteAll(fd, EncodeJsonMessage(MessageType::kError, {{"error", reason}}));
}

addrinfo* Resolve(const std::string& host, uint16_t port, bool passive) {
  addrinfo hints{};
  hints.ai_family = AF_INET;
  hints.ai_socktype = SOCK_STREAM;
  if (passive) hints.ai_flags = AI_PASSIVE;
  addrinfo* res = nullptr;
  const std::string service = std::to_string(port);
  const int rc = ::getaddrinfo(host.empty() ? nullptr : host.c_str(),
                               service.c_str(), &hints, &res);
  if (rc != 0) {
    throw TransportError("cannot resolve " + host + ": " + ::gai_strerror(rc));
  }
  return res;
}

}  // namespace

// -------------------------------------------------------------------- server

EntityServer::EntityServer(Classifier utility, Classifier privacy,
                           ServerConfig config)
    : utility_(std::move(utility)),
      privacy_(std::move(privacy)),
      config_(std::move(config)) {
  if (utility_.input_shape() != privacy_.input_shape()) {
    throw ConfigError("utility and privacy classifiers disagree on input shape");
  }
  if (config_.topk < 1) throw ConfigError("topk must be >= 1");
}

EntityServer::~EntityServer() { Stop(); }

void EntityServer::Start() {
  if (running_) return;
  addrinfo* res = Resolve(config_.host, config_.port, true);
  listen_fd_ = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
  if (listen_fd_ < 0) {
    ::freeaddrinfo(res);
    throw TransportError(Errno("socket"));
  }
  const int one = 1;
  ::setsockopt(listen_fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
  if (::bind(listen_fd_, res->ai_addr, res->ai_addrlen) != 0 ||
      ::listen(listen_fd_, 64) != 0) {
    const std::string msg = Errno("bind " + config_.host + ":" +
                                  std::to_string(config_.port));
    ::freeaddrinfo(res);
    ::close(listen_fd_);
    listen_fd_ = -1;
    throw TransportError(msg);
  }
  ::freeaddrinfo(res);
  sockaddr_in addr{};
  socklen_t len = sizeof(addr);
  ::getsockname(listen_fd_, reinterpret_cast<sockaddr*>(&addr), &len);
  bound_port_ = ntohs(addr.sin_port);
  running_ = true;
  acceptor_ = std::thread([this] { AcceptLoop(); });
}

void EntityServer::AcceptLoop() {
  while (running_) {
    const int fd = ::accept(listen_fd_, nullptr, nullptr);
    if (fd < 0) {
      if (errno == EINTR || errno == ECONNABORTED) continue;
      break;
    }
    std::vector<std::thread> done;
    {
      std::lock_guard<std::mutex> lock(mu_);
      for (uint64_t id : finished_) {
        auto it = workers_.find(id);
        done.push_back(std::move(it->second));
        workers_.erase(it);
      }
      finished_.clear();
      if (!running_) {
        ::close(fd);
        break;
      }
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      ++stats_.connections;
      open_fds_.insert(fd);
      const uint64_t id = next_worker_++;
      workers_.emplace(id, std::thread([this, fd, id] { Serve(fd, id); }));
    }
    for (auto& t : done) t.join();
  }
}

void EntityServer::Forget(int fd, uint64_t worker) {
  std::lock_guard<std::mutex> lock(mu_);
  if (open_fds_.erase(fd) > 0) ::close(fd);
  finished_.push_back(worker);
}

void EntityServer::Serve(int fd, uint64_t worker) {
  std::vector<uint8_t> payload;
  while (running_) {
    std::array<uint8_t, kCprvHeaderSize> head{};
    if (!ReadExact(fd, head.data(), head.size())) break;
    MessageHeader h;
    try {
      h = ParseHeader(head);
    } catch (const FormatError& e) {
      SendError(fd, e.what());
      std::lock_guard<std::mutex> lock(mu_);
      ++stats_.errors;
      ++stats_.dropped;
      break;
    }
    if (h.length > config_.max_frame_bytes) {
      std::lock_guard<std::mutex> lock(mu_);
      ++stats_.dropped;
      break;
    }
    payload.resize(h.length);
    if (!ReadExact(fd, payload.data(), payload.size())) break;

    std::string error;
    InferenceResult result;
    try {
      if (h.type != static_cast<uint8_t>(MessageType::kFrame)) {
        throw FormatError("type", "unexpected message type " + std::to_string(h.type));
      }
      result = RunInference(utility_, privacy_, DecodeFramePayload(payload),
                            config_.topk);
    } catch (const std::exception& e) {
      error = e.what();
    }
    {
      std::lock_guard<std::mutex> lock(mu_);
      ++(error.empty() ? stats_.frames : stats_.errors);
    }
    const bool ok =
        error.empty()
            ? WriteAll(fd, EncodeJsonMessage(MessageType::kResult, result))
            : WriteAll(fd, EncodeJsonMessage(MessageType::kError,
                                             {{"error", error}}));
    if (!ok) break;
  }
  Forget(fd, worker);
}

void EntityServer::Stop() {
  if (!running_.exchange(false)) return;
  ::shutdown(listen_fd_, SHUT_RDWR);
  if (acceptor_.joinable()) acceptor_.join();
  ::close(listen_fd_);
  listen_fd_ = -1;
  std::map<uint64_t, std::thread> workers;
  {
    std::lock_guard<std::mutex> lock(mu_);
    for (int fd : open_fds_) ::shutdown(fd, SHUT_RDWR);
    workers.swap(workers_);
    finished_.clear();
  }
  for (auto& [id, t] : workers) t.join();
}

void EntityServer::Wait() {
  while (running_) std::this_thread::sleep_for(std::chrono::milliseconds(100));
}

ServerStats EntityServer::stats() const {
  std::lock_guard<std::mutex> lock(mu_);
  return stats_;
}

// -------------------------------------------------------------------- client

EntityClient::~EntityClient() { Close(); }

void EntityClient::Close() {
  if (fd_ >= 0) ::close(fd_);
  fd_ = -1;
}

void EntityClient::Connect() {
  Close();
  auto backoff = config_.initial_backoff;
  std::string last;
  for (int attempt = 1; attempt <= config_.max_attempts; ++attempt) {
    addrinfo* res = Resolve(config_.host, config_.port, false);
    const int fd = ::socket(res->ai_family, res->ai_socktype, res->ai_protocol);
    if (fd >= 0 && ::connect(fd, res->ai_addr, res->ai_addrlen) == 0) {
      ::freeaddrinfo(res);
      timeval tv{};
      tv.tv_sec = config_.io_timeout.count() / 1000;
      tv.tv_usec = (config_.io_timeout.count() % 1000) * 1000;
      ::setsockopt(fd, SOL_SOCKET, SO_RCVTIMEO, &tv, sizeof(tv));
      ::setsockopt(fd, SOL_SOCKET, SO_SNDTIMEO, &tv, sizeof(tv));
      const int one = 1;
      ::setsockopt(fd, IPPROTO_TCP, TCP_NODELAY, &one, sizeof(one));
      fd_ = fd;
      return;
    }
    last = Errno("connect " + config_.host + ":" + std::to_string(config_.port));
    if (fd >= 0) ::close(fd);
    ::freeaddrinfo(res);
    if (attempt < config_.max_attempts) {
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
  throw TransportError(last + " (after " + std::to_string(config_.max_attempts) +
                       " attempts)");
}

void EntityClient::SendRaw(std::span<const uint8_t> bytes) {
  if (fd_ < 0) throw TransportError("not connected");
  if (!WriteAll(fd_, bytes)) {
    Close();
    throw TransportError(Errno("send"));
  }
}

Response EntityClient::ReadResponse() {
  if (fd_ < 0) throw TransportError("not connected");
  std::array<uint8_t, kCprvHeaderSize> head{};
  if (!ReadExact(fd_, head.data(), head.size())) {
    Close();
    throw TransportError("connection closed by server");
  }
  const MessageHeader h = ParseHeader(head);
  if (h.length > kMaxResponseBytes) {
    Close();
    throw FormatError("length", "response too large");
  }
  Response r;
  r.type = h.type;
  r.body.resize(h.length);
  if (!ReadExact(fd_, reinterpret_cast<uint8_t*>(r.body.data()), h.length)) {
    Close();
    throw TransportError("truncated response");
  }
  return r;
}

Response EntityClient::Exchange(std::span<const uint8_t> message) {
  SendRaw(message);
  return ReadResponse();
}

InferenceResult EntityClient::Infer(const FrameMessage& frame) {
  const Response r = Exchange(EncodeFrame(frame));
  nlohmann::json body;
  try {
    body = nlohmann::json::parse(r.body);
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("body", e.what());
  }
  if (r.type == static_cast<uint8_t>(MessageType::kError)) {
    throw FormatError("server", body.value("error", std::string("unknown")));
  }
  if (r.type != static_cast<uint8_t>(MessageType::kResult)) {
    throw FormatError("type", "unexpected response type " + std::to_string(r.type));
  }
  try {
    return body.get<InferenceResult>();
  } catch (const nlohmann::json::exception& e) {
    throw FormatError("result", e.what());
  }
}

// ------------------------------------------------------------------- capture

namespace {

InferenceResult InferWithRetry(EntityClient& client, const FrameMessage& frame,
                               const ClientConfig& cfg) {
  auto backoff = cfg.initial_backoff;
  for (int attempt = 1;; ++attempt) {
    try {
      if (!client.connected()) client.Connect();
      return client.Infer(frame);
    } catch (const TransportError&) {
      client.Close();
      if (attempt >= cfg.max_attempts) throw;
      std::this_thread::sleep_for(backoff);
      backoff *= 2;
    }
  }
}

TradeoffPoint Summarize(const std::vector<CaptureRecord>& records,
                        const Prior& prior, int k, int num_classes,
                        bool* utility_kl_available) {
  TradeoffPoint p;
  p.sample_count = static_cast<int>(records.size());
  *utility_kl_available = !records.empty();
  if (records.empty()) return p;
  double ukl = 0.0, pkl = 0.0, top1 = 0.0, topk = 0.0, pacc = 0.0;
  for (const CaptureRecord& r : records) {
    const auto& list = r.result.utility_topk;
    for (std::size_t i = 0; i < list.size(); ++i) {
      if (list[i].subject != r.utility_label) continue;
      if (i == 0) top1 += 1.0;
      if (static_cast<int>(i) < k) topk += 1.0;
    }
    pkl += KlDivergence(std::span<const double>(prior),
                        std::span<const double>(r.result.privacy_probs));
    const int guess = r.result.privacy_probs[1] > r.result.privacy_probs[0] ? 1 : 0;
    pacc += guess == r.privacy_label ? 1.0 : 0.0;
    const bool full = r.raw_result &&
                      static_cast<int>(list.size()) == num_classes &&
                      static_cast<int>(r.raw_result->utility_topk.size()) == num_classes;
    if (!full) {
      *utility_kl_available = false;
      continue;
    }
    std::vector<double> raw(num_classes), san(num_classes);
    for (const auto& e : r.raw_result->utility_topk) raw[e.subject] = e.probability;
    for (const auto& e : list) san[e.subject] = e.probability;
    ukl += KlDivergence(std::span<const double>(raw), std::span<const double>(san));
  }
  const double n = static_cast<double>(records.size());
  p.utility_kl = *utility_kl_available ? ukl / n : 0.0;
  p.privacy_kl = pkl / n;
  p.top1 = top1 / n;
  p.topk = topk / n;
  p.privacy_accuracy = pacc / n;
  return p;
}

}  // namespace

CaptureReport SimulateCapture(const Dataset& test,
                              const SanitizerModel* sanitizer,
                              const Prior& prior, const CaptureConfig& config) {
  CaptureReport report;
  report.sanitized = sanitizer != nullptr;
  const int n = std::min(config.limit, test.size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Tensor frames;
  if (sanitizer != nullptr) {
    Rng rng(DeriveSeed(config.seed, kCaptureTag));
    frames = sanitizer->Sanitize(test, idx, prior, rng);
  }

  EntityClient client(config.client);
  for (int i = 0; i < n; ++i) {
    CaptureRecord rec;
    rec.index = i;
    rec.utility_label = test.utility_labels[i];
    rec.privacy_label = test.privacy_labels[i];
    const FrameMessage raw = MakeFrame(test.images.sample_span(i),
                                       test.image_shape(), false);
    try {
      if (sanitizer != nullptr) {
        rec.result = InferWithRetry(
            client, MakeFrame(frames.sample_span(i), test.image_shape(), true),
            config.client);
        if (config.send_raw) rec.raw_result = InferWithRetry(client, raw, config.client);
      } else {
        rec.result = InferWithRetry(client, raw, config.client);
        if (config.send_raw) rec.raw_result = rec.result;
      }
    } catch (const TransportError& e) {
      report.error = e.what();
      break;
    }
    report.records.push_back(std::move(rec));
  }
  report.summary = Summarize(report.records, prior, config.eval_k,
                             test.spec.num_subjects, &report.utility_kl_available);
  return report;
}

void to_json(nlohmann::json& j, const CaptureReport& r) {
  nlohmann::json records = nlohmann::json::array();
  for (const CaptureRecord& rec : r.records) {
    nlohmann::json e = {{"index", rec.index},
                        {"utility_label", rec.utility_label},
                        {"privacy_label", rec.privacy_label},
                        {"result", rec.result}};
    if (rec.raw_result) e["raw_result"] = *rec.raw_result;
    records.push_back(std::move(e));
  }
  nlohmann::json summary = r.summary;
  if (!r.utility_kl_available) summary["utility_kl"] = nullptr;
  j = {{"sanitized", r.sanitized},
       {"summary", summary},
       {"records", records},
       {"error", r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr)}};
}

}  // namespace cpriv
