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
#ifndef CPRIV_ENTITY_SERVICE_H_
#define CPRIV_ENTITY_SERVICE_H_

#include <atomic>
#include <chrono>
#include <cstdint>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <thread>
#include <vector>

#include "cpriv/evaluation.h"
#include "cpriv/models.h"
#include "cpriv/protocol.h"
#include "cpriv/toy_data.h"

namespace cpriv {

struct ServerConfig {
  std::string host = "127.0.0.1";
  uint16_t port = kDefaultPort;  // 0 picks a free port
  int topk = 3;
  uint32_t max_frame_bytes = 16u << 20;
};

struct ServerStats {
  uint64_t connections = 0;
  uint64_t frames = 0;
  uint64_t errors = 0;
  uint64_t dropped = 0;  // connections closed for protocol violations
};

// One thread per connection. Inference is read-only on the shared models.
class EntityServer {
 public:
  EntityServer(Classifier utility, Classifier privacy, ServerConfig config);
  ~EntityServer();
  EntityServer(const EntityServer&) = delete;
  EntityServer& operator=(const EntityServer&) = delete;

  void Start();
  void Stop();
  // Blocks until Stop() is called from another thread or a signal handler.
  void Wait();
  bool running() const { return running_.load(); }
  uint16_t port() const { return bound_port_; }
  ServerStats stats() const;

  const Classifier& utility() const { return utility_; }
  const Classifier& privacy() const { return privacy_; }

 private:
  void AcceptLoop();
  void Serve(int fd, uint64_t worker);
  void Forget(int fd, uint64_t worker);

  Classifier utility_;
  Classifier privacy_;
  ServerConfig config_;
  int listen_fd_ = -1;
  uint16_t bound_port_ = 0;
  std::atomic<bool> running_{false};
  std::thread acceptor_;
  mutable std::mutex mu_;
  std::set<int> open_fds_;
  std::map<uint64_t, std::thread> workers_;
  std::vector<uint64_t> finished_;
  uint64_t next_worker_ = 0;
  ServerStats stats_;
};

struct ClientConfig {
  std::string host = "127.0.0.1";
  uint16_t port = kDefaultPort;
  int max_attempts = 3;
  std::chrono::milliseconds initial_backoff{100};
  std::chrono::milliseconds io_timeout{10000};
};

struct Response {
  uint8_t type = 0;
  std::string body;
};

// Sequential request/response client over one connection.
class EntityClient {
 public:
  explicit EntityClient(ClientConfig config) : config_(std::move(config)) {}
  ~EntityClient();
  EntityClient(const EntityClient&) = delete;
  EntityClient& operator=(const EntityClient&) = delete;

  // Retries with exponential backoff; TransportError after the last attempt.
  void Connect();
  void Close();
  bool connected() const { return fd_ >= 0; }

  void SendRaw(std::span<const uint8_t> bytes);
  Response ReadResponse();
  Response Exchange(std::span<const uint8_t> message);
  // Error responses surface as FormatError("server", reason).
  InferenceResult Infer(const FrameMessage& frame);

 private:
  ClientConfig config_;
  int fd_ = -1;
};

struct CaptureConfig {
  ClientConfig client;
  int limit = 100;          // frames, capped at the test size
  bool send_raw = false;    // also send x to obtain P(u|x) for utility KL
  int eval_k = 3;
  uint64_t seed = 99;       // stochastic resampling and tie-breaking
};

struct CaptureRecord {
  int index = 0;
  int utility_label = 0;
  int privacy_label = 0;
  InferenceResult result;
  std::optional<InferenceResult> raw_result;
};

struct CaptureReport {
  bool sanitized = false;
  std::vector<CaptureRecord> records;
  // Same fields as the offline trade-off point. utility_kl is only filled
  // when raw frames were sent and the server returns the full posterior.
  TradeoffPoint summary;
  bool utility_kl_available = false;
  std::optional<std::string> error;
};

// Streams test samples (sanitized locally when a sanitizer is given) to the
// server. A transport failure is retried per frame; after the last attempt
// the partial report is returned with error set.
CaptureReport SimulateCapture(const Dataset& test,
                              const SanitizerModel* sanitizer,
                              const Prior& prior, const CaptureConfig& config);

void to_json(nlohmann::json& j, const CaptureReport& r);

}  // namespace cpriv

#endif  // CPRIV_ENTITY_SERVICE_H_
