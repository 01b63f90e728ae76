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

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

#include <chrono>
#include <cstring>

#include "cpriv/byte_io.h"
#include "cpriv/entity_service.h"
#include "cpriv/error.h"
#include "cpriv/metrics.h"
#include "test_util.h"

namespace cpriv {
namespace {

using testing::SmallSpec;

constexpr ImageShape kSmall{3, 16, 16};

ClientConfig ClientFor(uint16_t port) {
  ClientConfig c;
  c.port = port;
  c.initial_backoff = std::chrono::milliseconds(10);
  c.io_timeout = std::chrono::milliseconds(3000);
  return c;
}

class ServiceTest : public ::testing::Test {
 protected:
  void SetUp() override {
    ServerConfig sc;
    sc.port = 0;
    sc.topk = 3;
    sc.max_frame_bytes = 1 << 16;
    server_ = std::make_unique<EntityServer>(Classifier(kSmall, 8, 1),
                                             Classifier(kSmall, 2, 2), sc);
    server_->Start();
  }
  void TearDown() override { server_->Stop(); }

  std::unique_ptr<EntityServer> server_;
};

TEST_F(ServiceTest, ZeroImageGivesValidResult) {
  EntityClient client(ClientFor(server_->port()));
  client.Connect();
  const InferenceResult r =
      client.Infer(MakeFrame(std::vector<float>(kSmall.numel(), 0.0f), kSmall, false));
  ASSERT_EQ(r.utility_topk.size(), 3u);
  EXPECT_NEAR(r.privacy_probs[0] + r.privacy_probs[1], 1.0, 1e-6);
  EXPECT_FALSE(r.sanitized);
}

TEST_F(ServiceTest, RepeatedFramesGiveIdenticalResults) {
  EntityClient client(ClientFor(server_->port()));
  client.Connect();
  const FrameMessage f = MakeFrame(std::vector<float>(kSmall.numel(), 0.3f), kSmall, true);
  const InferenceResult a = client.Infer(f);
  const InferenceResult b = client.Infer(f);
  EXPECT_EQ(a, b);
  EXPECT_TRUE(a.sanitized);
  const InferenceResult offline = RunInference(server_->utility(), server_->privacy(), f, 3);
  EXPECT_EQ(a, offline);
}

TEST_F(ServiceTest, MalformedPayloadKeepsConnectionOpen) {
  EntityClient client(ClientFor(server_->port()));
  client.Connect();
  auto payload = EncodeFramePayload(
      MakeFrame(std::vector<float>(kSmall.numel(), 0.5f), kSmall, false));
  payload[7] = 9;  // dtype
  const Response bad = client.Exchange(EncodeMessage(MessageType::kFrame, payload));
  EXPECT_EQ(bad.type, 0xFF);
  EXPECT_NE(nlohmann::json::parse(bad.body).at("error").get<std::string>().find("dtype"),
            std::string::npos);

  const Response wrong_type =
      client.Exchange(EncodeMessage(MessageType::kResult, std::vector<uint8_t>{}));
  EXPECT_EQ(wrong_type.type, 0xFF);

  const FrameMessage wrong_shape =
      MakeFrame(std::vector<float>(3 * 8 * 8, 0.5f), {3, 8, 8}, false);
  EXPECT_EQ(client.Exchange(EncodeFrame(wrong_shape)).type, 0xFF);

  EXPECT_NO_THROW(client.Infer(
      MakeFrame(std::vector<float>(kSmall.numel(), 0.5f), kSmall, false)));
  EXPECT_GE(server_->stats().errors, 3u);
}

TEST_F(ServiceTest, BadMagicGetsErrorThenClose) {
  EntityClient client(ClientFor(server_->port()));
  client.Connect();
  auto msg = EncodeFrame(MakeFrame(std::vector<float>(kSmall.numel(), 0.5f), kSmall, false));
  msg[0] = 'X';
  client.SendRaw(msg);
  const Response r = client.ReadResponse();
  EXPECT_EQ(r.type, 0xFF);
  EXPECT_THROW(client.ReadResponse(), TransportError);
}

TEST_F(ServiceTest, OversizedLengthClosesConnection) {
  EntityClient client(ClientFor(server_->port()));
  client.Connect();
  ByteWriter w;
  w.Ascii("CPRV");
  w.U8(1);
  w.U32(1u << 30);
  client.SendRaw(w.buffer());
  EXPECT_THROW(client.ReadResponse(), TransportError);
  EntityClient again(ClientFor(server_->port()));
  again.Connect();
  EXPECT_NO_THROW(again.Infer(
      MakeFrame(std::vector<float>(kSmall.numel(), 0.5f), kSmall, false)));
}

TEST_F(ServiceTest, CaptureMatchesOfflinePosteriors) {
  const DatasetSplits d = GenerateDataset(SmallSpec(32, 24));
  const SanitizerModel s = SanitizerModel::Deterministic(kSmall, 5);
  CaptureConfig cc;
  cc.client = ClientFor(server_->port());
  cc.limit = 20;
  cc.send_raw = true;
  const CaptureReport rep = SimulateCapture(d.test, &s, d.train.spec.prior, cc);
  ASSERT_FALSE(rep.error.has_value());
  ASSERT_EQ(rep.records.size(), 20u);
  EXPECT_TRUE(rep.sanitized);
  EXPECT_FALSE(rep.utility_kl_available);  // server top-k < K

  const Tensor offline =
      PredictProbs(server_->privacy(), s.unet().Forward(d.test.Head(20).images));
  for (int i = 0; i < 20; ++i) {
    EXPECT_NEAR(rep.records[i].result.privacy_probs[1], offline.at(i, 1, 0, 0), 1e-5);
    ASSERT_TRUE(rep.records[i].raw_result.has_value());
    EXPECT_FALSE(rep.records[i].raw_result->sanitized);
  }
  EXPECT_EQ(rep.summary.sample_count, 20);
  const nlohmann::json j = rep;
  EXPECT_TRUE(j.at("summary").at("utility_kl").is_null());
}

TEST(ServiceDownTest, CaptureReportsTransportErrorAfterRetries) {
  // Reserve a port, then release it so nothing listens there.
  const int fd = ::socket(AF_INET, SOCK_STREAM, 0);
  sockaddr_in addr{};
  addr.sin_family = AF_INET;
  addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
  ASSERT_EQ(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)), 0);
  socklen_t len = sizeof(addr);
  ::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len);
  const uint16_t port = ntohs(addr.sin_port);
  ::close(fd);

  const DatasetSplits d = GenerateDataset(SmallSpec(16, 16));
  CaptureConfig cc;
  cc.client = ClientFor(port);
  cc.limit = 5;
  const auto start = std::chrono::steady_clock::now();
  const CaptureReport rep = SimulateCapture(d.test, nullptr, d.train.spec.prior, cc);
  const auto waited = std::chrono::steady_clock::now() - start;
  ASSERT_TRUE(rep.error.has_value());
  EXPECT_NE(rep.error->find("3 attempts"), std::string::npos) << *rep.error;
  EXPECT_TRUE(rep.records.empty());
  EXPECT_GE(waited, std::chrono::milliseconds(30));  // 10 + 20 ms backoff

  EntityClient client(ClientFor(port));
  EXPECT_THROW(client.Connect(), TransportError);
}

TEST(ServiceLifecycleTest, StopIsIdempotentAndPortReported) {
  ServerConfig sc;
  sc.port = 0;
  EntityServer server(Classifier(kSmall, 8, 1), Classifier(kSmall, 2, 2), sc);
  server.Start();
  EXPECT_TRUE(server.running());
  EXPECT_GT(server.port(), 0);
  server.Stop();
  server.Stop();
  EXPECT_FALSE(server.running());
}

}  // namespace
}  // namespace cpriv
