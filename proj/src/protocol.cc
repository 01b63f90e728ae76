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
#include "cpriv/protocol.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "cpriv/byte_io.h"
#include "cpriv/error.h"

namespace cpriv {

MessageHeader ParseHeader(std::span<const uint8_t, kCprvHeaderSize> bytes) {
  if (std::memcmp(bytes.data(), kCprvMagic, 4) != 0) {
    throw FormatError("magic", "expected \"CPRV\"");
  }
  ByteReader r(std::span<const uint8_t>(bytes.data() + 4, 5));
  MessageHeader h;
  h.type = r.U8("type");
  h.length = r.U32("length");
  return h;
}

std::vector<uint8_t> EncodeMessage(MessageType type,
                                   std::span<const uint8_t> payload) {
  ByteWriter w;
  w.Ascii(std::string_view(kCprvMagic, 4));
  w.U8(static_cast<uint8_t>(type));
  w.U32(static_cast<uint32_t>(payload.size()));
  w.Bytes(payload);
  return w.Release();
}

std::vector<uint8_t> EncodeJsonMessage(MessageType type,
                                       const nlohmann::json& body) {
  const std::string text = body.dump();
  return EncodeMessage(
      type, std::span(reinterpret_cast<const uint8_t*>(text.data()), text.size()));
}

FrameMessage MakeFrame(std::span<const float> pixels, ImageShape shape,
                       bool sanitized) {
  if (pixels.size() != shape.numel()) {
    throw DomainError("frame pixel count does not match " + shape.ToString());
  }
  return {sanitized, shape, std::vector<float>(pixels.begin(), pixels.end())};
}

std::vector<uint8_t> EncodeFramePayload(const FrameMessage& frame) {
  ByteWriter w;
  w.U8(frame.sanitized ? 1 : 0);
  w.U16(static_cast<uint16_t>(frame.shape.height));
  w.U16(static_cast<uint16_t>(frame.shape.width));
  w.U16(static_cast<uint16_t>(frame.shape.channels));
  w.U8(0);
  w.F32s(frame.pixels);
  return w.Release();
}

std::vector<uint8_t> EncodeFrame(const FrameMessage& frame) {
  return EncodeMessage(MessageType::kFrame, EncodeFramePayload(frame));
}

FrameMessage DecodeFramePayload(std::span<const uint8_t> payload) {
  ByteReader r(payload);
  FrameMessage f;
  const uint8_t flags = r.U8("flags");
  if ((flags & ~1u) != 0) throw FormatError("flags", "reserved bits set");
  f.sanitized = (flags & 1u) != 0;
  f.shape.height = r.U16("height");
  f.shape.width = r.U16("width");
  f.shape.channels = r.U16("channels");
  const uint8_t dtype = r.U8("dtype");
  if (dtype != 0) throw FormatError("dtype", "unsupported code " + std::to_string(dtype));
  if (f.shape.numel() == 0) throw FormatError("shape", "zero dimension");
  const std::size_t expected = 4 * f.shape.numel();
  if (r.remaining() != expected) {
    throw FormatError("payload", "expected " + std::to_string(expected) +
                                     " pixel bytes for " + f.shape.ToString() +
                                     ", got " + std::to_string(r.remaining()));
  }
  f.pixels.resize(f.shape.numel());
  r.F32s("pixels", f.pixels);
  for (float v : f.pixels) {
    if (!(v >= 0.0f && v <= 1.0f)) {
      throw FormatError("pixels", "value outside [0, 1]");
    }
  }
  return f;
}

InferenceResult RunInference(const Classifier& utility,
                             const Classifier& privacy,
                             const FrameMessage& frame, int k) {
  if (frame.shape != utility.input_shape()) {
    throw DomainError("frame shape " + frame.shape.ToString() +
                      " does not match model input " +
                      utility.input_shape().ToString());
  }
  Tensor x(1, frame.shape);
  std::copy(frame.pixels.begin(), frame.pixels.end(), x.data());
  const Tensor u = utility.Forward(x);
  const Tensor p = privacy.Forward(x);

  InferenceResult out;
  out.sanitized = frame.sanitized;
  const int classes = utility.num_classes();
  k = std::clamp(k, 1, classes);
  std::vector<int> order(classes);
  std::iota(order.begin(), order.end(), 0);
  const float* up = u.sample(0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int a, int b) { return up[a] > up[b]; });
  for (int i = 0; i < k; ++i) {
    out.utility_topk.push_back({order[i], static_cast<double>(up[order[i]])});
  }
  out.privacy_probs = {static_cast<double>(p.sample(0)[0]),
                       static_cast<double>(p.sample(0)[1])};
  return out;
}

void to_json(nlohmann::json& j, const TopKEntry& e) {
  j = {{"subject", e.subject}, {"probability", e.probability}};
}

void from_json(const nlohmann::json& j, TopKEntry& e) {
  j.at("subject").get_to(e.subject);
  j.at("probability").get_to(e.probability);
}

void to_json(nlohmann::json& j, const InferenceResult& r) {
  j = {{"utility_topk", r.utility_topk},
       {"privacy_probs", r.privacy_probs},
       {"sanitized", r.sanitized}};
}

void from_json(const nlohmann::json& j, InferenceResult& r) {
  j.at("utility_topk").get_to(r.utility_topk);
  j.at("privacy_probs").get_to(r.privacy_probs);
  j.at("sanitized").get_to(r.sanitized);
}

}  // namespace cpriv
