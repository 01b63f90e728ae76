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
#ifndef CPRIV_PROTOCOL_H_
#define CPRIV_PROTOCOL_H_

// CPRV framing: "CPRV" | u8 type | u32 LE payload length | payload.
//   0x01 frame   u8 flags (bit 0 sanitized) | u16 H | u16 W | u16 C |
//                u8 dtype (0 = f32) | f32 LE pixels, channel-first
//   0x02 result  UTF-8 JSON InferenceResult
//   0xFF error   UTF-8 JSON {"error": reason}

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "cpriv/models.h"
#include "cpriv/tensor.h"
#include "json.hpp"

namespace cpriv {

inline constexpr char kCprvMagic[4] = {'C', 'P', 'R', 'V'};
inline constexpr std::size_t kCprvHeaderSize = 9;
inline constexpr std::size_t kFrameHeaderSize = 8;
inline constexpr uint16_t kDefaultPort = 7787;

enum class MessageType : uint8_t {
  kFrame = 0x01,
  kResult = 0x02,
  kError = 0xFF,
};

struct MessageHeader {
  uint8_t type = 0;
  uint32_t length = 0;
};

// Throws FormatError("magic", ...) when the prefix is wrong.
MessageHeader ParseHeader(std::span<const uint8_t, kCprvHeaderSize> bytes);

std::vector<uint8_t> EncodeMessage(MessageType type,
                                   std::span<const uint8_t> payload);
std::vector<uint8_t> EncodeJsonMessage(MessageType type,
                                       const nlohmann::json& body);

struct FrameMessage {
  bool sanitized = false;
  ImageShape shape;
  std::vector<float> pixels;  // C*H*W, channel-first

  bool operator==(const FrameMessage&) const = default;
};

FrameMessage MakeFrame(std::span<const float> pixels, ImageShape shape,
                       bool sanitized);
std::vector<uint8_t> EncodeFramePayload(const FrameMessage& frame);
std::vector<uint8_t> EncodeFrame(const FrameMessage& frame);
// Validates dtype, dimensions, payload length and the [0, 1] pixel range.
FrameMessage DecodeFramePayload(std::span<const uint8_t> payload);

struct TopKEntry {
  int subject = 0;
  double probability = 0.0;

  bool operator==(const TopKEntry&) const = default;
};

struct InferenceResult {
  std::vector<TopKEntry> utility_topk;  // descending probability
  std::array<double, 2> privacy_probs{0.0, 0.0};
  bool sanitized = false;

  bool operator==(const InferenceResult&) const = default;
};

// Same path for raw and sanitized frames. Throws DomainError when the frame
// shape does not match the classifiers.
InferenceResult RunInference(const Classifier& utility,
                             const Classifier& privacy,
                             const FrameMessage& frame, int k);

void to_json(nlohmann::json& j, const TopKEntry& e);
void from_json(const nlohmann::json& j, TopKEntry& e);
void to_json(nlohmann::json& j, const InferenceResult& r);
void from_json(const nlohmann::json& j, InferenceResult& r);

}  // namespace cpriv

#endif  // CPRIV_PROTOCOL_H_
