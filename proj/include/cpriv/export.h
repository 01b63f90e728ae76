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
#ifndef CPRIV_EXPORT_H_
#define CPRIV_EXPORT_H_

// PSF1 sanitizer bundles (little-endian):
//   "PSF1" | u32 version=1 | u16 C,H,W | u32 op_count | ops... | u32 CRC32
// where the CRC covers every byte after the magic. Per op: u8 kind, then
//   conv2d       u16 in_ch,out_ch,kh,kw,stride,pad; f32 w[out,in,kh,kw]; f32 b[out]
//   leaky_relu   f32 slope
//   concat_skip  u32 source_op_index (output of that op is appended after the
//                current activation along channels)
// Training metadata lives next to the bundle in <path>.meta.json.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "cpriv/layers.h"
#include "cpriv/models.h"
#include "cpriv/toy_data.h"
#include "json.hpp"

namespace cpriv {

inline constexpr char kPsf1Magic[4] = {'P', 'S', 'F', '1'};
inline constexpr uint32_t kPsf1Version = 1;

enum class OpKind : uint8_t {
  kConv2d = 0,
  kLeakyRelu = 1,
  kMaxPool = 2,  // reserved, never emitted
  kUpsample2x = 3,
  kConcatSkip = 4,
  kSigmoid = 5,
};

const char* OpKindName(OpKind kind);

struct BundleOp {
  OpKind kind = OpKind::kConv2d;
  ConvGeometry geom;          // conv2d
  std::vector<float> weight;  // conv2d
  std::vector<float> bias;    // conv2d
  float slope = 0.0f;         // leaky_relu
  uint32_t source = 0;        // concat_skip

  bool operator==(const BundleOp&) const = default;
};

struct BundleMetadata {
  double alpha = 0.0;
  std::string mode;
  uint64_t seed = 0;
  std::string created;  // ISO-8601 UTC
  SanitizerKind kind = SanitizerKind::kDeterministic;
  // Attribute generator of a stochastic sanitizer.
  std::optional<DatasetSpec> generator;

  bool operator==(const BundleMetadata&) const = default;
};

struct SanitizerBundle {
  uint32_t format_version = kPsf1Version;
  ImageShape input_shape;
  std::vector<BundleOp> ops;
  BundleMetadata metadata;
};

// The op sequence UNET-S lowers to, with empty parameter blobs.
std::vector<BundleOp> UNetOpSkeleton(int channels);

SanitizerBundle BundleFromSanitizer(const SanitizerModel& model,
                                    BundleMetadata metadata);
// Checks the op list against the UNET-S skeleton.
UNet UNetFromBundle(const SanitizerBundle& bundle);

std::vector<uint8_t> EncodePsf1(const SanitizerBundle& bundle);
// Metadata is left default; it is not part of the byte layout.
SanitizerBundle DecodePsf1(std::span<const uint8_t> bytes);

std::filesystem::path MetadataPath(const std::filesystem::path& bundle_path);

// Writes the bundle and its metadata sidecar atomically.
SanitizerBundle ExportSanitizer(const SanitizerModel& model,
                                const BundleMetadata& metadata,
                                const std::filesystem::path& path);

struct ImportedSanitizer {
  SanitizerModel model;
  BundleMetadata metadata;
};

// expected_shape, when given, is checked before any inference can happen.
ImportedSanitizer ImportSanitizer(
    const std::filesystem::path& path,
    std::optional<ImageShape> expected_shape = std::nullopt);

std::string UtcTimestamp();

// Classifier checkpoints: "CLF1" | u32 version | u16 C,H,W | u32 classes |
// blobs (u32 length + f32 data) for conv1 w/b, conv2 w/b, fc w/b, head w/b |
// u32 CRC32 of everything after the magic.
std::vector<uint8_t> EncodeClassifier(const Classifier& model);
Classifier DecodeClassifier(std::span<const uint8_t> bytes);
void SaveClassifier(const Classifier& model, const std::filesystem::path& path);
Classifier LoadClassifier(const std::filesystem::path& path);

// UNET checkpoint used for warm starts: PSF1 without metadata.
void SaveUNet(const UNet& unet, const std::filesystem::path& path);
UNet LoadUNet(const std::filesystem::path& path);

void to_json(nlohmann::json& j, const BundleMetadata& m);
void from_json(const nlohmann::json& j, BundleMetadata& m);

}  // namespace cpriv

#endif  // CPRIV_EXPORT_H_
