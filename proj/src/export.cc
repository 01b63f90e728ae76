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
#include "cpriv/export.h"

#include <chrono>
#include <cstring>
#include <ctime>

#include "cpriv/byte_io.h"
#include "cpriv/error.h"

namespace cpriv {
namespace {

constexpr char kClfMagic[4] = {'C', 'L', 'F', '1'};
constexpr uint32_t kClfVersion = 1;

BundleOp Op(OpKind kind) {
  BundleOp op;
  op.kind = kind;
  return op;
}

BundleOp ConvOp(const ConvGeometry& g) {
  BundleOp op = Op(OpKind::kConv2d);
  op.geom = g;
  return op;
}

BundleOp LeakyOp() {
  BundleOp op = Op(OpKind::kLeakyRelu);
  op.slope = UNet::kSlope;
  return op;
}

BundleOp ConcatOp(uint32_t source) {
  BundleOp op = Op(OpKind::kConcatSkip);
  op.source = source;
  return op;
}

std::string OpField(std::size_t i, const char* what) {
  return "op[" + std::to_string(i) + "]." + what;
}

void CheckMagic(std::span<const uint8_t> bytes, const char (&magic)[4]) {
  if (bytes.size() < 4 || std::memcmp(bytes.data(), magic, 4) != 0) {
    throw FormatError("magic", "expected \"" + std::string(magic, 4) + "\"");
  }
}

// Verifies the trailing CRC and returns the body between magic and trailer.
std::span<const uint8_t> CheckedBody(std::span<const uint8_t> bytes) {
  if (bytes.size() < 8) throw FormatError("crc32", "file too short");
  const auto body = bytes.subspan(4, bytes.size() - 8);
  ByteReader trailer(bytes.subspan(bytes.size() - 4));
  const uint32_t stored = trailer.U32("crc32");
  const uint32_t actual = Crc32(body);
  if (stored != actual) {
    throw FormatError("crc32", "checksum mismatch (stored " +
                                   std::to_string(stored) + ", computed " +
                                   std::to_string(actual) + ")");
  }
  return body;
}

ImageShape ReadShape(ByteReader& r) {
  ImageShape s;
  s.channels = r.U16("input_shape");
  s.height = r.U16("input_shape");
  s.width = r.U16("input_shape");
  if (s.channels == 0 || s.height == 0 || s.width == 0) {
    throw FormatError("input_shape", "zero dimension in " + s.ToString());
  }
  return s;
}

void WriteShape(ByteWriter& w, const ImageShape& s) {
  w.U16(static_cast<uint16_t>(s.channels));
  w.U16(static_cast<uint16_t>(s.height));
  w.U16(static_cast<uint16_t>(s.width));
}

void WriteBlob(ByteWriter& w, std::span<const float> v) {
  w.U32(static_cast<uint32_t>(v.size()));
  w.F32s(v);
}

void ReadBlob(ByteReader& r, const std::string& field, std::vector<float>& out) {
  const uint32_t n = r.U32(field);
  if (n != out.size()) {
    throw FormatError(field, "length " + std::to_string(n) + ", expected " +
                                 std::to_string(out.size()));
  }
  r.F32s(field, out);
}

}  // namespace

const char* OpKindName(OpKind kind) {
  switch (kind) {
    case OpKind::kConv2d: return "conv2d";
    case OpKind::kLeakyRelu: return "leaky_relu";
    case OpKind::kMaxPool: return "maxpool";
    case OpKind::kUpsample2x: return "upsample_nearest2x";
    case OpKind::kConcatSkip: return "concat_skip";
    case OpKind::kSigmoid: return "sigmoid";
  }
  return "unknown";
}

std::vector<BundleOp> UNetOpSkeleton(int channels) {
  const auto topo = UNet::Topology(channels);
  return {
      ConvOp(topo[0]), LeakyOp(),       // 0-1   enc1
      ConvOp(topo[1]), LeakyOp(),       // 2-3   down1
      ConvOp(topo[2]), LeakyOp(),       // 4-5   down2
      ConvOp(topo[3]), LeakyOp(),       // 6-7   mid
      Op(OpKind::kUpsample2x), ConcatOp(3),
      ConvOp(topo[4]), LeakyOp(),       // 10-11 up1
      Op(OpKind::kUpsample2x), ConcatOp(1),
      ConvOp(topo[5]), LeakyOp(),       // 14-15 up2
      ConvOp(topo[6]), Op(OpKind::kSigmoid),
  };
}

SanitizerBundle BundleFromSanitizer(const SanitizerModel& model,
                                    BundleMetadata metadata) {
  SanitizerBundle b;
  b.input_shape = model.input_shape();
  b.ops = UNetOpSkeleton(b.input_shape.channels);
  int conv = 0;
  for (BundleOp& op : b.ops) {
    if (op.kind != OpKind::kConv2d) continue;
    const Conv2d& layer = model.unet().conv(conv++);
    op.weight = layer.weight;
    op.bias = layer.bias;
  }
  metadata.kind = model.kind();
  if (model.kind() == SanitizerKind::kStochastic) {
    metadata.generator = model.generator();
  }
  b.metadata = std::move(metadata);
  return b;
}

UNet UNetFromBundle(const SanitizerBundle& bundle) {
  if (bundle.format_version != kPsf1Version) {
    throw FormatError("version", "unsupported " +
                                     std::to_string(bundle.format_version));
  }
  const auto skeleton = UNetOpSkeleton(bundle.input_shape.channels);
  if (bundle.ops.size() != skeleton.size()) {
    throw FormatError("op_count", std::to_string(bundle.ops.size()) +
                                      " ops, UNET-S has " +
                                      std::to_string(skeleton.size()));
  }
  std::vector<Conv2d> convs;
  for (std::size_t i = 0; i < skeleton.size(); ++i) {
    const BundleOp& got = bundle.ops[i];
    const BundleOp& want = skeleton[i];
    if (got.kind != want.kind) {
      throw FormatError(OpField(i, "kind"),
                        std::string(OpKindName(got.kind)) + " where " +
                            OpKindName(want.kind) + " expected");
    }
    switch (got.kind) {
      case OpKind::kConv2d: {
        if (!(got.geom == want.geom)) {
          throw FormatError(OpField(i, "conv2d"), "geometry mismatch");
        }
        Conv2d c;
        c.geom = got.geom;
        c.weight = got.weight;
        c.bias = got.bias;
        convs.push_back(std::move(c));
        break;
      }
      case OpKind::kLeakyRelu:
        if (got.slope != want.slope) {
          throw FormatError(OpField(i, "slope"), "expected " +
                                                    std::to_string(want.slope));
        }
        break;
      case OpKind::kConcatSkip:
        if (got.source != want.source) {
          throw FormatError(OpField(i, "source_op_index"),
                            "expected " + std::to_string(want.source));
        }
        break;
      default:
        break;
    }
  }
  return UNet(bundle.input_shape, std::move(convs));
}

std::vector<uint8_t> EncodePsf1(const SanitizerBundle& bundle) {
  ByteWriter w;
  w.Ascii(std::string_view(kPsf1Magic, 4));
  w.U32(bundle.format_version);
  WriteShape(w, bundle.input_shape);
  w.U32(static_cast<uint32_t>(bundle.ops.size()));
  for (const BundleOp& op : bundle.ops) {
    w.U8(static_cast<uint8_t>(op.kind));
    switch (op.kind) {
      case OpKind::kConv2d:
        w.U16(static_cast<uint16_t>(op.geom.in_channels));
        w.U16(static_cast<uint16_t>(op.geom.out_channels));
        w.U16(static_cast<uint16_t>(op.geom.kernel));
        w.U16(static_cast<uint16_t>(op.geom.kernel));
        w.U16(static_cast<uint16_t>(op.geom.stride));
        w.U16(static_cast<uint16_t>(op.geom.pad));
        w.F32s(op.weight);
        w.F32s(op.bias);
        break;
      case OpKind::kLeakyRelu:
        w.F32(op.slope);
        break;
      case OpKind::kConcatSkip:
        w.U32(op.source);
        break;
      default:
        break;
    }
  }
  const uint32_t crc =
      Crc32(std::span(w.buffer()).subspan(4, w.buffer().size() - 4));
  w.U32(crc);
  return w.Release();
}

SanitizerBundle DecodePsf1(std::span<const uint8_t> bytes) {
  CheckMagic(bytes, kPsf1Magic);
  ByteReader r(CheckedBody(bytes));
  SanitizerBundle b;
  b.format_version = r.U32("version");
  if (b.format_version != kPsf1Version) {
    throw FormatError("version", "unsupported " +
                                     std::to_string(b.format_version));
  }
  b.input_shape = ReadShape(r);
  const uint32_t count = r.U32("op_count");
  if (count > 4096) throw FormatError("op_count", "implausible " + std::to_string(count));
  for (uint32_t i = 0; i < count; ++i) {
    BundleOp op;
    const uint8_t kind = r.U8(OpField(i, "kind"));
    if (kind > static_cast<uint8_t>(OpKind::kSigmoid)) {
      throw FormatError(OpField(i, "kind"), "unknown op kind " + std::to_string(kind));
    }
    op.kind = static_cast<OpKind>(kind);
    switch (op.kind) {
      case OpKind::kConv2d: {
        const std::string f = OpField(i, "conv2d");
        op.geom.in_channels = r.U16(f);
        op.geom.out_channels = r.U16(f);
        const int kh = r.U16(f);
        const int kw = r.U16(f);
        op.geom.stride = r.U16(f);
        op.geom.pad = r.U16(f);
        if (kh != kw) throw FormatError(f, "non-square kernel");
        op.geom.kernel = kh;
        op.weight.resize(op.geom.weight_count());
        op.bias.resize(op.geom.out_channels);
        r.F32s(OpField(i, "weights"), op.weight);
        r.F32s(OpField(i, "bias"), op.bias);
        break;
      }
      case OpKind::kLeakyRelu:
        op.slope = r.F32(OpField(i, "slope"));
        break;
      case OpKind::kConcatSkip:
        op.source = r.U32(OpField(i, "source_op_index"));
        if (op.source >= i) {
          throw FormatError(OpField(i, "source_op_index"),
                            "must refer to an earlier op");
        }
        break;
      default:
        break;
    }
    b.ops.push_back(std::move(op));
  }
  if (r.remaining() != 0) {
    throw FormatError("trailer", std::to_string(r.remaining()) +
                                     " unexpected bytes before checksum");
  }
  return b;
}

std::filesystem::path MetadataPath(const std::filesystem::path& bundle_path) {
  return bundle_path.string() + ".meta.json";
}

SanitizerBundle ExportSanitizer(const SanitizerModel& model,
                                const BundleMetadata& metadata,
                                const std::filesystem::path& path) {
  SanitizerBundle b = BundleFromSanitizer(model, metadata);
  if (b.metadata.created.empty()) b.metadata.created = UtcTimestamp();
  WriteFileAtomic(path, EncodePsf1(b));
  WriteTextAtomic(MetadataPath(path), nlohmann::json(b.metadata).dump(2) + "\n");
  return b;
}

ImportedSanitizer ImportSanitizer(const std::filesystem::path& path,
                                  std::optional<ImageShape> expected_shape) {
  SanitizerBundle b = DecodePsf1(ReadFileBytes(path));
  if (expected_shape && b.input_shape != *expected_shape) {
    throw FormatError("input_shape", "bundle expects " + b.input_shape.ToString() +
                                         ", data is " + expected_shape->ToString());
  }
  const auto meta_path = MetadataPath(path);
  if (std::filesystem::exists(meta_path)) {
    try {
      b.metadata = nlohmann::json::parse(ReadTextFile(meta_path))
                       .get<BundleMetadata>();
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("metadata", e.what());
    }
  }
  UNet unet = UNetFromBundle(b);
  std::optional<DatasetSpec> generator;
  if (b.metadata.kind == SanitizerKind::kStochastic) {
    if (!b.metadata.generator) {
      throw FormatError("metadata.generator",
                        "stochastic sanitizer without attribute generator");
    }
    generator = b.metadata.generator;
  }
  return {SanitizerModel::FromUNet(b.metadata.kind, std::move(unet), generator),
          b.metadata};
}

std::string UtcTimestamp() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::vector<uint8_t> EncodeClassifier(const Classifier& model) {
  ByteWriter w;
  w.Ascii(std::string_view(kClfMagic, 4));
  w.U32(kClfVersion);
  WriteShape(w, model.input_shape());
  w.U32(static_cast<uint32_t>(model.num_classes()));
  WriteBlob(w, model.conv1().weight);
  WriteBlob(w, model.conv1().bias);
  WriteBlob(w, model.conv2().weight);
  WriteBlob(w, model.conv2().bias);
  WriteBlob(w, model.fc().weight);
  WriteBlob(w, model.fc().bias);
  WriteBlob(w, model.head().weight);
  WriteBlob(w, model.head().bias);
  w.U32(Crc32(std::span(w.buffer()).subspan(4)));
  return w.Release();
}

Classifier DecodeClassifier(std::span<const uint8_t> bytes) {
  CheckMagic(bytes, kClfMagic);
  ByteReader r(CheckedBody(bytes));
  const uint32_t version = r.U32("version");
  if (version != kClfVersion) {
    throw FormatError("version", "unsupported " + std::to_string(version));
  }
  const ImageShape shape = ReadShape(r);
  if (shape.height % 4 != 0 || shape.width % 4 != 0) {
    throw FormatError("input_shape", "H and W must be multiples of 4");
  }
  const uint32_t classes = r.U32("num_classes");
  if (classes < 2 || classes > 65535) {
    throw FormatError("num_classes", std::to_string(classes));
  }
  Classifier m(shape, static_cast<int>(classes), 0);
  ReadBlob(r, "conv1.weight", m.conv1().weight);
  ReadBlob(r, "conv1.bias", m.conv1().bias);
  ReadBlob(r, "conv2.weight", m.conv2().weight);
  ReadBlob(r, "conv2.bias", m.conv2().bias);
  ReadBlob(r, "fc.weight", m.fc().weight);
  ReadBlob(r, "fc.bias", m.fc().bias);
  ReadBlob(r, "head.weight", m.head().weight);
  ReadBlob(r, "head.bias", m.head().bias);
  if (r.remaining() != 0) {
    throw FormatError("trailer", "unexpected bytes before checksum");
  }
  return m;
}

void SaveClassifier(const Classifier& model, const std::filesystem::path& path) {
  WriteFileAtomic(path, EncodeClassifier(model));
}

Classifier LoadClassifier(const std::filesystem::path& path) {
  return DecodeClassifier(ReadFileBytes(path));
}

void SaveUNet(const UNet& unet, const std::filesystem::path& path) {
  const SanitizerModel m = SanitizerModel::FromUNet(
      SanitizerKind::kDeterministic, unet, std::nullopt);
  WriteFileAtomic(path, EncodePsf1(BundleFromSanitizer(m, {})));
}

UNet LoadUNet(const std::filesystem::path& path) {
  return UNetFromBundle(DecodePsf1(ReadFileBytes(path)));
}

void to_json(nlohmann::json& j, const BundleMetadata& m) {
  j = {{"alpha", m.alpha},
       {"mode", m.mode},
       {"seed", m.seed},
       {"created", m.created},
       {"kind", SanitizerKindName(m.kind)}};
  if (m.generator) j["generator"] = *m.generator;
}

void from_json(const nlohmann::json& j, BundleMetadata& m) {
  j.at("alpha").get_to(m.alpha);
  j.at("mode").get_to(m.mode);
  j.at("seed").get_to(m.seed);
  j.at("created").get_to(m.created);
  m.kind = ParseSanitizerKind(j.at("kind").get<std::string>());
  if (j.contains("generator")) {
    m.generator = j.at("generator").get<DatasetSpec>();
  } else {
    m.generator.reset();
  }
}

}  // namespace cpriv
