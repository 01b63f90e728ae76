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
#include "cpriv/byte_io.h"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include "cpriv/error.h"

namespace cpriv {

void ByteWriter::U16(uint16_t v) {
  buf_.push_back(static_cast<uint8_t>(v));
  buf_.push_back(static_cast<uint8_t>(v >> 8));
}

void ByteWriter::U32(uint32_t v) {
  for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::U64(uint64_t v) {
  for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<uint8_t>(v >> (8 * i)));
}

void ByteWriter::F32(float v) { U32(std::bit_cast<uint32_t>(v)); }

void ByteWriter::F32s(std::span<const float> v) {
  buf_.reserve(buf_.size() + 4 * v.size());
  for (float f : v) F32(f);
}

void ByteWriter::Bytes(std::span<const uint8_t> v) {
  buf_.insert(buf_.end(), v.begin(), v.end());
}

void ByteWriter::Ascii(std::string_view s) {
  buf_.insert(buf_.end(), s.begin(), s.end());
}

std::span<const uint8_t> ByteReader::Take(const std::string& field,
                                          std::size_t n) {
  if (n > remaining()) {
    throw FormatError(field, "truncated at byte " + std::to_string(pos_) +
                                 " (need " + std::to_string(n) + ", have " +
                                 std::to_string(remaining()) + ")");
  }
  auto out = data_.subspan(pos_, n);
  pos_ += n;
  return out;
}

uint8_t ByteReader::U8(const std::string& field) { return Take(field, 1)[0]; }

uint16_t ByteReader::U16(const std::string& field) {
  auto b = Take(field, 2);
  return static_cast<uint16_t>(b[0] | (b[1] << 8));
}

uint32_t ByteReader::U32(const std::string& field) {
  auto b = Take(field, 4);
  uint32_t v = 0;
  for (int i = 3; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

uint64_t ByteReader::U64(const std::string& field) {
  auto b = Take(field, 8);
  uint64_t v = 0;
  for (int i = 7; i >= 0; --i) v = (v << 8) | b[i];
  return v;
}

float ByteReader::F32(const std::string& field) {
  return std::bit_cast<float>(U32(field));
}

void ByteReader::F32s(const std::string& field, std::span<float> out) {
  auto b = Take(field, 4 * out.size());
  for (std::size_t i = 0; i < out.size(); ++i) {
    uint32_t v = 0;
    for (int k = 3; k >= 0; --k) v = (v << 8) | b[4 * i + k];
    out[i] = std::bit_cast<float>(v);
  }
}

std::span<const uint8_t> ByteReader::Bytes(const std::string& field,
                                           std::size_t n) {
  return Take(field, n);
}

uint32_t Crc32(std::span<const uint8_t> data) {
  uLong crc = crc32(0L, Z_NULL, 0);
  std::size_t done = 0;
  while (done < data.size()) {
    const std::size_t chunk =
        std::min<std::size_t>(data.size() - done, 1u << 30);
    crc = crc32(crc, data.data() + done, static_cast<uInt>(chunk));
    done += chunk;
  }
  return static_cast<uint32_t>(crc);
}

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path.string());
  return std::vector<uint8_t>(std::istreambuf_iterator<char>(is), {});
}

void WriteFileAtomic(const std::filesystem::path& path,
                     std::span<const uint8_t> bytes) {
  if (path.has_parent_path()) {
    std::error_code ec;
    std::filesystem::create_directories(path.parent_path(), ec);
  }
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write(reinterpret_cast<const char*>(bytes.data()),
             static_cast<std::streamsize>(bytes.size()));
    if (!os) throw IoError("short write to " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp, ec);
    throw IoError("cannot finalize " + path.string());
  }
}

void WriteTextAtomic(const std::filesystem::path& path, std::string_view text) {
  WriteFileAtomic(path, std::span(reinterpret_cast<const uint8_t*>(text.data()),
                                  text.size()));
}

std::string ReadTextFile(const std::filesystem::path& path) {
  const auto bytes = ReadFileBytes(path);
  return std::string(bytes.begin(), bytes.end());
}

}  // namespace cpriv
