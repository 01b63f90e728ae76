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
#ifndef CPRIV_BYTE_IO_H_
#define CPRIV_BYTE_IO_H_

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cpriv {

// Little-endian encoder into a growable buffer.
class ByteWriter {
 public:
  void U8(uint8_t v) { buf_.push_back(v); }
  void U16(uint16_t v);
  void U32(uint32_t v);
  void U64(uint64_t v);
  void F32(float v);
  void F32s(std::span<const float> v);
  void Bytes(std::span<const uint8_t> v);
  void Ascii(std::string_view s);

  std::vector<uint8_t>& buffer() { return buf_; }
  const std::vector<uint8_t>& buffer() const { return buf_; }
  std::vector<uint8_t> Release() { return std::move(buf_); }

 private:
  std::vector<uint8_t> buf_;
};

// Little-endian decoder. Reading past the end throws FormatError(field, ...).
class ByteReader {
 public:
  explicit ByteReader(std::span<const uint8_t> data) : data_(data) {}

  uint8_t U8(const std::string& field);
  uint16_t U16(const std::string& field);
  uint32_t U32(const std::string& field);
  uint64_t U64(const std::string& field);
  float F32(const std::string& field);
  void F32s(const std::string& field, std::span<float> out);
  std::span<const uint8_t> Bytes(const std::string& field, std::size_t n);

  std::size_t offset() const { return pos_; }
  std::size_t remaining() const { return data_.size() - pos_; }

 private:
  std::span<const uint8_t> Take(const std::string& field, std::size_t n);

  std::span<const uint8_t> data_;
  std::size_t pos_ = 0;
};

uint32_t Crc32(std::span<const uint8_t> data);

std::vector<uint8_t> ReadFileBytes(const std::filesystem::path& path);
// Writes to a sibling temp file and renames it over path.
void WriteFileAtomic(const std::filesystem::path& path,
                     std::span<const uint8_t> bytes);
void WriteTextAtomic(const std::filesystem::path& path, std::string_view text);
std::string ReadTextFile(const std::filesystem::path& path);

}  // namespace cpriv

#endif  // CPRIV_BYTE_IO_H_
