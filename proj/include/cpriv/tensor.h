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
#ifndef CPRIV_TENSOR_H_
#define CPRIV_TENSOR_H_

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace cpriv {

// Image geometry, channel-first.
struct ImageShape {
  int channels = 3;
  int height = 32;
  int width = 32;

  std::size_t numel() const {
    return static_cast<std::size_t>(channels) * height * width;
  }
  bool operator==(const ImageShape&) const = default;
  std::string ToString() const;
};

// Batch geometry (NCHW). Dense activations use h = w = 1.
struct Shape {
  int n = 0;
  int c = 0;
  int h = 1;
  int w = 1;

  std::size_t numel() const {
    return static_cast<std::size_t>(n) * c * h * w;
  }
  std::size_t sample_size() const {
    return static_cast<std::size_t>(c) * h * w;
  }
  ImageShape image() const { return {c, h, w}; }
  bool operator==(const Shape&) const = default;
  std::string ToString() const;
};

// Dense float32 NCHW tensor with value semantics.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, float fill = 0.0f)
      : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(int n, ImageShape image, float fill = 0.0f)
      : Tensor(Shape{n, image.channels, image.height, image.width}, fill) {}

  const Shape& shape() const { return shape_; }
  std::size_t size() const { return data_.size(); }
  bool empty() const { return data_.empty(); }

  float* data() { return data_.data(); }
  const float* data() const { return data_.data(); }
  std::span<float> values() { return data_; }
  std::span<const float> values() const { return data_; }

  float* sample(int i) { return data_.data() + i * shape_.sample_size(); }
  const float* sample(int i) const {
    return data_.data() + i * shape_.sample_size();
  }
  std::span<float> sample_span(int i) {
    return {sample(i), shape_.sample_size()};
  }
  std::span<const float> sample_span(int i) const {
    return {sample(i), shape_.sample_size()};
  }

  float& at(int n, int c, int h, int w) {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
                     shape_.w + w];
  }
  float at(int n, int c, int h, int w) const {
    return data_[((static_cast<std::size_t>(n) * shape_.c + c) * shape_.h + h) *
                     shape_.w + w];
  }

  void Fill(float v);
  // Reinterprets the buffer; numel must match.
  void Reshape(Shape shape);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<float> data_;
};

}  // namespace cpriv

#endif  // CPRIV_TENSOR_H_
