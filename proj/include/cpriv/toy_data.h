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
#ifndef CPRIV_TOY_DATA_H_
#define CPRIV_TOY_DATA_H_

// Synthetic identity/attribute dataset. Each subject owns a procedural
// template; the binary attribute is a fixed function of the subject and is
// rendered through two cues: a global channel tint and an oriented stripe
// patch. The attribute is therefore far easier to classify than identity.

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "cpriv/tensor.h"
#include "json.hpp"

namespace cpriv {

using Prior = std::array<double, 2>;

struct RenderParams {
  double noise_sigma = 0.4;
  double tint = 0.02;
  double stripe_amplitude = 0.2;
  int stripe_patch = 8;
  int max_shift = 2;
  double min_gain = 0.85;
  double max_gain = 1.15;
  int blobs_per_subject = 6;

  bool operator==(const RenderParams&) const = default;
};

struct DatasetSpec {
  int num_subjects = 16;
  // attribute_map[s] in {0, 1}; total on [0, num_subjects).
  std::vector<uint8_t> attribute_map;
  // Subjects are drawn uniformly, so the prior must equal the attribute
  // frequency over subjects.
  Prior prior{0.0, 0.0};
  ImageShape image_shape;
  int train_size = 4096;
  int test_size = 1024;
  uint64_t seed = 7;
  RenderParams render;

  // 16 subjects, 10 with attribute 0 and 6 with attribute 1.
  static DatasetSpec Default();
  // Builds a spec with uniform subject frequency; prior filled in.
  static DatasetSpec FromAttributeMap(std::vector<uint8_t> attribute_map,
                                      int train_size, int test_size,
                                      uint64_t seed);

  Prior ImpliedPrior() const;
  // Throws ConfigError.
  void Validate() const;
  int AttributeOf(int subject) const;

  bool operator==(const DatasetSpec&) const = default;
};

// Images are stored batched for the training loops; per-sample views are
// available through Get().
struct Sample {
  std::vector<float> image;
  int utility_label = 0;
  int privacy_label = 0;
  uint64_t noise_seed = 0;
};

struct Dataset {
  DatasetSpec spec;
  Tensor images;
  std::vector<int> utility_labels;
  std::vector<int> privacy_labels;
  // Seeds that regenerate each sample's jitter and noise. Zero when unknown
  // (datasets imported without seeds).
  std::vector<uint64_t> noise_seeds;

  int size() const { return static_cast<int>(utility_labels.size()); }
  ImageShape image_shape() const { return images.shape().image(); }
  Sample Get(int i) const;
  Tensor GatherImages(std::span<const int> indices) const;
  // First n samples (or all if n exceeds size()).
  Dataset Head(int n) const;
};

struct DatasetSplits {
  Dataset train;
  Dataset test;
};

DatasetSplits GenerateDataset(const DatasetSpec& spec);

// Renders subject's template with attribute cues for forced_attribute. With
// forced_attribute == AttributeOf(subject) the result is pixel-equal to the
// generator's output for the same noise_seed.
Sample RenderWithAttribute(int subject, int forced_attribute,
                           const DatasetSpec& spec, uint64_t noise_seed);

// Writes into out (numel of the image shape) without allocating.
void RenderInto(int subject, int attribute, const DatasetSpec& spec,
                uint64_t noise_seed, std::span<float> out);

// 1 where an attribute cue can change the pixel, 0 elsewhere.
std::vector<uint8_t> AttributeCueMask(const DatasetSpec& spec);

Prior EmpiricalPrior(std::span<const int> privacy_labels);
Prior EmpiricalPrior(const Dataset& dataset);

// TDS1 dataset directory: metadata.json + samples.tds1.
inline constexpr char kTdsMetadataFile[] = "metadata.json";
inline constexpr char kTdsSamplesFile[] = "samples.tds1";

void WriteDataset(const Dataset& dataset, const std::filesystem::path& dir);
Dataset ReadDataset(const std::filesystem::path& dir);

void to_json(nlohmann::json& j, const DatasetSpec& spec);
void from_json(const nlohmann::json& j, DatasetSpec& spec);

}  // namespace cpriv

#endif  // CPRIV_TOY_DATA_H_
