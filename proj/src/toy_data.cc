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
#include "cpriv/toy_data.h"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

#include "cpriv/error.h"
#include "cpriv/rng.h"

namespace cpriv {
namespace {

constexpr uint64_t kTemplateTag = 0x7465'6d70'6c61'7465ULL;
constexpr uint64_t kTrainTag = 1;
constexpr uint64_t kTestTag = 2;
constexpr uint64_t kShuffleTag = 0x5348'5546ULL;

struct SubjectTemplate {
  std::vector<float> pixels;
  std::vector<float> base;  // per channel
};

SubjectTemplate BuildTemplate(const DatasetSpec& spec, int subject) {
  const ImageShape& s = spec.image_shape;
  Rng rng(DeriveSeed(spec.seed, kTemplateTag, static_cast<uint64_t>(subject)));
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  SubjectTemplate t;
  t.base.resize(s.channels);
  t.pixels.resize(s.numel());
  for (int c = 0; c < s.channels; ++c) t.base[c] = 0.4 + 0.1 * (unit(rng) - 0.5);

  std::vector<double> acc(s.numel(), 0.0);
  for (int b = 0; b < spec.render.blobs_per_subject; ++b) {
    const double cx = 3.0 + unit(rng) * (s.width - 6.0);
    const double cy = 3.0 + unit(rng) * (s.height - 6.0);
    const double sigma = 2.0 + 2.5 * unit(rng);
    std::vector<double> amp(s.channels);
    for (double& a : amp) a = 0.44 * (unit(rng) - 0.5);
    const double inv = 1.0 / (2.0 * sigma * sigma);
    for (int y = 0; y < s.height; ++y) {
      for (int x = 0; x < s.width; ++x) {
        const double g =
            std::exp(-((x - cx) * (x - cx) + (y - cy) * (y - cy)) * inv);
        for (int c = 0; c < s.channels; ++c)
          acc[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] +=
              amp[c] * g;
      }
    }
  }
  for (int c = 0; c < s.channels; ++c)
    for (int i = 0; i < s.height * s.width; ++i) {
      const std::size_t idx = static_cast<std::size_t>(c) * s.height * s.width + i;
      t.pixels[idx] = static_cast<float>(t.base[c] + acc[idx]);
    }
  return t;
}

int TintChannel(int attribute, int channels) {
  return attribute == 0 ? 0 : channels - 1;
}

void RenderFromTemplate(const SubjectTemplate& tmpl, int attribute,
                        const DatasetSpec& spec, uint64_t noise_seed,
                        std::span<float> out) {
  const ImageShape& s = spec.image_shape;
  const RenderParams& r = spec.render;
  Rng rng(noise_seed);
  std::uniform_int_distribution<int> shift(-r.max_shift, r.max_shift);
  std::uniform_real_distribution<double> gain_dist(r.min_gain, r.max_gain);
  std::normal_distribution<double> noise(0.0, r.noise_sigma);
  const int dx = shift(rng);
  const int dy = shift(rng);
  const double gain = gain_dist(rng);

  // Jittered template plus noise. The RNG is consumed identically for every
  // attribute so the identity part never depends on the cues.
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < s.height; ++y) {
      const int sy = std::clamp(y - dy, 0, s.height - 1);
      for (int x = 0; x < s.width; ++x) {
        const int sx = std::clamp(x - dx, 0, s.width - 1);
        const double t =
            tmpl.pixels[(static_cast<std::size_t>(c) * s.height + sy) * s.width + sx];
        const double v = tmpl.base[c] + gain * (t - tmpl.base[c]) + noise(rng);
        out[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] =
            static_cast<float>(v);
      }
    }
  }

  // Global cue: channel tint.
  const int tc = TintChannel(attribute, s.channels);
  const double tint = (s.channels == 1 && attribute == 1) ? -r.tint : r.tint;
  float* plane = out.data() + static_cast<std::size_t>(tc) * s.height * s.width;
  for (int i = 0; i < s.height * s.width; ++i) plane[i] += static_cast<float>(tint);

  // Local cue: stripe orientation in the top-right patch.
  const int patch = std::min({r.stripe_patch, s.height, s.width});
  for (int c = 0; c < s.channels; ++c) {
    for (int y = 0; y < patch; ++y) {
      for (int x = s.width - patch; x < s.width; ++x) {
        const int phase = attribute == 0 ? y : x;
        const double v = (phase % 2 == 0) ? r.stripe_amplitude : -r.stripe_amplitude;
        out[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] +=
            static_cast<float>(v);
      }
    }
  }

  for (float& v : out) v = std::clamp(v, 0.0f, 1.0f);
}

Dataset GenerateSplit(const DatasetSpec& spec, int count, uint64_t tag,
                      const std::vector<SubjectTemplate>& templates) {
  Dataset d;
  d.spec = spec;
  d.images = Tensor(count, spec.image_shape);
  d.utility_labels.resize(count);
  d.privacy_labels.resize(count);
  d.noise_seeds.resize(count);

  std::vector<int> subjects(count);
  for (int i = 0; i < count; ++i) subjects[i] = i % spec.num_subjects;
  Rng shuffle_rng(DeriveSeed(spec.seed, kShuffleTag, tag));
  std::shuffle(subjects.begin(), subjects.end(), shuffle_rng);

  for (int i = 0; i < count; ++i) {
    d.utility_labels[i] = subjects[i];
    d.privacy_labels[i] = spec.AttributeOf(subjects[i]);
    d.noise_seeds[i] = DeriveSeed(spec.seed, tag, static_cast<uint64_t>(i));
  }
#pragma omp parallel for schedule(static)
  for (int i = 0; i < count; ++i) {
    RenderFromTemplate(templates[subjects[i]], d.privacy_labels[i], spec,
                       d.noise_seeds[i], d.images.sample_span(i));
  }
  return d;
}

template <typename T>
void WritePod(std::ostream& os, T v) {
  os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T ReadPod(std::istream& is, const char* field) {
  T v{};
  if (!is.read(reinterpret_cast<char*>(&v), sizeof(T))) {
    throw FormatError(field, "unexpected end of file");
  }
  return v;
}

}  // namespace

DatasetSpec DatasetSpec::Default() {
  std::vector<uint8_t> map(16, 0);
  for (int s : {1, 4, 6, 9, 12, 14}) map[s] = 1;
  return FromAttributeMap(std::move(map), 4096, 1024, 7);
}

DatasetSpec DatasetSpec::FromAttributeMap(std::vector<uint8_t> attribute_map,
                                          int train_size, int test_size,
                                          uint64_t seed) {
  DatasetSpec spec;
  spec.num_subjects = static_cast<int>(attribute_map.size());
  spec.attribute_map = std::move(attribute_map);
  spec.train_size = train_size;
  spec.test_size = test_size;
  spec.seed = seed;
  spec.prior = spec.ImpliedPrior();
  return spec;
}

Prior DatasetSpec::ImpliedPrior() const {
  if (attribute_map.empty()) return {0.0, 0.0};
  const double ones = static_cast<double>(
      std::count(attribute_map.begin(), attribute_map.end(), uint8_t{1}));
  const double p1 = ones / static_cast<double>(attribute_map.size());
  return {1.0 - p1, p1};
}

void DatasetSpec::Validate() const {
  if (num_subjects < 2) throw ConfigError("num_subjects must be >= 2");
  if (static_cast<int>(attribute_map.size()) != num_subjects) {
    throw ConfigError("attribute_map must cover every subject");
  }
  for (uint8_t a : attribute_map) {
    if (a > 1) throw ConfigError("attribute_map values must be 0 or 1");
  }
  if (train_size < num_subjects || test_size < num_subjects) {
    throw ConfigError("train_size and test_size must be >= num_subjects");
  }
  if (std::abs(prior[0] + prior[1] - 1.0) > 1e-9) {
    throw ConfigError("prior must sum to 1");
  }
  const Prior implied = ImpliedPrior();
  if (std::abs(implied[0] - prior[0]) > 1e-9) {
    throw ConfigError("prior does not match the attribute frequency implied "
                      "by attribute_map");
  }
  const ImageShape& s = image_shape;
  if (s.channels < 1 || s.height < 8 || s.width < 8 || s.height % 4 != 0 ||
      s.width % 4 != 0) {
    throw ConfigError("image_shape must have C >= 1 and H, W >= 8, "
                      "divisible by 4; got " + s.ToString());
  }
  if (s.channels > 65535 || s.height > 65535 || s.width > 65535) {
    throw ConfigError("image dimensions must fit in u16");
  }
  if (num_subjects > 65535) throw ConfigError("num_subjects must fit in u16");
  if (render.noise_sigma < 0 || render.min_gain > render.max_gain ||
      render.max_shift < 0 || render.stripe_patch < 0) {
    throw ConfigError("invalid render parameters");
  }
}

int DatasetSpec::AttributeOf(int subject) const {
  if (subject < 0 || subject >= num_subjects) {
    throw DomainError("subject " + std::to_string(subject) +
                      " out of range [0, " + std::to_string(num_subjects) + ")");
  }
  return attribute_map[subject];
}

Sample Dataset::Get(int i) const {
  if (i < 0 || i >= size()) throw DomainError("sample index out of range");
  Sample s;
  auto span = images.sample_span(i);
  s.image.assign(span.begin(), span.end());
  s.utility_label = utility_labels[i];
  s.privacy_label = privacy_labels[i];
  s.noise_seed = noise_seeds.empty() ? 0 : noise_seeds[i];
  return s;
}

Tensor Dataset::GatherImages(std::span<const int> indices) const {
  Tensor batch(static_cast<int>(indices.size()), image_shape());
  for (std::size_t b = 0; b < indices.size(); ++b) {
    auto src = images.sample_span(indices[b]);
    std::copy(src.begin(), src.end(), batch.sample(static_cast<int>(b)));
  }
  return batch;
}

Dataset Dataset::Head(int n) const {
  n = std::clamp(n, 0, size());
  std::vector<int> idx(n);
  std::iota(idx.begin(), idx.end(), 0);
  Dataset d;
  d.spec = spec;
  d.images = GatherImages(idx);
  d.utility_labels.assign(utility_labels.begin(), utility_labels.begin() + n);
  d.privacy_labels.assign(privacy_labels.begin(), privacy_labels.begin() + n);
  if (!noise_seeds.empty())
    d.noise_seeds.assign(noise_seeds.begin(), noise_seeds.begin() + n);
  return d;
}

DatasetSplits GenerateDataset(const DatasetSpec& spec) {
  spec.Validate();
  std::vector<SubjectTemplate> templates(spec.num_subjects);
  for (int s = 0; s < spec.num_subjects; ++s) templates[s] = BuildTemplate(spec, s);
  DatasetSplits out;
  out.train = GenerateSplit(spec, spec.train_size, kTrainTag, templates);
  out.test = GenerateSplit(spec, spec.test_size, kTestTag, templates);
  return out;
}

void RenderInto(int subject, int attribute, const DatasetSpec& spec,
                uint64_t noise_seed, std::span<float> out) {
  spec.AttributeOf(subject);
  if (attribute != 0 && attribute != 1) {
    throw DomainError("attribute must be 0 or 1");
  }
  if (out.size() != spec.image_shape.numel()) {
    throw DomainError("render buffer does not match image shape");
  }
  RenderFromTemplate(BuildTemplate(spec, subject), attribute, spec, noise_seed,
                     out);
}

Sample RenderWithAttribute(int subject, int forced_attribute,
                           const DatasetSpec& spec, uint64_t noise_seed) {
  Sample s;
  s.image.resize(spec.image_shape.numel());
  RenderInto(subject, forced_attribute, spec, noise_seed, s.image);
  s.utility_label = subject;
  s.privacy_label = forced_attribute;
  s.noise_seed = noise_seed;
  return s;
}

std::vector<uint8_t> AttributeCueMask(const DatasetSpec& spec) {
  const ImageShape& s = spec.image_shape;
  std::vector<uint8_t> mask(s.numel(), 0);
  const std::size_t plane = static_cast<std::size_t>(s.height) * s.width;
  for (int a : {0, 1}) {
    const int tc = TintChannel(a, s.channels);
    std::fill_n(mask.begin() + tc * plane, plane, uint8_t{1});
  }
  const int patch = std::min({spec.render.stripe_patch, s.height, s.width});
  for (int c = 0; c < s.channels; ++c)
    for (int y = 0; y < patch; ++y)
      for (int x = s.width - patch; x < s.width; ++x)
        mask[(static_cast<std::size_t>(c) * s.height + y) * s.width + x] = 1;
  return mask;
}

Prior EmpiricalPrior(std::span<const int> privacy_labels) {
  if (privacy_labels.empty()) {
    throw DomainError("empirical prior of an empty sample list");
  }
  std::size_t ones = 0;
  for (int l : privacy_labels) {
    if (l != 0 && l != 1) throw DomainError("privacy label must be 0 or 1");
    ones += static_cast<std::size_t>(l);
  }
  const double p1 =
      static_cast<double>(ones) / static_cast<double>(privacy_labels.size());
  return {1.0 - p1, p1};
}

Prior EmpiricalPrior(const Dataset& dataset) {
  return EmpiricalPrior(dataset.privacy_labels);
}

void to_json(nlohmann::json& j, const DatasetSpec& spec) {
  j = nlohmann::json{
      {"num_subjects", spec.num_subjects},
      {"attribute_map", spec.attribute_map},
      {"prior", spec.prior},
      {"image_shape",
       {spec.image_shape.channels, spec.image_shape.height,
        spec.image_shape.width}},
      {"train_size", spec.train_size},
      {"test_size", spec.test_size},
      {"seed", spec.seed},
      {"render",
       {{"noise_sigma", spec.render.noise_sigma},
        {"tint", spec.render.tint},
        {"stripe_amplitude", spec.render.stripe_amplitude},
        {"stripe_patch", spec.render.stripe_patch},
        {"max_shift", spec.render.max_shift},
        {"min_gain", spec.render.min_gain},
        {"max_gain", spec.render.max_gain},
        {"blobs_per_subject", spec.render.blobs_per_subject}}},
  };
}

void from_json(const nlohmann::json& j, DatasetSpec& spec) {
  DatasetSpec d = DatasetSpec::Default();
  d.attribute_map = j.value("attribute_map", d.attribute_map);
  d.num_subjects =
      j.value("num_subjects", static_cast<int>(d.attribute_map.size()));
  d.prior = j.contains("prior") ? j.at("prior").get<Prior>() : d.ImpliedPrior();
  if (j.contains("image_shape")) {
    auto v = j.at("image_shape").get<std::vector<int>>();
    if (v.size() != 3) throw ConfigError("image_shape must be [C, H, W]");
    d.image_shape = {v[0], v[1], v[2]};
  }
  d.train_size = j.value("train_size", d.train_size);
  d.test_size = j.value("test_size", d.test_size);
  d.seed = j.value("seed", d.seed);
  if (j.contains("render")) {
    const auto& r = j.at("render");
    d.render.noise_sigma = r.value("noise_sigma", d.render.noise_sigma);
    d.render.tint = r.value("tint", d.render.tint);
    d.render.stripe_amplitude =
        r.value("stripe_amplitude", d.render.stripe_amplitude);
    d.render.stripe_patch = r.value("stripe_patch", d.render.stripe_patch);
    d.render.max_shift = r.value("max_shift", d.render.max_shift);
    d.render.min_gain = r.value("min_gain", d.render.min_gain);
    d.render.max_gain = r.value("max_gain", d.render.max_gain);
    d.render.blobs_per_subject =
        r.value("blobs_per_subject", d.render.blobs_per_subject);
  }
  spec = std::move(d);
}

void WriteDataset(const Dataset& dataset, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());

  const ImageShape s = dataset.image_shape();
  nlohmann::json meta{{"format", "TDS1"},
                      {"spec", dataset.spec},
                      {"prior", EmpiricalPrior(dataset)},
                      {"count", dataset.size()},
                      {"image_shape", {s.channels, s.height, s.width}},
                      {"noise_seeds", dataset.noise_seeds}};
  {
    std::ofstream os(dir / kTdsMetadataFile);
    if (!(os << meta.dump(2) << "\n")) {
      throw IoError("cannot write " + (dir / kTdsMetadataFile).string());
    }
  }
  const auto tmp = dir / (std::string(kTdsSamplesFile) + ".tmp");
  {
    std::ofstream os(tmp, std::ios::binary);
    if (!os) throw IoError("cannot write " + tmp.string());
    os.write("TDS1", 4);
    WritePod<uint32_t>(os, static_cast<uint32_t>(dataset.size()));
    WritePod<uint16_t>(os, static_cast<uint16_t>(s.channels));
    WritePod<uint16_t>(os, static_cast<uint16_t>(s.height));
    WritePod<uint16_t>(os, static_cast<uint16_t>(s.width));
    for (int i = 0; i < dataset.size(); ++i) {
      auto px = dataset.images.sample_span(i);
      os.write(reinterpret_cast<const char*>(px.data()),
               static_cast<std::streamsize>(px.size() * sizeof(float)));
      WritePod<uint16_t>(os, static_cast<uint16_t>(dataset.utility_labels[i]));
      WritePod<uint8_t>(os, static_cast<uint8_t>(dataset.privacy_labels[i]));
    }
    if (!os) throw IoError("short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, dir / kTdsSamplesFile, ec);
  if (ec) throw IoError("cannot finalize " + tmp.string() + ": " + ec.message());
}

Dataset ReadDataset(const std::filesystem::path& dir) {
  Dataset d;
  {
    std::ifstream is(dir / kTdsMetadataFile);
    if (!is) throw IoError("cannot open " + (dir / kTdsMetadataFile).string());
    nlohmann::json meta;
    try {
      is >> meta;
      d.spec = meta.at("spec").get<DatasetSpec>();
      d.noise_seeds = meta.value("noise_seeds", std::vector<uint64_t>{});
    } catch (const nlohmann::json::exception& e) {
      throw FormatError("metadata", e.what());
    }
  }
  std::ifstream is(dir / kTdsSamplesFile, std::ios::binary);
  if (!is) throw IoError("cannot open " + (dir / kTdsSamplesFile).string());
  char magic[4];
  if (!is.read(magic, 4) || std::memcmp(magic, "TDS1", 4) != 0) {
    throw FormatError("magic", "expected TDS1");
  }
  const uint32_t count = ReadPod<uint32_t>(is, "count");
  ImageShape s;
  s.channels = ReadPod<uint16_t>(is, "channels");
  s.height = ReadPod<uint16_t>(is, "height");
  s.width = ReadPod<uint16_t>(is, "width");
  if (s.numel() == 0) throw FormatError("shape", "zero-sized image");
  d.images = Tensor(static_cast<int>(count), s);
  d.utility_labels.resize(count);
  d.privacy_labels.resize(count);
  for (uint32_t i = 0; i < count; ++i) {
    auto px = d.images.sample_span(static_cast<int>(i));
    if (!is.read(reinterpret_cast<char*>(px.data()),
                 static_cast<std::streamsize>(px.size() * sizeof(float)))) {
      throw FormatError("pixels", "truncated at sample " + std::to_string(i));
    }
    d.utility_labels[i] = ReadPod<uint16_t>(is, "utility_label");
    d.privacy_labels[i] = ReadPod<uint8_t>(is, "privacy_label");
  }
  if (!d.noise_seeds.empty() && d.noise_seeds.size() != count) {
    throw FormatError("noise_seeds", "length does not match sample count");
  }
  return d;
}

}  // namespace cpriv
