// Copyright 2026 The CENAS Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#ifndef CENAS_DATA_HPP_
#define CENAS_DATA_HPP_

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "cenas/dataset.hpp"
#include "cenas/error.hpp"
#include "cenas/layers.hpp"
#include "cenas/rng.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

using Bytes = std::vector<std::uint8_t>;

inline Bytes readFileBytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot open '" + path.string() + "'");
  return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void writeFileBytes(const std::filesystem::path& path, const Bytes& bytes) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write '" + path.string() + "'");
  out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace detail {

inline std::uint32_t readBe32(const Bytes& b, std::size_t at) {
  return (std::uint32_t{b[at]} << 24) | (std::uint32_t{b[at + 1]} << 16) |
         (std::uint32_t{b[at + 2]} << 8) | std::uint32_t{b[at + 3]};
}

inline void putBe32(Bytes& b, std::uint32_t v) {
  for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

inline std::string hex32(std::uint32_t v) {
  static const char* d = "0123456789abcdef";
  std::string s = "0x00000000";
  for (int i = 9; i >= 2; --i, v >>= 4) s[static_cast<std::size_t>(i)] = d[v & 0xf];
  return s;
}

inline float pixel(std::uint8_t b) { return static_cast<float>(b) / 255.0f; }

inline std::uint8_t toByte(float v) {
  const double c = std::clamp(static_cast<double>(v), 0.0, 1.0);
  return static_cast<std::uint8_t>(std::lround(c * 255.0));
}

inline void requireSize(const Bytes& b, std::size_t expected, const std::string& what) {
  if (b.size() < expected)
    throw DataError(what + ": truncated, expected " + std::to_string(expected) +
                        " bytes but file has " + std::to_string(b.size()),
                    static_cast<long long>(b.size()));
  if (b.size() > expected)
    throw DataError(what + ": " + std::to_string(b.size() - expected) +
                        " trailing bytes after expected end " + std::to_string(expected),
                    static_cast<long long>(expected));
}

inline std::vector<std::string> numericClassNames(int n) {
  std::vector<std::string> names;
  for (int i = 0; i < n; ++i) names.push_back(std::to_string(i));
  return names;
}

}  // namespace detail

/// Parses an IDX image/label pair already in memory. Class names default to
/// the ten digits "0".."9".
inline LabeledDataset parseIdx(const Bytes& images, const Bytes& labels,
                               std::optional<std::vector<std::string>> classNames = std::nullopt) {
  auto header = [](const Bytes& b, std::size_t size, std::uint32_t magic, const char* what) {
    if (b.size() >= 4)
      if (std::uint32_t m = detail::readBe32(b, 0); m != magic)
        throw DataError(std::string(what) + ": bad magic " + detail::hex32(m) + ", expected " +
                            detail::hex32(magic),
                        0);
    if (b.size() < size)
      throw DataError(std::string(what) + ": truncated header, expected " + std::to_string(size) +
                          " bytes but file has " + std::to_string(b.size()),
                      static_cast<long long>(b.size()));
  };
  header(images, 16, 0x00000803u, "idx images");
  header(labels, 8, 0x00000801u, "idx labels");

  const std::uint32_t n = detail::readBe32(images, 4);
  const std::uint32_t h = detail::readBe32(images, 8);
  const std::uint32_t w = detail::readBe32(images, 12);
  const std::uint32_t nl = detail::readBe32(labels, 4);
  if (n == 0) throw DataError("idx images: zero images", 4);
  if (h == 0 || w == 0 || h > 65535 || w > 65535)
    throw DataError("idx images: invalid dimensions " + std::to_string(h) + "x" +
                        std::to_string(w),
                    h == 0 || h > 65535 ? 8 : 12);
  if (nl != n)
    throw DataError("idx labels: count " + std::to_string(nl) + " does not match image count " +
                        std::to_string(n),
                    4);
  const std::size_t vol = std::size_t{h} * w;
  detail::requireSize(images, 16 + std::size_t{n} * vol, "idx images");
  detail::requireSize(labels, 8 + std::size_t{n}, "idx labels");

  auto names = classNames ? *classNames : detail::numericClassNames(10);
  LabeledDataset ds;
  ds.classNames = names;
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const int l = labels[8 + i];
    if (l >= static_cast<int>(names.size()))
      throw DataError("idx labels: label " + std::to_string(l) + " outside " +
                          std::to_string(names.size()) + " classes",
                      static_cast<long long>(8 + i));
    ds.labels[i] = l;
  }
  ds.images = Tensor({static_cast<int>(n), static_cast<int>(h), static_cast<int>(w), 1});
  for (std::size_t i = 0; i < std::size_t{n} * vol; ++i) ds.images.data[i] = detail::pixel(images[16 + i]);
  return sealDataset(std::move(ds));
}

inline LabeledDataset loadIdx(const std::filesystem::path& imagesPath,
                              const std::filesystem::path& labelsPath,
                              std::optional<std::vector<std::string>> classNames = std::nullopt) {
  return parseIdx(readFileBytes(imagesPath), readFileBytes(labelsPath), std::move(classNames));
}

/// Encodes a single-channel dataset as an IDX (images, labels) byte pair.
inline std::pair<Bytes, Bytes> encodeIdx(const LabeledDataset& ds) {
  if (ds.channels() != 1) throw DataError("idx encodes single-channel images only");
  if (ds.numClasses() > 256) throw DataError("idx labels hold at most 256 classes");
  Bytes img, lab;
  detail::putBe32(img, 0x00000803u);
  detail::putBe32(img, static_cast<std::uint32_t>(ds.size()));
  detail::putBe32(img, static_cast<std::uint32_t>(ds.height()));
  detail::putBe32(img, static_cast<std::uint32_t>(ds.width()));
  for (float v : ds.images.data) img.push_back(detail::toByte(v));
  detail::putBe32(lab, 0x00000801u);
  detail::putBe32(lab, static_cast<std::uint32_t>(ds.size()));
  for (int l : ds.labels) lab.push_back(static_cast<std::uint8_t>(l));
  return {std::move(img), std::move(lab)};
}

inline constexpr std::size_t kCifarSide = 32;
inline constexpr std::size_t kCifarRecord = 1 + 3 * kCifarSide * kCifarSide;

inline const std::vector<std::string>& cifar10ClassNames() {
  static const std::vector<std::string> names{"airplane", "automobile", "bird",  "cat",  "deer",
                                              "dog",      "frog",       "horse", "ship", "truck"};
  return names;
}

/// Appends the records of one CIFAR-10 binary batch. Pixels are stored
/// channel-planar (1024 R, 1024 G, 1024 B) and become interleaved NHWC.
inline void parseCifarInto(const Bytes& b, std::vector<float>& pixels, std::vector<int>& labels,
                           const std::string& name = "cifar") {
  if (b.empty()) throw DataError(name + ": empty file", 0);
  if (b.size() % kCifarRecord != 0)
    throw DataError(name + ": size " + std::to_string(b.size()) + " is not a multiple of " +
                        std::to_string(kCifarRecord) + "-byte records",
                    static_cast<long long>(b.size() - b.size() % kCifarRecord));
  const std::size_t plane = kCifarSide * kCifarSide;
  for (std::size_t r = 0; r < b.size() / kCifarRecord; ++r) {
    const std::size_t at = r * kCifarRecord;
    if (b[at] >= 10)
      throw DataError(name + ": record " + std::to_string(r) + " has label " +
                          std::to_string(b[at]) + ", expected 0-9",
                      static_cast<long long>(at));
    labels.push_back(b[at]);
    for (std::size_t p = 0; p < plane; ++p)
      for (std::size_t c = 0; c < 3; ++c) pixels.push_back(detail::pixel(b[at + 1 + c * plane + p]));
  }
}

inline LabeledDataset parseCifarBinary(const std::vector<Bytes>& batches) {
  if (batches.empty()) throw DataError("cifar: no batch files given");
  std::vector<float> pixels;
  std::vector<int> labels;
  for (std::size_t i = 0; i < batches.size(); ++i)
    parseCifarInto(batches[i], pixels, labels, "cifar batch " + std::to_string(i));
  const int n = static_cast<int>(labels.size());
  LabeledDataset ds;
  ds.images = Tensor({n, 32, 32, 3}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.classNames = cifar10ClassNames();
  return sealDataset(std::move(ds));
}

inline LabeledDataset loadCifarBinary(const std::vector<std::filesystem::path>& paths) {
  if (paths.empty()) throw DataError("cifar: no batch files given");
  std::vector<float> pixels;
  std::vector<int> labels;
  for (const auto& p : paths) parseCifarInto(readFileBytes(p), pixels, labels, p.string());
  const int n = static_cast<int>(labels.size());
  LabeledDataset ds;
  ds.images = Tensor({n, 32, 32, 3}, std::move(pixels));
  ds.labels = std::move(labels);
  ds.classNames = cifar10ClassNames();
  return sealDataset(std::move(ds));
}

inline Bytes encodeCifarBinary(const LabeledDataset& ds) {
  if (ds.height() != 32 || ds.width() != 32 || ds.channels() != 3)
    throw DataError("cifar encodes 32x32x3 images only");
  const std::size_t plane = kCifarSide * kCifarSide;
  Bytes out;
  out.reserve(ds.size() * kCifarRecord);
  for (std::size_t r = 0; r < ds.size(); ++r) {
    if (ds.labels[r] >= 10) throw DataError("cifar labels must be below 10");
    out.push_back(static_cast<std::uint8_t>(ds.labels[r]));
    const float* img = ds.images.data.data() + r * plane * 3;
    for (std::size_t c = 0; c < 3; ++c)
      for (std::size_t p = 0; p < plane; ++p) out.push_back(detail::toByte(img[p * 3 + c]));
  }
  return out;
}

enum class GrayPolicy { kLuma, kMean };

/// Preprocessing and split parameters.
struct SplitSpec {
  std::optional<std::string> heldOutClass;
  std::optional<int> novelSampleCount;
  int height = 32;
  int width = 32;
  int channels = 3;
  GrayPolicy gray = GrayPolicy::kLuma;

  void validate() const {
    if (height < 1 || width < 1) throw ConfigError("resize target must be at least 1x1");
    if (channels != 1 && channels != 3) throw ConfigError("channels must be 1 or 3");
    if (novelSampleCount && !heldOutClass)
      throw ConfigError("novelSampleCount requires heldOutClass");
    if (novelSampleCount && *novelSampleCount < 1)
      throw ConfigError("novelSampleCount must be positive");
  }
};

namespace detail {

// Half-pixel-centre bilinear sampling with edge clamping.
inline Tensor resizeBilinear(const Tensor& images, int outH, int outW) {
  const int n = images.dim(0), h = images.dim(1), w = images.dim(2), c = images.dim(3);
  if (h == outH && w == outW) return images;
  struct Tap {
    int lo, hi;
    double t;
  };
  auto taps = [](int in, int out) {
    std::vector<Tap> v(static_cast<std::size_t>(out));
    const double scale = static_cast<double>(in) / out;
    for (int o = 0; o < out; ++o) {
      double s = std::clamp((o + 0.5) * scale - 0.5, 0.0, static_cast<double>(in - 1));
      int lo = static_cast<int>(std::floor(s));
      int hi = std::min(lo + 1, in - 1);
      v[static_cast<std::size_t>(o)] = {lo, hi, s - lo};
    }
    return v;
  };
  const auto ty = taps(h, outH), tx = taps(w, outW);
  Tensor out({n, outH, outW, c});
  auto at = [&](int i, int y, int x, int k) {
    return static_cast<double>(
        images.data[((static_cast<std::size_t>(i) * h + y) * w + x) * c + k]);
  };
  std::size_t o = 0;
  for (int i = 0; i < n; ++i)
    for (int y = 0; y < outH; ++y)
      for (int x = 0; x < outW; ++x)
        for (int k = 0; k < c; ++k) {
          const auto& a = ty[static_cast<std::size_t>(y)];
          const auto& b = tx[static_cast<std::size_t>(x)];
          double top = at(i, a.lo, b.lo, k) * (1 - b.t) + at(i, a.lo, b.hi, k) * b.t;
          double bot = at(i, a.hi, b.lo, k) * (1 - b.t) + at(i, a.hi, b.hi, k) * b.t;
          out.data[o++] = static_cast<float>(std::clamp(top * (1 - a.t) + bot * a.t, 0.0, 1.0));
        }
  return out;
}

inline Tensor convertChannels(const Tensor& images, int to, GrayPolicy gray) {
  const int from = images.dim(3);
  if (from == to) return images;
  const std::size_t pixels = images.size() / static_cast<std::size_t>(from);
  std::vector<int> shape = images.shape;
  shape[3] = to;
  Tensor out(shape);
  if (from == 1 && to == 3) {
    for (std::size_t p = 0; p < pixels; ++p)
      for (int k = 0; k < 3; ++k) out.data[p * 3 + static_cast<std::size_t>(k)] = images.data[p];
    return out;
  }
  if (from == 3 && to == 1) {
    const std::array<double, 3> wt =
        gray == GrayPolicy::kLuma ? std::array<double, 3>{0.299, 0.587, 0.114}
                                  : std::array<double, 3>{1.0 / 3, 1.0 / 3, 1.0 / 3};
    for (std::size_t p = 0; p < pixels; ++p) {
      double v = 0.0;
      for (std::size_t k = 0; k < 3; ++k) v += wt[k] * images.data[p * 3 + k];
      out.data[p] = static_cast<float>(std::clamp(v, 0.0, 1.0));
    }
    return out;
  }
  throw ConfigError("unsupported channel conversion " + std::to_string(from) + " -> " +
                    std::to_string(to));
}

}  // namespace detail

/// Resizes every image to spec.height x spec.width and adapts the channel
/// count. Labels and class names are kept.
inline LabeledDataset preprocess(const LabeledDataset& ds, const SplitSpec& spec) {
  spec.validate();
  LabeledDataset out = ds;
  out.images = detail::convertChannels(detail::resizeBilinear(ds.images, spec.height, spec.width),
                                       spec.channels, spec.gray);
  return sealDataset(std::move(out));
}

/// Keeps the listed samples in the given order and relabels them through
/// `relabel` (old index -> new index) under `names`.
inline LabeledDataset subset(const LabeledDataset& ds, const std::vector<std::size_t>& indices,
                             const std::vector<int>& relabel, std::vector<std::string> names) {
  LabeledDataset out;
  out.images = ds.gather(indices);
  for (auto i : indices) out.labels.push_back(relabel[static_cast<std::size_t>(ds.labels[i])]);
  out.classNames = std::move(names);
  return sealDataset(std::move(out));
}

/// The first `perClass` samples of every class, in dataset order.
inline LabeledDataset firstPerClass(const LabeledDataset& ds, std::size_t perClass) {
  std::vector<std::size_t> taken(ds.classNames.size(), 0), keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (taken[static_cast<std::size_t>(ds.labels[i])]++ < perClass) keep.push_back(i);
  std::vector<int> id(ds.classNames.size());
  for (std::size_t c = 0; c < id.size(); ++c) id[c] = static_cast<int>(c);
  return subset(ds, keep, id, ds.classNames);
}

inline int classIndex(const LabeledDataset& ds, const std::string& name) {
  auto it = std::find(ds.classNames.begin(), ds.classNames.end(), name);
  if (it == ds.classNames.end()) throw DataError("class '" + name + "' not in dataset");
  return static_cast<int>(it - ds.classNames.begin());
}

/// Label order used by the n -> n+1 protocol: surviving classes keep their
/// relative order as 0..n-1 and the held-out class becomes n.
inline std::pair<std::vector<int>, std::vector<std::string>> nPlusOneLabels(
    const LabeledDataset& ds, int heldOut) {
  std::vector<int> map(ds.classNames.size());
  std::vector<std::string> names;
  for (std::size_t c = 0; c < ds.classNames.size(); ++c) {
    if (static_cast<int>(c) == heldOut) continue;
    map[c] = static_cast<int>(names.size());
    names.push_back(ds.classNames[c]);
  }
  map[static_cast<std::size_t>(heldOut)] = static_cast<int>(names.size());
  names.push_back(ds.classNames[static_cast<std::size_t>(heldOut)]);
  return {map, names};
}

struct NPlusOneSplit {
  LabeledDataset sourceTrain;
  LabeledDataset targetTrain;
};

/// sourceTrain: every sample not of `heldOut`. targetTrain: the same samples
/// plus the first X held-out samples, all in original dataset order.
inline NPlusOneSplit makeNPlusOneSplit(const LabeledDataset& train, const std::string& heldOut,
                                       int x) {
  const int h = classIndex(train, heldOut);
  const std::size_t available = train.classCounts()[static_cast<std::size_t>(h)];
  if (x < 1 || static_cast<std::size_t>(x) > available)
    throw DataError("requested " + std::to_string(x) + " samples of '" + heldOut + "' but " +
                    std::to_string(available) + " are available");
  if (train.numClasses() < 3) throw DataError("n+1 split needs at least 3 classes");
  auto [map, names] = nPlusOneLabels(train, h);
  std::vector<std::size_t> src, tgt;
  int novel = 0;
  for (std::size_t i = 0; i < train.size(); ++i) {
    if (train.labels[i] != h) {
      src.push_back(i);
      tgt.push_back(i);
    } else if (novel < x) {
      tgt.push_back(i);
      ++novel;
    }
  }
  std::vector<std::string> srcNames(names.begin(), names.end() - 1);
  return {subset(train, src, map, srcNames), subset(train, tgt, map, names)};
}

/// Relabels a full test set into the target label order of makeNPlusOneSplit.
inline LabeledDataset nPlusOneTest(const LabeledDataset& test, const std::string& heldOut) {
  auto [map, names] = nPlusOneLabels(test, classIndex(test, heldOut));
  std::vector<std::size_t> all(test.size());
  for (std::size_t i = 0; i < all.size(); ++i) all[i] = i;
  return subset(test, all, map, names);
}

/// Rendering parameters for syntheticBlobs. Two styles share class concepts
/// (same conceptSeed) but differ in palette, polarity and background.
struct BlobOptions {
  int style = 0;
  std::optional<std::uint64_t> conceptSeed;
  double noise = 0.08;
  int spotsPerClass = 2;
};

/// Class-conditional Gaussian images: each class owns a smooth prototype made
/// of a few Gaussian spots; samples add iid pixel noise. Interleaved labels
/// (0, 1, ..., classes-1, 0, ...).
inline LabeledDataset syntheticBlobs(int classes, int perClass, const Shape3& shape,
                                     std::uint64_t seed, const BlobOptions& opt = {}) {
  if (classes < 2) throw ConfigError("syntheticBlobs needs at least 2 classes");
  if (perClass < 1) throw ConfigError("syntheticBlobs needs at least 1 sample per class");
  if (shape.h < 2 || shape.w < 2 || shape.c < 1) throw ConfigError("image must be at least 2x2");
  const int h = shape.h, w = shape.w, c = shape.c;
  const std::size_t vol = static_cast<std::size_t>(h) * w * c;

  RngStream concepts(opt.conceptSeed.value_or(seed));
  std::vector<std::vector<double>> protos;
  for (int k = 0; k < classes; ++k) {
    std::vector<double> intensity(static_cast<std::size_t>(h) * w, 0.0);
    for (int s = 0; s < opt.spotsPerClass; ++s) {
      const double cy = concepts.uniform(0.15, 0.85) * (h - 1);
      const double cx = concepts.uniform(0.15, 0.85) * (w - 1);
      const double r = concepts.uniform(0.12, 0.25) * std::min(h, w);
      const double amp = concepts.uniform(0.6, 1.0);
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          const double d2 = (y - cy) * (y - cy) + (x - cx) * (x - cx);
          intensity[static_cast<std::size_t>(y) * w + x] += amp * std::exp(-d2 / (2 * r * r));
        }
    }
    std::vector<double> colour(static_cast<std::size_t>(c));
    for (auto& v : colour) v = concepts.uniform(0.5, 1.0);
    // style: rotate the palette across channels, flip polarity on odd styles
    const bool inverted = opt.style % 2 != 0;
    const double bg = 0.15 + 0.1 * (opt.style % 3);
    std::vector<double> proto(vol);
    for (std::size_t p = 0; p < intensity.size(); ++p)
      for (int ch = 0; ch < c; ++ch) {
        const double col = colour[static_cast<std::size_t>((ch + opt.style) % c)];
        const double v = std::min(1.0, intensity[p]) * col * 0.6;
        proto[p * c + static_cast<std::size_t>(ch)] = inverted ? 1.0 - bg - v : bg + v;
      }
    protos.push_back(std::move(proto));
  }

  RngStream noise(seed ^ (0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(opt.style + 1)));
  const int n = classes * perClass;
  LabeledDataset ds;
  ds.images = Tensor({n, h, w, c});
  for (int i = 0; i < n; ++i) {
    const int k = i % classes;
    ds.labels.push_back(k);
    for (std::size_t p = 0; p < vol; ++p)
      ds.images.data[static_cast<std::size_t>(i) * vol + p] = static_cast<float>(
          std::clamp(protos[static_cast<std::size_t>(k)][p] + noise.normal(0.0, opt.noise), 0.0, 1.0));
  }
  for (int k = 0; k < classes; ++k) ds.classNames.push_back("class" + std::to_string(k));
  return sealDataset(std::move(ds));
}

}  // namespace cenas

#endif  // CENAS_DATA_HPP_
