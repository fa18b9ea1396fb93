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

#ifndef CENAS_DATASET_HPP_
#define CENAS_DATASET_HPP_

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "cenas/error.hpp"
#include "cenas/hash.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

/// Images [N, H, W, C] in [0, 1] with one class index per image.
struct LabeledDataset {
  Tensor images;
  std::vector<int> labels;
  std::vector<std::string> classNames;
  std::uint64_t provenanceHash = 0;

  std::size_t size() const noexcept { return labels.size(); }
  int height() const { return images.dim(1); }
  int width() const { return images.dim(2); }
  int channels() const { return images.dim(3); }
  int numClasses() const { return static_cast<int>(classNames.size()); }
  std::size_t imageVolume() const {
    return static_cast<std::size_t>(height()) * width() * channels();
  }

  std::vector<std::size_t> classCounts() const {
    std::vector<std::size_t> counts(classNames.size(), 0);
    for (int l : labels) ++counts[static_cast<std::size_t>(l)];
    return counts;
  }

  std::vector<std::size_t> indicesOfClass(int c) const {
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < labels.size(); ++i)
      if (labels[i] == c) idx.push_back(i);
    return idx;
  }

  /// Copies the selected images into a [k, H, W, C] batch.
  Tensor gather(const std::vector<std::size_t>& indices) const {
    const std::size_t vol = imageVolume();
    Tensor out({static_cast<int>(indices.size()), height(), width(), channels()});
    for (std::size_t i = 0; i < indices.size(); ++i)
      std::copy_n(images.data.begin() + static_cast<std::ptrdiff_t>(indices[i] * vol),
                  vol, out.data.begin() + static_cast<std::ptrdiff_t>(i * vol));
    return out;
  }

  std::vector<int> gatherLabels(const std::vector<std::size_t>& indices) const {
    std::vector<int> out;
    out.reserve(indices.size());
    for (auto i : indices) out.push_back(labels[i]);
    return out;
  }
};

inline std::uint64_t contentHash(const LabeledDataset& ds) {
  Fnv1a h;
  for (int d : ds.images.shape) h.value(d);
  h.range(ds.images.span());
  h.range(std::span<const int>(ds.labels));
  for (const auto& n : ds.classNames) h.text(n);
  return h.digest();
}

/// Checks the dataset invariants and stamps its provenance hash.
inline LabeledDataset sealDataset(LabeledDataset ds) {
  if (ds.images.rank() != 4)
    throw DataError("dataset images must be rank 4 [N,H,W,C]");
  if (ds.labels.empty()) throw DataError("dataset is empty");
  if (static_cast<std::size_t>(ds.images.dim(0)) != ds.labels.size())
    throw DataError("image count " + std::to_string(ds.images.dim(0)) +
                    " does not match label count " +
                    std::to_string(ds.labels.size()));
  for (int l : ds.labels)
    if (l < 0 || l >= ds.numClasses())
      throw DataError("label " + std::to_string(l) + " outside class list of size " +
                      std::to_string(ds.numClasses()));
  ds.provenanceHash = contentHash(ds);
  return ds;
}

}  // namespace cenas

#endif  // CENAS_DATASET_HPP_
