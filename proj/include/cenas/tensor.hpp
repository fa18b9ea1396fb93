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

#ifndef CENAS_TENSOR_HPP_
#define CENAS_TENSOR_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "cenas/error.hpp"

namespace cenas {

inline std::size_t shapeVolume(const std::vector<int>& shape) {
  std::size_t n = 1;
  for (int d : shape) n *= static_cast<std::size_t>(d);
  return n;
}

/// Dense row-major tensor. `shape` holds positive dimensions and
/// product(shape) == data.size().
template <class T>
struct BasicTensor {
  std::vector<int> shape;
  std::vector<T> data;

  BasicTensor() = default;
  explicit BasicTensor(std::vector<int> s, T value = T(0))
      : shape(std::move(s)), data(shapeVolume(shape), value) {}
  BasicTensor(std::vector<int> s, std::vector<T> d)
      : shape(std::move(s)), data(std::move(d)) {
    if (data.size() != shapeVolume(shape))
      throw ShapeError(-1, {static_cast<int>(shapeVolume(shape))},
                       {static_cast<int>(data.size())}, "tensor data size");
  }

  std::size_t size() const noexcept { return data.size(); }
  int rank() const noexcept { return static_cast<int>(shape.size()); }
  int dim(int axis) const { return shape.at(static_cast<std::size_t>(axis)); }

  T& operator[](std::size_t i) { return data[i]; }
  const T& operator[](std::size_t i) const { return data[i]; }

  std::span<T> span() noexcept { return data; }
  std::span<const T> span() const noexcept { return data; }

  friend bool operator==(const BasicTensor&, const BasicTensor&) = default;
};

using Tensor = BasicTensor<float>;

template <class To, class From>
BasicTensor<To> tensorCast(const BasicTensor<From>& t) {
  BasicTensor<To> out;
  out.shape = t.shape;
  out.data.assign(t.data.begin(), t.data.end());
  return out;
}

template <class T>
bool allFinite(const BasicTensor<T>& t) {
  return std::all_of(t.data.begin(), t.data.end(),
                     [](T v) { return std::isfinite(v); });
}

template <class T>
BasicTensor<T> reshaped(BasicTensor<T> t, std::vector<int> shape) {
  if (shapeVolume(shape) != t.size())
    throw ShapeError(-1, shape, t.shape, "reshape");
  t.shape = std::move(shape);
  return t;
}

/// Per-axis gather. `maps[a][j]` names the source index along axis `a` for
/// output index j, or -1 to fill with zero. The output shape is the map sizes.
template <class T>
BasicTensor<T> gatherAxes(const BasicTensor<T>& t,
                          const std::vector<std::vector<int>>& maps) {
  const int rank = t.rank();
  if (static_cast<int>(maps.size()) != rank)
    throw ShapeError(-1, {rank}, {static_cast<int>(maps.size())}, "gather rank");
  std::vector<int> outShape(rank);
  for (int a = 0; a < rank; ++a) outShape[a] = static_cast<int>(maps[a].size());
  BasicTensor<T> out(outShape);
  if (out.size() == 0) return out;

  std::vector<std::size_t> srcStride(rank, 1);
  for (int a = rank - 2; a >= 0; --a)
    srcStride[a] = srcStride[a + 1] * static_cast<std::size_t>(t.shape[a + 1]);

  // Walk output indices with an odometer; innermost axis is contiguous.
  std::vector<int> idx(rank, 0);
  const int last = rank - 1;
  const auto& innerMap = maps[last];
  std::size_t o = 0;
  while (true) {
    bool valid = true;
    std::size_t base = 0;
    for (int a = 0; a < last; ++a) {
      int s = maps[a][idx[a]];
      if (s < 0) { valid = false; break; }
      base += static_cast<std::size_t>(s) * srcStride[a];
    }
    for (std::size_t j = 0; j < innerMap.size(); ++j, ++o) {
      int s = innerMap[j];
      out.data[o] = (valid && s >= 0) ? t.data[base + static_cast<std::size_t>(s)] : T(0);
    }
    int a = last - 1;
    while (a >= 0) {
      if (++idx[a] < outShape[a]) break;
      idx[a] = 0;
      --a;
    }
    if (a < 0) break;
  }
  return out;
}

/// Index map that keeps the leading min(from, to) entries and zero-fills the
/// rest (crop when shrinking, trailing zero-pad when growing).
inline std::vector<int> truncatingMap(int from, int to) {
  std::vector<int> m(static_cast<std::size_t>(to), -1);
  for (int j = 0; j < std::min(from, to); ++j) m[j] = j;
  return m;
}

/// Like truncatingMap but aligns centres (used for kernel spatial axes).
inline std::vector<int> centredMap(int from, int to) {
  std::vector<int> m(static_cast<std::size_t>(to), -1);
  int offset = (from - to) / 2;
  for (int j = 0; j < to; ++j) {
    int s = j + offset;
    if (s >= 0 && s < from) m[j] = s;
  }
  return m;
}

template <class T>
BasicTensor<T> cropOrPad(const BasicTensor<T>& t, const std::vector<int>& shape) {
  std::vector<std::vector<int>> maps;
  for (std::size_t a = 0; a < shape.size(); ++a)
    maps.push_back(truncatingMap(t.shape[a], shape[a]));
  return gatherAxes(t, maps);
}

/// Extracts slice `i` along `axis` as a flat vector (other axes row-major).
template <class T>
std::vector<T> sliceAlong(const BasicTensor<T>& t, int axis, int i) {
  std::vector<std::vector<int>> maps;
  for (int a = 0; a < t.rank(); ++a) {
    if (a == axis) {
      maps.push_back({i});
    } else {
      std::vector<int> m(static_cast<std::size_t>(t.shape[a]));
      std::iota(m.begin(), m.end(), 0);
      maps.push_back(std::move(m));
    }
  }
  return gatherAxes(t, maps).data;
}

/// Index of the slice along `axis` with the smallest L2 distance to `query`.
/// Ties resolve to the lowest index.
template <class T>
int nearestSlice(const BasicTensor<T>& t, int axis, std::span<const T> query) {
  int best = -1;
  double bestDist = std::numeric_limits<double>::infinity();
  for (int i = 0; i < t.shape[axis]; ++i) {
    auto s = sliceAlong(t, axis, i);
    double d = 0.0;
    for (std::size_t k = 0; k < s.size(); ++k) {
      double diff = static_cast<double>(s[k]) - static_cast<double>(query[k]);
      d += diff * diff;
    }
    if (d < bestDist) {
      bestDist = d;
      best = i;
    }
  }
  return best;
}

}  // namespace cenas

#endif  // CENAS_TENSOR_HPP_
