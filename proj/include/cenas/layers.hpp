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

#ifndef CENAS_LAYERS_HPP_
#define CENAS_LAYERS_HPP_

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "cenas/error.hpp"

namespace cenas {

/// Activation shape. Flat activations use h = w = 1 with `flat` set.
struct Shape3 {
  int h = 0;
  int w = 0;
  int c = 0;
  bool flat = false;

  std::size_t volume() const {
    return static_cast<std::size_t>(h) * static_cast<std::size_t>(w) *
           static_cast<std::size_t>(c);
  }
  std::vector<int> dims() const {
    return flat ? std::vector<int>{c} : std::vector<int>{h, w, c};
  }
  friend bool operator==(const Shape3&, const Shape3&) = default;
};

/// Same-padded, stride-1 convolution followed by ReLU.
/// Weight layout is [kernel, kernel, inChannels, filters]; bias is [filters].
struct Conv {
  int filters = 0;
  int kernel = 5;
  friend bool operator==(const Conv&, const Conv&) = default;
};

/// Non-overlapping max pooling (stride == window).
struct MaxPool {
  int window = 2;
  friend bool operator==(const MaxPool&, const MaxPool&) = default;
};

struct Flatten {
  friend bool operator==(const Flatten&, const Flatten&) = default;
};

/// Fully connected layer followed by ReLU. Weight layout is [inDim, units].
struct Dense {
  int units = 0;
  friend bool operator==(const Dense&, const Dense&) = default;
};

/// Fully connected layer followed by softmax. Weight is [inDim, classes];
/// column j holds the weights of class j.
struct SoftmaxClassifier {
  int classes = 0;
  friend bool operator==(const SoftmaxClassifier&,
                         const SoftmaxClassifier&) = default;
};

using LayerKind = std::variant<Conv, MaxPool, Flatten, Dense, SoftmaxClassifier>;

template <class K>
bool is(const LayerKind& k) {
  return std::holds_alternative<K>(k);
}

inline bool hasParams(const LayerKind& k) {
  return is<Conv>(k) || is<Dense>(k) || is<SoftmaxClassifier>(k);
}

inline std::string layerName(const LayerKind& k) {
  if (auto* c = std::get_if<Conv>(&k))
    return "conv " + std::to_string(c->filters) + "@" +
           std::to_string(c->kernel) + "x" + std::to_string(c->kernel);
  if (auto* p = std::get_if<MaxPool>(&k))
    return "maxpool " + std::to_string(p->window) + "x" +
           std::to_string(p->window);
  if (is<Flatten>(k)) return "flatten";
  if (auto* d = std::get_if<Dense>(&k))
    return "dense " + std::to_string(d->units);
  return "softmax " + std::to_string(std::get<SoftmaxClassifier>(k).classes);
}

/// Checks the per-kind hyperparameter constraints. Returns an empty string
/// when valid, otherwise a description.
inline std::string kindViolation(const LayerKind& k) {
  if (auto* c = std::get_if<Conv>(&k)) {
    if (c->kernel != 3 && c->kernel != 5) return "conv kernel must be 3 or 5";
    if (c->filters < 1) return "conv needs at least one filter";
  } else if (auto* p = std::get_if<MaxPool>(&k)) {
    if (p->window < 1) return "pool window must be positive";
  } else if (auto* d = std::get_if<Dense>(&k)) {
    if (d->units < 1) return "dense needs at least one unit";
  } else if (auto* s = std::get_if<SoftmaxClassifier>(&k)) {
    if (s->classes < 2) return "classifier needs at least two classes";
  }
  return {};
}

/// Output shape of `k` applied to `in`. Throws ShapeError (tagged with
/// `layer`) when the layer cannot consume that input.
inline Shape3 outputShape(const LayerKind& k, const Shape3& in, int layer = -1) {
  if (auto* c = std::get_if<Conv>(&k)) {
    if (in.flat) throw ShapeError(layer, {0, 0, in.c}, in.dims(), "conv on flat input");
    return {in.h, in.w, c->filters, false};
  }
  if (auto* p = std::get_if<MaxPool>(&k)) {
    if (in.flat) throw ShapeError(layer, {0, 0, in.c}, in.dims(), "pool on flat input");
    Shape3 out{in.h / p->window, in.w / p->window, in.c, false};
    if (out.h < 1 || out.w < 1)
      throw ShapeError(layer, {p->window, p->window, in.c}, in.dims(),
                       "pool shrinks below 1x1");
    return out;
  }
  if (is<Flatten>(k)) return {1, 1, static_cast<int>(in.volume()), true};
  if (!in.flat) throw ShapeError(layer, {static_cast<int>(in.volume())}, in.dims(),
                                 "dense layer needs flat input");
  if (auto* d = std::get_if<Dense>(&k)) return {1, 1, d->units, true};
  return {1, 1, std::get<SoftmaxClassifier>(k).classes, true};
}

/// Parameter tensor shapes for `k` given its input shape; empty for
/// parameter-free layers.
inline std::vector<std::vector<int>> paramShapes(const LayerKind& k,
                                                 const Shape3& in) {
  if (auto* c = std::get_if<Conv>(&k))
    return {{c->kernel, c->kernel, in.c, c->filters}, {c->filters}};
  if (auto* d = std::get_if<Dense>(&k))
    return {{static_cast<int>(in.volume()), d->units}, {d->units}};
  if (auto* s = std::get_if<SoftmaxClassifier>(&k))
    return {{static_cast<int>(in.volume()), s->classes}, {s->classes}};
  return {};
}

inline std::size_t layerParamCount(const LayerKind& k, const Shape3& in) {
  std::size_t n = 0;
  for (const auto& s : paramShapes(k, in)) {
    std::size_t v = 1;
    for (int d : s) v *= static_cast<std::size_t>(d);
    n += v;
  }
  return n;
}

inline const char* paramName(std::size_t index) {
  return index == 0 ? "weight" : "bias";
}

}  // namespace cenas

#endif  // CENAS_LAYERS_HPP_
