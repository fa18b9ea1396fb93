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

#ifndef CENAS_GENOME_HPP_
#define CENAS_GENOME_HPP_

#include <cstddef>
#include <iomanip>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "cenas/error.hpp"
#include "cenas/layers.hpp"
#include "cenas/runtime.hpp"

namespace cenas {

/// Architecture genotype: conv/pool blocks, flatten, dense stack, classifier.
/// The first layer is a Conv and is never deleted.
struct Genome {
  Shape3 input;
  std::vector<LayerKind> layers;

  int numClasses() const {
    return std::get<SoftmaxClassifier>(layers.back()).classes;
  }
  friend bool operator==(const Genome&, const Genome&) = default;
};

template <class T>
Genome genomeOf(const BasicModel<T>& m) {
  return {m.input, layerKinds(m)};
}

/// Widths for the default seed architecture.
struct CifarNetWidths {
  int conv1 = 64;
  int conv2 = 64;
  int kernel = 5;
  int dense = 384;
};

/// Conv -> MaxPool -> Conv -> MaxPool -> Flatten -> Dense -> Softmax.
inline Genome cifarNetSeed(const Shape3& input, int numClasses,
                           const CifarNetWidths& widths = {}) {
  if (numClasses < 2) throw ConfigError("classifier needs at least two classes");
  if (input.h < 4 || input.w < 4 || input.c < 1)
    throw ConfigError("input " + std::to_string(input.h) + "x" + std::to_string(input.w) +
                      " is too small for two pooling stages");
  return {input,
          {Conv{widths.conv1, widths.kernel}, MaxPool{2}, Conv{widths.conv2, widths.kernel},
           MaxPool{2}, Flatten{}, Dense{widths.dense}, SoftmaxClassifier{numClasses}}};
}

struct Violation {
  std::vector<int> layers;
  std::string message;
};

/// Every violated structural invariant; empty means valid.
inline std::vector<Violation> validate(const Genome& g) {
  std::vector<Violation> out;
  const int n = static_cast<int>(g.layers.size());
  if (g.input.h < 1 || g.input.w < 1 || g.input.c < 1 || g.input.flat)
    out.push_back({{}, "input shape must be a positive HxWxC image"});
  if (n == 0) {
    out.push_back({{}, "genome has no layers"});
    return out;
  }
  if (!is<Conv>(g.layers[0])) out.push_back({{0}, "first layer must be a conv"});
  for (int i = 0; i < n; ++i) {
    auto msg = kindViolation(g.layers[i]);
    if (!msg.empty()) out.push_back({{i}, msg});
  }

  int flatten = -1;
  int flattenCount = 0;
  for (int i = 0; i < n; ++i)
    if (is<Flatten>(g.layers[i])) {
      if (flatten < 0) flatten = i;
      ++flattenCount;
    }
  if (flattenCount != 1)
    out.push_back({{}, "expected exactly one flatten, found " + std::to_string(flattenCount)});

  int classifiers = 0;
  for (int i = 0; i < n; ++i)
    if (is<SoftmaxClassifier>(g.layers[i])) {
      ++classifiers;
      if (i != n - 1) out.push_back({{i}, "classifier must be the last layer"});
    }
  if (classifiers != 1)
    out.push_back({{}, "expected exactly one classifier, found " + std::to_string(classifiers)});

  if (flatten >= 0) {
    for (int i = flatten + 1; i < n; ++i)
      if (is<Conv>(g.layers[i]) || is<MaxPool>(g.layers[i]))
        out.push_back({{flatten, i}, layerName(g.layers[i]) + " at " + std::to_string(i) +
                                         " appears after flatten at " + std::to_string(flatten)});
    for (int i = 0; i < flatten; ++i)
      if (is<Dense>(g.layers[i]) || is<SoftmaxClassifier>(g.layers[i]))
        out.push_back({{i, flatten}, "fully connected layer before flatten"});
  }

  // Spatial algebra: every intermediate shape must stay at least 1x1.
  Shape3 s = g.input;
  for (int i = 0; i < n && (flatten < 0 || i < flatten); ++i) {
    if (auto* p = std::get_if<MaxPool>(&g.layers[i])) {
      if (p->window < 1) break;
      s.h /= p->window;
      s.w /= p->window;
      if (s.h < 1 || s.w < 1) {
        out.push_back({{i}, "pooling at layer " + std::to_string(i) +
                                " reduces spatial size to " + std::to_string(s.h) + "x" +
                                std::to_string(s.w)});
        break;
      }
    }
  }
  return out;
}

/// Raised when an operation would produce a genome that fails validate().
class InvalidGenome : public ComputeError {
 public:
  explicit InvalidGenome(std::vector<Violation> violations)
      : ComputeError(describe(violations)), violations_(std::move(violations)) {}
  const std::vector<Violation>& violations() const noexcept { return violations_; }

 private:
  static std::string describe(const std::vector<Violation>& v) {
    std::string msg = "invalid genome:";
    for (const auto& x : v) msg += " [" + x.message + "]";
    return msg;
  }
  std::vector<Violation> violations_;
};

inline void requireValid(const Genome& g) {
  auto v = validate(g);
  if (!v.empty()) throw InvalidGenome(std::move(v));
}

/// Per-layer shapes derived from a genome.
struct ShapePlan {
  std::vector<Shape3> inputs;   // input shape of each layer
  Shape3 output;                // classifier output
  std::vector<std::vector<std::vector<int>>> params;  // per layer, per tensor
};

inline ShapePlan planShapes(const Genome& g) {
  ShapePlan plan;
  auto chain = shapeChain(g.input, g.layers);
  plan.inputs.assign(chain.begin(), chain.end() - 1);
  plan.output = chain.back();
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    plan.params.push_back(paramShapes(g.layers[i], plan.inputs[i]));
  return plan;
}

inline std::size_t countParams(const Genome& g) {
  requireValid(g);
  auto plan = planShapes(g);
  std::size_t n = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    n += layerParamCount(g.layers[i], plan.inputs[i]);
  return n;
}

inline std::vector<int> convIndices(const Genome& g) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (is<Conv>(g.layers[i])) idx.push_back(static_cast<int>(i));
  return idx;
}

inline int flattenIndex(const Genome& g) {
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (is<Flatten>(g.layers[i])) return static_cast<int>(i);
  return -1;
}

/// One layer per line with shapes and parameter counts.
inline std::string dumpGenome(const Genome& g) {
  auto plan = planShapes(g);
  auto fmt = [](const Shape3& s) {
    return s.flat ? std::to_string(s.c)
                  : std::to_string(s.h) + "x" + std::to_string(s.w) + "x" + std::to_string(s.c);
  };
  std::ostringstream os;
  os << "input " << fmt(g.input) << '\n';
  std::size_t total = 0;
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const Shape3& out = i + 1 < g.layers.size() ? plan.inputs[i + 1] : plan.output;
    std::size_t p = layerParamCount(g.layers[i], plan.inputs[i]);
    total += p;
    os << '[' << i << "] " << std::left << std::setw(14) << layerName(g.layers[i])
       << " in " << std::setw(10) << fmt(plan.inputs[i]) << " out " << std::setw(10)
       << fmt(out) << " params " << p << '\n';
  }
  os << "total params " << total << '\n';
  return os.str();
}

/// Where a layer of an edited genome came from: (parent, layer index), or
/// parent == -1 for a newly created layer.
struct LayerOrigin {
  int parent = -1;
  int layer = -1;
  bool fresh() const { return parent < 0; }
};

/// A proposed genome plus the provenance of each of its layers.
struct GenomeEdit {
  Genome genome;
  std::vector<LayerOrigin> origins;
};

inline GenomeEdit identityEdit(const Genome& g) {
  GenomeEdit e{g, {}};
  for (std::size_t i = 0; i < g.layers.size(); ++i) e.origins.push_back({0, static_cast<int>(i)});
  return e;
}

/// Inserts a conv before layer `position`. No pooling stage is added.
inline GenomeEdit planInsertConv(const Genome& g, int position, Conv conv) {
  GenomeEdit e = identityEdit(g);
  e.genome.layers.insert(e.genome.layers.begin() + position, conv);
  e.origins.insert(e.origins.begin() + position, LayerOrigin{});
  return e;
}

/// True when the conv at `index` is the only conv between the previous pool
/// (or the input) and the pool right after it.
inline bool ownsFollowingPool(const Genome& g, int index) {
  const int n = static_cast<int>(g.layers.size());
  if (index + 1 >= n || !is<MaxPool>(g.layers[index + 1])) return false;
  return index == 0 || !is<Conv>(g.layers[index - 1]);
}

/// Deletes the conv at `index`; with `carryPool` the pool right after it goes
/// too.
inline GenomeEdit planDeleteConv(const Genome& g, int index, bool carryPool) {
  GenomeEdit e = identityEdit(g);
  int count = 1;
  if (carryPool && index + 1 < static_cast<int>(g.layers.size()) &&
      is<MaxPool>(g.layers[index + 1]))
    count = 2;
  e.genome.layers.erase(e.genome.layers.begin() + index,
                        e.genome.layers.begin() + index + count);
  e.origins.erase(e.origins.begin() + index, e.origins.begin() + index + count);
  return e;
}

inline GenomeEdit planResizeFilters(const Genome& g, int index, int filters) {
  GenomeEdit e = identityEdit(g);
  std::get<Conv>(e.genome.layers[index]).filters = filters;
  return e;
}

/// a.layers[0, cutA) ++ b.layers[cutB, end). Parent 0 is `a`, parent 1 is `b`.
inline GenomeEdit planSplice(const Genome& a, int cutA, const Genome& b, int cutB) {
  GenomeEdit e;
  e.genome.input = a.input;
  for (int i = 0; i < cutA; ++i) {
    e.genome.layers.push_back(a.layers[i]);
    e.origins.push_back({0, i});
  }
  for (int i = cutB; i < static_cast<int>(b.layers.size()); ++i) {
    e.genome.layers.push_back(b.layers[i]);
    e.origins.push_back({1, i});
  }
  return e;
}

}  // namespace cenas

#endif  // CENAS_GENOME_HPP_
