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

// Shared helpers for the test suites: random model/genome generators and
// plain scalar-loop reference implementations used as oracles.

#ifndef CENAS_TESTS_SUPPORT_HPP_
#define CENAS_TESTS_SUPPORT_HPP_

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <limits>
#include <string>
#include <vector>

#include "cenas.hpp"

namespace cenas::testing {

inline std::filesystem::path freshDir(const std::string& name) {
  std::filesystem::path p = std::filesystem::path(CENAS_TEST_TMP) / name;
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline std::filesystem::path fixture(const std::string& rel) {
  return std::filesystem::path(CENAS_FIXTURE_DIR) / rel;
}

inline Tensor randomTensor(const std::vector<int>& shape, RngStream& rng, double lo = -1.0,
                           double hi = 1.0) {
  Tensor t(shape);
  for (auto& v : t.data) v = static_cast<float>(rng.uniform(lo, hi));
  return t;
}

inline Tensor randomImages(int n, const Shape3& s, RngStream& rng) {
  return randomTensor({n, s.h, s.w, s.c}, rng, 0.0, 1.0);
}

/// A random valid genome: 1-3 conv layers (optionally pooled), 0-2 dense.
inline Genome randomGenome(RngStream& rng, const Shape3& input, int classes, int maxFilters = 6,
                           int maxUnits = 8) {
  Genome g{input, {}};
  const int convs = 1 + static_cast<int>(rng.index(3));
  int h = input.h, w = input.w;
  for (int i = 0; i < convs; ++i) {
    g.layers.push_back(Conv{1 + static_cast<int>(rng.index(static_cast<std::size_t>(maxFilters))),
                            rng.bernoulli(0.5) ? 3 : 5});
    if (h >= 2 && w >= 2 && rng.bernoulli(0.5)) {
      g.layers.push_back(MaxPool{2});
      h /= 2;
      w /= 2;
    }
  }
  g.layers.push_back(Flatten{});
  const int dense = static_cast<int>(rng.index(3));
  for (int i = 0; i < dense; ++i)
    g.layers.push_back(Dense{1 + static_cast<int>(rng.index(static_cast<std::size_t>(maxUnits)))});
  g.layers.push_back(SoftmaxClassifier{classes});
  return g;
}

inline ConcreteModel randomModel(RngStream& rng, const Shape3& input, int classes,
                                 int maxFilters = 6, int maxUnits = 8) {
  Genome g = randomGenome(rng, input, classes, maxFilters, maxUnits);
  ConcreteModel m = initModel(g.input, g.layers, rng);
  // non-zero biases so bias paths are exercised
  for (auto& l : m.layers)
    if (l.params.size() == 2)
      for (auto& b : l.params[1].data) b = static_cast<float>(rng.uniform(-0.1, 0.1));
  return m;
}

/// Reference forward pass in double with direct loops. `pattern` receives
/// one entry per ReLU unit (0/1) and per pooling output (argmax offset), so
/// callers can detect activation-pattern changes.
struct OracleResult {
  std::vector<std::vector<double>> probs;
  std::vector<std::vector<double>> logits;
  std::vector<int> pattern;
};

template <class T>
OracleResult oracleForward(const BasicModel<T>& m, const BasicTensor<T>& batch) {
  OracleResult out;
  const int n = batch.dim(0);
  for (int s = 0; s < n; ++s) {
    int h = m.input.h, w = m.input.w, c = m.input.c;
    std::vector<double> x(static_cast<std::size_t>(h * w * c));
    for (std::size_t i = 0; i < x.size(); ++i) x[i] = batch.data[static_cast<std::size_t>(s) * x.size() + i];
    std::vector<double> logits;
    for (const auto& layer : m.layers) {
      if (auto* conv = std::get_if<Conv>(&layer.kind)) {
        const int k = conv->kernel, f = conv->filters, pad = k / 2;
        const auto& W = layer.params[0].data;
        const auto& B = layer.params[1].data;
        std::vector<double> y(static_cast<std::size_t>(h * w * f));
        for (int oy = 0; oy < h; ++oy)
          for (int ox = 0; ox < w; ++ox)
            for (int of = 0; of < f; ++of) {
              double acc = B[static_cast<std::size_t>(of)];
              for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                  const int iy = oy + ky - pad, ix = ox + kx - pad;
                  if (iy < 0 || iy >= h || ix < 0 || ix >= w) continue;
                  for (int ic = 0; ic < c; ++ic)
                    acc += x[static_cast<std::size_t>((iy * w + ix) * c + ic)] *
                           W[static_cast<std::size_t>(((ky * k + kx) * c + ic) * f + of)];
                }
              out.pattern.push_back(acc > 0);
              y[static_cast<std::size_t>((oy * w + ox) * f + of)] = acc > 0 ? acc : 0.0;
            }
        x = std::move(y);
        c = f;
      } else if (std::holds_alternative<MaxPool>(layer.kind)) {
        const int oh = h / 2, ow = w / 2;
        std::vector<double> y(static_cast<std::size_t>(oh * ow * c));
        for (int oy = 0; oy < oh; ++oy)
          for (int ox = 0; ox < ow; ++ox)
            for (int ch = 0; ch < c; ++ch) {
              double best = -std::numeric_limits<double>::infinity();
              int arg = 0;
              for (int d = 0; d < 4; ++d) {
                const double v =
                    x[static_cast<std::size_t>(((oy * 2 + d / 2) * w + ox * 2 + d % 2) * c + ch)];
                if (v > best) {
                  best = v;
                  arg = d;
                }
              }
              out.pattern.push_back(arg);
              y[static_cast<std::size_t>((oy * ow + ox) * c + ch)] = best;
            }
        x = std::move(y);
        h = oh;
        w = ow;
      } else if (std::holds_alternative<Flatten>(layer.kind)) {
        c = h * w * c;
        h = w = 1;
      } else {
        const bool head = std::holds_alternative<SoftmaxClassifier>(layer.kind);
        const int units = head ? std::get<SoftmaxClassifier>(layer.kind).classes
                               : std::get<Dense>(layer.kind).units;
        const auto& W = layer.params[0].data;
        const auto& B = layer.params[1].data;
        std::vector<double> y(static_cast<std::size_t>(units));
        for (int u = 0; u < units; ++u) {
          double acc = B[static_cast<std::size_t>(u)];
          for (int i = 0; i < c; ++i)
            acc += x[static_cast<std::size_t>(i)] * W[static_cast<std::size_t>(i * units + u)];
          if (!head) out.pattern.push_back(acc > 0);
          y[static_cast<std::size_t>(u)] = head || acc > 0 ? acc : 0.0;
        }
        x = std::move(y);
        c = units;
        if (head) logits = x;
      }
    }
    double mx = *std::max_element(logits.begin(), logits.end()), z = 0.0;
    std::vector<double> p(logits.size());
    for (std::size_t i = 0; i < p.size(); ++i) z += p[i] = std::exp(logits[i] - mx);
    for (auto& v : p) v /= z;
    out.logits.push_back(logits);
    out.probs.push_back(p);
  }
  return out;
}

template <class T>
double oracleLoss(const BasicModel<T>& m, const BasicTensor<T>& batch, const std::vector<int>& labels) {
  auto r = oracleForward(m, batch);
  double l = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    l -= std::log(r.probs[i][static_cast<std::size_t>(labels[i])]);
  return l / static_cast<double>(labels.size());
}

/// Balanced accuracy by explicit grouping: samples are bucketed per class
/// first, then each bucket is scored on its own.
inline double bruteForceBalancedAccuracy(const ConcreteModel& m, const LabeledDataset& d) {
  std::vector<std::vector<std::size_t>> groups(static_cast<std::size_t>(d.numClasses()));
  for (std::size_t i = 0; i < d.size(); ++i) groups[static_cast<std::size_t>(d.labels[i])].push_back(i);
  double sum = 0.0;
  for (std::size_t c = 0; c < groups.size(); ++c) {
    auto r = oracleForward(m, d.gather(groups[c]));
    std::size_t hit = 0;
    for (const auto& p : r.probs)
      hit += static_cast<std::size_t>(std::max_element(p.begin(), p.end()) - p.begin()) == c;
    sum += static_cast<double>(hit) / static_cast<double>(groups[c].size());
  }
  return sum / static_cast<double>(groups.size());
}

/// Random labelled dataset with every class present at least once.
inline LabeledDataset randomDataset(RngStream& rng, int n, const Shape3& s, int classes) {
  LabeledDataset d;
  d.images = randomImages(n, s, rng);
  for (int i = 0; i < n; ++i)
    d.labels.push_back(i < classes ? i : static_cast<int>(rng.index(static_cast<std::size_t>(classes))));
  for (int c = 0; c < classes; ++c) d.classNames.push_back("c" + std::to_string(c));
  return sealDataset(std::move(d));
}

inline double maxAbsDiff(const Tensor& a, const Tensor& b) {
  double d = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    d = std::max(d, std::abs(static_cast<double>(a.data[i]) - b.data[i]));
  return d;
}

}  // namespace cenas::testing

#endif  // CENAS_TESTS_SUPPORT_HPP_
