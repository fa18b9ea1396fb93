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

#ifndef CENAS_EXPANSION_HPP_
#define CENAS_EXPANSION_HPP_

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <string>
#include <vector>

#include "cenas/dataset.hpp"
#include "cenas/error.hpp"
#include "cenas/genome.hpp"
#include "cenas/hash.hpp"
#include "cenas/runtime.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

inline constexpr float kAlphaMin = -2.0f;
inline constexpr float kAlphaMax = 2.0f;

/// Immutable tensors are shared between terms, models, and population members.
using TensorPtr = std::shared_ptr<const Tensor>;

inline TensorPtr share(Tensor t) { return std::make_shared<const Tensor>(std::move(t)); }

inline TensorPtr constantLike(const std::vector<int>& shape, float value) {
  return share(Tensor(shape, value));
}

/// One `alpha * f` product. alpha and f have the same shape; alpha elements
/// stay in [-2, 2].
struct ExpansionTerm {
  TensorPtr alpha;
  TensorPtr f;
  std::string sourceTag;
};

/// A parameter tensor represented as sum_i alpha_i (elementwise) f_i.
struct ExpandedParam {
  std::vector<int> shape;
  std::vector<ExpansionTerm> terms;

  Tensor materialize() const {
    Tensor out(shape);
    if (terms.empty()) return out;
    std::vector<double> acc(out.size(), 0.0);
    for (const auto& t : terms) {
      const auto& a = t.alpha->data;
      const auto& f = t.f->data;
      for (std::size_t i = 0; i < acc.size(); ++i)
        acc[i] += static_cast<double>(a[i]) * static_cast<double>(f[i]);
    }
    for (std::size_t i = 0; i < acc.size(); ++i) out.data[i] = static_cast<float>(acc[i]);
    return out;
  }
};

inline ExpandedParam singleTerm(TensorPtr f, std::string tag) {
  ExpandedParam p{f->shape, {}};
  p.terms.push_back({constantLike(f->shape, 1.0f), std::move(f), std::move(tag)});
  return p;
}

/// A genome whose parameters are all conceptual expansions.
struct ExpandedModel {
  Genome genome;
  std::vector<std::vector<ExpandedParam>> params;  // per layer, per tensor

  std::size_t termCount() const {
    std::size_t n = 0;
    for (const auto& l : params)
      for (const auto& p : l) n += p.terms.size();
    return n;
  }
};

/// Invariant violations of an expanded model (shape agreement with the
/// genome, non-empty term lists, alpha range). Empty means valid.
inline std::vector<std::string> expandedViolations(const ExpandedModel& em) {
  std::vector<std::string> out;
  for (const auto& v : validate(em.genome)) out.push_back("genome: " + v.message);
  if (!out.empty()) return out;
  auto plan = planShapes(em.genome);
  if (em.params.size() != em.genome.layers.size()) {
    out.push_back("param layer count mismatch");
    return out;
  }
  for (std::size_t i = 0; i < em.params.size(); ++i) {
    const auto& expected = plan.params[i];
    if (em.params[i].size() != expected.size()) {
      out.push_back("layer " + std::to_string(i) + ": wrong number of params");
      continue;
    }
    for (std::size_t p = 0; p < expected.size(); ++p) {
      const auto& ep = em.params[i][p];
      const std::string where = "layer " + std::to_string(i) + " " + paramName(p);
      if (ep.shape != expected[p])
        out.push_back(where + ": shape " + shapeToString(ep.shape) + " vs genome " +
                      shapeToString(expected[p]));
      if (ep.terms.empty()) out.push_back(where + ": no terms");
      for (std::size_t t = 0; t < ep.terms.size(); ++t) {
        const auto& term = ep.terms[t];
        if (!term.alpha || !term.f || term.alpha->shape != ep.shape || term.f->shape != ep.shape) {
          out.push_back(where + " term " + std::to_string(t) + ": alpha/f shape mismatch");
          continue;
        }
        for (float a : term.alpha->data)
          if (!(a >= kAlphaMin && a <= kAlphaMax)) {
            out.push_back(where + " term " + std::to_string(t) + ": alpha out of [-2, 2]");
            break;
          }
      }
    }
  }
  return out;
}

/// Collapses every parameter to sum_i alpha_i * f_i.
inline ConcreteModel materialize(const ExpandedModel& em) {
  auto plan = planShapes(em.genome);
  if (em.params.size() != em.genome.layers.size())
    throw ShapeError(-1, {static_cast<int>(em.genome.layers.size())},
                     {static_cast<int>(em.params.size())}, "expanded param layers");
  ConcreteModel m{em.genome.input, {}};
  for (std::size_t i = 0; i < em.params.size(); ++i) {
    BasicLayer<float> layer{em.genome.layers[i], {}};
    if (em.params[i].size() != plan.params[i].size())
      throw ShapeError(static_cast<int>(i), {static_cast<int>(plan.params[i].size())},
                       {static_cast<int>(em.params[i].size())}, "param count");
    for (std::size_t p = 0; p < em.params[i].size(); ++p) {
      const auto& ep = em.params[i][p];
      if (ep.shape != plan.params[i][p])
        throw ShapeError(static_cast<int>(i), plan.params[i][p], ep.shape, paramName(p));
      for (const auto& t : ep.terms)
        if (t.alpha->shape != ep.shape || t.f->shape != ep.shape)
          throw ShapeError(static_cast<int>(i), ep.shape, t.f->shape,
                           std::string(paramName(p)) + " term " + t.sourceTag);
      layer.params.push_back(ep.materialize());
    }
    m.layers.push_back(std::move(layer));
  }
  return m;
}

/// Every parameter becomes one term with alpha == 1 and f == the source tensor.
inline ExpandedModel liftIdentity(const ConcreteModel& source) {
  checkModel(source);
  ExpandedModel em{genomeOf(source), {}};
  for (std::size_t i = 0; i < source.layers.size(); ++i) {
    em.params.emplace_back();
    for (std::size_t p = 0; p < source.layers[i].params.size(); ++p)
      em.params.back().push_back(singleTerm(
          share(source.layers[i].params[p]),
          "src:L" + std::to_string(i) + ":" + paramName(p)));
  }
  return em;
}

enum class HeadHistogram {
  kArgmaxFrequency,  // fraction of images classified as each source class
  kMeanProbability,  // mean softmax output over the images
};

struct HeadConfig {
  HeadHistogram histogram = HeadHistogram::kArgmaxFrequency;
  /// Terms whose softmax alpha falls below this are dropped (then renormalized).
  double dropThreshold = 1e-3;
  /// In frequency mode, also keep source classes no image was assigned to.
  bool keepUnobservedClasses = false;
};

/// Per-target-class mixing weights over source classes.
struct HeadAlphas {
  std::vector<std::vector<double>> histogram;  // [target][source]
  std::vector<std::vector<double>> alphas;     // [target][source], rows sum to 1
};

inline std::vector<double> softmax(const std::vector<double>& x) {
  double mx = *std::max_element(x.begin(), x.end());
  std::vector<double> out(x.size());
  double sum = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) sum += (out[i] = std::exp(x[i] - mx));
  for (auto& v : out) v /= sum;
  return out;
}

inline HeadAlphas classHeadAlphas(const ConcreteModel& source,
                                  const LabeledDataset& target,
                                  const HeadConfig& cfg = {}) {
  checkModel(source);
  const int nSrc = source.numClasses();
  const int nTgt = target.numClasses();
  HeadAlphas out;
  Tensor probs = forward(source, target.images);
  for (int c = 0; c < nTgt; ++c) {
    auto idx = target.indicesOfClass(c);
    if (idx.empty())
      throw DataError("target class '" + target.classNames[c] + "' has no samples");
    std::vector<double> hist(static_cast<std::size_t>(nSrc), 0.0);
    for (auto i : idx) {
      const float* row = probs.data.data() + i * static_cast<std::size_t>(nSrc);
      if (cfg.histogram == HeadHistogram::kArgmaxFrequency) {
        hist[static_cast<std::size_t>(std::max_element(row, row + nSrc) - row)] += 1.0;
      } else {
        for (int j = 0; j < nSrc; ++j) hist[j] += row[j];
      }
    }
    for (auto& h : hist) h /= static_cast<double>(idx.size());
    auto alpha = softmax(hist);
    double kept = 0.0;
    for (int j = 0; j < nSrc; ++j) {
      const bool unobserved = cfg.histogram == HeadHistogram::kArgmaxFrequency &&
                              hist[j] == 0.0 && !cfg.keepUnobservedClasses;
      if (unobserved || alpha[j] < cfg.dropThreshold) alpha[j] = 0.0;
      kept += alpha[j];
    }
    for (auto& a : alpha) a /= kept;
    out.histogram.push_back(std::move(hist));
    out.alphas.push_back(std::move(alpha));
  }
  return out;
}

/// Target model whose classifier columns are softmax-weighted combinations of
/// source classifier columns; every other layer is the identity lift.
inline ExpandedModel approximateClassHead(const ConcreteModel& source,
                                          const LabeledDataset& target,
                                          const HeadConfig& cfg = {}) {
  if (source.layers.empty() || !is<SoftmaxClassifier>(source.layers.back().kind))
    throw ComputeError("source model has no softmax classifier head");
  if (target.height() != source.input.h || target.width() != source.input.w ||
      target.channels() != source.input.c)
    throw ShapeError(0, source.input.dims(),
                     {target.height(), target.width(), target.channels()}, "target images");
  const HeadAlphas ha = classHeadAlphas(source, target, cfg);
  const int nSrc = source.numClasses();
  const int nTgt = target.numClasses();

  ExpandedModel em = liftIdentity(source);
  const std::size_t head = em.genome.layers.size() - 1;
  em.genome.layers[head] = SoftmaxClassifier{nTgt};
  const Tensor& w = source.layers[head].params[0];
  const Tensor& b = source.layers[head].params[1];
  const int inDim = w.dim(0);

  ExpandedParam weight{{inDim, nTgt}, {}};
  ExpandedParam bias{{nTgt}, {}};
  for (int j = 0; j < nSrc; ++j) {
    bool used = false;
    for (int c = 0; c < nTgt; ++c) used = used || ha.alphas[c][j] > 0.0;
    if (!used) continue;
    Tensor fw({inDim, nTgt}), aw({inDim, nTgt});
    Tensor fb({nTgt}), ab({nTgt});
    for (int c = 0; c < nTgt; ++c) {
      const float a = static_cast<float>(ha.alphas[c][j]);
      for (int r = 0; r < inDim; ++r) {
        fw.data[static_cast<std::size_t>(r) * nTgt + c] =
            w.data[static_cast<std::size_t>(r) * nSrc + j];
        aw.data[static_cast<std::size_t>(r) * nTgt + c] = a;
      }
      fb.data[c] = b.data[j];
      ab.data[c] = a;
    }
    const std::string tag = "head:class=" + std::to_string(j);
    weight.terms.push_back({share(std::move(aw)), share(std::move(fw)), tag});
    bias.terms.push_back({share(std::move(ab)), share(std::move(fb)), tag});
  }
  em.params[head] = {std::move(weight), std::move(bias)};
  return em;
}

/// Clips every alpha element into [-2, 2]. Tensors already in range are
/// shared unchanged.
inline ExpandedModel clampAlphas(ExpandedModel em) {
  for (auto& layer : em.params)
    for (auto& p : layer)
      for (auto& t : p.terms) {
        const auto& a = t.alpha->data;
        bool inRange = std::all_of(a.begin(), a.end(),
                                   [](float v) { return v >= kAlphaMin && v <= kAlphaMax; });
        if (inRange) continue;
        Tensor c = *t.alpha;
        for (auto& v : c.data) v = std::clamp(v, kAlphaMin, kAlphaMax);
        t.alpha = share(std::move(c));
      }
  return em;
}

/// Digest over genome structure and every alpha/f payload.
inline std::uint64_t modelHash(const ExpandedModel& em) {
  Fnv1a h;
  h.value(em.genome.input.h).value(em.genome.input.w).value(em.genome.input.c);
  for (const auto& k : em.genome.layers) h.text(layerName(k));
  for (const auto& layer : em.params)
    for (const auto& p : layer) {
      h.value(p.terms.size());
      for (const auto& t : p.terms) {
        h.range(t.alpha->span());
        h.range(t.f->span());
      }
    }
  return h.digest();
}

inline std::uint64_t modelHash(const ConcreteModel& m) {
  Fnv1a h;
  h.value(m.input.h).value(m.input.w).value(m.input.c);
  for (const auto& l : m.layers) {
    h.text(layerName(l.kind));
    for (const auto& p : l.params) h.range(p.span());
  }
  return h.digest();
}

}  // namespace cenas

#endif  // CENAS_EXPANSION_HPP_
