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

#ifndef CENAS_ADAPT_HPP_
#define CENAS_ADAPT_HPP_

#include <cstddef>
#include <numeric>
#include <string>
#include <variant>
#include <vector>

#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/rng.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

struct InsertConvEdit {
  int position = 1;  // the new conv is inserted before this layer
  Conv conv;
};
struct DeleteConvEdit {
  int index = 1;
  bool carryPool = false;
};
struct ResizeFiltersEdit {
  int index = 0;
  int filters = 1;
};
using StructuralEdit = std::variant<InsertConvEdit, DeleteConvEdit, ResizeFiltersEdit>;

inline GenomeEdit planEdit(const Genome& g, const StructuralEdit& edit) {
  const int n = static_cast<int>(g.layers.size());
  if (auto* ins = std::get_if<InsertConvEdit>(&edit)) {
    if (ins->position < 1 || ins->position > n)
      throw ComputeError("insert position " + std::to_string(ins->position) + " out of range");
    return planInsertConv(g, ins->position, ins->conv);
  }
  if (auto* del = std::get_if<DeleteConvEdit>(&edit)) {
    if (del->index < 0 || del->index >= n || !is<Conv>(g.layers[del->index]))
      throw ComputeError("layer " + std::to_string(del->index) + " is not a conv");
    if (del->index == 0) throw InvalidGenome(std::vector<Violation>{Violation{{0}, "the first conv cannot be deleted"}});
    return planDeleteConv(g, del->index, del->carryPool);
  }
  const auto& rs = std::get<ResizeFiltersEdit>(edit);
  if (rs.index < 0 || rs.index >= n || !is<Conv>(g.layers[rs.index]))
    throw ComputeError("layer " + std::to_string(rs.index) + " is not a conv");
  return planResizeFilters(g, rs.index, rs.filters);
}

/// How parameters are filled where an edit grows an axis.
struct AdaptOptions {
  /// false: zero-pad alpha and f (exactly function preserving for new filters).
  /// true: copy the existing slice nearest (L2) to a random He-initialised
  /// query, the weight-transfer rule used by NAS-T.
  bool nearestGrowth = false;
};

namespace detail {

inline std::vector<int> iotaMap(int n) {
  std::vector<int> m(static_cast<std::size_t>(n));
  std::iota(m.begin(), m.end(), 0);
  return m;
}

inline bool isIdentity(const std::vector<std::vector<int>>& maps,
                       const std::vector<int>& oldShape) {
  for (std::size_t a = 0; a < maps.size(); ++a) {
    if (static_cast<int>(maps[a].size()) != oldShape[a]) return false;
    for (std::size_t j = 0; j < maps[a].size(); ++j)
      if (maps[a][j] != static_cast<int>(j)) return false;
  }
  return true;
}

/// Restricts an incoming correspondence map to indices that exist in a
/// consumer's old input of size `oldSize`.
inline std::vector<int> restrictMap(const std::vector<int>& incoming, int newSize, int oldSize) {
  std::vector<int> m(static_cast<std::size_t>(newSize), -1);
  for (int j = 0; j < newSize; ++j) {
    int v = j < static_cast<int>(incoming.size()) ? incoming[j] : j;
    m[j] = (v >= 0 && v < oldSize) ? v : -1;
  }
  return m;
}

/// Applies the same per-axis gather to every term (viewing tensors as
/// `view`), then reshapes to `newShape`. Untouched params keep their storage.
inline ExpandedParam gatherParam(const ExpandedParam& p, const std::vector<int>& view,
                                 const std::vector<std::vector<int>>& maps,
                                 const std::vector<int>& newShape) {
  if (isIdentity(maps, view) && p.shape == newShape) return p;
  ExpandedParam out{newShape, {}};
  for (const auto& t : p.terms) {
    auto a = reshaped(gatherAxes(reshaped(*t.alpha, view), maps), newShape);
    auto f = reshaped(gatherAxes(reshaped(*t.f, view), maps), newShape);
    out.terms.push_back({share(std::move(a)), share(std::move(f)), t.sourceTag});
  }
  return out;
}

/// Fills the -1 entries of `map` (along `axis` of `weight`) with the index of
/// the slice nearest to a random query.
inline void fillNearest(std::vector<int>& map, const Tensor& weight, int axis, int fan,
                        RngStream& rng) {
  std::size_t sliceSize = weight.size() / static_cast<std::size_t>(weight.shape[axis]);
  for (auto& v : map) {
    if (v >= 0) continue;
    Tensor query = heUniform({static_cast<int>(sliceSize)}, fan, rng);
    v = nearestSlice(weight, axis, std::span<const float>(query.data));
  }
}

inline ExpandedParam freshTerm(Tensor f) { return singleTerm(share(std::move(f)), "random"); }

/// New conv params. With nearestGrowth each filter copies the existing conv
/// filter (from any parent, fitted to this kernel/channel shape) closest to a
/// random query; otherwise He-uniform.
inline std::vector<ExpandedParam> freshConv(const Conv& conv, const Shape3& in,
                                            const std::vector<const ExpandedModel*>& parents,
                                            RngStream& rng, const AdaptOptions& opt) {
  const int k = conv.kernel, fan = k * k * in.c;
  if (!opt.nearestGrowth) {
    auto params = freshParams(conv, in, rng);
    return {freshTerm(std::move(params[0])), freshTerm(std::move(params[1]))};
  }
  std::vector<Tensor> weights;
  std::vector<Tensor> biases;
  for (const auto* parent : parents)
    for (std::size_t j = 0; j < parent->genome.layers.size(); ++j) {
      auto* pc = std::get_if<Conv>(&parent->genome.layers[j]);
      if (!pc) continue;
      Tensor w = parent->params[j][0].materialize();
      weights.push_back(gatherAxes(w, {centredMap(pc->kernel, k), centredMap(pc->kernel, k),
                                       truncatingMap(w.dim(2), in.c), iotaMap(pc->filters)}));
      biases.push_back(parent->params[j][1].materialize());
    }
  Tensor w({k, k, in.c, conv.filters});
  Tensor b({conv.filters});
  for (int f = 0; f < conv.filters; ++f) {
    Tensor query = heUniform({k * k * in.c}, fan, rng);
    double best = std::numeric_limits<double>::infinity();
    std::size_t bestSrc = 0;
    int bestIdx = 0;
    for (std::size_t s = 0; s < weights.size(); ++s) {
      int idx = nearestSlice(weights[s], 3, std::span<const float>(query.data));
      auto slice = sliceAlong(weights[s], 3, idx);
      double d = 0.0;
      for (std::size_t e = 0; e < slice.size(); ++e) {
        double diff = static_cast<double>(slice[e]) - query.data[e];
        d += diff * diff;
      }
      if (d < best) {
        best = d;
        bestSrc = s;
        bestIdx = idx;
      }
    }
    auto slice = sliceAlong(weights[bestSrc], 3, bestIdx);
    for (std::size_t e = 0; e < slice.size(); ++e)
      w.data[e * static_cast<std::size_t>(conv.filters) + f] = slice[e];
    b.data[f] = biases[bestSrc].data[bestIdx];
  }
  return {freshTerm(std::move(w)), freshTerm(std::move(b))};
}

}  // namespace detail

/// Builds parameters for `edit.genome` from the parents named in its origins.
/// Surviving layers keep their terms; axes whose size changed are cropped or
/// grown per `opt`; fresh layers get one random term with alpha == 1.
inline ExpandedModel rebuild(const GenomeEdit& edit,
                             const std::vector<const ExpandedModel*>& parents,
                             RngStream& rng, const AdaptOptions& opt = {}) {
  requireValid(edit.genome);
  using detail::iotaMap;
  const Genome& g = edit.genome;
  const ShapePlan plan = planShapes(g);
  std::vector<ShapePlan> parentPlans;
  for (const auto* p : parents) parentPlans.push_back(planShapes(p->genome));

  ExpandedModel out{g, {}};
  // Correspondence of the current activation's channels (and spatial
  // positions before flatten) to indices in the old producer's output.
  std::vector<int> cMap = iotaMap(g.input.c);

  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    const LayerKind& kind = g.layers[i];
    const Shape3& in = plan.inputs[i];
    const LayerOrigin origin = edit.origins.at(i);
    std::vector<ExpandedParam> params;

    if (auto* conv = std::get_if<Conv>(&kind)) {
      if (origin.fresh()) {
        params = detail::freshConv(*conv, in, parents, rng, opt);
        cMap = iotaMap(conv->filters);
      } else {
        const ExpandedModel& parent = *parents.at(static_cast<std::size_t>(origin.parent));
        const auto& oldParams = parent.params[origin.layer];
        const Shape3& oldIn = parentPlans[origin.parent].inputs[origin.layer];
        const int oldF = std::get<Conv>(parent.genome.layers[origin.layer]).filters;
        const int k = conv->kernel;
        auto inMap = detail::restrictMap(cMap, in.c, oldIn.c);
        auto outMap = truncatingMap(oldF, conv->filters);
        if (opt.nearestGrowth) {
          Tensor w = oldParams[0].materialize();
          detail::fillNearest(inMap, w, 2, k * k * oldF, rng);
          detail::fillNearest(outMap, w, 3, k * k * oldIn.c, rng);
        }
        params.push_back(detail::gatherParam(oldParams[0], {k, k, oldIn.c, oldF},
                                             {iotaMap(k), iotaMap(k), inMap, outMap},
                                             {k, k, in.c, conv->filters}));
        params.push_back(detail::gatherParam(oldParams[1], {oldF}, {outMap}, {conv->filters}));
        cMap = outMap;
      }
    } else if (is<MaxPool>(kind) || is<Flatten>(kind)) {
      // channel correspondence passes through unchanged
    } else {
      const int units = plan.inputs.size() > i + 1 ? plan.inputs[i + 1].c : plan.output.c;
      if (origin.fresh()) {
        auto fresh = freshParams(kind, in, rng);
        params = {detail::freshTerm(std::move(fresh[0])), detail::freshTerm(std::move(fresh[1]))};
      } else {
        const ExpandedModel& parent = *parents.at(static_cast<std::size_t>(origin.parent));
        const auto& oldParams = parent.params[origin.layer];
        const ShapePlan& pp = parentPlans[origin.parent];
        const int oldUnits = oldParams[1].shape[0];
        const bool newStructured = i > 0 && is<Flatten>(g.layers[i - 1]);
        const bool oldStructured =
            origin.layer > 0 && is<Flatten>(parent.genome.layers[origin.layer - 1]);
        auto unitMap = truncatingMap(oldUnits, units);
        if (newStructured && oldStructured) {
          const Shape3& o = pp.inputs[origin.layer - 1];
          const Shape3& nw = plan.inputs[i - 1];
          auto chMap = detail::restrictMap(cMap, nw.c, o.c);
          if (opt.nearestGrowth) {
            Tensor w = reshaped(oldParams[0].materialize(), {o.h, o.w, o.c, oldUnits});
            detail::fillNearest(chMap, w, 2, o.h * o.w * oldUnits, rng);
          }
          params.push_back(detail::gatherParam(
              oldParams[0], {o.h, o.w, o.c, oldUnits},
              {truncatingMap(o.h, nw.h), truncatingMap(o.w, nw.w), chMap, unitMap},
              {static_cast<int>(in.volume()), units}));
        } else {
          const int oldIn = oldParams[0].shape[0];
          auto inMap = detail::restrictMap(cMap, static_cast<int>(in.volume()), oldIn);
          params.push_back(detail::gatherParam(oldParams[0], {oldIn, oldUnits},
                                               {inMap, unitMap},
                                               {static_cast<int>(in.volume()), units}));
        }
        params.push_back(detail::gatherParam(oldParams[1], {oldUnits}, {unitMap}, {units}));
      }
      cMap = iotaMap(units);
    }
    out.params.push_back(std::move(params));
  }
  return out;
}

/// Applies a structural edit, adapting parameters so the model stays
/// consistent. Throws InvalidGenome if the edit breaks a genome invariant.
inline ExpandedModel adaptParams(const ExpandedModel& em, const StructuralEdit& edit,
                                 RngStream& rng, const AdaptOptions& opt = {}) {
  return rebuild(planEdit(em.genome, edit), {&em}, rng, opt);
}

}  // namespace cenas

#endif  // CENAS_ADAPT_HPP_
