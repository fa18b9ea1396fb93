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

#ifndef CENAS_OPERATORS_HPP_
#define CENAS_OPERATORS_HPP_

#include <algorithm>
#include <array>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include <nlohmann/json.hpp>

#include "cenas/adapt.hpp"
#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/rng.hpp"

namespace cenas {

enum class MutationKind {
  kAddConvLayer,
  kDeleteConvLayer,
  kAddFilters,
  kDeleteFilters,
  kScaleAlpha,
  kReplaceF,
  kAddTerm,
};

inline constexpr std::array<MutationKind, 7> kAllMutations = {
    MutationKind::kAddConvLayer, MutationKind::kDeleteConvLayer,
    MutationKind::kAddFilters,   MutationKind::kDeleteFilters,
    MutationKind::kScaleAlpha,   MutationKind::kReplaceF,
    MutationKind::kAddTerm};

/// The architecture-only subset used by the NAS baselines.
inline constexpr std::array<MutationKind, 4> kStructuralMutations = {
    MutationKind::kAddConvLayer, MutationKind::kDeleteConvLayer,
    MutationKind::kAddFilters, MutationKind::kDeleteFilters};

inline bool isStructural(MutationKind k) {
  return static_cast<int>(k) < static_cast<int>(MutationKind::kScaleAlpha);
}

inline const char* mutationName(MutationKind k) {
  switch (k) {
    case MutationKind::kAddConvLayer: return "AddConvLayer";
    case MutationKind::kDeleteConvLayer: return "DeleteConvLayer";
    case MutationKind::kAddFilters: return "AddFilters";
    case MutationKind::kDeleteFilters: return "DeleteFilters";
    case MutationKind::kScaleAlpha: return "ScaleAlpha";
    case MutationKind::kReplaceF: return "ReplaceF";
    case MutationKind::kAddTerm: return "AddTerm";
  }
  return "?";
}

/// Source-model tensors grouped by layer role, the raw material for ReplaceF
/// and AddTerm.
class SourcePool {
 public:
  enum class Role { kConv, kDense, kHead };

  static Role roleOf(const LayerKind& k) {
    if (is<Conv>(k)) return Role::kConv;
    if (is<Dense>(k)) return Role::kDense;
    return Role::kHead;
  }

  SourcePool() = default;
  explicit SourcePool(const ConcreteModel& source) {
    for (std::size_t i = 0; i < source.layers.size(); ++i) {
      const auto& l = source.layers[i];
      if (!hasParams(l.kind)) continue;
      for (std::size_t p = 0; p < l.params.size(); ++p)
        entries_[{roleOf(l.kind), p}].push_back(
            {share(l.params[p]), "src:L" + std::to_string(i) + ":" + paramName(p)});
    }
  }

  bool empty() const { return entries_.empty(); }

  struct Entry {
    TensorPtr tensor;
    std::string tag;
  };

  const std::vector<Entry>* candidates(Role role, std::size_t param) const {
    auto it = entries_.find({role, param});
    return it == entries_.end() || it->second.empty() ? nullptr : &it->second;
  }

 private:
  std::map<std::pair<Role, std::size_t>, std::vector<Entry>> entries_;
};

/// Crops or zero-pads a source tensor to `shape`. Conv kernels are aligned on
/// their centres; every other axis keeps its leading entries.
inline Tensor fitTensor(const Tensor& t, const std::vector<int>& shape, bool convWeight) {
  if (t.shape == shape) return t;
  if (convWeight && t.rank() == 4 && shape.size() == 4)
    return gatherAxes(t, {centredMap(t.shape[0], shape[0]), centredMap(t.shape[1], shape[1]),
                          truncatingMap(t.shape[2], shape[2]),
                          truncatingMap(t.shape[3], shape[3])});
  if (t.rank() == static_cast<int>(shape.size())) return cropOrPad(t, shape);
  // different rank: treat both as flat
  Tensor flat = reshaped(t, {static_cast<int>(t.size())});
  return reshaped(cropOrPad(flat, {static_cast<int>(shapeVolume(shape))}), shape);
}

struct OperatorConfig {
  std::shared_ptr<const SourcePool> pool;
  /// ReplaceF/AddTerm draw fresh random f instead of source tensors.
  bool randomF = false;
  /// Growth policy for structural edits (zero-pad for CENAS).
  AdaptOptions adapt;
  /// Also insert a pooling stage after an added conv when space allows.
  bool poolWithAdd = false;
  std::vector<int> addConvFilters{32, 64};
  std::vector<int> addConvKernels{3, 5};
  std::vector<int> filterCounts{2, 4, 8, 16, 32};
};

/// One line of the mutation/crossover lineage log.
struct MutationEvent {
  int generation = -1;
  long long member = -1;
  std::string op;
  int layer = -1;
  long long paramDelta = 0;

  nlohmann::json toJson() const {
    return {{"generation", generation}, {"member", member}, {"op", op},
            {"layer", layer}, {"param_delta", paramDelta}};
  }
};

struct Mutated {
  ExpandedModel model;
  MutationEvent event;
};

/// A mutation whose preconditions did not hold; not an error.
struct NoOpMutation {
  MutationKind kind;
  std::string reason;
};

using MutationOutcome = std::variant<Mutated, NoOpMutation>;

inline long long paramDelta(const Genome& before, const Genome& after) {
  return static_cast<long long>(countParams(after)) - static_cast<long long>(countParams(before));
}

/// Multiplies one term's alpha by `scalar`, clamping into [-2, 2].
inline ExpandedModel scaleAlpha(ExpandedModel em, int layer, int param, int term,
                                double scalar) {
  auto& t = em.params.at(layer).at(param).terms.at(term);
  Tensor a = *t.alpha;
  for (auto& v : a.data)
    v = std::clamp(static_cast<float>(static_cast<double>(v) * scalar), kAlphaMin, kAlphaMax);
  t.alpha = share(std::move(a));
  return em;
}

inline ExpandedModel replaceF(ExpandedModel em, int layer, int param, int term, TensorPtr f,
                              std::string tag) {
  auto& p = em.params.at(layer).at(param);
  if (f->shape != p.shape) throw ShapeError(layer, p.shape, f->shape, "replacement f");
  p.terms.at(term).f = std::move(f);
  p.terms.at(term).sourceTag = std::move(tag);
  return em;
}

inline ExpandedModel addTerm(ExpandedModel em, int layer, int param, ExpansionTerm term) {
  auto& p = em.params.at(layer).at(param);
  if (term.f->shape != p.shape || term.alpha->shape != p.shape)
    throw ShapeError(layer, p.shape, term.f->shape, "added term");
  p.terms.push_back(std::move(term));
  return em;
}

namespace detail {

template <class C>
auto pick(const C& c, RngStream& rng) -> decltype(c[0]) {
  return c[rng.index(c.size())];
}

inline std::vector<int> paramLayers(const Genome& g) {
  std::vector<int> idx;
  for (std::size_t i = 0; i < g.layers.size(); ++i)
    if (hasParams(g.layers[i])) idx.push_back(static_cast<int>(i));
  return idx;
}

/// A replacement f for (layer, param): a shape-fitted source tensor of the
/// same role, or a fresh random tensor.
inline std::pair<TensorPtr, std::string> drawF(const ExpandedModel& em, int layer, int param,
                                               RngStream& rng, const OperatorConfig& cfg) {
  const auto& kind = em.genome.layers[layer];
  const auto& shape = em.params[layer][param].shape;
  const auto* cands = (cfg.pool && !cfg.randomF)
                          ? cfg.pool->candidates(SourcePool::roleOf(kind), param)
                          : nullptr;
  if (cands) {
    const auto& e = pick(*cands, rng);
    if (e.tensor->shape == shape) return {e.tensor, e.tag};
    return {share(fitTensor(*e.tensor, shape, param == 0 && is<Conv>(kind))), e.tag + ":fit"};
  }
  auto plan = planShapes(em.genome);
  const int fan = fanIn(kind, plan.inputs[layer]);
  return {share(heUniform(shape, fan, rng)), "random"};
}

inline MutationOutcome structural(const ExpandedModel& em, MutationKind kind,
                                  const GenomeEdit& edit, int layer, RngStream& rng,
                                  const OperatorConfig& cfg) {
  if (!validate(edit.genome).empty())
    return NoOpMutation{kind, "edit would produce an invalid genome"};
  RngStream fill = rng.split();
  ExpandedModel out = rebuild(edit, {&em}, fill, cfg.adapt);
  MutationEvent ev{-1, -1, mutationName(kind), layer, paramDelta(em.genome, out.genome)};
  return Mutated{std::move(out), ev};
}

}  // namespace detail

/// Applies one mutation of the given kind. Returns NoOpMutation when its
/// preconditions fail (e.g. deleting from a single-conv genome). The input
/// model is never modified.
inline MutationOutcome mutate(const ExpandedModel& em, MutationKind kind, RngStream& rng,
                              const OperatorConfig& cfg = {}) {
  const Genome& g = em.genome;
  const auto convs = convIndices(g);
  switch (kind) {
    case MutationKind::kAddConvLayer: {
      const int first = convs.front();
      const int flatten = flattenIndex(g);
      std::vector<int> positions;
      for (int p = first + 1; p <= flatten; ++p) positions.push_back(p);
      if (positions.empty()) return NoOpMutation{kind, "no insertion point"};
      const int pos = detail::pick(positions, rng);
      Conv conv{detail::pick(cfg.addConvFilters, rng), detail::pick(cfg.addConvKernels, rng)};
      GenomeEdit edit = planInsertConv(g, pos, conv);
      if (cfg.poolWithAdd) {
        GenomeEdit withPool = edit;
        withPool.genome.layers.insert(withPool.genome.layers.begin() + pos + 1, MaxPool{2});
        withPool.origins.insert(withPool.origins.begin() + pos + 1, LayerOrigin{});
        if (validate(withPool.genome).empty()) edit = std::move(withPool);
      }
      return detail::structural(em, kind, edit, pos, rng, cfg);
    }
    case MutationKind::kDeleteConvLayer: {
      if (convs.size() < 2) return NoOpMutation{kind, "only the first conv remains"};
      std::vector<int> cands(convs.begin() + 1, convs.end());
      const int idx = detail::pick(cands, rng);
      return detail::structural(em, kind, planDeleteConv(g, idx, ownsFollowingPool(g, idx)),
                                idx, rng, cfg);
    }
    case MutationKind::kAddFilters: {
      if (convs.size() < 2) return NoOpMutation{kind, "no conv besides the first"};
      std::vector<int> cands(convs.begin() + 1, convs.end());
      const int idx = detail::pick(cands, rng);
      const int add = detail::pick(cfg.filterCounts, rng);
      const int filters = std::get<Conv>(g.layers[idx]).filters + add;
      return detail::structural(em, kind, planResizeFilters(g, idx, filters), idx, rng, cfg);
    }
    case MutationKind::kDeleteFilters: {
      const int smallest = *std::min_element(cfg.filterCounts.begin(), cfg.filterCounts.end());
      std::vector<int> cands;
      for (int c : convs)
        if (std::get<Conv>(g.layers[c]).filters > smallest) cands.push_back(c);
      if (cands.empty()) return NoOpMutation{kind, "no conv can lose filters and keep one"};
      const int idx = detail::pick(cands, rng);
      const int have = std::get<Conv>(g.layers[idx]).filters;
      std::vector<int> counts;
      for (int c : cfg.filterCounts)
        if (c < have) counts.push_back(c);
      const int drop = detail::pick(counts, rng);
      return detail::structural(em, kind, planResizeFilters(g, idx, have - drop), idx, rng, cfg);
    }
    case MutationKind::kScaleAlpha: {
      const int layer = detail::pick(detail::paramLayers(g), rng);
      const int param = static_cast<int>(rng.index(em.params[layer].size()));
      const int term = static_cast<int>(rng.index(em.params[layer][param].terms.size()));
      const double s = rng.uniform(-2.0, 2.0);
      return Mutated{scaleAlpha(em, layer, param, term, s),
                     {-1, -1, mutationName(kind), layer, 0}};
    }
    case MutationKind::kReplaceF: {
      const int layer = detail::pick(detail::paramLayers(g), rng);
      const int param = static_cast<int>(rng.index(em.params[layer].size()));
      const int term = static_cast<int>(rng.index(em.params[layer][param].terms.size()));
      auto [f, tag] = detail::drawF(em, layer, param, rng, cfg);
      return Mutated{replaceF(em, layer, param, term, std::move(f), std::move(tag)),
                     {-1, -1, mutationName(kind), layer, 0}};
    }
    case MutationKind::kAddTerm: {
      const int layer = detail::pick(detail::paramLayers(g), rng);
      const int param = static_cast<int>(rng.index(em.params[layer].size()));
      auto [f, tag] = detail::drawF(em, layer, param, rng, cfg);
      const float a = static_cast<float>(rng.uniform(kAlphaMin, kAlphaMax));
      ExpansionTerm term{constantLike(f->shape, a), std::move(f), std::move(tag)};
      return Mutated{addTerm(em, layer, param, std::move(term)),
                     {-1, -1, mutationName(kind), layer, 0}};
    }
  }
  return NoOpMutation{kind, "unknown kind"};
}

/// Draws a kind uniformly from `allowed`, re-drawing among the remaining
/// kinds on NoOp. Throws if every allowed kind is a no-op for this model.
inline Mutated randomMutation(const ExpandedModel& em, std::vector<MutationKind> allowed,
                              RngStream& rng, const OperatorConfig& cfg = {}) {
  if (allowed.empty()) throw ConfigError("no mutation kinds allowed");
  std::string reasons;
  while (!allowed.empty()) {
    const std::size_t i = rng.index(allowed.size());
    const MutationKind kind = allowed[i];
    auto outcome = mutate(em, kind, rng, cfg);
    if (auto* m = std::get_if<Mutated>(&outcome)) return std::move(*m);
    reasons += std::string(" ") + mutationName(kind) + ": " + std::get<NoOpMutation>(outcome).reason + ";";
    allowed.erase(allowed.begin() + static_cast<std::ptrdiff_t>(i));
  }
  throw ComputeError("every allowed mutation is a no-op:" + reasons);
}

/// Splice genome: a up to and including conv `convA`, then b after conv
/// `convB`. Parameters at the seam are cropped/padded (or nearest-copied).
inline ExpandedModel crossoverAt(const ExpandedModel& a, const ExpandedModel& b, int convA,
                                 int convB, RngStream& rng, const AdaptOptions& opt = {}) {
  GenomeEdit edit = planSplice(a.genome, convA + 1, b.genome, convB + 1);
  return rebuild(edit, {&a, &b}, rng, opt);
}

struct CrossoverResult {
  ExpandedModel child;
  MutationEvent event;
};

/// Single-point crossover. Which parent leads is drawn uniformly; the split
/// pair is drawn uniformly among conv boundaries that give a valid child (the
/// leading parent is copied if none does).
inline CrossoverResult crossover(const ExpandedModel& a, const ExpandedModel& b,
                                 RngStream& rng, const OperatorConfig& cfg = {}) {
  const bool swap = rng.bernoulli(0.5);
  const ExpandedModel& lead = swap ? b : a;
  const ExpandedModel& tail = swap ? a : b;
  std::vector<std::pair<int, int>> splits;
  for (int ca : convIndices(lead.genome))
    for (int cb : convIndices(tail.genome))
      if (validate(planSplice(lead.genome, ca + 1, tail.genome, cb + 1).genome).empty())
        splits.emplace_back(ca, cb);
  RngStream fill = rng.split();
  if (splits.empty()) return {lead, {-1, -1, "Crossover", -1, 0}};
  auto [ca, cb] = splits[rng.index(splits.size())];
  ExpandedModel child = crossoverAt(lead, tail, ca, cb, fill, cfg.adapt);
  return {child, {-1, -1, "Crossover", ca, paramDelta(lead.genome, child.genome)}};
}

/// NAS-T crossover on concrete models: parent weights are inherited, and
/// any grown seam slice copies its L2-nearest existing filter.
inline ConcreteModel transferCrossover(const ConcreteModel& a, const ConcreteModel& b,
                                       RngStream& rng) {
  OperatorConfig cfg;
  cfg.adapt.nearestGrowth = true;
  return materialize(crossover(liftIdentity(a), liftIdentity(b), rng, cfg).child);
}

/// Structural mutation of a concrete model. With `transfer` new filters copy
/// their nearest existing filter; otherwise the caller is expected to
/// re-initialise the weights.
inline std::pair<ConcreteModel, MutationEvent> mutateConcrete(
    const ConcreteModel& m, std::vector<MutationKind> allowed, RngStream& rng, bool transfer) {
  OperatorConfig cfg;
  cfg.adapt.nearestGrowth = transfer;
  for (auto k : allowed)
    if (!isStructural(k)) throw ConfigError("concrete models accept structural mutations only");
  auto r = randomMutation(liftIdentity(m), std::move(allowed), rng, cfg);
  return std::make_pair(materialize(r.model), r.event);
}

}  // namespace cenas

#endif  // CENAS_OPERATORS_HPP_
