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

#ifndef CENAS_SEARCH_HPP_
#define CENAS_SEARCH_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "cenas/dataset.hpp"
#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/operators.hpp"
#include "cenas/parallel.hpp"
#include "cenas/rng.hpp"
#include "cenas/runtime.hpp"

namespace cenas {

enum class Strategy { kCenas, kRandomWalk, kGreedy, kNas, kNasTransfer };

inline const char* strategyName(Strategy s) {
  switch (s) {
    case Strategy::kCenas: return "CENAS";
    case Strategy::kRandomWalk: return "R-CENAS";
    case Strategy::kGreedy: return "G-CENAS";
    case Strategy::kNas: return "NAS";
    case Strategy::kNasTransfer: return "NAS-T";
  }
  return "?";
}

inline Strategy parseStrategy(const std::string& s) {
  for (auto k : {Strategy::kCenas, Strategy::kRandomWalk, Strategy::kGreedy, Strategy::kNas,
                 Strategy::kNasTransfer})
    if (s == strategyName(k)) return k;
  throw ConfigError("unknown strategy '" + s + "'");
}

struct SearchConfig {
  int popSize = 10;
  /// Generations for CENAS/NAS, walk steps for R-CENAS, iterations for G-CENAS.
  int generations = 100;
  double mutationRate = 0.3;
  Strategy strategy = Strategy::kCenas;
  /// Gradient epochs applied to each new member during NAS/NAS-T search.
  int perGenTrainEpochs = 0;
  int finalTrainEpochs = 30;
  int outputTopK = 5;
  int greedyNeighbors = 10;
  /// Break fitness ties by fewer parameters before member id.
  bool paramTiebreak = true;
  int batchSize = 32;
  OptimizerConfig optimizer;
  std::uint64_t seed = 0;

  void validate() const {
    const bool crosses = strategy == Strategy::kCenas || strategy == Strategy::kNas ||
                         strategy == Strategy::kNasTransfer;
    if (popSize < 1 || (crosses && popSize < 2))
      throw ConfigError("popSize must be at least 2 for crossover strategies");
    if (generations < 0) throw ConfigError("generations must be non-negative");
    if (!(mutationRate >= 0.0 && mutationRate <= 1.0))
      throw ConfigError("mutationRate must be a probability");
    if (perGenTrainEpochs < 0 || finalTrainEpochs < 0)
      throw ConfigError("epoch counts must be non-negative");
    if (outputTopK < 1) throw ConfigError("outputTopK must be positive");
    if (greedyNeighbors < 1) throw ConfigError("greedyNeighbors must be positive");
    if (batchSize < 1) throw ConfigError("batchSize must be positive");
  }
};

/// Unweighted mean of per-class accuracies over the dataset's classes.
inline double fitness(const ConcreteModel& model, const LabeledDataset& data) {
  if (model.numClasses() != data.numClasses())
    throw ShapeError(static_cast<int>(model.layers.size()) - 1, {data.numClasses()},
                     {model.numClasses()}, "classifier width vs target classes");
  auto counts = data.classCounts();
  for (std::size_t c = 0; c < counts.size(); ++c)
    if (counts[c] == 0) throw DataError("class '" + data.classNames[c] + "' has no samples");
  auto acc = perClassAccuracy(model, data);
  double score = 0.0;
  for (double a : acc) score += a;
  return score / static_cast<double>(acc.size());
}

inline double fitness(const ExpandedModel& model, const LabeledDataset& data) {
  return fitness(materialize(model), data);
}

/// A population member. CENAS-family members carry an expanded model; NAS
/// members carry trained concrete weights.
struct ScoredMember {
  long long id = 0;
  std::optional<ExpandedModel> expanded;
  std::optional<ConcreteModel> concrete;
  double fitness = 0.0;
  std::size_t params = 0;
  std::vector<MutationEvent> lineage;

  ConcreteModel model() const { return concrete ? *concrete : materialize(*expanded); }
  Genome genome() const { return concrete ? genomeOf(*concrete) : expanded->genome; }
  std::uint64_t hash() const { return concrete ? modelHash(*concrete) : modelHash(*expanded); }
};

struct GenerationStats {
  int generation = 0;
  double best = 0.0;
  double mean = 0.0;
  double min = 0.0;
  std::size_t bestParams = 0;
  double seconds = 0.0;
};

struct SearchResult {
  Strategy strategy = Strategy::kCenas;
  std::vector<ScoredMember> top;
  std::vector<GenerationStats> history;
  std::vector<MutationEvent> events;
  /// Model-epochs of gradient training spent during search.
  std::uint64_t gradientEpochs = 0;
};

/// Resumable state of a CENAS run.
struct SearchState {
  int generation = 0;
  RngStream rng;
  long long nextId = 0;
  std::vector<ScoredMember> population;
  std::vector<GenerationStats> history;
  std::vector<MutationEvent> events;
};

struct SearchHooks {
  ParallelFor parallel = serialFor;
  /// Called after every completed generation with the current state.
  std::function<void(const SearchState&)> onGeneration;
};

namespace detail {

class FitnessCache {
 public:
  /// Fills member.fitness for every member, evaluating unseen models through
  /// the parallel hook. Results are stored by index.
  void evaluate(std::vector<ScoredMember>& members, const LabeledDataset& data,
                const ParallelFor& parallel) {
    std::vector<std::uint64_t> keys(members.size());
    std::vector<std::size_t> todo;
    for (std::size_t i = 0; i < members.size(); ++i) {
      keys[i] = members[i].hash();
      auto it = cache_.find(keys[i]);
      if (it != cache_.end()) {
        members[i].fitness = it->second;
      } else {
        todo.push_back(i);
      }
    }
    std::vector<double> results(todo.size());
    parallel(todo.size(), [&](std::size_t t) {
      results[t] = fitness(members[todo[t]].model(), data);
    });
    for (std::size_t t = 0; t < todo.size(); ++t) {
      members[todo[t]].fitness = results[t];
      cache_[keys[todo[t]]] = results[t];
    }
    for (auto& m : members) m.params = countParams(m.genome());
  }

 private:
  std::unordered_map<std::uint64_t, double> cache_;
};

inline bool better(const ScoredMember& a, const ScoredMember& b, bool paramTiebreak) {
  if (a.fitness != b.fitness) return a.fitness > b.fitness;
  if (paramTiebreak && a.params != b.params) return a.params < b.params;
  return a.id < b.id;
}

inline void rank(std::vector<ScoredMember>& members, bool paramTiebreak) {
  std::stable_sort(members.begin(), members.end(),
                   [&](const ScoredMember& a, const ScoredMember& b) {
                     return better(a, b, paramTiebreak);
                   });
}

inline GenerationStats stats(const std::vector<ScoredMember>& pop, int generation,
                             double seconds) {
  GenerationStats s{generation, pop.front().fitness, 0.0, pop.front().fitness,
                    pop.front().params, seconds};
  for (const auto& m : pop) {
    s.mean += m.fitness;
    s.min = std::min(s.min, m.fitness);
    s.best = std::max(s.best, m.fitness);
  }
  s.mean /= static_cast<double>(pop.size());
  return s;
}

inline std::vector<ScoredMember> topK(std::vector<ScoredMember> members, int k,
                                      bool paramTiebreak) {
  rank(members, paramTiebreak);
  if (members.size() > static_cast<std::size_t>(k)) members.resize(static_cast<std::size_t>(k));
  return members;
}

inline std::vector<MutationKind> allKinds() {
  return {kAllMutations.begin(), kAllMutations.end()};
}

inline std::vector<MutationKind> structuralKinds() {
  return {kStructuralMutations.begin(), kStructuralMutations.end()};
}

using Clock = std::chrono::steady_clock;

inline double secondsSince(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

}  // namespace detail

/// Initial CENAS state: the seed plus popSize - 1 single-mutation variants.
inline SearchState initialCenasState(const ExpandedModel& seed, const LabeledDataset& target,
                                     const SearchConfig& cfg, const OperatorConfig& ops,
                                     const SearchHooks& hooks,
                                     const std::vector<MutationKind>& kinds) {
  SearchState st;
  st.rng = RngStream(cfg.seed);
  st.population.push_back({st.nextId++, seed, std::nullopt, 0.0, 0, {}});
  while (static_cast<int>(st.population.size()) < cfg.popSize) {
    auto m = randomMutation(seed, kinds, st.rng, ops);
    m.event.generation = 0;
    m.event.member = st.nextId;
    st.events.push_back(m.event);
    st.population.push_back({st.nextId++, std::move(m.model), std::nullopt, 0.0, 0, {m.event}});
  }
  detail::FitnessCache cache;
  cache.evaluate(st.population, target, hooks.parallel);
  detail::rank(st.population, cfg.paramTiebreak);
  st.history.push_back(detail::stats(st.population, 0, 0.0));
  return st;
}

/// The CENAS evolutionary loop. Fitness is evaluated on materialized models
/// with no gradient training. Pass `resume` to continue a checkpointed run.
inline SearchResult runCENAS(const ExpandedModel& seed, const LabeledDataset& target,
                             const SearchConfig& cfg, const OperatorConfig& ops = {},
                             const SearchHooks& hooks = {},
                             std::optional<SearchState> resume = std::nullopt,
                             std::vector<MutationKind> kinds = detail::allKinds()) {
  cfg.validate();
  auto t0 = detail::Clock::now();
  SearchState st = resume ? std::move(*resume)
                          : initialCenasState(seed, target, cfg, ops, hooks, kinds);
  detail::FitnessCache cache;
  while (st.generation < cfg.generations) {
    const int gen = st.generation + 1;
    const std::size_t parents = st.population.size();
    st.population.reserve(2 * parents);
    // crossover doubles the population; parents stay
    for (std::size_t k = 0; k < parents; ++k) {
      const auto& a = st.population[st.rng.index(parents)];
      const auto& b = st.population[st.rng.index(parents)];
      auto cx = crossover(*a.expanded, *b.expanded, st.rng, ops);
      cx.event.generation = gen;
      cx.event.member = st.nextId;
      st.events.push_back(cx.event);
      st.population.push_back({st.nextId++, std::move(cx.child), std::nullopt, 0.0, 0, {cx.event}});
    }
    // population[0] is the current elite and is never mutated in place
    for (std::size_t i = 1; i < st.population.size(); ++i) {
      if (!st.rng.bernoulli(cfg.mutationRate)) continue;
      auto m = randomMutation(*st.population[i].expanded, kinds, st.rng, ops);
      m.event.generation = gen;
      m.event.member = st.nextId;
      st.events.push_back(m.event);
      auto lineage = st.population[i].lineage;
      lineage.push_back(m.event);
      st.population[i] = {st.nextId++, std::move(m.model), std::nullopt, 0.0, 0, std::move(lineage)};
    }
    cache.evaluate(st.population, target, hooks.parallel);
    detail::rank(st.population, cfg.paramTiebreak);
    st.population.resize(static_cast<std::size_t>(cfg.popSize));
    st.generation = gen;
    st.history.push_back(detail::stats(st.population, gen, detail::secondsSince(t0)));
    if (hooks.onGeneration) hooks.onGeneration(st);
  }
  SearchResult r;
  r.strategy = Strategy::kCenas;
  r.top = detail::topK(st.population, cfg.outputTopK, cfg.paramTiebreak);
  r.history = std::move(st.history);
  r.events = std::move(st.events);
  return r;
}

/// R-CENAS: a single chain of random mutations; every visited model is scored
/// and the best outputTopK are returned.
inline SearchResult runRandomWalk(const ExpandedModel& seed, const LabeledDataset& target,
                                  const SearchConfig& cfg, const OperatorConfig& ops = {},
                                  const SearchHooks& hooks = {}) {
  cfg.validate();
  auto t0 = detail::Clock::now();
  RngStream rng(cfg.seed);
  SearchResult r;
  r.strategy = Strategy::kRandomWalk;
  std::vector<ScoredMember> visited{{0, seed, std::nullopt, 0.0, 0, {}}};
  for (int step = 1; step <= cfg.generations; ++step) {
    auto m = randomMutation(*visited.back().expanded, detail::allKinds(), rng, ops);
    m.event.generation = step;
    m.event.member = step;
    r.events.push_back(m.event);
    visited.push_back({step, std::move(m.model), std::nullopt, 0.0, 0, {m.event}});
  }
  detail::FitnessCache cache;
  cache.evaluate(visited, target, hooks.parallel);
  double best = -1.0;
  for (const auto& v : visited) {
    best = std::max(best, v.fitness);
    r.history.push_back({static_cast<int>(v.id), best, v.fitness, v.fitness, v.params,
                         detail::secondsSince(t0)});
  }
  r.top = detail::topK(std::move(visited), cfg.outputTopK, cfg.paramTiebreak);
  return r;
}

/// G-CENAS: hill climbing over greedyNeighbors random mutations per step.
/// Returns the last outputTopK distinct models on the trajectory.
inline SearchResult runGreedy(const ExpandedModel& seed, const LabeledDataset& target,
                              const SearchConfig& cfg, const OperatorConfig& ops = {},
                              const SearchHooks& hooks = {}) {
  cfg.validate();
  auto t0 = detail::Clock::now();
  RngStream rng(cfg.seed);
  SearchResult r;
  r.strategy = Strategy::kGreedy;
  detail::FitnessCache cache;
  long long nextId = 0;
  std::vector<ScoredMember> current{{nextId++, seed, std::nullopt, 0.0, 0, {}}};
  cache.evaluate(current, target, hooks.parallel);
  std::vector<ScoredMember> trajectory{current.front()};
  r.history.push_back({0, current[0].fitness, current[0].fitness, current[0].fitness,
                       current[0].params, 0.0});
  for (int it = 1; it <= cfg.generations; ++it) {
    std::vector<ScoredMember> neighbors;
    for (int k = 0; k < cfg.greedyNeighbors; ++k) {
      auto m = randomMutation(*current[0].expanded, detail::allKinds(), rng, ops);
      m.event.generation = it;
      m.event.member = nextId;
      neighbors.push_back({nextId++, std::move(m.model), std::nullopt, 0.0, 0, {m.event}});
    }
    cache.evaluate(neighbors, target, hooks.parallel);
    double mean = current[0].fitness, lo = current[0].fitness;
    std::size_t best = neighbors.size();
    for (std::size_t k = 0; k < neighbors.size(); ++k) {
      mean += neighbors[k].fitness;
      lo = std::min(lo, neighbors[k].fitness);
      if (neighbors[k].fitness > (best == neighbors.size() ? current[0].fitness
                                                           : neighbors[best].fitness))
        best = k;
    }
    if (best < neighbors.size()) {
      r.events.push_back(neighbors[best].lineage.back());
      current[0] = std::move(neighbors[best]);
    }
    trajectory.push_back(current[0]);
    r.history.push_back({it, current[0].fitness, mean / (cfg.greedyNeighbors + 1.0), lo,
                         current[0].params, detail::secondsSince(t0)});
  }
  std::unordered_set<long long> seen;
  for (auto it = trajectory.rbegin();
       it != trajectory.rend() && static_cast<int>(r.top.size()) < cfg.outputTopK; ++it)
    if (seen.insert(it->id).second) r.top.push_back(*it);
  return r;
}

/// Source-domain starting point for NAS-T: source weights with a classifier
/// resized to the target classes. Columns whose class name exists in the
/// source keep their weights; the rest are freshly initialised.
inline ConcreteModel transferSeed(const ConcreteModel& source,
                                  const std::vector<std::string>& sourceClasses,
                                  const std::vector<std::string>& targetClasses,
                                  RngStream& rng) {
  ConcreteModel m = source;
  auto& head = m.layers.back();
  const Tensor& w = head.params[0];
  const Tensor& b = head.params[1];
  const int inDim = w.dim(0), nSrc = w.dim(1), nTgt = static_cast<int>(targetClasses.size());
  Tensor fresh = heUniform({inDim, nTgt}, inDim, rng);
  Tensor nb({nTgt});
  for (int c = 0; c < nTgt; ++c) {
    auto it = std::find(sourceClasses.begin(), sourceClasses.end(), targetClasses[c]);
    if (it == sourceClasses.end()) continue;
    const int j = static_cast<int>(it - sourceClasses.begin());
    if (j >= nSrc) continue;
    for (int r = 0; r < inDim; ++r)
      fresh.data[static_cast<std::size_t>(r) * nTgt + c] =
          w.data[static_cast<std::size_t>(r) * nSrc + j];
    nb.data[c] = b.data[j];
  }
  head.kind = SoftmaxClassifier{nTgt};
  head.params = {std::move(fresh), std::move(nb)};
  checkModel(m);
  return m;
}

/// NAS (transfer == false) and NAS-T (transfer == true). Members are
/// concrete models trained perGenTrainEpochs whenever they change; NAS
/// re-initialises weights on every structural change, NAS-T inherits them.
/// `start` is the seed genome instantiated from scratch (NAS) or the
/// transferSeed of the source model (NAS-T).
inline SearchResult runNAS(const ConcreteModel& start, const LabeledDataset& target,
                           const SearchConfig& cfg, bool transfer,
                           const SearchHooks& hooks = {}) {
  cfg.validate();
  auto t0 = detail::Clock::now();
  RngStream rng(cfg.seed);
  RngStream initRng(cfg.seed ^ 0x5eedULL);
  RngStream trainRng(cfg.seed ^ 0x7a11ULL);
  const auto kinds = detail::structuralKinds();
  SearchResult r;
  r.strategy = transfer ? Strategy::kNasTransfer : Strategy::kNas;
  long long nextId = 0;

  auto instantiate = [&](const ConcreteModel& m) {
    return transfer ? m : initModel(m.input, layerKinds(m), initRng);
  };
  // Trains the listed members in place (parallel over members).
  auto trainMembers = [&](std::vector<ScoredMember>& pop, const std::vector<std::size_t>& idx) {
    std::vector<std::uint64_t> seeds;
    for (std::size_t k = 0; k < idx.size(); ++k) seeds.push_back(trainRng.next());
    if (cfg.perGenTrainEpochs == 0) return;
    hooks.parallel(idx.size(), [&](std::size_t k) {
      TrainConfig tc{cfg.perGenTrainEpochs, cfg.batchSize, cfg.optimizer, seeds[k]};
      pop[idx[k]].concrete = train(*pop[idx[k]].concrete, target, tc);
    });
    r.gradientEpochs += static_cast<std::uint64_t>(cfg.perGenTrainEpochs) * idx.size();
  };

  std::vector<ScoredMember> pop;
  pop.push_back({nextId++, std::nullopt, instantiate(start), 0.0, 0, {}});
  while (static_cast<int>(pop.size()) < cfg.popSize) {
    auto [m, ev] = mutateConcrete(start, kinds, rng, transfer);
    ev.generation = 0;
    ev.member = nextId;
    r.events.push_back(ev);
    pop.push_back({nextId++, std::nullopt, instantiate(m), 0.0, 0, {ev}});
  }
  {
    std::vector<std::size_t> all(pop.size());
    std::iota(all.begin(), all.end(), 0);
    trainMembers(pop, all);
  }
  detail::FitnessCache cache;
  cache.evaluate(pop, target, hooks.parallel);
  detail::rank(pop, cfg.paramTiebreak);
  r.history.push_back(detail::stats(pop, 0, detail::secondsSince(t0)));

  for (int gen = 1; gen <= cfg.generations; ++gen) {
    const std::size_t parents = pop.size();
    pop.reserve(2 * parents);
    std::vector<std::size_t> changed;
    for (std::size_t k = 0; k < parents; ++k) {
      const auto& a = *pop[rng.index(parents)].concrete;
      const auto& b = *pop[rng.index(parents)].concrete;
      OperatorConfig oc;
      oc.adapt.nearestGrowth = transfer;
      auto cx = crossover(liftIdentity(a), liftIdentity(b), rng, oc);
      cx.event.generation = gen;
      cx.event.member = nextId;
      r.events.push_back(cx.event);
      changed.push_back(pop.size());
      pop.push_back({nextId++, std::nullopt, instantiate(materialize(cx.child)), 0.0, 0, {cx.event}});
    }
    for (std::size_t i = 1; i < pop.size(); ++i) {
      if (!rng.bernoulli(cfg.mutationRate)) continue;
      auto [m, ev] = mutateConcrete(*pop[i].concrete, kinds, rng, transfer);
      ev.generation = gen;
      ev.member = nextId;
      r.events.push_back(ev);
      auto lineage = pop[i].lineage;
      lineage.push_back(ev);
      pop[i] = {nextId++, std::nullopt, instantiate(m), 0.0, 0, std::move(lineage)};
      if (std::find(changed.begin(), changed.end(), i) == changed.end()) changed.push_back(i);
    }
    std::sort(changed.begin(), changed.end());
    trainMembers(pop, changed);
    cache.evaluate(pop, target, hooks.parallel);
    detail::rank(pop, cfg.paramTiebreak);
    pop.resize(static_cast<std::size_t>(cfg.popSize));
    r.history.push_back(detail::stats(pop, gen, detail::secondsSince(t0)));
  }
  r.top = detail::topK(std::move(pop), cfg.outputTopK, cfg.paramTiebreak);
  return r;
}

/// NAS from a bare genome: every member starts from fresh weights.
inline SearchResult runNAS(const Genome& genomeSeed, const LabeledDataset& target,
                           const SearchConfig& cfg, const SearchHooks& hooks = {}) {
  requireValid(genomeSeed);
  RngStream init(cfg.seed);
  return runNAS(initModel(genomeSeed.input, genomeSeed.layers, init), target, cfg, false, hooks);
}

struct FinalizedModel {
  long long id = 0;
  ConcreteModel model;
  double trainFitness = 0.0;
  std::size_t params = 0;
};

/// Materializes each member and trains it finalTrainEpochs with RMSProp.
/// finalTrainEpochs == 0 evaluates the materialized models as they are.
inline std::vector<FinalizedModel> finalize(const std::vector<ScoredMember>& members,
                                            const LabeledDataset& target,
                                            const SearchConfig& cfg,
                                            const ParallelFor& parallel = serialFor) {
  if (members.empty()) throw ConfigError("nothing to finalize");
  RngStream seeds(cfg.seed ^ 0xf1a1ULL);
  std::vector<std::uint64_t> trainSeeds;
  for (std::size_t i = 0; i < members.size(); ++i) trainSeeds.push_back(seeds.next());
  std::vector<FinalizedModel> out(members.size());
  parallel(members.size(), [&](std::size_t i) {
    TrainConfig tc{cfg.finalTrainEpochs, cfg.batchSize, cfg.optimizer, trainSeeds[i]};
    ConcreteModel m = train(members[i].model(), target, tc);
    out[i] = {members[i].id, m, fitness(m, target), paramCount(m)};
  });
  return out;
}

}  // namespace cenas

#endif  // CENAS_SEARCH_HPP_
