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

#ifndef CENAS_SERIALIZE_HPP_
#define CENAS_SERIALIZE_HPP_

// JSON encodings for genomes, models, checkpoints and search state.
// Tensor payloads are base64 of little-endian IEEE-754 float32.

#include <bit>
#include <cstdint>
#include <map>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cenas/error.hpp"
#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/operators.hpp"
#include "cenas/runtime.hpp"
#include "cenas/search.hpp"
#include "cenas/tensor.hpp"

namespace cenas {

using Json = nlohmann::json;

inline constexpr int kFormatVersion = 1;

inline std::string base64Encode(const std::vector<std::uint8_t>& in) {
  static const char* a = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out;
  out.reserve((in.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < in.size(); i += 3) {
    const std::uint32_t v = (std::uint32_t{in[i]} << 16) | (std::uint32_t{in[i + 1]} << 8) | in[i + 2];
    for (int s = 18; s >= 0; s -= 6) out.push_back(a[(v >> s) & 63]);
  }
  if (i < in.size()) {
    std::uint32_t v = std::uint32_t{in[i]} << 16;
    if (i + 1 < in.size()) v |= std::uint32_t{in[i + 1]} << 8;
    out.push_back(a[(v >> 18) & 63]);
    out.push_back(a[(v >> 12) & 63]);
    out.push_back(i + 1 < in.size() ? a[(v >> 6) & 63] : '=');
    out.push_back('=');
  }
  return out;
}

inline std::vector<std::uint8_t> base64Decode(std::string_view s) {
  auto val = [](char c) -> int {
    if (c >= 'A' && c <= 'Z') return c - 'A';
    if (c >= 'a' && c <= 'z') return c - 'a' + 26;
    if (c >= '0' && c <= '9') return c - '0' + 52;
    if (c == '+') return 62;
    if (c == '/') return 63;
    return -1;
  };
  if (s.size() % 4 != 0) throw DataError("base64 length is not a multiple of 4");
  std::vector<std::uint8_t> out;
  out.reserve(s.size() / 4 * 3);
  for (std::size_t i = 0; i < s.size(); i += 4) {
    int pad = 0;
    std::uint32_t v = 0;
    for (std::size_t k = 0; k < 4; ++k) {
      const char c = s[i + k];
      if (c == '=' && i + 4 == s.size() && k >= 2) {
        ++pad;
        v <<= 6;
        continue;
      }
      const int d = val(c);
      if (d < 0 || pad) throw DataError("invalid base64 character", static_cast<long long>(i + k));
      v = (v << 6) | static_cast<std::uint32_t>(d);
    }
    out.push_back(static_cast<std::uint8_t>(v >> 16));
    if (pad < 2) out.push_back(static_cast<std::uint8_t>(v >> 8));
    if (pad < 1) out.push_back(static_cast<std::uint8_t>(v));
  }
  return out;
}

inline Json toJson(const Tensor& t) {
  std::vector<std::uint8_t> bytes;
  bytes.reserve(t.size() * 4);
  for (float f : t.data) {
    const auto u = std::bit_cast<std::uint32_t>(f);
    for (int s = 0; s < 32; s += 8) bytes.push_back(static_cast<std::uint8_t>(u >> s));
  }
  return {{"shape", t.shape}, {"data", base64Encode(bytes)}};
}

inline Tensor tensorFromJson(const Json& j) {
  auto shape = j.at("shape").get<std::vector<int>>();
  for (int d : shape)
    if (d < 1) throw DataError("tensor dimension must be positive");
  auto bytes = base64Decode(j.at("data").get<std::string>());
  if (bytes.size() != shapeVolume(shape) * 4)
    throw DataError("tensor payload holds " + std::to_string(bytes.size()) + " bytes, expected " +
                    std::to_string(shapeVolume(shape) * 4));
  std::vector<float> data(bytes.size() / 4);
  for (std::size_t i = 0; i < data.size(); ++i) {
    std::uint32_t u = 0;
    for (int k = 3; k >= 0; --k) u = (u << 8) | bytes[i * 4 + static_cast<std::size_t>(k)];
    data[i] = std::bit_cast<float>(u);
  }
  return Tensor(std::move(shape), std::move(data));
}

inline Json toJson(const LayerKind& k) {
  return std::visit(
      [](const auto& l) -> Json {
        using L = std::decay_t<decltype(l)>;
        if constexpr (std::is_same_v<L, Conv>)
          return {{"type", "conv"}, {"filters", l.filters}, {"kernel", l.kernel}};
        else if constexpr (std::is_same_v<L, MaxPool>)
          return {{"type", "maxpool"}, {"window", l.window}};
        else if constexpr (std::is_same_v<L, Flatten>)
          return {{"type", "flatten"}};
        else if constexpr (std::is_same_v<L, Dense>)
          return {{"type", "dense"}, {"units", l.units}};
        else
          return {{"type", "softmax"}, {"classes", l.classes}};
      },
      k);
}

inline LayerKind layerFromJson(const Json& j) {
  const auto type = j.at("type").get<std::string>();
  if (type == "conv") return Conv{j.at("filters").get<int>(), j.value("kernel", 5)};
  if (type == "maxpool") return MaxPool{j.value("window", 2)};
  if (type == "flatten") return Flatten{};
  if (type == "dense") return Dense{j.at("units").get<int>()};
  if (type == "softmax") return SoftmaxClassifier{j.at("classes").get<int>()};
  throw DataError("unknown layer type '" + type + "'");
}

inline Json toJson(const Shape3& s) { return Json::array({s.h, s.w, s.c}); }

inline Shape3 shapeFromJson(const Json& j) {
  auto v = j.get<std::vector<int>>();
  if (v.size() != 3) throw DataError("input shape must be [h, w, c]");
  return Shape3{v[0], v[1], v[2]};
}

inline Json toJson(const Genome& g) {
  Json layers = Json::array();
  for (const auto& l : g.layers) layers.push_back(toJson(l));
  return {{"input", toJson(g.input)}, {"layers", layers}};
}

inline Genome genomeFromJson(const Json& j) {
  Genome g{shapeFromJson(j.at("input")), {}};
  for (const auto& l : j.at("layers")) g.layers.push_back(layerFromJson(l));
  return g;
}

namespace detail {

inline void checkFormat(const Json& j, const std::string& format) {
  if (!j.is_object() || j.value("format", "") != format)
    throw DataError("expected a '" + format + "' document");
  if (j.value("version", 0) != kFormatVersion)
    throw DataError("unsupported " + format + " version " + std::to_string(j.value("version", 0)));
}

}  // namespace detail

inline Json toJson(const ConcreteModel& m) {
  Json params = Json::array();
  for (const auto& l : m.layers) {
    Json lp = Json::array();
    for (const auto& t : l.params) lp.push_back(toJson(t));
    params.push_back(lp);
  }
  return {{"format", "cenas.concrete"}, {"version", kFormatVersion},
          {"genome", toJson(genomeOf(m))}, {"params", params}};
}

inline ConcreteModel concreteFromJson(const Json& j) {
  detail::checkFormat(j, "cenas.concrete");
  const Genome g = genomeFromJson(j.at("genome"));
  const auto& params = j.at("params");
  if (params.size() != g.layers.size()) throw DataError("param list does not match layers");
  ConcreteModel m{g.input, {}};
  for (std::size_t i = 0; i < g.layers.size(); ++i) {
    std::vector<Tensor> ts;
    for (const auto& t : params[i]) ts.push_back(tensorFromJson(t));
    m.layers.push_back({g.layers[i], std::move(ts)});
  }
  checkModel(m);
  return m;
}

/// Expanded models store each distinct tensor once in a table; terms refer
/// to table indices, so shared f tensors stay shared after loading.
inline Json toJson(const ExpandedModel& em) {
  Json tensors = Json::array();
  std::unordered_map<const Tensor*, std::size_t> index;
  auto ref = [&](const TensorPtr& p) {
    auto [it, fresh] = index.try_emplace(p.get(), tensors.size());
    if (fresh) tensors.push_back(toJson(*p));
    return it->second;
  };
  Json params = Json::array();
  for (const auto& layer : em.params) {
    Json lp = Json::array();
    for (const auto& p : layer) {
      Json terms = Json::array();
      for (const auto& t : p.terms)
        terms.push_back({{"alpha", ref(t.alpha)}, {"f", ref(t.f)}, {"tag", t.sourceTag}});
      lp.push_back({{"shape", p.shape}, {"terms", terms}});
    }
    params.push_back(lp);
  }
  return {{"format", "cenas.expanded"}, {"version", kFormatVersion}, {"genome", toJson(em.genome)},
          {"tensors", tensors}, {"params", params}};
}

inline ExpandedModel expandedFromJson(const Json& j) {
  detail::checkFormat(j, "cenas.expanded");
  ExpandedModel em{genomeFromJson(j.at("genome")), {}};
  std::vector<TensorPtr> table;
  for (const auto& t : j.at("tensors")) table.push_back(share(tensorFromJson(t)));
  auto at = [&](const Json& r) {
    auto i = r.get<std::size_t>();
    if (i >= table.size()) throw DataError("tensor reference " + std::to_string(i) + " out of range");
    return table[i];
  };
  for (const auto& layer : j.at("params")) {
    std::vector<ExpandedParam> lp;
    for (const auto& p : layer) {
      ExpandedParam ep{p.at("shape").get<std::vector<int>>(), {}};
      for (const auto& t : p.at("terms"))
        ep.terms.push_back({at(t.at("alpha")), at(t.at("f")), t.at("tag").get<std::string>()});
      lp.push_back(std::move(ep));
    }
    em.params.push_back(std::move(lp));
  }
  if (auto v = expandedViolations(em); !v.empty()) throw DataError("invalid expanded model: " + v.front());
  return em;
}

inline MutationEvent eventFromJson(const Json& j) {
  return {j.at("generation").get<int>(), j.at("member").get<long long>(),
          j.at("op").get<std::string>(), j.at("layer").get<int>(),
          j.at("param_delta").get<long long>()};
}

inline Json toJson(const GenerationStats& s) {
  return {{"generation", s.generation}, {"best", s.best},          {"mean", s.mean},
          {"min", s.min},               {"best_params", s.bestParams}, {"seconds", s.seconds}};
}

inline GenerationStats statsFromJson(const Json& j) {
  return {j.at("generation").get<int>(), j.at("best").get<double>(), j.at("mean").get<double>(),
          j.at("min").get<double>(), j.at("best_params").get<std::size_t>(),
          j.at("seconds").get<double>()};
}

inline Json toJson(const ScoredMember& m) {
  Json lineage = Json::array();
  for (const auto& e : m.lineage) lineage.push_back(e.toJson());
  Json j{{"id", m.id}, {"fitness", m.fitness}, {"params", m.params}, {"lineage", lineage}};
  if (m.expanded) j["expanded"] = toJson(*m.expanded);
  if (m.concrete) j["concrete"] = toJson(*m.concrete);
  return j;
}

inline ScoredMember memberFromJson(const Json& j) {
  ScoredMember m;
  m.id = j.at("id").get<long long>();
  m.fitness = j.at("fitness").get<double>();
  m.params = j.at("params").get<std::size_t>();
  for (const auto& e : j.at("lineage")) m.lineage.push_back(eventFromJson(e));
  if (j.contains("expanded")) m.expanded = expandedFromJson(j.at("expanded"));
  if (j.contains("concrete")) m.concrete = concreteFromJson(j.at("concrete"));
  if (!m.expanded && !m.concrete) throw DataError("member " + std::to_string(m.id) + " has no model");
  return m;
}

inline Json toJson(const SearchState& st) {
  Json pop = Json::array(), hist = Json::array(), events = Json::array();
  for (const auto& m : st.population) pop.push_back(toJson(m));
  for (const auto& h : st.history) hist.push_back(toJson(h));
  for (const auto& e : st.events) events.push_back(e.toJson());
  return {{"format", "cenas.search_state"}, {"version", kFormatVersion},
          {"generation", st.generation}, {"rng", st.rng.serialize()},
          {"next_id", st.nextId}, {"population", pop}, {"history", hist}, {"events", events}};
}

inline SearchState searchStateFromJson(const Json& j) {
  detail::checkFormat(j, "cenas.search_state");
  SearchState st;
  st.generation = j.at("generation").get<int>();
  st.rng = RngStream::deserialize(j.at("rng").get<std::string>());
  st.nextId = j.at("next_id").get<long long>();
  for (const auto& m : j.at("population")) st.population.push_back(memberFromJson(m));
  for (const auto& h : j.at("history")) st.history.push_back(statsFromJson(h));
  for (const auto& e : j.at("events")) st.events.push_back(eventFromJson(e));
  if (st.population.empty()) throw DataError("search state has an empty population");
  return st;
}

/// Per-generation CSV: generation,best,mean,min,best_params,seconds.
inline std::string statsCsv(const std::vector<GenerationStats>& history) {
  std::string out = "generation,best,mean,min,best_params,seconds\n";
  char buf[256];
  for (const auto& s : history) {
    std::snprintf(buf, sizeof buf, "%d,%.9g,%.9g,%.9g,%zu,%.3f\n", s.generation, s.best, s.mean,
                  s.min, s.bestParams, s.seconds);
    out += buf;
  }
  return out;
}

}  // namespace cenas

#endif  // CENAS_SERIALIZE_HPP_
