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

#include <gtest/gtest.h>

#include <algorithm>

#include "support.hpp"

namespace cenas {
namespace {

using testing::randomGenome;
using testing::randomImages;
using testing::randomModel;

bool samePointers(const ExpandedParam& a, const ExpandedParam& b) {
  if (a.terms.size() != b.terms.size()) return false;
  for (std::size_t i = 0; i < a.terms.size(); ++i)
    if (a.terms[i].alpha != b.terms[i].alpha || a.terms[i].f != b.terms[i].f) return false;
  return true;
}

bool mentions(const std::vector<Violation>& v, std::initializer_list<int> idx) {
  for (const auto& x : v) {
    bool all = true;
    for (int i : idx) all = all && std::find(x.layers.begin(), x.layers.end(), i) != x.layers.end();
    if (all) return true;
  }
  return false;
}

// Hand-written parameter formula for the seed architecture.
std::size_t seedParamsByHand(int h, int w, int c, int classes) {
  const std::size_t conv1 = 5 * 5 * c * 64 + 64;
  const std::size_t conv2 = 5 * 5 * 64 * 64 + 64;
  const std::size_t flat = static_cast<std::size_t>(h / 4) * (w / 4) * 64;
  return conv1 + conv2 + flat * 384 + 384 + 384 * classes + classes;
}

TEST(Seed, SevenLayersEndingInClassifier) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  ASSERT_EQ(g.layers.size(), 7u);
  EXPECT_TRUE(is<Conv>(g.layers[0]));
  EXPECT_TRUE(is<MaxPool>(g.layers[1]));
  EXPECT_TRUE(is<Conv>(g.layers[2]));
  EXPECT_TRUE(is<MaxPool>(g.layers[3]));
  EXPECT_TRUE(is<Flatten>(g.layers[4]));
  EXPECT_TRUE(is<Dense>(g.layers[5]));
  EXPECT_EQ(std::get<SoftmaxClassifier>(g.layers[6]).classes, 10);
  EXPECT_TRUE(validate(g).empty());
}

TEST(Seed, GrayInputPropagatesChannels) {
  Genome rgb = cifarNetSeed({32, 32, 3}, 10);
  Genome gray = cifarNetSeed({32, 32, 1}, 10);
  EXPECT_EQ(rgb.layers, gray.layers);
  EXPECT_EQ(planShapes(gray).params[0][0], (std::vector<int>{5, 5, 1, 64}));
}

TEST(Seed, TwoClassHead) {
  EXPECT_EQ(cifarNetSeed({32, 32, 3}, 2).numClasses(), 2);
}

TEST(Seed, Errors) {
  EXPECT_THROW(cifarNetSeed({32, 32, 3}, 1), ConfigError);
  EXPECT_THROW(cifarNetSeed({3, 32, 3}, 10), ConfigError);
  EXPECT_NO_THROW(cifarNetSeed({4, 4, 1}, 2));
}

TEST(Seed, AlwaysValid) {
  for (int h : {4, 7, 16, 28, 32})
    for (int c : {1, 3})
      for (int k : {2, 5, 100}) EXPECT_TRUE(validate(cifarNetSeed({h, h + 1, c}, k)).empty());
}

TEST(Validate, ConvAfterFlattenNamesBothIndices) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  g.layers.insert(g.layers.begin() + 5, Conv{8, 3});
  auto v = validate(g);
  ASSERT_FALSE(v.empty());
  EXPECT_TRUE(mentions(v, {4, 5}));
}

TEST(Validate, SpatialCollapse) {
  Genome g{{32, 32, 3}, {Conv{4, 3}}};
  for (int i = 0; i < 6; ++i) g.layers.push_back(MaxPool{2});
  g.layers.push_back(Flatten{});
  g.layers.push_back(SoftmaxClassifier{3});
  auto v = validate(g);
  ASSERT_EQ(v.size(), 1u);
  EXPECT_EQ(v[0].layers, std::vector<int>{6});
  EXPECT_NE(v[0].message.find("0x0"), std::string::npos);
}

TEST(Validate, ReportsEveryViolation) {
  Genome g{{8, 8, 1}, {MaxPool{2}, Dense{3}, Flatten{}, Flatten{}}};
  auto v = validate(g);
  // first layer, dense before flatten, two flattens, no classifier
  EXPECT_GE(v.size(), 4u);
  EXPECT_TRUE(mentions(v, {0}));
  EXPECT_TRUE(mentions(v, {1, 2}));
  EXPECT_FALSE(validate(Genome{{8, 8, 1}, {}}).empty());
}

TEST(Validate, RandomGenomesAreValid) {
  RngStream rng(11);
  for (int i = 0; i < 200; ++i) EXPECT_TRUE(validate(randomGenome(rng, {8, 8, 2}, 3)).empty());
}

TEST(ShapePlan, Idempotent) {
  RngStream rng(12);
  for (int i = 0; i < 20; ++i) {
    Genome g = randomGenome(rng, {9, 7, 3}, 4);
    auto a = planShapes(g), b = planShapes(g);
    EXPECT_EQ(a.params, b.params);
    ASSERT_EQ(a.inputs.size(), b.inputs.size());
    for (std::size_t j = 0; j < a.inputs.size(); ++j) EXPECT_EQ(a.inputs[j], b.inputs[j]);
  }
}

TEST(CountParams, SeedMatchesRuntimeAndHandFormula) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  RngStream rng(13);
  ConcreteModel m = initModel(g.input, g.layers, rng);
  EXPECT_EQ(countParams(g), paramCount(m));
  EXPECT_EQ(countParams(g), seedParamsByHand(32, 32, 3, 10));
  EXPECT_EQ(countParams(cifarNetSeed({28, 28, 1}, 4)), seedParamsByHand(28, 28, 1, 4));
}

TEST(CountParams, DeletingThirtyTwoFiltersMatchesAnalyticDelta) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  Genome h = planResizeFilters(g, 2, 32).genome;
  // conv2 loses 32 filters of 5x5x64 + bias; dense loses 8*8*32 input rows
  const std::size_t delta = 32 * (5 * 5 * 64 + 1) + 8 * 8 * 32 * 384;
  EXPECT_EQ(countParams(g) - countParams(h), delta);
}

TEST(CountParams, IdentityEditUnchanged) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  EXPECT_EQ(countParams(identityEdit(g).genome), countParams(g));
}

TEST(CountParams, InvalidGenomeThrows) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  g.layers.pop_back();
  EXPECT_THROW(countParams(g), InvalidGenome);
}

TEST(CountParams, AgreesWithMaterializedModels) {
  RngStream rng(14);
  for (int i = 0; i < 50; ++i) {
    ConcreteModel m = randomModel(rng, {10, 10, 2}, 3);
    ExpandedModel em = liftIdentity(m);
    for (int e = 0; e < 3; ++e) {
      auto convs = convIndices(em.genome);
      int idx = convs[rng.index(convs.size())];
      em = adaptParams(em, ResizeFiltersEdit{idx, 1 + static_cast<int>(rng.index(7))}, rng);
      EXPECT_EQ(countParams(em.genome), paramCount(materialize(em)));
    }
  }
}

TEST(Dump, OneLinePerLayerWithTotal) {
  Genome g = cifarNetSeed({32, 32, 3}, 10);
  std::string d = dumpGenome(g);
  EXPECT_EQ(std::count(d.begin(), d.end(), '\n'), 9);
  EXPECT_NE(d.find("input 32x32x3"), std::string::npos);
  EXPECT_NE(d.find("params 4864"), std::string::npos);
  EXPECT_NE(d.find("total params " + std::to_string(countParams(g))), std::string::npos);
}

TEST(Adapt, AddThenDeleteIsBitwiseInverse) {
  RngStream rng(15);
  for (int extra : {0, 3}) {
    ConcreteModel m = randomModel(rng, {8, 8, 2}, 3);
    ExpandedModel em = liftIdentity(m);
    const int f0 = std::get<Conv>(em.genome.layers[0]).filters;
    // the inserted conv is at least as wide as conv0, so nothing is cropped
    auto grown = adaptParams(em, InsertConvEdit{1, Conv{f0 + extra, 3}}, rng);
    EXPECT_TRUE(expandedViolations(grown).empty());
    auto back = adaptParams(grown, DeleteConvEdit{1, false}, rng);
    EXPECT_EQ(back.genome, em.genome);
    EXPECT_EQ(materialize(back), m);
  }
}

TEST(Adapt, GrowthZeroPadsBothSides) {
  Genome g = cifarNetSeed({32, 32, 3}, 4);
  RngStream rng(16);
  ConcreteModel m = initModel(g.input, g.layers, rng);
  ExpandedModel em = liftIdentity(m);
  ExpandedModel grown = adaptParams(em, ResizeFiltersEdit{2, 66}, rng);
  ConcreteModel gm = materialize(grown);
  ASSERT_EQ(gm.layers[2].params[0].shape, (std::vector<int>{5, 5, 64, 66}));
  ASSERT_EQ(gm.layers[5].params[0].shape, (std::vector<int>{8 * 8 * 66, 384}));

  const Tensor& w = gm.layers[2].params[0];
  for (std::size_t i = 0; i < w.size(); ++i) {
    const int o = static_cast<int>(i % 66);
    if (o >= 64) EXPECT_EQ(w.data[i], 0.0f);
    else EXPECT_EQ(w.data[i], m.layers[2].params[0].data[i / 66 * 64 + o]);
  }
  for (int o = 64; o < 66; ++o) EXPECT_EQ(gm.layers[2].params[1].data[o], 0.0f);

  // dense rows are laid out (y, x, channel); channels 64 and 65 are zero
  const Tensor& d = gm.layers[5].params[0];
  for (int pos = 0; pos < 64; ++pos)
    for (int ch = 0; ch < 66; ++ch)
      for (int u = 0; u < 384; u += 37) {
        float got = d.data[(static_cast<std::size_t>(pos) * 66 + ch) * 384 + u];
        if (ch >= 64) EXPECT_EQ(got, 0.0f);
        else EXPECT_EQ(got, m.layers[5].params[0].data[(static_cast<std::size_t>(pos) * 64 + ch) * 384 + u]);
      }

  Tensor batch = randomImages(3, g.input, rng);
  EXPECT_LE(testing::maxAbsDiff(forward(m, batch), forward(gm, batch)), 1e-6);
}

TEST(Adapt, ZeroPaddedGrowthPreservesFunctionOnRandomModels) {
  RngStream rng(17);
  for (int i = 0; i < 40; ++i) {
    ConcreteModel m = randomModel(rng, {8, 8, 2}, 3);
    ExpandedModel em = liftIdentity(m);
    auto convs = convIndices(em.genome);
    int idx = convs[rng.index(convs.size())];
    int f = std::get<Conv>(em.genome.layers[idx]).filters;
    auto grown = adaptParams(em, ResizeFiltersEdit{idx, f + 1 + static_cast<int>(rng.index(4))}, rng);
    Tensor batch = randomImages(4, m.input, rng);
    EXPECT_LE(testing::maxAbsDiff(forward(m, batch), forward(materialize(grown), batch)), 1e-6);
  }
}

TEST(Adapt, FreshLayerGetsOneRandomTerm) {
  RngStream rng(18);
  ExpandedModel em = liftIdentity(randomModel(rng, {8, 8, 1}, 3));
  auto grown = adaptParams(em, InsertConvEdit{1, Conv{4, 3}}, rng);
  ASSERT_EQ(grown.params[1].size(), 2u);
  for (const auto& p : grown.params[1]) {
    ASSERT_EQ(p.terms.size(), 1u);
    EXPECT_EQ(p.terms[0].sourceTag, "random");
    for (float a : p.terms[0].alpha->data) EXPECT_EQ(a, 1.0f);
  }
}

TEST(Adapt, UntouchedLayersKeepTheirStorage) {
  RngStream rng(19);
  for (int i = 0; i < 30; ++i) {
    ConcreteModel m = randomModel(rng, {8, 8, 2}, 3);
    ExpandedModel em = liftIdentity(m);
    auto convs = convIndices(em.genome);
    int idx = convs[rng.index(convs.size())];
    int f = std::get<Conv>(em.genome.layers[idx]).filters;
    auto out = adaptParams(em, ResizeFiltersEdit{idx, f + 2}, rng);
    // ripple: the resized conv and the next parameterised layer
    int next = idx + 1;
    while (!hasParams(em.genome.layers[next])) ++next;
    for (std::size_t l = 0; l < em.params.size(); ++l) {
      if (static_cast<int>(l) == idx || static_cast<int>(l) == next) continue;
      for (std::size_t p = 0; p < em.params[l].size(); ++p)
        EXPECT_TRUE(samePointers(em.params[l][p], out.params[l][p])) << "layer " << l;
    }
  }
}

TEST(Adapt, ShrinkCropsTrailingFilters) {
  RngStream rng(20);
  Genome g{{6, 6, 1}, {Conv{5, 3}, Flatten{}, SoftmaxClassifier{2}}};
  ConcreteModel m = initModel(g.input, g.layers, rng);
  auto out = materialize(adaptParams(liftIdentity(m), ResizeFiltersEdit{0, 3}, rng));
  const Tensor& w = out.layers[0].params[0];
  for (std::size_t i = 0; i < w.size(); ++i)
    EXPECT_EQ(w.data[i], m.layers[0].params[0].data[i / 3 * 5 + i % 3]);
  EXPECT_EQ(out.layers[2].params[0].shape, (std::vector<int>{6 * 6 * 3, 2}));
}

TEST(Adapt, InvalidEditsCarryViolations) {
  RngStream rng(21);
  ExpandedModel em = liftIdentity(initModel({32, 32, 3}, cifarNetSeed({32, 32, 3}, 3).layers, rng));
  try {
    adaptParams(em, DeleteConvEdit{0, false}, rng);
    FAIL();
  } catch (const InvalidGenome& e) {
    ASSERT_FALSE(e.violations().empty());
    EXPECT_EQ(e.violations()[0].layers, std::vector<int>{0});
  }
  EXPECT_THROW(adaptParams(em, ResizeFiltersEdit{2, 0}, rng), InvalidGenome);
  EXPECT_THROW(adaptParams(em, InsertConvEdit{6, Conv{3, 3}}, rng), InvalidGenome);
  EXPECT_THROW(adaptParams(em, DeleteConvEdit{5, false}, rng), ComputeError);
}

TEST(Adapt, DeleteCarriesOwnedPool) {
  Genome g = cifarNetSeed({32, 32, 3}, 3);
  EXPECT_TRUE(ownsFollowingPool(g, 2));
  auto e = planDeleteConv(g, 2, true);
  EXPECT_EQ(e.genome.layers.size(), 5u);
  EXPECT_TRUE(is<Flatten>(e.genome.layers[2]));
  EXPECT_EQ(planShapes(e.genome).inputs[2].volume(), 16u * 16u * 64u);
}

}  // namespace
}  // namespace cenas
