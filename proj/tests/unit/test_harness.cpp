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

#include <sys/wait.h>

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include <gtest/gtest.h>

#include "support.hpp"

namespace cenas {
namespace {

using nlohmann::json;
using testing::freshDir;

json blobs(int style, std::uint64_t seed, int classes = 3) {
  return {{"kind", "synthetic"}, {"classes", classes}, {"train_per_class", 12},
          {"test_per_class", 10}, {"height", 8},       {"width", 8},
          {"channels", 3},        {"seed", seed},      {"style", style},
          {"concept_seed", 5}};
}

json transferDoc() {
  return {{"format", "cenas.experiment"},
          {"version", 1},
          {"seed", 3},
          {"task", {{"type", "domain_transfer"}, {"source", blobs(0, 11)}, {"target", blobs(1, 12)}}},
          {"input", {{"height", 8}, {"width", 8}, {"channels", 3}}},
          {"cifarnet", {{"conv1", 4}, {"conv2", 4}, {"kernel", 3}, {"dense", 8}}},
          {"strategies", {"CENAS"}},
          {"source_epochs", 3},
          {"batch_size", 8},
          {"lr", 1e-3},
          {"search",
           {{"pop_size", 5},
            {"generations", 5},
            {"final_train_epochs", 1},
            {"output_top_k", 5},
            {"nas_epochs", 1},
            {"nas_t_epochs", 1}}}};
}

json nPlusOneDoc() {
  json ds = blobs(0, 21, 4);
  ds["class_names"] = {"a", "b", "c", "d"};
  json d = transferDoc();
  d["task"] = {{"type", "n_plus_one"}, {"dataset", ds}, {"held_out", "d"}, {"x", 3},
               {"x_values", {3, 5}}};
  d["search"]["generations"] = 2;
  d["search"]["final_train_epochs"] = 0;
  d["search"]["output_top_k"] = 3;
  return d;
}

ExperimentConfig configAt(const json& doc, const fs::path& out) {
  auto cfg = parseExperimentConfig(doc);
  cfg.outputDir = out;
  return cfg;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream os;
  os << in.rdbuf();
  return os.str();
}

void writeText(const fs::path& p, const std::string& text) {
  std::ofstream out(p, std::ios::binary);
  out << text;
}

// ---------------------------------------------------------------- config

TEST(Config, DefaultsFollowTheDocumentedHyperparameters) {
  json d = transferDoc();
  d.erase("source_epochs");
  d.erase("batch_size");
  d.erase("lr");
  d.erase("search");
  d.erase("strategies");
  auto c = parseExperimentConfig(d);
  EXPECT_EQ(c.task, TaskKind::kDomainTransfer);
  EXPECT_EQ(c.sourceEpochs, 100);
  EXPECT_EQ(c.search.batchSize, 32);
  EXPECT_DOUBLE_EQ(c.search.optimizer.learningRate, 1e-4);
  EXPECT_EQ(c.search.popSize, 10);
  EXPECT_EQ(c.search.generations, 100);
  EXPECT_EQ(c.search.finalTrainEpochs, 30);
  EXPECT_EQ(c.nasTransferEpochs, 12);
  EXPECT_EQ(c.strategies, std::vector<std::string>{"CENAS"});
  EXPECT_EQ(c.seed, 3u);
  EXPECT_EQ(c.search.seed, 3u);
  EXPECT_EQ(c.echo, d);
  EXPECT_EQ(c.target.blobs.style, 1);
  EXPECT_EQ(c.target.shape.h, 8);
}

TEST(Config, NPlusOneFields) {
  auto c = parseExperimentConfig(nPlusOneDoc());
  EXPECT_EQ(c.task, TaskKind::kNPlusOne);
  EXPECT_EQ(c.heldOutClass, "d");
  EXPECT_EQ(c.novelSamples, 3);
  EXPECT_EQ(c.sweepX, (std::vector<int>{3, 5}));
  EXPECT_EQ(c.taskLabel(), "n+1(d,X=3)");
  json d = nPlusOneDoc();
  d["task"].erase("x_values");
  EXPECT_EQ(parseExperimentConfig(d).sweepX, std::vector<int>{3});
}

TEST(Config, RejectsMalformedDocumentsAsConfigErrors) {
  using Edit = void (*)(json&);
  const std::vector<std::pair<const char*, Edit>> cases = {
      {"missing seed", [](json& d) { d.erase("seed"); }},
      {"wrong format", [](json& d) { d["format"] = "cenas.report"; }},
      {"future version", [](json& d) { d["version"] = 2; }},
      {"missing task", [](json& d) { d.erase("task"); }},
      {"unknown task", [](json& d) { d["task"]["type"] = "zero_shot"; }},
      {"missing target", [](json& d) { d["task"].erase("target"); }},
      {"dataset kind", [](json& d) { d["task"]["source"]["kind"] = "png"; }},
      {"idx paths", [](json& d) { d["task"]["source"] = {{"kind", "idx"}}; }},
      {"cifar lists", [](json& d) { d["task"]["source"] = {{"kind", "cifar"}, {"train", {"a.bin"}}}; }},
      {"bad strategy", [](json& d) { d["strategies"] = {"CENAS", "DARTS"}; }},
      {"no strategies", [](json& d) { d["strategies"] = json::array(); }},
      {"gray policy", [](json& d) { d["input"]["gray"] = "green"; }},
      {"channels", [](json& d) { d["input"]["channels"] = 2; }},
      {"negative epochs", [](json& d) { d["source_epochs"] = -1; }},
      {"zero lr", [](json& d) { d["lr"] = 0.0; }},
      {"threads", [](json& d) { d["threads"] = 0; }},
      {"population", [](json& d) { d["search"]["pop_size"] = 1; }},
      {"mutation rate", [](json& d) { d["search"]["mutation_rate"] = 1.5; }},
      {"top k", [](json& d) { d["search"]["output_top_k"] = 0; }},
      {"head histogram", [](json& d) { d["head"] = {{"histogram", "median"}}; }},
      {"wrong type", [](json& d) { d["search"]["generations"] = "many"; }},
      {"not an object", [](json& d) { d = json::array(); }},
      {"held out", [](json& d) {
         d["task"] = {{"type", "n_plus_one"}, {"dataset", blobs(0, 1, 4)}};
       }},
  };
  for (const auto& [name, edit] : cases) {
    json d = transferDoc();
    edit(d);
    try {
      parseExperimentConfig(d);
      ADD_FAILURE() << name << ": accepted";
    } catch (const Error& e) {
      EXPECT_EQ(e.kind(), ErrorKind::kConfig) << name;
      EXPECT_EQ(exitCodeFor(e.kind()), 2) << name;
    }
  }
}

TEST(Config, SinglePopulationIsFineForWalks) {
  json d = transferDoc();
  d["strategies"] = {"R-CENAS", "G-CENAS", "TRANSFER"};
  d["search"]["pop_size"] = 1;
  EXPECT_NO_THROW(parseExperimentConfig(d));
}

TEST(Config, LoadResolvesPathsAgainstTheConfigDirectory) {
  const auto dir = freshDir("load");
  json d = transferDoc();
  d["task"]["source"] = {{"kind", "idx"},
                         {"train_images", "data/train-images"},
                         {"train_labels", "data/train-labels"},
                         {"test_images", "/abs/test-images"},
                         {"test_labels", "data/test-labels"}};
  writeText(dir / "exp.json", "// desk run\n" + d.dump(2));
  auto c = loadExperimentConfig(dir / "exp.json");
  EXPECT_EQ(c.source.trainImages, dir / "data/train-images");
  EXPECT_EQ(c.source.testImages, fs::path("/abs/test-images"));

  writeText(dir / "broken.json", "{\"format\": ");
  EXPECT_THROW(loadExperimentConfig(dir / "broken.json"), ConfigError);
  EXPECT_THROW(loadExperimentConfig(dir / "absent.json"), ConfigError);
}

TEST(Config, ShippedConfigsParse) {
  int seen = 0;
  for (const auto& e : fs::directory_iterator(CENAS_CONFIG_DIR)) {
    if (e.path().extension() != ".json") continue;
    SCOPED_TRACE(e.path().filename().string());
    auto c = loadExperimentConfig(e.path());
    EXPECT_FALSE(c.strategies.empty());
    EXPECT_NE(c.outputDir, fs::path());
    ++seen;
  }
  EXPECT_GE(seen, 4);
}

TEST(Config, ShippedDeskConfigsRunAtToySize) {
  const auto root = freshDir("shipped");
  for (const char* name : {"transfer_desk.json", "n_plus_one_desk.json"}) {
    auto cfg = loadExperimentConfig(fs::path(CENAS_CONFIG_DIR) / name);
    // same pipeline, smaller budget
    cfg.sourceEpochs = 1;
    cfg.search.generations = 1;
    cfg.search.finalTrainEpochs = std::min(cfg.search.finalTrainEpochs, 1);
    cfg.outputDir = root / name;
    auto rep = runPipeline(cfg);
    EXPECT_EQ(rep.strategies.size(), cfg.strategies.size()) << name;
  }
}

// -------------------------------------------------------------- pipeline

class Pipeline : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = freshDir("pipeline");
    cfg_ = configAt(transferDoc(), root_ / "out");
    report_ = runPipeline(cfg_);
  }
  static fs::path root_;
  static ExperimentConfig cfg_;
  static RunReport report_;
};
fs::path Pipeline::root_;
ExperimentConfig Pipeline::cfg_;
RunReport Pipeline::report_;

TEST_F(Pipeline, ReportAndArtifactsExist) {
  const fs::path out = root_ / "out";
  for (const char* f : {"report.json", "report.csv", "timing.json", "source/model.json",
                        "source/genome.txt", "search/CENAS/members.json", "search/CENAS/stats.csv",
                        "search/CENAS/events.jsonl"})
    EXPECT_TRUE(fs::exists(out / f)) << f;
  ASSERT_EQ(report_.strategies.size(), 1u);
  const auto& s = report_.strategies[0];
  EXPECT_EQ(s.name, "CENAS");
  ASSERT_EQ(s.models.size(), 5u);
  for (int i = 0; i < 5; ++i) {
    EXPECT_TRUE(fs::exists(out / ("final/CENAS/model_" + std::to_string(i) + ".json")));
    EXPECT_TRUE(fs::exists(out / ("final/CENAS/genome_" + std::to_string(i) + ".txt")));
  }
  EXPECT_FALSE(fs::exists(out / "final/CENAS/model_5.json"));
  EXPECT_FALSE(fs::exists(out / ".cenas.lock"));
  EXPECT_EQ(s.history.size(), 6u);
  EXPECT_EQ(s.searchGradientEpochs, 0u);
  EXPECT_EQ(s.finalTrainEpochs, 1);
}

TEST_F(Pipeline, AccuraciesAreProbabilities) {
  auto in01 = [](double v) { return v >= 0.0 && v <= 1.0; };
  EXPECT_DOUBLE_EQ(report_.chance, 1.0 / 3.0);
  EXPECT_TRUE(in01(report_.sourceTrainAccuracy));
  EXPECT_TRUE(in01(report_.sourceTestAccuracy));
  for (const auto& s : report_.strategies) {
    EXPECT_TRUE(in01(s.accMean));
    for (const auto& m : s.models) {
      EXPECT_TRUE(in01(m.testAccuracy));
      EXPECT_TRUE(in01(m.searchFitness));
      EXPECT_TRUE(in01(m.trainFitness));
      ASSERT_EQ(m.perClass.size(), 3u);
      for (double a : m.perClass) EXPECT_TRUE(in01(a));
    }
  }
}

TEST_F(Pipeline, ReportNumbersRecomputeFromCheckpoints) {
  const fs::path out = root_ / "out";
  const auto data = prepareData(cfg_);
  const auto& s = report_.strategies[0];
  std::vector<double> acc, params;
  for (const auto& m : s.models) {
    auto model = concreteFromJson(
        json::parse(slurp(out / ("final/CENAS/model_" + std::to_string(m.rank) + ".json"))));
    EXPECT_EQ(countParams(genomeOf(model)), m.params);
    EXPECT_EQ(paramCount(model), m.params);
    EXPECT_DOUBLE_EQ(accuracy(model, data.targetTest), m.testAccuracy);
    EXPECT_DOUBLE_EQ(fitness(model, data.targetTrain), m.trainFitness);
    EXPECT_EQ(slurp(out / ("final/CENAS/genome_" + std::to_string(m.rank) + ".txt")), m.genome);
    acc.push_back(m.testAccuracy);
    params.push_back(static_cast<double>(m.params));
  }
  // population std over the K output models
  double mean = 0.0, var = 0.0;
  for (double a : acc) mean += a / static_cast<double>(acc.size());
  for (double a : acc) var += (a - mean) * (a - mean) / static_cast<double>(acc.size());
  EXPECT_NEAR(s.accMean, mean, 1e-12);
  EXPECT_NEAR(s.accStd, std::sqrt(var), 1e-12);
  auto source = concreteFromJson(json::parse(slurp(out / "source/model.json")).at("model"));
  EXPECT_EQ(paramCount(source), report_.sourceParams);
  EXPECT_DOUBLE_EQ(accuracy(source, data.sourceTest), report_.sourceTestAccuracy);
}

TEST_F(Pipeline, JsonRoundTripAndCsvRows) {
  const fs::path out = root_ / "out";
  const json onDisk = json::parse(slurp(out / "report.json"));
  EXPECT_EQ(onDisk, toJson(report_));
  EXPECT_EQ(onDisk.at("cenas_version"), CENAS_VERSION);
  EXPECT_EQ(onDisk.at("config"), transferDoc());
  auto back = loadReport(out / "report.json");
  EXPECT_EQ(toJson(back), onDisk);
  EXPECT_EQ(back.timing, report_.timing);
  EXPECT_GT(back.secondsFor("train-source"), 0.0);

  const std::string csv = slurp(out / "report.csv");
  EXPECT_EQ(csv, reportCsv(report_));
  EXPECT_EQ(std::count(csv.begin(), csv.end(), '\n'), 6);
  EXPECT_EQ(csv.substr(0, csv.find('\n')),
            "task,strategy,rank,member,search_fitness,train_fitness,test_accuracy,params,"
            "acc_class0,acc_class1,acc_class2");
}

TEST_F(Pipeline, RerunIsByteIdentical) {
  const fs::path out = root_ / "out";
  const std::string first = slurp(out / "report.json");
  runPipeline(cfg_);  // same directory, cached source
  EXPECT_EQ(slurp(out / "report.json"), first);

  auto fresh = cfg_;
  fresh.outputDir = root_ / "fresh";
  runPipeline(fresh);
  EXPECT_EQ(slurp(root_ / "fresh/report.json"), first);
  EXPECT_EQ(slurp(root_ / "fresh/report.csv"), slurp(out / "report.csv"));
  EXPECT_EQ(slurp(root_ / "fresh/search/CENAS/members.json"),
            slurp(out / "search/CENAS/members.json"));
}

TEST_F(Pipeline, ThreadedEvaluationMatchesSerial) {
  auto threaded = cfg_;
  threaded.threads = 3;
  threaded.outputDir = root_ / "threaded";
  runPipeline(threaded);
  EXPECT_EQ(slurp(root_ / "threaded/report.json"), slurp(root_ / "out/report.json"));
}

TEST_F(Pipeline, WritesStayUnderTheOutputDirectory) {
  // root_ holds only run directories created by this fixture
  for (const auto& e : fs::directory_iterator(root_)) {
    const auto name = e.path().filename().string();
    EXPECT_TRUE(name == "out" || name == "fresh" || name == "threaded") << name;
  }
}

TEST(PipelineStages, SplitVerbsReproduceTheSingleRun) {
  const auto root = freshDir("split");
  json d = transferDoc();
  d["search"]["checkpoint_every"] = 1;
  auto whole = configAt(d, root / "whole");
  auto parts = configAt(d, root / "parts");
  const auto rep = runPipeline(whole);

  runTrainSource(parts);
  auto searched = runSearchOnly(parts, false);
  ASSERT_EQ(searched.size(), 1u);
  EXPECT_TRUE(fs::exists(root / "parts/checkpoints/CENAS_state.json"));
  auto resumed = runSearchOnly(parts, true);
  ASSERT_EQ(resumed[0].top.size(), searched[0].top.size());
  for (std::size_t i = 0; i < searched[0].top.size(); ++i) {
    EXPECT_EQ(resumed[0].top[i].id, searched[0].top[i].id);
    EXPECT_EQ(resumed[0].top[i].fitness, searched[0].top[i].fitness);
  }
  runFinalizeOnly(parts);
  EXPECT_EQ(slurp(root / "parts/report.json"), slurp(root / "whole/report.json"));
  EXPECT_FALSE(rep.strategies.empty());

  auto none = configAt(d, root / "empty");
  EXPECT_THROW(runFinalizeOnly(none), DataError);
}

TEST(PipelineStages, SourceModelIsTrainedOnceAndShared) {
  const auto root = freshDir("cache");
  json d = transferDoc();
  d["search"]["final_train_epochs"] = 0;
  d["search"]["nas_epochs"] = 0;
  d["search"]["generations"] = 2;

  auto cfg = configAt(d, root / "a");
  auto before = backwardStepCount();
  runTrainSource(cfg);
  const auto sourceSteps = backwardStepCount() - before;
  ASSERT_GT(sourceSteps, 0u);

  before = backwardStepCount();
  runTrainSource(cfg);
  EXPECT_EQ(backwardStepCount() - before, 0u);

  // two strategy sections, one source model: steps equal one training run
  cfg.strategies = {"CENAS", "NAS"};
  cfg.outputDir = root / "b";
  before = backwardStepCount();
  auto rep = runPipeline(cfg);
  EXPECT_EQ(backwardStepCount() - before, sourceSteps);
  ASSERT_EQ(rep.strategies.size(), 2u);
  EXPECT_EQ(rep.strategies[0].name, "CENAS");
  EXPECT_EQ(rep.strategies[1].name, "NAS");
  EXPECT_EQ(slurp(root / "a/source/model.json"), slurp(root / "b/source/model.json"));

  // a changed hyperparameter invalidates the cache
  cfg.search.optimizer.learningRate = 2e-3;
  before = backwardStepCount();
  runTrainSource(cfg);
  EXPECT_EQ(backwardStepCount() - before, sourceSteps);
}

TEST(PipelineStages, SearchNeverReadsTheTestSplit) {
  const auto root = freshDir("hygiene");
  json d = transferDoc();
  d["search"]["generations"] = 3;
  json small = d;
  small["task"]["target"]["test_limit_per_class"] = 2;
  auto a = runPipeline(configAt(d, root / "full"));
  auto b = runPipeline(configAt(small, root / "small"));
  EXPECT_EQ(slurp(root / "full/search/CENAS/members.json"),
            slurp(root / "small/search/CENAS/members.json"));
  ASSERT_EQ(a.strategies[0].models.size(), b.strategies[0].models.size());
  for (std::size_t i = 0; i < a.strategies[0].models.size(); ++i) {
    EXPECT_EQ(a.strategies[0].models[i].genome, b.strategies[0].models[i].genome);
    EXPECT_EQ(a.strategies[0].models[i].trainFitness, b.strategies[0].models[i].trainFitness);
  }
}

TEST(PipelineStages, TransferBaselineIsTheUnsearchedSeed) {
  const auto root = freshDir("transfer");
  json d = transferDoc();
  d["strategies"] = {"TRANSFER"};
  auto cfg = configAt(d, root / "out");
  auto rep = runPipeline(cfg);
  ASSERT_EQ(rep.strategies[0].models.size(), 1u);
  EXPECT_EQ(rep.strategies[0].searchGradientEpochs, 0u);

  const auto data = prepareData(cfg);
  auto source = concreteFromJson(json::parse(slurp(root / "out/source/model.json")).at("model"));
  auto seed = approximateClassHead(source, data.targetTrain, cfg.head);
  EXPECT_DOUBLE_EQ(rep.strategies[0].models[0].searchFitness, fitness(seed, data.targetTrain));
  EXPECT_EQ(rep.strategies[0].models[0].params, countParams(seed.genome));
}

TEST(PipelineStages, EqualBudgetGivesNasWhatIsLeft) {
  ExperimentConfig cfg;
  cfg.search.outputTopK = 5;
  cfg.search.finalTrainEpochs = 30;
  SearchResult r;
  r.top.resize(5);
  r.gradientEpochs = 100;
  EXPECT_EQ(finalEpochsFor(cfg, "NAS", r), 30);
  cfg.equalGradientBudget = true;
  EXPECT_EQ(finalEpochsFor(cfg, "NAS", r), 10);
  EXPECT_EQ(finalEpochsFor(cfg, "NAS-T", r), 10);
  EXPECT_EQ(finalEpochsFor(cfg, "CENAS", r), 30);
  r.gradientEpochs = 400;
  EXPECT_EQ(finalEpochsFor(cfg, "NAS", r), 0);
}

TEST(PipelineStages, StageErrorsKeepTheirCategory) {
  const auto root = freshDir("stage");
  json d = transferDoc();
  d["task"]["source"] = {{"kind", "idx"},           {"train_images", "nope-1"},
                         {"train_labels", "nope-2"}, {"test_images", "nope-3"},
                         {"test_labels", "nope-4"}};
  try {
    runPipeline(configAt(d, root / "out"));
    FAIL() << "missing data accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kData);
    EXPECT_NE(std::string(e.what()).find("stage 'data'"), std::string::npos) << e.what();
  }
  // the lock is released on failure
  EXPECT_FALSE(fs::exists(root / "out/.cenas.lock"));

  json blow = transferDoc();
  blow["lr"] = 1e30;
  try {
    runTrainSource(configAt(blow, root / "blow"));
    FAIL() << "divergent training accepted";
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kCompute);
    EXPECT_NE(std::string(e.what()).find("stage 'train-source'"), std::string::npos) << e.what();
  }
}

// ----------------------------------------------------------------- sweep

TEST(Sweep, OneReportPerXWithNovelAndOtherAccuracy) {
  const auto root = freshDir("sweep");
  auto cfg = configAt(nPlusOneDoc(), root / "out");
  const auto before = backwardStepCount();
  auto reports = runNPlusOneSweep(cfg, cfg.sweepX);
  const auto steps = backwardStepCount() - before;
  ASSERT_EQ(reports.size(), 2u);
  for (std::size_t i = 0; i < reports.size(); ++i) {
    const int x = cfg.sweepX[i];
    const auto& r = reports[i];
    EXPECT_EQ(r.taskKind, TaskKind::kNPlusOne);
    EXPECT_EQ(r.task, "n+1(d,X=" + std::to_string(x) + ")");
    EXPECT_DOUBLE_EQ(r.chance, 0.25);
    EXPECT_EQ(r.classNames, (std::vector<std::string>{"a", "b", "c", "d"}));
    const auto& s = r.strategies.at(0);
    ASSERT_TRUE(s.novelMean && s.otherMean);
    EXPECT_GE(*s.novelMean, 0.0);
    EXPECT_LE(*s.novelMean, 1.0);
    EXPECT_GE(*s.otherMean, 0.0);
    EXPECT_LE(*s.otherMean, 1.0);
    double novel = 0.0;
    for (const auto& m : s.models) novel += m.perClass.back() / static_cast<double>(s.models.size());
    EXPECT_NEAR(*s.novelMean, novel, 1e-12);
    const json j = json::parse(slurp(root / ("out/x_" + std::to_string(x) + "/report.json")));
    EXPECT_TRUE(j.at("strategies")[0].contains("novel_accuracy_mean"));
    EXPECT_TRUE(j.at("strategies")[0].contains("other_accuracy_mean"));
    EXPECT_EQ(j.at("config").at("task").at("x"), x);
  }
  // one shared source model, so the only gradient steps are its training
  EXPECT_TRUE(fs::exists(root / "out/source/model.json"));
  EXPECT_FALSE(fs::exists(root / "out/x_3/source"));
  auto probe = configAt(nPlusOneDoc(), root / "probe");
  const auto before2 = backwardStepCount();
  runTrainSource(probe);
  EXPECT_EQ(steps, backwardStepCount() - before2);

  const std::string csv = slurp(root / "out/sweep.csv");
  std::istringstream lines(csv);
  std::string header, row;
  std::getline(lines, header);
  EXPECT_EQ(header, "x,strategy,novel_accuracy,other_accuracy,test_accuracy_mean,test_accuracy_std,chance");
  int rows = 0;
  while (std::getline(lines, row)) {
    ++rows;
    EXPECT_NE(row.find(",0.250000"), std::string::npos) << row;
  }
  EXPECT_EQ(rows, 2);
}

TEST(Sweep, Errors) {
  const auto root = freshDir("sweep_err");
  EXPECT_THROW(runNPlusOneSweep(configAt(transferDoc(), root / "a"), {10}), ConfigError);
  EXPECT_THROW(runNPlusOneSweep(configAt(nPlusOneDoc(), root / "b"), {}), ConfigError);
  // more novel samples than the class has
  EXPECT_THROW(runNPlusOneSweep(configAt(nPlusOneDoc(), root / "c"), {500}), Error);
}

// ---------------------------------------------------------------- report

RunReport fakeReport(const std::string& task, TaskKind kind, std::vector<std::string> strategies) {
  RunReport r;
  r.task = task;
  r.taskKind = kind;
  for (std::size_t i = 0; i < strategies.size(); ++i) {
    StrategyReport s;
    s.name = strategies[i];
    s.accMean = 0.5 + 0.1 * static_cast<double>(i);
    s.accStd = 0.01;
    s.paramsMean = 1000.0 * static_cast<double>(i + 1);
    s.paramsStd = 12.0;
    r.strategies.push_back(s);
    r.timing.emplace_back("search:" + s.name, 1.5);
    r.timing.emplace_back("finalize:" + s.name, 0.25);
  }
  return r;
}

std::vector<std::vector<std::string>> csvRows(const std::string& csv) {
  std::vector<std::vector<std::string>> rows;
  std::istringstream in(csv);
  std::string line;
  while (std::getline(in, line)) {
    std::vector<std::string> cells;
    std::istringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    rows.push_back(cells);
  }
  return rows;
}

TEST(Compare, SingleReportIsOneRow) {
  auto t = compareReport({fakeReport("transfer", TaskKind::kDomainTransfer, {"CENAS"})});
  auto rows = csvRows(t.csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[0], (std::vector<std::string>{"strategy", "task", "test_acc", "model_params", "seconds"}));
  EXPECT_EQ(rows[1], (std::vector<std::string>{"CENAS", "transfer", "0.5000 ± 0.0100", "1000 ± 12", "1.8"}));
  std::istringstream md(t.markdown);
  std::string line;
  int bodyRows = 0;
  std::getline(md, line);
  EXPECT_EQ(line, "| strategy | transfer |");
  std::getline(md, line);
  while (std::getline(md, line)) ++bodyRows;
  EXPECT_EQ(bodyRows, 1);
}

TEST(Compare, MarkdownShowsTheCsvCells) {
  auto t = compareReport({fakeReport("taskA", TaskKind::kDomainTransfer, {"CENAS", "NAS"}),
                          fakeReport("taskB", TaskKind::kDomainTransfer, {"CENAS", "TRANSFER"})});
  auto rows = csvRows(t.csv);
  ASSERT_EQ(rows.size(), 5u);
  for (std::size_t i = 1; i < rows.size(); ++i) {
    const std::string cell = rows[i][2] + " acc, " + rows[i][3] + " params, " + rows[i][4] + " s";
    EXPECT_NE(t.markdown.find(cell), std::string::npos) << cell;
  }
  // NAS ran on taskA only
  EXPECT_NE(t.markdown.find("| NAS | 0.6000 ± 0.0100 acc, 2000 ± 12 params, 1.8 s | - |"),
            std::string::npos)
      << t.markdown;
}

TEST(Compare, Errors) {
  EXPECT_THROW(compareReport({}), ConfigError);
  EXPECT_THROW(compareReport({fakeReport("transfer", TaskKind::kDomainTransfer, {"CENAS"}),
                              fakeReport("n+1(d,X=3)", TaskKind::kNPlusOne, {"CENAS"})}),
               ConfigError);
  EXPECT_THROW(compareReport({fakeReport("t", TaskKind::kDomainTransfer, {"CENAS"}),
                              fakeReport("t", TaskKind::kDomainTransfer, {"CENAS"})}),
               ConfigError);
  const auto dir = freshDir("compare");
  writeText(dir / "bad.json", "{\"format\": \"cenas.timing\"}");
  EXPECT_THROW(loadReport(dir / "bad.json"), DataError);
  writeText(dir / "torn.json", "{");
  EXPECT_THROW(loadReport(dir / "torn.json"), DataError);
  EXPECT_THROW(loadReport(dir / "absent.json"), DataError);
}

TEST(Compare, ParamCellMatchesDumpedGenomes) {
  const auto root = freshDir("compare_run");
  json d = transferDoc();
  d["search"]["generations"] = 2;
  d["search"]["output_top_k"] = 3;
  runPipeline(configAt(d, root / "out"));
  auto rep = loadReport(root / "out/report.json");
  auto t = compareReport({rep});

  std::vector<double> params;
  for (int i = 0; i < 3; ++i) {
    auto m = concreteFromJson(
        json::parse(slurp(root / ("out/final/CENAS/model_" + std::to_string(i) + ".json"))));
    params.push_back(static_cast<double>(countParams(genomeOf(m))));
  }
  double mean = (params[0] + params[1] + params[2]) / 3.0, var = 0.0;
  for (double p : params) var += (p - mean) * (p - mean) / 3.0;
  char want[64];
  std::snprintf(want, sizeof want, "%.0f ± %.0f", mean, std::sqrt(var));
  auto rows = csvRows(t.csv);
  ASSERT_EQ(rows.size(), 2u);
  EXPECT_EQ(rows[1][3], want);
}

// ------------------------------------------------------- output and lock

TEST(Output, PathsAreConfined) {
  OutputDir dir(freshDir("confine"));
  EXPECT_THROW(dir.path("../escape.txt"), ConfigError);
  EXPECT_THROW(dir.path("a/../../escape.txt"), ConfigError);
  EXPECT_THROW(dir.path("/tmp/escape.txt"), ConfigError);
  EXPECT_THROW(dir.write("../escape.txt", "x"), ConfigError);
  EXPECT_FALSE(fs::exists(dir.root().parent_path() / "escape.txt"));
  EXPECT_EQ(dir.path("a/../b.txt"), dir.root() / "b.txt");
  dir.write("deep/nested/f.txt", "hello");
  EXPECT_EQ(slurp(dir.root() / "deep/nested/f.txt"), "hello");
  EXPECT_FALSE(dir.readJson("nothing.json"));
  dir.write("bad.json", "{");
  EXPECT_THROW(dir.readJson("bad.json"), DataError);
}

TEST(Output, LockExcludesConcurrentRuns) {
  const auto root = freshDir("lock");
  auto cfg = configAt(transferDoc(), root / "out");
  {
    RunLock lock{OutputDir(cfg.outputDir)};
    EXPECT_TRUE(fs::exists(root / "out/.cenas.lock"));
    EXPECT_THROW(RunLock{OutputDir(cfg.outputDir)}, ConfigError);
    try {
      runTrainSource(cfg);
      FAIL() << "second run acquired a held lock";
    } catch (const ConfigError& e) {
      EXPECT_NE(std::string(e.what()).find("locked"), std::string::npos);
    }
  }
  EXPECT_FALSE(fs::exists(root / "out/.cenas.lock"));
  EXPECT_NO_THROW(RunLock{OutputDir(cfg.outputDir)});
}

// ------------------------------------------------------------------- CLI

#ifdef CENAS_CLI_PATH

int runCli(const std::string& args, const fs::path& log) {
  const std::string cmd = std::string("\"") + CENAS_CLI_PATH + "\" " + args + " > \"" +
                          log.string() + "\" 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

class Cli : public ::testing::Test {
 protected:
  void SetUp() override { dir_ = freshDir("cli"); }
  fs::path config(const json& d, const std::string& name = "exp.json") {
    writeText(dir_ / name, d.dump(2));
    return dir_ / name;
  }
  fs::path dir_;
};

TEST_F(Cli, UsageErrorsExitWithTwo) {
  EXPECT_EQ(runCli("", dir_ / "log"), 2);
  EXPECT_EQ(runCli("fly", dir_ / "log"), 2);
  EXPECT_EQ(runCli("run --config \"" + (dir_ / "absent.json").string() + "\"", dir_ / "log"), 2);
  EXPECT_EQ(runCli("--help", dir_ / "log"), 0);
  EXPECT_NE(slurp(dir_ / "log").find("train-source"), std::string::npos);
}

TEST_F(Cli, ConfigErrorsExitWithTwo) {
  json d = transferDoc();
  d["version"] = 9;
  EXPECT_EQ(runCli("run -c \"" + config(d).string() + "\"", dir_ / "log"), 2);
  EXPECT_NE(slurp(dir_ / "log").find("version"), std::string::npos);
  EXPECT_EQ(runCli("run -c \"" + config(transferDoc()).string() + "\" -s DARTS", dir_ / "log"), 2);
}

TEST_F(Cli, DataErrorsExitWithThree) {
  json d = transferDoc();
  d["task"]["source"] = {{"kind", "idx"},           {"train_images", "nope-1"},
                         {"train_labels", "nope-2"}, {"test_images", "nope-3"},
                         {"test_labels", "nope-4"}};
  d["output_dir"] = (dir_ / "out").string();
  EXPECT_EQ(runCli("train-source -c \"" + config(d).string() + "\"", dir_ / "log"), 3);
  writeText(dir_ / "notreport.json", "{}");
  EXPECT_EQ(runCli("report \"" + (dir_ / "notreport.json").string() + "\"", dir_ / "log"), 3);
}

TEST_F(Cli, ComputeErrorsExitWithFour) {
  json d = transferDoc();
  d["lr"] = 1e30;
  d["output_dir"] = (dir_ / "out").string();
  EXPECT_EQ(runCli("train-source -c \"" + config(d).string() + "\"", dir_ / "log"), 4);
}

TEST_F(Cli, RunThenReport) {
  json d = transferDoc();
  d["search"]["generations"] = 2;
  d["search"]["output_top_k"] = 2;
  d["output_dir"] = "runs/default";  // relative to the working directory
  const auto cfgPath = config(d);
  const auto out = dir_ / "out";
  ASSERT_EQ(runCli("run -c \"" + cfgPath.string() + "\" -o \"" + out.string() +
                       "\" --seed 9 -s CENAS -s TRANSFER",
                   dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  const json rep = json::parse(slurp(out / "report.json"));
  EXPECT_EQ(rep.at("seed"), 9);
  EXPECT_EQ(rep.at("config").at("seed"), 9);
  EXPECT_EQ(rep.at("strategies").size(), 2u);
  EXPECT_EQ(rep.at("strategies")[1].at("strategy"), "TRANSFER");
  EXPECT_NE(slurp(dir_ / "log").find("CENAS"), std::string::npos);

  const auto cmp = dir_ / "cmp";
  ASSERT_EQ(runCli("report \"" + (out / "report.json").string() + "\" -o \"" + cmp.string() + "\"",
                   dir_ / "log"),
            0)
      << slurp(dir_ / "log");
  auto table = compareReport({loadReport(out / "report.json")});
  EXPECT_EQ(slurp(cmp / "comparison.csv"), table.csv);
  EXPECT_EQ(slurp(cmp / "comparison.md"), table.markdown);
}

TEST_F(Cli, SearchResumeAndFinalize) {
  json d = transferDoc();
  d["search"]["generations"] = 2;
  d["search"]["output_top_k"] = 2;
  d["search"]["checkpoint_every"] = 1;
  d["output_dir"] = (dir_ / "out").string();
  const auto cfgPath = config(d);
  const std::string c = " -c \"" + cfgPath.string() + "\"";
  EXPECT_EQ(runCli("train-source" + c, dir_ / "log"), 0) << slurp(dir_ / "log");
  EXPECT_EQ(runCli("search" + c, dir_ / "log"), 0) << slurp(dir_ / "log");
  EXPECT_EQ(runCli("search --resume" + c, dir_ / "log"), 0) << slurp(dir_ / "log");
  EXPECT_EQ(runCli("finalize" + c, dir_ / "log"), 0) << slurp(dir_ / "log");
  EXPECT_TRUE(fs::exists(dir_ / "out/report.json"));
}

TEST_F(Cli, SweepVerb) {
  json d = nPlusOneDoc();
  d["output_dir"] = (dir_ / "out").string();
  ASSERT_EQ(runCli("sweep -c \"" + config(d).string() + "\" -x 4", dir_ / "log"), 0)
      << slurp(dir_ / "log");
  EXPECT_TRUE(fs::exists(dir_ / "out/x_4/report.json"));
  EXPECT_FALSE(fs::exists(dir_ / "out/x_3"));
  EXPECT_NE(slurp(dir_ / "log").find("novel"), std::string::npos);
}

#endif  // CENAS_CLI_PATH

}  // namespace
}  // namespace cenas
