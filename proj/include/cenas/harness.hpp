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

#ifndef CENAS_HARNESS_HPP_
#define CENAS_HARNESS_HPP_

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "cenas/data.hpp"
#include "cenas/dataset.hpp"
#include "cenas/error.hpp"
#include "cenas/expansion.hpp"
#include "cenas/genome.hpp"
#include "cenas/hash.hpp"
#include "cenas/operators.hpp"
#include "cenas/parallel.hpp"
#include "cenas/runtime.hpp"
#include "cenas/search.hpp"
#include "cenas/serialize.hpp"

#ifndef CENAS_VERSION
#define CENAS_VERSION "0.1.0"
#endif

namespace cenas {

namespace fs = std::filesystem;

/// Where a dataset comes from. Paths are resolved against the config file's
/// directory.
struct DatasetSpec {
  std::string kind;  // "idx", "cifar" or "synthetic"
  fs::path trainImages, trainLabels, testImages, testLabels;
  std::vector<fs::path> trainFiles, testFiles;
  std::optional<std::vector<std::string>> classNames;
  // synthetic
  int classes = 3;
  int trainPerClass = 100;
  int testPerClass = 100;
  Shape3 shape{12, 12, 3};
  std::uint64_t seed = 0;
  BlobOptions blobs;
  /// Keep only the first N samples of each class of the training split.
  std::optional<int> trainLimitPerClass;
  std::optional<int> testLimitPerClass;
};

enum class TaskKind { kDomainTransfer, kNPlusOne };

struct ExperimentConfig {
  TaskKind task = TaskKind::kDomainTransfer;
  DatasetSpec source;  // domain transfer
  DatasetSpec target;  // domain transfer
  DatasetSpec dataset;  // n -> n+1
  std::string heldOutClass;
  int novelSamples = 10;
  std::vector<int> sweepX;

  SplitSpec input;  // resize target and channel policy
  CifarNetWidths widths;
  std::vector<std::string> strategies{"CENAS"};
  int sourceEpochs = 100;
  SearchConfig search;
  int nasEpochs = 30;
  int nasTransferEpochs = 12;
  /// Give NAS/NAS-T only the gradient epochs CENAS spends in finalize.
  bool equalGradientBudget = false;
  int checkpointEvery = 0;
  HeadConfig head;
  bool randomF = false;
  bool poolWithAdd = false;
  unsigned threads = 1;
  std::uint64_t seed = 0;
  fs::path outputDir = "cenas-out";
  nlohmann::json echo;  // the config document as read

  std::string taskLabel() const {
    if (task == TaskKind::kNPlusOne)
      return "n+1(" + heldOutClass + ",X=" + std::to_string(novelSamples) + ")";
    return "transfer";
  }
};

namespace detail {

template <class T>
T field(const nlohmann::json& j, const char* key, T fallback) {
  if (!j.contains(key)) return fallback;
  try {
    return j.at(key).get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("config field '") + key + "': " + e.what());
  }
}

inline fs::path resolve(const fs::path& base, const nlohmann::json& j, const char* key) {
  if (!j.contains(key)) throw ConfigError(std::string("dataset field '") + key + "' is required");
  fs::path p = j.at(key).get<std::string>();
  return p.is_absolute() ? p : base / p;
}

inline DatasetSpec datasetFromJson(const nlohmann::json& j, const fs::path& base) {
  if (!j.is_object()) throw ConfigError("dataset must be an object");
  DatasetSpec d;
  d.kind = field<std::string>(j, "kind", "");
  if (d.kind == "idx") {
    d.trainImages = resolve(base, j, "train_images");
    d.trainLabels = resolve(base, j, "train_labels");
    d.testImages = resolve(base, j, "test_images");
    d.testLabels = resolve(base, j, "test_labels");
  } else if (d.kind == "cifar") {
    for (const auto& p : field<std::vector<std::string>>(j, "train", {})) d.trainFiles.push_back(base / p);
    for (const auto& p : field<std::vector<std::string>>(j, "test", {})) d.testFiles.push_back(base / p);
    if (d.trainFiles.empty() || d.testFiles.empty())
      throw ConfigError("cifar dataset needs 'train' and 'test' file lists");
  } else if (d.kind == "synthetic") {
    d.classes = field(j, "classes", 3);
    d.trainPerClass = field(j, "train_per_class", 100);
    d.testPerClass = field(j, "test_per_class", 100);
    d.shape = {field(j, "height", 12), field(j, "width", 12), field(j, "channels", 3)};
    d.seed = field<std::uint64_t>(j, "seed", 0);
    d.blobs.style = field(j, "style", 0);
    if (j.contains("concept_seed")) d.blobs.conceptSeed = field<std::uint64_t>(j, "concept_seed", 0);
    d.blobs.noise = field(j, "noise", d.blobs.noise);
  } else {
    throw ConfigError("dataset kind must be idx, cifar or synthetic");
  }
  if (j.contains("class_names")) d.classNames = field<std::vector<std::string>>(j, "class_names", {});
  if (j.contains("train_limit_per_class")) d.trainLimitPerClass = field(j, "train_limit_per_class", 0);
  if (j.contains("test_limit_per_class")) d.testLimitPerClass = field(j, "test_limit_per_class", 0);
  return d;
}

}  // namespace detail

inline constexpr int kConfigVersion = 1;

/// Parses a versioned experiment config document. `base` anchors relative
/// dataset paths.
inline ExperimentConfig parseExperimentConfig(const nlohmann::json& j, const fs::path& base = ".") {
  using detail::field;
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  if (field<std::string>(j, "format", "") != "cenas.experiment")
    throw ConfigError("config 'format' must be \"cenas.experiment\"");
  if (field(j, "version", 0) != kConfigVersion)
    throw ConfigError("unsupported config version " + std::to_string(field(j, "version", 0)));
  if (!j.contains("seed")) throw ConfigError("config 'seed' is mandatory");

  ExperimentConfig c;
  c.echo = j;
  c.seed = field<std::uint64_t>(j, "seed", 0);
  c.outputDir = field<std::string>(j, "output_dir", "cenas-out");
  c.threads = field(j, "threads", 1u);

  if (!j.contains("task")) throw ConfigError("config 'task' is required");
  const auto& t = j.at("task");
  const auto type = field<std::string>(t, "type", "");
  if (type == "domain_transfer") {
    c.task = TaskKind::kDomainTransfer;
    if (!t.contains("source") || !t.contains("target"))
      throw ConfigError("domain_transfer needs 'source' and 'target'");
    c.source = detail::datasetFromJson(t.at("source"), base);
    c.target = detail::datasetFromJson(t.at("target"), base);
  } else if (type == "n_plus_one") {
    c.task = TaskKind::kNPlusOne;
    if (!t.contains("dataset")) throw ConfigError("n_plus_one needs 'dataset'");
    c.dataset = detail::datasetFromJson(t.at("dataset"), base);
    c.heldOutClass = field<std::string>(t, "held_out", "");
    if (c.heldOutClass.empty()) throw ConfigError("n_plus_one needs 'held_out'");
    c.novelSamples = field(t, "x", 10);
    c.sweepX = field<std::vector<int>>(t, "x_values", {c.novelSamples});
  } else {
    throw ConfigError("task type must be domain_transfer or n_plus_one");
  }

  const auto in = field<nlohmann::json>(j, "input", nlohmann::json::object());
  c.input.height = field(in, "height", 32);
  c.input.width = field(in, "width", 32);
  c.input.channels = field(in, "channels", 3);
  const auto gray = field<std::string>(in, "gray", "luma");
  if (gray != "luma" && gray != "mean") throw ConfigError("input.gray must be luma or mean");
  c.input.gray = gray == "luma" ? GrayPolicy::kLuma : GrayPolicy::kMean;
  c.input.validate();

  const auto net = field<nlohmann::json>(j, "cifarnet", nlohmann::json::object());
  c.widths.conv1 = field(net, "conv1", c.widths.conv1);
  c.widths.conv2 = field(net, "conv2", c.widths.conv2);
  c.widths.kernel = field(net, "kernel", c.widths.kernel);
  c.widths.dense = field(net, "dense", c.widths.dense);

  c.strategies = field<std::vector<std::string>>(j, "strategies", c.strategies);
  if (c.strategies.empty()) throw ConfigError("at least one strategy is required");
  for (const auto& s : c.strategies)
    if (s != "TRANSFER") parseStrategy(s);
  c.sourceEpochs = field(j, "source_epochs", c.sourceEpochs);

  auto& s = c.search;
  s.seed = c.seed;
  s.batchSize = field(j, "batch_size", s.batchSize);
  s.optimizer.learningRate = field(j, "lr", s.optimizer.learningRate);
  s.optimizer.decay = field(j, "rms_decay", s.optimizer.decay);
  s.optimizer.epsilon = field(j, "rms_epsilon", s.optimizer.epsilon);
  const auto sj = field<nlohmann::json>(j, "search", nlohmann::json::object());
  s.popSize = field(sj, "pop_size", s.popSize);
  s.generations = field(sj, "generations", s.generations);
  s.mutationRate = field(sj, "mutation_rate", s.mutationRate);
  s.finalTrainEpochs = field(sj, "final_train_epochs", s.finalTrainEpochs);
  s.outputTopK = field(sj, "output_top_k", s.outputTopK);
  s.greedyNeighbors = field(sj, "greedy_neighbors", s.greedyNeighbors);
  s.paramTiebreak = field(sj, "param_tiebreak", s.paramTiebreak);
  c.nasEpochs = field(sj, "nas_epochs", c.nasEpochs);
  c.nasTransferEpochs = field(sj, "nas_t_epochs", c.nasTransferEpochs);
  c.equalGradientBudget = field(sj, "equal_gradient_budget", c.equalGradientBudget);
  c.checkpointEvery = field(sj, "checkpoint_every", c.checkpointEvery);

  const auto hj = field<nlohmann::json>(j, "head", nlohmann::json::object());
  const auto hist = field<std::string>(hj, "histogram", "argmax");
  if (hist != "argmax" && hist != "mean_probability")
    throw ConfigError("head.histogram must be argmax or mean_probability");
  c.head.histogram =
      hist == "argmax" ? HeadHistogram::kArgmaxFrequency : HeadHistogram::kMeanProbability;
  c.head.dropThreshold = field(hj, "drop_threshold", c.head.dropThreshold);

  const auto oj = field<nlohmann::json>(j, "operators", nlohmann::json::object());
  c.randomF = field(oj, "random_f", c.randomF);
  c.poolWithAdd = field(oj, "pool_with_add", c.poolWithAdd);

  if (c.sourceEpochs < 0 || c.nasEpochs < 0 || c.nasTransferEpochs < 0)
    throw ConfigError("epoch counts must be non-negative");
  if (!(s.optimizer.learningRate > 0)) throw ConfigError("lr must be positive");
  if (c.threads < 1) throw ConfigError("threads must be at least 1");
  for (const auto& name : c.strategies) {
    SearchConfig probe = s;
    if (name == "TRANSFER")
      probe.strategy = Strategy::kRandomWalk;  // no population involved
    else
      probe.strategy = parseStrategy(name);
    probe.validate();
  }
  return c;
}

inline ExperimentConfig loadExperimentConfig(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path.string() + "'");
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in, nullptr, true, true);
  } catch (const nlohmann::json::parse_error& e) {
    throw ConfigError("config '" + path.string() + "' is not valid JSON: " + e.what());
  }
  return parseExperimentConfig(j, path.parent_path().empty() ? fs::path(".") : path.parent_path());
}

/// Train and test splits on the experiment's input shape.
struct TaskData {
  LabeledDataset sourceTrain, sourceTest;
  LabeledDataset targetTrain, targetTest;
};

namespace detail {

inline std::pair<LabeledDataset, LabeledDataset> loadSplits(const DatasetSpec& d) {
  std::pair<LabeledDataset, LabeledDataset> out;
  if (d.kind == "idx") {
    out = {loadIdx(d.trainImages, d.trainLabels, d.classNames),
           loadIdx(d.testImages, d.testLabels, d.classNames)};
  } else if (d.kind == "cifar") {
    out = {loadCifarBinary(d.trainFiles), loadCifarBinary(d.testFiles)};
  } else {
    BlobOptions o = d.blobs;
    if (!o.conceptSeed) o.conceptSeed = d.seed;
    out = {syntheticBlobs(d.classes, d.trainPerClass, d.shape, d.seed, o),
           syntheticBlobs(d.classes, d.testPerClass, d.shape, d.seed + 0x7e57, o)};
    if (d.classNames) {
      if (static_cast<int>(d.classNames->size()) != d.classes)
        throw ConfigError("class_names must list one name per synthetic class");
      out.first.classNames = out.second.classNames = *d.classNames;
      out.first = sealDataset(std::move(out.first));
      out.second = sealDataset(std::move(out.second));
    }
  }
  if (d.trainLimitPerClass) out.first = firstPerClass(out.first, static_cast<std::size_t>(*d.trainLimitPerClass));
  if (d.testLimitPerClass) out.second = firstPerClass(out.second, static_cast<std::size_t>(*d.testLimitPerClass));
  return out;
}

}  // namespace detail

/// Loads and preprocesses every split the task needs. For n -> n+1 the
/// source task drops the held-out class and the target adds its first
/// `novelSamples` instances.
inline TaskData prepareData(const ExperimentConfig& cfg) {
  TaskData d;
  if (cfg.task == TaskKind::kDomainTransfer) {
    auto [st, ss] = detail::loadSplits(cfg.source);
    auto [tt, ts] = detail::loadSplits(cfg.target);
    d.sourceTrain = preprocess(st, cfg.input);
    d.sourceTest = preprocess(ss, cfg.input);
    d.targetTrain = preprocess(tt, cfg.input);
    d.targetTest = preprocess(ts, cfg.input);
    return d;
  }
  auto [train, test] = detail::loadSplits(cfg.dataset);
  train = preprocess(train, cfg.input);
  test = preprocess(test, cfg.input);
  auto split = makeNPlusOneSplit(train, cfg.heldOutClass, cfg.novelSamples);
  d.sourceTrain = std::move(split.sourceTrain);
  d.targetTrain = std::move(split.targetTrain);
  d.targetTest = nPlusOneTest(test, cfg.heldOutClass);
  const int h = classIndex(d.targetTest, cfg.heldOutClass);
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < d.targetTest.size(); ++i)
    if (d.targetTest.labels[i] != h) keep.push_back(i);
  std::vector<int> id(d.targetTest.classNames.size());
  for (std::size_t c = 0; c < id.size(); ++c) id[c] = static_cast<int>(c);
  d.sourceTest = subset(d.targetTest, keep, id,
                        {d.targetTest.classNames.begin(), d.targetTest.classNames.end() - 1});
  return d;
}

/// Wall-clock seconds per phase. Kept apart from the report body so that
/// reruns produce byte-identical reports.
using PhaseTiming = std::vector<std::pair<std::string, double>>;

struct ModelReport {
  int rank = 0;
  long long memberId = 0;
  double searchFitness = 0.0;
  double trainFitness = 0.0;
  double testAccuracy = 0.0;
  std::vector<double> perClass;
  std::size_t params = 0;
  std::string genome;
};

struct StrategyReport {
  std::string name;
  std::vector<ModelReport> models;
  double accMean = 0.0, accStd = 0.0;
  double paramsMean = 0.0, paramsStd = 0.0;
  std::optional<double> novelMean, otherMean;
  std::uint64_t searchGradientEpochs = 0;
  int finalTrainEpochs = 0;
  std::vector<GenerationStats> history;
};

struct RunReport {
  std::string task;
  TaskKind taskKind = TaskKind::kDomainTransfer;
  std::uint64_t seed = 0;
  std::vector<std::string> classNames;
  double chance = 0.0;
  double sourceTrainAccuracy = 0.0;
  double sourceTestAccuracy = 0.0;
  std::size_t sourceParams = 0;
  std::vector<StrategyReport> strategies;
  nlohmann::json config;
  PhaseTiming timing;

  double secondsFor(const std::string& phase) const {
    double s = 0.0;
    for (const auto& [name, t] : timing)
      if (name == phase) s += t;
    return s;
  }
};

namespace detail {

inline std::pair<double, double> meanStd(const std::vector<double>& v) {
  if (v.empty()) return {0.0, 0.0};
  double m = 0.0;
  for (double x : v) m += x;
  m /= static_cast<double>(v.size());
  double var = 0.0;
  for (double x : v) var += (x - m) * (x - m);
  return {m, std::sqrt(var / static_cast<double>(v.size()))};
}

inline nlohmann::json numberOrNull(double v) {
  return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

}  // namespace detail

inline nlohmann::json toJson(const RunReport& r) {
  using nlohmann::json;
  json strategies = json::array();
  for (const auto& s : r.strategies) {
    json models = json::array();
    for (const auto& m : s.models) {
      json pc = json::array();
      for (double a : m.perClass) pc.push_back(detail::numberOrNull(a));
      models.push_back({{"rank", m.rank},
                        {"member", m.memberId},
                        {"search_fitness", m.searchFitness},
                        {"train_fitness", m.trainFitness},
                        {"test_accuracy", m.testAccuracy},
                        {"per_class_accuracy", pc},
                        {"params", m.params},
                        {"genome", m.genome}});
    }
    json hist = json::array();
    for (const auto& h : s.history)
      hist.push_back({{"generation", h.generation}, {"best", h.best}, {"mean", h.mean},
                      {"min", h.min}, {"best_params", h.bestParams}});
    json sj{{"strategy", s.name},
            {"test_accuracy_mean", s.accMean},
            {"test_accuracy_std", s.accStd},
            {"params_mean", s.paramsMean},
            {"params_std", s.paramsStd},
            {"search_gradient_epochs", s.searchGradientEpochs},
            {"final_train_epochs", s.finalTrainEpochs},
            {"models", models},
            {"fitness_history", hist}};
    if (s.novelMean) sj["novel_accuracy_mean"] = *s.novelMean;
    if (s.otherMean) sj["other_accuracy_mean"] = *s.otherMean;
    strategies.push_back(sj);
  }
  return {{"format", "cenas.report"},
          {"version", kFormatVersion},
          {"cenas_version", CENAS_VERSION},
          {"task", r.task},
          {"task_kind", r.taskKind == TaskKind::kNPlusOne ? "n_plus_one" : "domain_transfer"},
          {"seed", r.seed},
          {"class_names", r.classNames},
          {"chance_accuracy", r.chance},
          {"source", {{"train_accuracy", r.sourceTrainAccuracy},
                      {"test_accuracy", r.sourceTestAccuracy},
                      {"params", r.sourceParams}}},
          {"metadata", {{"resize", "bilinear"},
                        {"head_histogram_input", "frequencies"},
                        {"mutation_kind_selection", "uniform"}}},
          {"strategies", strategies},
          {"config", r.config}};
}

inline nlohmann::json timingJson(const RunReport& r) {
  nlohmann::json t = nlohmann::json::array();
  for (const auto& [phase, s] : r.timing) t.push_back({{"phase", phase}, {"seconds", s}});
  return {{"format", "cenas.timing"}, {"version", kFormatVersion}, {"phases", t}};
}

inline RunReport reportFromJson(const nlohmann::json& j, const nlohmann::json* timing = nullptr) {
  if (j.value("format", "") != "cenas.report") throw DataError("not a cenas report");
  RunReport r;
  r.task = j.at("task").get<std::string>();
  r.taskKind = j.at("task_kind") == "n_plus_one" ? TaskKind::kNPlusOne : TaskKind::kDomainTransfer;
  r.seed = j.at("seed").get<std::uint64_t>();
  r.classNames = j.at("class_names").get<std::vector<std::string>>();
  r.chance = j.at("chance_accuracy").get<double>();
  r.sourceTrainAccuracy = j.at("source").at("train_accuracy").get<double>();
  r.sourceTestAccuracy = j.at("source").at("test_accuracy").get<double>();
  r.sourceParams = j.at("source").at("params").get<std::size_t>();
  r.config = j.at("config");
  for (const auto& sj : j.at("strategies")) {
    StrategyReport s;
    s.name = sj.at("strategy").get<std::string>();
    s.accMean = sj.at("test_accuracy_mean").get<double>();
    s.accStd = sj.at("test_accuracy_std").get<double>();
    s.paramsMean = sj.at("params_mean").get<double>();
    s.paramsStd = sj.at("params_std").get<double>();
    s.searchGradientEpochs = sj.at("search_gradient_epochs").get<std::uint64_t>();
    s.finalTrainEpochs = sj.at("final_train_epochs").get<int>();
    if (sj.contains("novel_accuracy_mean")) s.novelMean = sj.at("novel_accuracy_mean").get<double>();
    if (sj.contains("other_accuracy_mean")) s.otherMean = sj.at("other_accuracy_mean").get<double>();
    for (const auto& mj : sj.at("models")) {
      ModelReport m;
      m.rank = mj.at("rank").get<int>();
      m.memberId = mj.at("member").get<long long>();
      m.searchFitness = mj.at("search_fitness").get<double>();
      m.trainFitness = mj.at("train_fitness").get<double>();
      m.testAccuracy = mj.at("test_accuracy").get<double>();
      for (const auto& a : mj.at("per_class_accuracy"))
        m.perClass.push_back(a.is_null() ? std::nan("") : a.get<double>());
      m.params = mj.at("params").get<std::size_t>();
      m.genome = mj.at("genome").get<std::string>();
      s.models.push_back(std::move(m));
    }
    for (const auto& h : sj.at("fitness_history"))
      s.history.push_back({h.at("generation").get<int>(), h.at("best").get<double>(),
                           h.at("mean").get<double>(), h.at("min").get<double>(),
                           h.at("best_params").get<std::size_t>(), 0.0});
    r.strategies.push_back(std::move(s));
  }
  if (timing)
    for (const auto& p : timing->at("phases"))
      r.timing.emplace_back(p.at("phase").get<std::string>(), p.at("seconds").get<double>());
  return r;
}

/// Writes files strictly beneath one directory.
class OutputDir {
 public:
  explicit OutputDir(fs::path root) : root_(fs::absolute(std::move(root)).lexically_normal()) {
    fs::create_directories(root_);
  }

  const fs::path& root() const { return root_; }

  fs::path path(const fs::path& rel) const {
    fs::path p = (root_ / rel).lexically_normal();
    auto r = p.lexically_relative(root_);
    if (rel.is_absolute() || r.empty() || *r.begin() == "..")
      throw ConfigError("refusing to write outside the output directory: " + rel.string());
    return p;
  }

  void write(const fs::path& rel, const std::string& text) const {
    fs::path p = path(rel);
    fs::create_directories(p.parent_path());
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write '" + p.string() + "'");
    out << text;
    if (!out) throw DataError("short write to '" + p.string() + "'");
  }

  void writeJson(const fs::path& rel, const nlohmann::json& j) const { write(rel, j.dump(1) + "\n"); }

  std::optional<nlohmann::json> readJson(const fs::path& rel) const {
    fs::path p = path(rel);
    if (!fs::exists(p)) return std::nullopt;
    std::ifstream in(p);
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("cannot parse '" + p.string() + "': " + e.what());
    }
  }

 private:
  fs::path root_;
};

/// Exclusive per-directory run lock, released on destruction.
class RunLock {
 public:
  explicit RunLock(const OutputDir& dir) : path_(dir.path(".cenas.lock")) {
    std::FILE* f = std::fopen(path_.string().c_str(), "wx");
    if (!f)
      throw ConfigError("output directory is locked by another run (" + path_.string() +
                        "); remove the file if no run is active");
    std::fclose(f);
  }
  RunLock(const RunLock&) = delete;
  RunLock& operator=(const RunLock&) = delete;
  ~RunLock() {
    std::error_code ec;
    fs::remove(path_, ec);
  }

 private:
  fs::path path_;
};

namespace detail {

using Clock = std::chrono::steady_clock;

/// Runs one pipeline stage; errors keep their category and gain the stage
/// name plus a checkpoint reference when one exists.
template <class F>
auto stage(const std::string& name, PhaseTiming& timing, const std::optional<fs::path>& checkpoint,
           F&& fn) {
  auto t0 = Clock::now();
  auto done = [&] {
    timing.emplace_back(name, std::chrono::duration<double>(Clock::now() - t0).count());
  };
  try {
    auto out = fn();
    done();
    return out;
  } catch (const Error& e) {
    std::string msg = "stage '" + name + "' failed: " + e.what();
    if (checkpoint && fs::exists(*checkpoint)) msg += " (resume from " + checkpoint->string() + ")";
    throw Error(e.kind(), msg);
  }
}

inline std::string fileSafe(std::string s) {
  for (char& ch : s)
    if (!std::isalnum(static_cast<unsigned char>(ch)) && ch != '-' && ch != '_') ch = '_';
  return s;
}

}  // namespace detail

/// Trains the seed architecture on the source split, reusing a cached model
/// in `dir` when its key (data, architecture, hyperparameters) matches.
inline ConcreteModel trainSource(const ExperimentConfig& cfg, const LabeledDataset& sourceTrain,
                                 const OutputDir& dir, const ParallelFor& = serialFor) {
  const Genome g = cifarNetSeed({sourceTrain.height(), sourceTrain.width(), sourceTrain.channels()},
                                sourceTrain.numClasses(), cfg.widths);
  Fnv1a key;
  key.value(sourceTrain.provenanceHash).text(toJson(g).dump()).value(cfg.sourceEpochs);
  key.value(cfg.search.batchSize).value(cfg.search.optimizer.learningRate);
  key.value(cfg.search.optimizer.decay).value(cfg.search.optimizer.epsilon).value(cfg.seed);
  const std::string k = hexDigest(key.digest());
  if (auto cached = dir.readJson("source/model.json"); cached && cached->value("key", "") == k)
    return concreteFromJson(cached->at("model"));
  RngStream init(cfg.seed);
  ConcreteModel m = initModel(g.input, g.layers, init);
  m = train(m, sourceTrain, {cfg.sourceEpochs, cfg.search.batchSize, cfg.search.optimizer, cfg.seed});
  dir.writeJson("source/model.json", {{"key", k}, {"model", toJson(m)}});
  dir.write("source/genome.txt", dumpGenome(genomeOf(m)));
  return m;
}

inline OperatorConfig operatorConfig(const ExperimentConfig& cfg, const ConcreteModel& source) {
  OperatorConfig ops;
  ops.pool = std::make_shared<const SourcePool>(source);
  ops.randomF = cfg.randomF;
  ops.poolWithAdd = cfg.poolWithAdd;
  return ops;
}

inline SearchConfig strategyConfig(const ExperimentConfig& cfg, Strategy s) {
  SearchConfig sc = cfg.search;
  sc.strategy = s;
  sc.perGenTrainEpochs = s == Strategy::kNas ? cfg.nasEpochs
                         : s == Strategy::kNasTransfer ? cfg.nasTransferEpochs
                                                       : 0;
  return sc;
}

/// Runs the search phase of one strategy ("TRANSFER" returns the CENAS seed
/// alone) and stores the result in `dir`.
inline SearchResult searchStrategy(const ExperimentConfig& cfg, const TaskData& data,
                                   const ConcreteModel& source, const std::string& name,
                                   const OutputDir& dir, bool resume = false) {
  const ParallelFor par = cfg.threads > 1 ? threadedFor(cfg.threads) : ParallelFor(serialFor);
  const ExpandedModel seed = approximateClassHead(source, data.targetTrain, cfg.head);
  const auto ops = operatorConfig(cfg, source);
  SearchResult r;
  if (name == "TRANSFER") {
    std::vector<ScoredMember> one{{0, seed, std::nullopt, 0.0, 0, {}}};
    one[0].fitness = fitness(seed, data.targetTrain);
    one[0].params = countParams(seed.genome);
    r.top = std::move(one);
    r.history.push_back({0, r.top[0].fitness, r.top[0].fitness, r.top[0].fitness, r.top[0].params, 0.0});
  } else {
    const Strategy s = parseStrategy(name);
    const SearchConfig sc = strategyConfig(cfg, s);
    SearchHooks hooks;
    hooks.parallel = par;
    const fs::path ckpt = "checkpoints/" + detail::fileSafe(name) + "_state.json";
    switch (s) {
      case Strategy::kCenas: {
        std::optional<SearchState> start;
        if (resume)
          if (auto j = dir.readJson(ckpt)) start = searchStateFromJson(*j);
        if (cfg.checkpointEvery > 0)
          hooks.onGeneration = [&](const SearchState& st) {
            if (st.generation % cfg.checkpointEvery == 0) dir.writeJson(ckpt, toJson(st));
          };
        r = runCENAS(seed, data.targetTrain, sc, ops, hooks, std::move(start));
        break;
      }
      case Strategy::kRandomWalk: r = runRandomWalk(seed, data.targetTrain, sc, ops, hooks); break;
      case Strategy::kGreedy: r = runGreedy(seed, data.targetTrain, sc, ops, hooks); break;
      case Strategy::kNas: {
        const Genome g = cifarNetSeed(source.input, data.targetTrain.numClasses(), cfg.widths);
        r = runNAS(g, data.targetTrain, sc, hooks);
        break;
      }
      case Strategy::kNasTransfer: {
        RngStream headRng(cfg.seed ^ 0x4ead);
        auto start = transferSeed(source, data.sourceTrain.classNames, data.targetTrain.classNames, headRng);
        r = runNAS(start, data.targetTrain, sc, true, hooks);
        break;
      }
    }
  }
  const std::string base = "search/" + detail::fileSafe(name);
  nlohmann::json members = nlohmann::json::array(), history = nlohmann::json::array();
  for (const auto& m : r.top) members.push_back(toJson(m));
  for (auto h : r.history) {
    h.seconds = 0.0;  // timing lives in stats.csv only
    history.push_back(toJson(h));
  }
  dir.writeJson(base + "/members.json",
                {{"format", "cenas.search_result"}, {"version", kFormatVersion}, {"strategy", name},
                 {"gradient_epochs", r.gradientEpochs}, {"history", history}, {"members", members}});
  dir.write(base + "/stats.csv", statsCsv(r.history));
  std::string events;
  for (const auto& e : r.events) events += e.toJson().dump() + "\n";
  dir.write(base + "/events.jsonl", events);
  return r;
}

inline SearchResult loadSearchResult(const OutputDir& dir, const std::string& name) {
  auto j = dir.readJson("search/" + detail::fileSafe(name) + "/members.json");
  if (!j) throw DataError("no search result for " + name + " in " + dir.root().string());
  SearchResult r;
  r.gradientEpochs = j->at("gradient_epochs").get<std::uint64_t>();
  for (const auto& m : j->at("members")) r.top.push_back(memberFromJson(m));
  for (const auto& h : j->at("history")) r.history.push_back(statsFromJson(h));
  if (r.top.empty()) throw DataError("search result for " + name + " has no members");
  return r;
}

/// Final training epochs for a strategy; with an equal gradient budget,
/// NAS-family runs only get what remains of CENAS's finalize budget.
inline int finalEpochsFor(const ExperimentConfig& cfg, const std::string& name,
                          const SearchResult& r) {
  if (!cfg.equalGradientBudget || (name != "NAS" && name != "NAS-T"))
    return cfg.search.finalTrainEpochs;
  const long long k = static_cast<long long>(r.top.size());
  const long long budget = static_cast<long long>(cfg.search.outputTopK) * cfg.search.finalTrainEpochs;
  const long long left = budget - static_cast<long long>(r.gradientEpochs);
  return left <= 0 || k == 0 ? 0 : static_cast<int>(left / k);
}

/// Finalizes a search result, evaluates it on the test split and writes the
/// final models and genome dumps.
inline StrategyReport finalizeStrategy(const ExperimentConfig& cfg, const TaskData& data,
                                       const std::string& name, const SearchResult& r,
                                       const OutputDir& dir) {
  const ParallelFor par = cfg.threads > 1 ? threadedFor(cfg.threads) : ParallelFor(serialFor);
  SearchConfig sc = cfg.search;
  sc.finalTrainEpochs = finalEpochsFor(cfg, name, r);
  auto finals = finalize(r.top, data.targetTrain, sc, par);
  StrategyReport s;
  s.name = name;
  s.searchGradientEpochs = r.gradientEpochs;
  s.finalTrainEpochs = sc.finalTrainEpochs;
  s.history = r.history;
  std::vector<double> acc, params, novel, other;
  const std::string base = "final/" + detail::fileSafe(name);
  for (std::size_t i = 0; i < finals.size(); ++i) {
    const auto& f = finals[i];
    ModelReport m;
    m.rank = static_cast<int>(i);
    m.memberId = f.id;
    m.searchFitness = r.top[i].fitness;
    m.trainFitness = f.trainFitness;
    m.testAccuracy = accuracy(f.model, data.targetTest);
    m.perClass = perClassAccuracy(f.model, data.targetTest);
    m.params = f.params;
    m.genome = dumpGenome(genomeOf(f.model));
    dir.writeJson(base + "/model_" + std::to_string(i) + ".json", toJson(f.model));
    dir.write(base + "/genome_" + std::to_string(i) + ".txt", m.genome);
    acc.push_back(m.testAccuracy);
    params.push_back(static_cast<double>(m.params));
    if (cfg.task == TaskKind::kNPlusOne) {
      novel.push_back(m.perClass.back());
      double o = 0.0;
      for (std::size_t c = 0; c + 1 < m.perClass.size(); ++c) o += m.perClass[c];
      other.push_back(o / static_cast<double>(m.perClass.size() - 1));
    }
    s.models.push_back(std::move(m));
  }
  std::tie(s.accMean, s.accStd) = detail::meanStd(acc);
  std::tie(s.paramsMean, s.paramsStd) = detail::meanStd(params);
  if (cfg.task == TaskKind::kNPlusOne) {
    s.novelMean = detail::meanStd(novel).first;
    s.otherMean = detail::meanStd(other).first;
  }
  return s;
}

namespace detail {

inline RunReport reportHeader(const ExperimentConfig& cfg, const TaskData& data,
                              const ConcreteModel& source) {
  RunReport rep;
  rep.task = cfg.taskLabel();
  rep.taskKind = cfg.task;
  rep.seed = cfg.seed;
  rep.classNames = data.targetTrain.classNames;
  rep.chance = 1.0 / data.targetTrain.numClasses();
  rep.sourceTrainAccuracy = accuracy(source, data.sourceTrain);
  rep.sourceTestAccuracy = accuracy(source, data.sourceTest);
  rep.sourceParams = paramCount(source);
  rep.config = cfg.echo;
  return rep;
}

inline void writeReport(RunReport& rep, PhaseTiming timing, const OutputDir& dir) {
  rep.timing = std::move(timing);
  dir.writeJson("report.json", toJson(rep));
  dir.writeJson("timing.json", timingJson(rep));
}

inline RunReport runStrategies(const ExperimentConfig& cfg, const TaskData& data,
                               const ConcreteModel& source, const OutputDir& dir,
                               PhaseTiming timing) {
  RunReport rep = reportHeader(cfg, data, source);
  for (const auto& name : cfg.strategies) {
    const fs::path ckpt = dir.path("checkpoints/" + fileSafe(name) + "_state.json");
    auto r = stage("search:" + name, timing, ckpt,
                   [&] { return searchStrategy(cfg, data, source, name, dir); });
    rep.strategies.push_back(stage("finalize:" + name, timing, std::nullopt,
                                   [&] { return finalizeStrategy(cfg, data, name, r, dir); }));
  }
  writeReport(rep, std::move(timing), dir);
  return rep;
}

}  // namespace detail

/// Per-model rows: strategy,rank,member,test_accuracy,params,...
inline std::string reportCsv(const RunReport& r) {
  std::ostringstream os;
  os << "task,strategy,rank,member,search_fitness,train_fitness,test_accuracy,params";
  for (const auto& c : r.classNames) os << ",acc_" << c;
  os << "\n";
  char buf[64];
  auto num = [&](double v) {
    std::snprintf(buf, sizeof buf, "%.6f", v);
    return std::string(buf);
  };
  for (const auto& s : r.strategies)
    for (const auto& m : s.models) {
      os << r.task << ',' << s.name << ',' << m.rank << ',' << m.memberId << ','
         << num(m.searchFitness) << ',' << num(m.trainFitness) << ',' << num(m.testAccuracy)
         << ',' << m.params;
      for (double a : m.perClass) os << ',' << (std::isfinite(a) ? num(a) : "");
      os << "\n";
    }
  return os.str();
}

/// The three-step pipeline: source training, head approximation, then
/// search, finalize and test evaluation for each configured strategy.
inline RunReport runPipeline(const ExperimentConfig& cfg) {
  OutputDir dir(cfg.outputDir);
  RunLock lock(dir);
  PhaseTiming timing;
  auto data = detail::stage("data", timing, std::nullopt, [&] { return prepareData(cfg); });
  auto source = detail::stage("train-source", timing, std::nullopt,
                              [&] { return trainSource(cfg, data.sourceTrain, dir); });
  auto rep = detail::runStrategies(cfg, data, source, dir, std::move(timing));
  dir.write("report.csv", reportCsv(rep));
  return rep;
}

/// Stage 1 alone: trains (or reuses) the source model.
inline ConcreteModel runTrainSource(const ExperimentConfig& cfg) {
  OutputDir dir(cfg.outputDir);
  RunLock lock(dir);
  PhaseTiming timing;
  auto data = detail::stage("data", timing, std::nullopt, [&] { return prepareData(cfg); });
  return detail::stage("train-source", timing, std::nullopt,
                       [&] { return trainSource(cfg, data.sourceTrain, dir); });
}

/// Search phase for every configured strategy; results go to search/.
inline std::vector<SearchResult> runSearchOnly(const ExperimentConfig& cfg, bool resume) {
  OutputDir dir(cfg.outputDir);
  RunLock lock(dir);
  PhaseTiming timing;
  auto data = detail::stage("data", timing, std::nullopt, [&] { return prepareData(cfg); });
  auto source = detail::stage("train-source", timing, std::nullopt,
                              [&] { return trainSource(cfg, data.sourceTrain, dir); });
  std::vector<SearchResult> out;
  for (const auto& name : cfg.strategies) {
    const fs::path ckpt = dir.path("checkpoints/" + detail::fileSafe(name) + "_state.json");
    out.push_back(detail::stage("search:" + name, timing, ckpt, [&] {
      return searchStrategy(cfg, data, source, name, dir, resume);
    }));
  }
  return out;
}

/// Finalize phase from stored search results; writes the run report.
inline RunReport runFinalizeOnly(const ExperimentConfig& cfg) {
  OutputDir dir(cfg.outputDir);
  RunLock lock(dir);
  PhaseTiming timing;
  auto data = detail::stage("data", timing, std::nullopt, [&] { return prepareData(cfg); });
  auto source = detail::stage("train-source", timing, std::nullopt,
                              [&] { return trainSource(cfg, data.sourceTrain, dir); });
  RunReport rep = detail::reportHeader(cfg, data, source);
  for (const auto& name : cfg.strategies) {
    auto r = loadSearchResult(dir, name);
    rep.strategies.push_back(detail::stage("finalize:" + name, timing, std::nullopt,
                                           [&] { return finalizeStrategy(cfg, data, name, r, dir); }));
  }
  detail::writeReport(rep, std::move(timing), dir);
  dir.write("report.csv", reportCsv(rep));
  return rep;
}

/// One report per X sharing a single source model, plus sweep.csv.
inline std::vector<RunReport> runNPlusOneSweep(ExperimentConfig cfg, const std::vector<int>& xs) {
  if (cfg.task != TaskKind::kNPlusOne) throw ConfigError("sweep needs an n_plus_one task");
  if (xs.empty()) throw ConfigError("sweep needs at least one X value");
  OutputDir dir(cfg.outputDir);
  RunLock lock(dir);
  std::vector<RunReport> out;
  std::ostringstream csv;
  csv << "x,strategy,novel_accuracy,other_accuracy,test_accuracy_mean,test_accuracy_std,chance\n";
  std::optional<ConcreteModel> source;
  for (int x : xs) {
    cfg.novelSamples = x;
    cfg.echo["task"]["x"] = x;
    PhaseTiming timing;
    auto data = detail::stage("data", timing, std::nullopt, [&] { return prepareData(cfg); });
    if (!source)
      source = detail::stage("train-source", timing, std::nullopt,
                             [&] { return trainSource(cfg, data.sourceTrain, dir); });
    OutputDir sub(dir.path("x_" + std::to_string(x)));
    auto rep = detail::runStrategies(cfg, data, *source, sub, std::move(timing));
    sub.write("report.csv", reportCsv(rep));
    char buf[256];
    for (const auto& s : rep.strategies) {
      std::snprintf(buf, sizeof buf, "%d,%s,%.6f,%.6f,%.6f,%.6f,%.6f\n", x, s.name.c_str(),
                    s.novelMean.value_or(0.0), s.otherMean.value_or(0.0), s.accMean, s.accStd,
                    rep.chance);
      csv << buf;
    }
    out.push_back(std::move(rep));
  }
  dir.write("sweep.csv", csv.str());
  return out;
}

struct ComparisonTable {
  std::string csv;
  std::string markdown;
};

/// Strategies as rows, tasks as columns. Both renderings come from the same
/// formatted cells.
inline ComparisonTable compareReport(const std::vector<RunReport>& reports) {
  if (reports.empty()) throw ConfigError("compareReport needs at least one report");
  for (const auto& r : reports)
    if (r.taskKind != reports.front().taskKind)
      throw ConfigError("cannot compare domain-transfer and n+1 reports in one table");
  std::vector<std::string> tasks, strategies;
  auto addUnique = [](std::vector<std::string>& v, const std::string& s) {
    if (std::find(v.begin(), v.end(), s) == v.end()) v.push_back(s);
  };
  struct Cell {
    std::string acc, params, seconds;
  };
  std::map<std::pair<std::string, std::string>, Cell> cells;
  char buf[128];
  for (const auto& r : reports) {
    addUnique(tasks, r.task);
    for (const auto& s : r.strategies) {
      addUnique(strategies, s.name);
      Cell c;
      std::snprintf(buf, sizeof buf, "%.4f ± %.4f", s.accMean, s.accStd);
      c.acc = buf;
      std::snprintf(buf, sizeof buf, "%.0f ± %.0f", s.paramsMean, s.paramsStd);
      c.params = buf;
      std::snprintf(buf, sizeof buf, "%.1f",
                    r.secondsFor("search:" + s.name) + r.secondsFor("finalize:" + s.name));
      c.seconds = buf;
      if (!cells.emplace(std::make_pair(s.name, r.task), c).second)
        throw ConfigError("duplicate report for strategy " + s.name + " on task " + r.task);
    }
  }
  ComparisonTable t;
  std::ostringstream csv, md;
  csv << "strategy,task,test_acc,model_params,seconds\n";
  md << "| strategy |";
  for (const auto& task : tasks) md << ' ' << task << " |";
  md << "\n|---|";
  for (std::size_t i = 0; i < tasks.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& s : strategies) {
    md << "| " << s << " |";
    for (const auto& task : tasks) {
      auto it = cells.find({s, task});
      if (it == cells.end()) {
        md << " - |";
        continue;
      }
      const auto& c = it->second;
      csv << s << ',' << task << ',' << c.acc << ',' << c.params << ',' << c.seconds << "\n";
      md << ' ' << c.acc << " acc, " << c.params << " params, " << c.seconds << " s |";
    }
    md << "\n";
  }
  t.csv = csv.str();
  t.markdown = md.str();
  return t;
}

inline RunReport loadReport(const fs::path& path) {
  auto read = [](const fs::path& p) {
    std::ifstream in(p);
    if (!in) throw DataError("cannot open '" + p.string() + "'");
    try {
      return nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
      throw DataError("cannot parse '" + p.string() + "': " + e.what());
    }
  };
  auto j = read(path);
  fs::path timing = path.parent_path() / "timing.json";
  if (fs::exists(timing)) {
    auto t = read(timing);
    return reportFromJson(j, &t);
  }
  return reportFromJson(j);
}

}  // namespace cenas

#endif  // CENAS_HARNESS_HPP_
