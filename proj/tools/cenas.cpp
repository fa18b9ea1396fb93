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

// Command-line front end: cenas <verb> --config FILE [options]

#include <cstdio>
#include <exception>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "cenas.hpp"

namespace {

struct Common {
  std::string config;
  std::optional<std::uint64_t> seed;
  std::string out;
  std::vector<std::string> strategies;
  unsigned threads = 0;
};

void addCommon(CLI::App* cmd, Common& c) {
  cmd->add_option("-c,--config", c.config, "experiment config (JSON)")->required()->check(CLI::ExistingFile);
  cmd->add_option("--seed", c.seed, "override the config seed");
  cmd->add_option("-o,--out", c.out, "override the output directory");
  cmd->add_option("-s,--strategy", c.strategies,
                  "restrict to these strategies (CENAS, R-CENAS, G-CENAS, NAS, NAS-T, TRANSFER)");
  cmd->add_option("-j,--threads", c.threads, "evaluation threads");
}

cenas::ExperimentConfig load(const Common& c) {
  auto cfg = cenas::loadExperimentConfig(c.config);
  if (c.seed) {
    cfg.seed = *c.seed;
    cfg.search.seed = *c.seed;
    cfg.echo["seed"] = *c.seed;
  }
  if (!c.out.empty()) cfg.outputDir = c.out;
  if (c.threads > 0) cfg.threads = c.threads;
  if (!c.strategies.empty()) {
    for (const auto& s : c.strategies)
      if (s != "TRANSFER") cenas::parseStrategy(s);
    cfg.strategies = c.strategies;
    cfg.echo["strategies"] = c.strategies;
  }
  return cfg;
}

void printSummary(const cenas::RunReport& r) {
  std::printf("task %s  (chance %.3f, source test acc %.4f)\n", r.task.c_str(), r.chance,
              r.sourceTestAccuracy);
  for (const auto& s : r.strategies) {
    std::printf("  %-8s test acc %.4f +/- %.4f  params %.0f +/- %.0f", s.name.c_str(), s.accMean,
                s.accStd, s.paramsMean, s.paramsStd);
    if (s.novelMean) std::printf("  novel %.4f  other %.4f", *s.novelMean, *s.otherMean);
    std::printf("\n");
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Conceptual expansion neural architecture search"};
  app.require_subcommand(1);
  app.set_version_flag("--version", std::string(CENAS_VERSION));

  Common trainC, searchC, finalC, runC, sweepC;
  auto* trainCmd = app.add_subcommand("train-source", "train (or reuse) the source model");
  addCommon(trainCmd, trainC);
  auto* searchCmd = app.add_subcommand("search", "run the search phase of each strategy");
  addCommon(searchCmd, searchC);
  bool resume = false;
  searchCmd->add_flag("--resume", resume, "continue CENAS from its latest checkpoint");
  auto* finalCmd = app.add_subcommand("finalize", "fine-tune stored search results and report");
  addCommon(finalCmd, finalC);
  auto* runCmd = app.add_subcommand("run", "source training, search, finalize and report");
  addCommon(runCmd, runC);
  auto* sweepCmd = app.add_subcommand("sweep", "n+1 sweep over novel-sample counts");
  addCommon(sweepCmd, sweepC);
  std::vector<int> xs;
  sweepCmd->add_option("-x,--x-values", xs, "novel-class sample counts (default: config x_values)");
  auto* reportCmd = app.add_subcommand("report", "compare run reports as CSV and markdown");
  std::vector<std::string> inputs;
  std::string reportOut;
  reportCmd->add_option("reports", inputs, "report.json files")->required()->check(CLI::ExistingFile);
  reportCmd->add_option("-o,--out", reportOut, "write comparison.csv/.md into this directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : cenas::exitCodeFor(cenas::ErrorKind::kConfig);
  }

  try {
    if (*trainCmd) {
      auto cfg = load(trainC);
      auto m = cenas::runTrainSource(cfg);
      std::printf("source model: %zu params, written to %s\n", cenas::paramCount(m),
                  (cfg.outputDir / "source/model.json").string().c_str());
    } else if (*searchCmd) {
      auto cfg = load(searchC);
      auto results = cenas::runSearchOnly(cfg, resume);
      for (std::size_t i = 0; i < results.size(); ++i)
        std::printf("%-8s best search fitness %.4f (%zu members kept)\n",
                    cfg.strategies[i].c_str(), results[i].top.front().fitness,
                    results[i].top.size());
    } else if (*finalCmd) {
      printSummary(cenas::runFinalizeOnly(load(finalC)));
    } else if (*runCmd) {
      printSummary(cenas::runPipeline(load(runC)));
    } else if (*sweepCmd) {
      auto cfg = load(sweepC);
      auto reports = cenas::runNPlusOneSweep(cfg, xs.empty() ? cfg.sweepX : xs);
      for (const auto& r : reports) printSummary(r);
    } else if (*reportCmd) {
      std::vector<cenas::RunReport> reports;
      for (const auto& p : inputs) reports.push_back(cenas::loadReport(p));
      auto table = cenas::compareReport(reports);
      if (reportOut.empty()) {
        std::cout << table.markdown;
      } else {
        cenas::OutputDir dir(reportOut);
        dir.write("comparison.csv", table.csv);
        dir.write("comparison.md", table.markdown);
        std::cout << table.markdown;
      }
    }
  } catch (const cenas::Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cenas::exitCodeFor(e.kind());
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return cenas::exitCodeFor(cenas::ErrorKind::kCompute);
  }
  return 0;
}
