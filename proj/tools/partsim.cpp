// partsim: run PART experiments and write throughput CSVs.

#include "part/runner.hpp"

#include "CLI11.hpp"

#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

namespace {

struct Common {
  std::string preset;
  std::string configFile;
  std::size_t runs = 100;
  std::optional<part::Round> rounds;
  std::optional<std::uint64_t> seed;
  std::optional<std::size_t> peers;
  std::optional<part::Round> delay;
  std::string miningModel;
  bool checkProperties = false;
  std::size_t threads = 0;
};

void addCommon(CLI::App& app, Common& c) {
  app.add_option("--preset", c.preset, "Named scenario preset");
  app.add_option("--config", c.configFile, "Scenario JSON file");
  app.add_option("--runs", c.runs, "Repetitions")->check(CLI::PositiveNumber);
  app.add_option("--rounds", c.rounds, "Rounds per run");
  app.add_option("--seed", c.seed, "Base seed; repetition i uses seed + i");
  app.add_option("--peers", c.peers, "Peer count");
  app.add_option("--delay", c.delay, "Maximum message delay");
  app.add_option("--mining-model", c.miningModel, "uniform-completion or per-round-bernoulli")
      ->check(CLI::IsMember({"uniform-completion", "per-round-bernoulli"}));
  app.add_flag("--check-properties", c.checkProperties, "Check safety and progress after each run");
  app.add_option("--threads", c.threads, "Worker threads (0: all cores)");
}

part::ScenarioConfig resolve(const Common& c) {
  if (!c.preset.empty() && !c.configFile.empty()) throw part::ConfigInvalid("use either --preset or --config");
  part::ScenarioConfig cfg = c.configFile.empty() ? part::preset(c.preset.empty() ? "baseline" : c.preset)
                                                  : part::loadScenario(c.configFile);
  if (c.rounds) cfg.rounds = *c.rounds;
  if (c.seed) cfg.seed = *c.seed;
  if (c.peers) {
    cfg.peers = *c.peers;
    for (auto& s : cfg.splits)
      if (s.parent == part::kRootPartition) s.secondPeers = part::upperHalf(cfg.peers);
  }
  if (c.delay) cfg.maxDelay = *c.delay;
  if (!c.miningModel.empty()) cfg.miningModel = part::miningModelFromString(c.miningModel);
  cfg.validate();
  return cfg;
}

part::RunOptions options(const Common& c) {
  part::RunOptions o;
  o.runs = c.runs;
  o.checkProperties = c.checkProperties;
  o.threads = c.threads;
  return o;
}

void report(const part::ExperimentResult& res, std::uint64_t seed) {
  for (std::size_t i = 0; i < res.reports.size(); ++i) {
    const auto& r = res.reports[i];
    if (r.ok()) continue;
    std::cerr << "seed " << seed + i << ": validity=" << r.confirmationValidity
              << " compatibility=" << r.branchCompatibility << " progress=" << r.progress << "\n";
    for (const auto& c : r.counterexamples) std::cerr << "  " << c << "\n";
  }
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"PART partitionable blockchain simulator"};
  app.require_subcommand(1);

  Common runOpts;
  std::string out, trace, positional;
  auto* run = app.add_subcommand("run", "Run repetitions of a scenario and write the aggregate CSV");
  addCommon(*run, runOpts);
  run->add_option("preset_name", positional, "Preset name (same as --preset)");
  run->add_option("--out", out, "CSV path (default: standard output)");
  run->add_option("--trace", trace, "Write an event trace of the first repetition");

  Common sweepOpts;
  std::string gridFile, outDir = "sweep";
  auto* sweep = app.add_subcommand("sweep", "Run a parameter grid, one CSV per point plus manifest.json");
  addCommon(*sweep, sweepOpts);
  sweep->add_option("--grid", gridFile, "Grid JSON: peers, max_delay, loss_rate, lie_window arrays")->required();
  sweep->add_option("--out", outDir, "Output directory");

  auto* presets = app.add_subcommand("presets", "List presets");
  std::string showName;
  auto* show = app.add_subcommand("show", "Print a preset as a scenario file");
  show->add_option("preset_name", showName)->required();

  CLI11_PARSE(app, argc, argv);

  try {
    if (presets->parsed()) {
      for (const auto& n : part::presetNames()) std::cout << n << "\n";
      return 0;
    }
    if (show->parsed()) {
      std::cout << part::toJson(part::preset(showName)) << "\n";
      return 0;
    }
    if (run->parsed()) {
      if (!positional.empty()) {
        if (!runOpts.preset.empty() && runOpts.preset != positional)
          throw part::ConfigInvalid("preset given twice");
        runOpts.preset = positional;
      }
      part::ScenarioConfig cfg = resolve(runOpts);
      if (!trace.empty()) {
        std::ofstream t(trace);
        part::World w(cfg);
        w.setTrace(&t);
        w.run();
      }
      auto opts = options(runOpts);
      part::ExperimentResult res = part::runExperiment(cfg, opts);
      if (out.empty()) {
        part::writeCsv(std::cout, res.aggregate);
      } else {
        std::ofstream f(out);
        part::writeCsv(f, res.aggregate);
        part::ManifestEntry e{std::filesystem::path(out).filename().string(), cfg.name, {}, part::eventMarkers(cfg)};
        std::ofstream m(std::filesystem::path(out).replace_extension(".manifest.json"));
        m << part::manifestJson(cfg, opts, {e});
      }
      report(res, cfg.seed);
      return res.safe() ? 0 : 3;
    }
    if (sweep->parsed()) {
      part::ScenarioConfig cfg = resolve(sweepOpts);
      std::ifstream g(gridFile);
      if (!g) throw part::ConfigInvalid(gridFile + ": cannot open");
      std::stringstream ss;
      ss << g.rdbuf();
      bool safe = true;
      part::runSweep(cfg, part::parseGrid(ss.str()), options(sweepOpts), outDir, safe);
      return safe ? 0 : 3;
    }
  } catch (const part::ConfigInvalid& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
