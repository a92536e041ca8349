#pragma once

// Repetitions, sweeps and run manifests.

#include "part/metrics.hpp"
#include "part/scenario.hpp"

#include <string>
#include <vector>

namespace part {

struct RunOptions {
  std::size_t runs = 100;
  bool checkProperties = false;
  std::size_t threads = 0;  // 0: hardware concurrency
};

struct ExperimentResult {
  Aggregate aggregate;
  std::vector<PropertyReport> reports;  // per repetition when requested
  bool safe() const;
};

/// Runs repetitions with seeds config.seed + i and aggregates them.
ExperimentResult runExperiment(const ScenarioConfig& config, const RunOptions& opts);

struct EventMarker {
  Round round = 0;
  std::string label;
};

std::vector<EventMarker> eventMarkers(const ScenarioConfig& config);

struct ManifestEntry {
  std::string csv;
  std::string scenario;
  std::vector<std::pair<std::string, std::string>> point;  // grid coordinates
  std::vector<EventMarker> events;
};

std::string manifestJson(const ScenarioConfig& base, const RunOptions& opts, const std::vector<ManifestEntry>& entries);

struct SweepGrid {
  std::vector<std::size_t> peers;
  std::vector<Round> maxDelay;
  std::vector<double> lossRate;
  std::vector<Round> lieWindow;  // length of the first lie window

  bool empty() const;
};

SweepGrid parseGrid(const std::string& json);

/// Writes one CSV per grid point into `dir` plus manifest.json. Returns the
/// manifest entries (empty for an empty grid, in which case nothing is
/// written).
std::vector<ManifestEntry> runSweep(const ScenarioConfig& base, const SweepGrid& grid, const RunOptions& opts,
                                    const std::string& dir, bool& safe);

}  // namespace part
