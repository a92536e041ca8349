#pragma once

// Experiment description, JSON loading with diagnostics, and named presets.

#include "part/detectors.hpp"
#include "part/network.hpp"

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace part {

class ConfigInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class MiningModel { kUniformCompletion, kPerRoundBernoulli };

std::string toString(MiningModel m);
MiningModel miningModelFromString(const std::string& s);

struct ScenarioConfig {
  std::string name = "custom";
  std::size_t peers = 100;
  Round maxDelay = 1;
  Round rounds = 700;
  std::uint32_t txPerRound = 1;
  std::uint64_t seed = 1;
  MiningModel miningModel = MiningModel::kUniformCompletion;

  std::vector<Funds> endowment = std::vector<Funds>(16, 1'000'000);
  Funds amountQuantum = 4;  // amounts are multiples of this
  Funds maxAmount = 400;

  std::vector<SplitSpec> splits;
  std::vector<MergeSpec> merges;
  DetectorSchedule detector;
  LossModel loss;

  bool catchup = false;
  bool smpart = false;
  Round mergeWait = 20;
  std::size_t catchupBatch = 64;

  /// Progress is checked for transactions submitted before this round.
  Round progressBefore = 300;

  Round miningBound() const { return maxDelay * static_cast<Round>(peers); }
  /// Throws ConfigInvalid naming the offending field.
  void validate() const;
};

/// Parses a JSON scenario. Unknown keys and type errors are reported with
/// the field path (and line for syntax errors).
ScenarioConfig parseScenario(const std::string& text);
ScenarioConfig loadScenario(const std::string& path);
std::string toJson(const ScenarioConfig& c);

const std::vector<std::string>& presetNames();
ScenarioConfig preset(const std::string& name);

/// Peers {0..n/2-1} stay in `first`, the rest move to `second`.
std::vector<PeerId> upperHalf(std::size_t n);

}  // namespace part
