#pragma once

// Harness that runs the flips/ages reduction over the simulated network:
// peers observe a weak age detector for a handful of blocks, broadcast
// their flip counts, and report the reduced output.

#include "part/detectors.hpp"

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

namespace part {

struct ReductionConfig {
  std::size_t peers = 20;
  Round rounds = 500;
  Round maxDelay = 2;
  Round splitRound = 60;  // negative for no split
  std::size_t blocks = 6;
  Round weakWindow = 50;
  Round lieFreeAfter = 100;  // designated peers err only before this many rounds past mining
  std::uint64_t seed = 1;

  /// Optional explicit schedule: whether `peer` reports the wrong age for
  /// block `index` at `round`. Replaces the generated schedules.
  std::function<bool(PeerId, std::size_t, Round)> wrong;
};

struct ReductionResult {
  bool converged = true;
  /// Last round at which some peer's reduced output was wrong for some block.
  Round lastWrong = -1;
  std::uint64_t updates = 0;
  std::vector<std::string> failures;
};

/// Weak-detector output schedule for one (peer, block): the detector is
/// wrong on the rounds in [toggles[2i], toggles[2i+1]).
struct WageSchedule {
  std::vector<Round> toggles;
  bool wrongAt(Round r) const;
  /// True when every wrong interval is shorter than `window`, so the
  /// output is correct at least once per window.
  bool weaklyCorrect(Round from, Round to, Round window) const;
};

/// Random schedules for one block: one lie-free-suffix peer per partition,
/// everyone else oscillating with segments no longer than window/2.
std::vector<WageSchedule> generateSchedules(const std::vector<std::vector<PeerId>>& partitions, Round minedAt,
                                            Round rounds, Round window, Round lieFreeAfter,
                                            std::uint64_t seed, std::uint64_t blockIndex);

ReductionResult runReduction(const ReductionConfig& config);

}  // namespace part
