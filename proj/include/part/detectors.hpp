#pragma once

// Partition detectors as oracles over simulator ground truth, plus the
// flips/ages reduction that builds an eventually-correct age detector out
// of a weak one.

#include "part/chain.hpp"

#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

namespace part {

class UnknownBlock : public std::runtime_error {
 public:
  explicit UnknownBlock(BlockId id);
};

class StaleUpdate : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class ScheduleInvalid : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

enum class AgeLabel { kOld, kNew };

/// Split of `parent` at `round`: `secondPeers` move to `second`, the other
/// members of `parent` to `first`.
struct SplitSpec {
  Round round = 0;
  PartitionId parent = kRootPartition;
  PartitionId first = 1;
  PartitionId second = 2;
  std::vector<PeerId> secondPeers;
  FractionTable secondShare;
};

struct MergeSpec {
  Round round = 0;
  PartitionId a = 1;
  PartitionId b = 2;
  PartitionId merged = 3;
};

/// Split/merge history of a run and the resulting partition of every peer
/// at every round. Events take effect at the start of their round.
class GroundTruth {
 public:
  GroundTruth(std::size_t peers, std::vector<Funds> endowment, std::vector<SplitSpec> splits = {},
              std::vector<MergeSpec> merges = {});

  std::size_t peers() const { return peers_; }
  const SplitContext& context() const { return ctx_; }
  const std::vector<SplitSpec>& splits() const { return splits_; }
  const std::vector<MergeSpec>& merges() const { return merges_; }

  PartitionId partitionOf(PeerId p, Round r) const;
  std::vector<PeerId> members(PartitionId part, Round r) const;
  /// Partitions alive at round r, ascending.
  std::vector<PartitionId> partitions(Round r) const;
  bool splitOccurred(Round r) const;
  /// Rounds at which some event happens, ascending.
  std::vector<Round> eventRounds() const;

  /// Correct label of a block: the era and id of its miner's partition.
  Label label(const Block& b) const;

  void record(const BlockPtr& b);
  const Block& block(BlockId id) const;
  void markDelivered(BlockId id, PeerId p);
  /// Whether the block reached every peer of the network.
  bool propagated(BlockId id) const;

 private:
  std::size_t peers_;
  SplitContext ctx_;
  std::vector<SplitSpec> splits_;
  std::vector<MergeSpec> merges_;
  std::vector<std::vector<std::pair<Round, PartitionId>>> history_;  // per peer
  std::unordered_map<BlockId, BlockPtr> mined_;
  std::unordered_map<BlockId, std::vector<bool>> delivered_;
};

enum class DetectorKind {
  kAge,
  kEventualAge,
  kWeakAge,
  kMultiAge,
  kEventualMultiAge,
  kWeakMultiAge,
  kSplitMergeAge,
  kSplit,
  kProp,
};

std::string toString(DetectorKind k);
DetectorKind detectorKindFromString(const std::string& s);

bool isPerfect(DetectorKind k);
bool isWeak(DetectorKind k);
bool isSingleSplit(DetectorKind k);

/// Interval [fromRound, toRound) during which the selected peers report
/// `forcedEpoch` for the selected blocks.
struct LieWindow {
  std::optional<std::vector<PeerId>> peers;  // all peers when empty
  std::optional<Round> minedFrom;            // block selector, inclusive
  std::optional<Round> minedTo;              // exclusive
  std::optional<std::vector<BlockId>> blocks;
  Round fromRound = 0;
  Round toRound = 0;
  std::uint32_t forcedEpoch = 0;

  bool covers(PeerId p, const Block& b, Round r) const;
};

struct DetectorSchedule {
  DetectorKind kind = DetectorKind::kAge;
  std::vector<LieWindow> lieWindows;
  Round weakWindow = 50;  // correct output at least once per this many rounds

  void validate() const;
};

/// The detector a peer consults. Outputs are ground truth except inside lie
/// windows.
class Detector {
 public:
  Detector(const GroundTruth& truth, DetectorSchedule schedule);

  const GroundTruth& truth() const { return *truth_; }
  const DetectorSchedule& schedule() const { return schedule_; }

  Label query(PeerId p, const Block& b, Round r) const;
  Label queryById(PeerId p, BlockId id, Round r) const;
  /// Output for a block `p` would mine at round `r`.
  Label current(PeerId p, Round r) const;

  AgeLabel age(PeerId p, const Block& b, Round r) const;
  std::uint32_t epoch(PeerId p, const Block& b, Round r) const;
  bool splitFlag(PeerId p, const Block& b, Round r) const;
  bool split(Round r) const { return truth_->splitOccurred(r); }
  bool prop(BlockId id) const { return truth_->propagated(id); }

  /// Rounds at which some output may change, ascending.
  std::vector<Round> changeRounds() const;
  /// Last round on which any lie window is active, or -1.
  Round lastLieRound() const;

 private:
  const GroundTruth* truth_;
  DetectorSchedule schedule_;
};

// ---------------------------------------------------------------------------
// Weak-to-eventual age reduction (per block)

struct ReductionState {
  std::vector<std::uint64_t> flips;
  std::vector<AgeLabel> ages;

  explicit ReductionState(std::size_t peers = 0)
      : flips(peers, 0), ages(peers, AgeLabel::kOld) {}
};

struct FlipUpdate {
  PeerId sender = 0;
  std::uint64_t numFlips = 0;
  AgeLabel age = AgeLabel::kOld;
};

struct LocalWageChange {
  PeerId self = 0;
  AgeLabel output = AgeLabel::kOld;
};

using ReductionEvent = std::variant<LocalWageChange, FlipUpdate>;

/// Applies one event. A local change of the weak detector's output bumps the
/// peer's own flip count and yields the update to broadcast; a received
/// update overwrites the sender's entries.
std::optional<FlipUpdate> reductionStep(ReductionState& state, const ReductionEvent& event);

/// Age reported by the peer with the fewest flips (smallest id on ties).
AgeLabel reducedOutput(const ReductionState& state);
/// Same, restricted to `scope`.
AgeLabel reducedOutput(const ReductionState& state, const std::vector<PeerId>& scope);

}  // namespace part
