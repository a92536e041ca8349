#pragma once

// Round engine for one experiment.

#include "part/detectors.hpp"
#include "part/network.hpp"
#include "part/peer.hpp"
#include "part/scenario.hpp"

#include <functional>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <set>
#include <unordered_map>
#include <vector>

namespace part {

struct RoundRecord {
  Round round = 0;
  std::uint32_t submitted = 0;
  std::uint32_t confirmed = 0;  // first confirmations this round
  std::uint32_t mined = 0;      // accepted blocks
  std::uint32_t discarded = 0;  // blocks dropped on an age mismatch
  std::uint32_t forks = 0;      // accepted blocks whose parent already had a child
  std::uint32_t conservationViolations = 0;
  std::size_t inFlight = 0;
};

struct TxRecord {
  Transaction tx;
  Round submittedAt = 0;
  PeerId entry = 0;
  PartitionId partition = kRootPartition;
  std::optional<Round> confirmedAt;
};

class World {
 public:
  explicit World(ScenarioConfig config);
  World(const World&) = delete;
  World& operator=(const World&) = delete;

  /// Executes one round.
  void step();
  /// Executes the remaining rounds.
  void run();

  Round round() const { return round_; }
  const ScenarioConfig& config() const { return config_; }
  const GroundTruth& truth() const { return *truth_; }
  const Detector& detector() const { return *detector_; }
  const SharedChain& shared() const { return *shared_; }
  const std::vector<std::unique_ptr<Peer>>& peers() const { return peers_; }
  const Peer& peer(PeerId p) const { return *peers_.at(p); }
  const std::vector<RoundRecord>& records() const { return records_; }
  const std::vector<TxRecord>& transactions() const { return txs_; }
  const Network& network() const { return *network_; }

  /// Every accepted block, including genesis, in a single tree.
  const BlockTree& globalTree() const { return global_; }
  /// Whether the block and all its ancestors carry their correct label.
  bool truthful(BlockId id) const { return truthful_.at(id); }

  /// Called at the end of every round.
  void setRoundHook(std::function<void(const World&)> hook) { hook_ = std::move(hook); }
  void setTrace(std::ostream* out) { trace_ = out; }

 private:
  struct Miner {
    std::uint64_t drawnVersion = 0;
    std::optional<Round> completion;
  };

  void applyEvents(Round r);
  void submit(Round r);
  void mine(Round r);
  void redraw(Round r);
  void record(const BlockPtr& b);
  void observe(PeerId p, const Block& b, bool added);
  void confirm(Round r, RoundRecord& rec);
  std::uint32_t checkConservation() const;
  void flush(PeerId from, Round r, Outbox& out);

  ScenarioConfig config_;
  std::unique_ptr<GroundTruth> truth_;
  std::unique_ptr<Detector> detector_;
  std::shared_ptr<SharedChain> shared_;
  std::unique_ptr<Network> network_;
  std::vector<std::unique_ptr<Peer>> peers_;
  std::vector<Miner> miners_;
  std::vector<std::mt19937_64> miningRng_;
  std::mt19937_64 submitRng_;

  Round round_ = 0;
  std::set<Round> eventRounds_;
  std::set<Round> changeRounds_;
  std::uint64_t nextBlock_ = 1;
  std::uint64_t nextSeq_ = 1;

  BlockTree global_;
  std::unordered_map<BlockId, bool> truthful_;
  std::unordered_map<BlockId, std::uint32_t> globalChildren_;

  std::vector<TxRecord> txs_;  // index = seq - 1
  std::vector<std::vector<PeerId>> txMembers_;
  std::vector<std::unordered_map<TxId, std::uint32_t, TxIdHash>> confirmable_;  // per peer
  std::set<std::uint64_t> candidates_;

  mutable std::unordered_map<PartitionId, Fraction> expected_;  // funds held by a partition

  std::vector<RoundRecord> records_;
  std::function<void(const World&)> hook_;
  std::ostream* trace_ = nullptr;
};

}  // namespace part
