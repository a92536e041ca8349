#pragma once

// PART peer state machine: transaction queue, block tree with unlinked
// holding set, incremental fork choice, block catchup and cooperative merge.

#include "part/chain.hpp"
#include "part/detectors.hpp"

#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <unordered_map>
#include <variant>
#include <vector>

namespace part {

// ---------------------------------------------------------------------------
// Messages

struct TransactionMsg {
  Transaction tx;
};
struct MinedBlockMsg {
  BlockPtr block;
};
struct CatchupRequest {
  BlockId missing{};
};
/// Requested block first, followed by some of its ancestors.
struct CatchupReply {
  std::vector<BlockPtr> blocks;
};
struct DetectorUpdate {
  BlockId block{};
  FlipUpdate update;
};

using Payload = std::variant<TransactionMsg, MinedBlockMsg, CatchupRequest, CatchupReply, DetectorUpdate>;

enum class MessageKind { kNewTransaction, kMinedBlock, kCatchupRequest, kCatchupReply, kDetectorUpdate };
MessageKind kindOf(const Payload& p);

struct Message {
  Payload payload;
  PeerId sender = 0;
  Round sendRound = 0;
  PartitionId senderPartition = kRootPartition;
};

/// Message a peer wants sent: to its whole partition, or to one peer.
struct Outgoing {
  Payload payload;
  std::optional<PeerId> to;
};
using Outbox = std::vector<Outgoing>;

// ---------------------------------------------------------------------------
// Data shared by all peers of one run. Ledgers and merge side sets depend
// only on block ancestry, which is immutable.

class SharedChain {
 public:
  explicit SharedChain(const SplitContext& ctx) : ledgers_(ctx) {}

  const SplitContext& context() const { return ledgers_.context(); }
  const Ledger& ledger(const BlockTree& tree, BlockId id) { return ledgers_.at(tree, id); }
  /// Blocks in the closure of the merge block's other parent that are not
  /// in the closure of `via`.
  const std::vector<BlockId>& sideBlocks(const BlockTree& tree, const Block& merge, BlockId via);

 private:
  LedgerCache ledgers_;
  std::map<std::pair<BlockId, BlockId>, std::vector<BlockId>> sides_;
};

// ---------------------------------------------------------------------------
// Fork choice

/// A run of consecutive blocks with the same epoch on a branch.
struct Stage {
  std::uint32_t epoch = 0;
  std::uint32_t length = 0;
  BlockId terminal{};

  friend bool operator==(const Stage&, const Stage&) = default;
};
using StageKey = std::vector<Stage>;

/// >0 if `a` is preferred, <0 if `b` is, 0 if equal. Stages are compared in
/// order: lower epoch first, then longer, then smaller terminal id; a key
/// with an extra stage beats its prefix.
int compareKeys(const StageKey& a, const StageKey& b);

/// Incremental form of the per-epoch longest-branch rule. Every block
/// reachable through agreeing blocks with non-decreasing epochs gets the
/// stage key of its branch; the block with the best key is the tip.
class ForkChoiceIndex {
 public:
  using Agrees = std::function<bool(const Block&)>;

  void rebuild(const BlockTree& tree, const Agrees& agrees);
  /// Call after `b` has been inserted; its parents must already be indexed.
  void add(const Block& b, const Agrees& agrees);

  BlockId best() const { return best_; }
  bool candidate(BlockId id) const;
  const StageKey& key(BlockId id) const;
  BlockId via(BlockId id) const;
  std::uint32_t depth(BlockId id) const;
  Branch branch(const BlockTree& tree) const;

 private:
  struct Entry {
    StageKey key;
    BlockId via{};
    std::uint32_t depth = 0;
  };
  std::unordered_map<BlockId, Entry> entries_;
  BlockId best_ = kGenesisId;
};

// ---------------------------------------------------------------------------
// Peer

struct PeerConfig {
  PeerId id = 0;
  bool catchup = false;
  bool smpart = false;
  Round catchupInterval = 1;
  std::size_t catchupBatch = 64;
  Round mergeWait = 20;
};

/// Transaction blocks link to the tip at the moment mining succeeds, so
/// `parents` is only set for merge blocks.
struct MiningTarget {
  std::optional<Transaction> tx;  // empty for merge blocks
  std::vector<BlockId> parents;
  Label label;

  friend bool operator==(const MiningTarget&, const MiningTarget&) = default;
};

struct MineOutcome {
  BlockPtr block;
  bool accepted = false;
};

class Peer {
 public:
  /// Called for every block entering (added=true) or leaving the closure
  /// of the main chain.
  using ChainObserver = std::function<void(PeerId, const Block&, bool added)>;

  Peer(PeerConfig config, const Detector& detector, std::shared_ptr<SharedChain> shared);

  PeerId id() const { return config_.id; }
  const PeerConfig& config() const { return config_; }

  // Single-event commands. Each applies the event and then resets mining.
  void onReceiveTransaction(const Transaction& t, Round r, Outbox& out);
  void onReceiveBlock(const BlockPtr& nb, Round r, Outbox& out);
  void onCatchupRequest(BlockId missing, PeerId requester, Round r, Outbox& out);
  MineOutcome onMineSuccess(BlockId newId, Round r, Outbox& out);

  /// Applies a delivered message without resetting mining; call settle()
  /// after the batch.
  void deliver(const Message& m, Round r, Outbox& out);
  /// Recomputes the main chain and resets mining.
  void settle(Round r, Outbox& out);
  /// Emits catchup requests for missing parents of disconnected subtrees.
  void catchup(Round r, Outbox& out);

  /// Re-evaluates fork choice after detector outputs changed.
  void refresh(Round r, Outbox& out);
  /// The peer learns its partition at a split or merge.
  void setPartition(PartitionId p, Round r, Outbox& out);

  std::optional<Transaction> nextValid(Round r) const;

  const BlockTree& tree() const { return tree_; }
  Branch mainChain() const { return index_.branch(tree_); }
  BlockId tip() const { return index_.best(); }
  const ForkChoiceIndex& forkChoice() const { return index_; }
  std::uint32_t currentAge() const { return currentAge_; }
  PartitionId partition() const { return partition_; }
  const std::optional<MiningTarget>& miningTarget() const { return target_; }
  /// Bumped whenever the mining target changes.
  std::uint64_t targetVersion() const { return targetVersion_; }
  std::size_t unlinkedCount() const { return unlinked_.size(); }
  const std::map<BlockId, Round>& pendingCatchupRequests() const { return requested_; }
  bool onChain(const TxId& t) const { return onChain_.count(t) != 0; }
  bool hasTransaction(const TxId& t) const { return txs_.count(t) != 0; }
  std::size_t queuedCount() const { return pending_.size(); }

  void setChainObserver(ChainObserver obs) { observer_ = std::move(obs); }

 private:
  bool agrees(const Block& b, Round r) const;
  void insertLinked(const BlockPtr& b, Round r);
  void receiveBlock(const BlockPtr& nb, Round r);
  void updateChain(bool full);
  void contribute(const Block& b, BlockId via, bool add);
  void contributeOne(const Block& b, bool add);
  std::optional<MiningTarget> computeTarget(Round r, Outbox& out);
  std::optional<MiningTarget> mergeTarget(Round r, const Label& now);
  std::optional<BlockId> bestOnSide(PartitionId side) const;
  BlockId seedFor(BlockId leaf, const std::vector<PartitionId>& common);
  const Ledger& ledger(BlockId id) { return shared_->ledger(tree_, id); }

  PeerConfig config_;
  const Detector* detector_;
  std::shared_ptr<SharedChain> shared_;

  BlockTree tree_;
  ForkChoiceIndex index_;
  Round indexRound_ = 0;

  std::unordered_map<BlockId, BlockPtr> unlinked_;
  std::unordered_map<BlockId, std::vector<BlockId>> waitingOn_;  // missing parent -> unlinked blocks
  std::map<BlockId, Round> requested_;

  std::unordered_map<TxId, Transaction, TxIdHash> txs_;
  std::set<TxId> pending_;  // received and not in the main chain closure
  std::unordered_map<TxId, std::uint32_t, TxIdHash> onChain_;
  std::vector<BlockId> path_;  // main chain by depth
  std::vector<BlockId> pathVia_;

  std::uint32_t currentAge_ = 0;
  PartitionId partition_ = kRootPartition;
  Round partitionSince_ = 0;
  std::optional<PartitionId> announcedFor_;

  std::optional<MiningTarget> target_;
  std::uint64_t targetVersion_ = 0;

  ChainObserver observer_;
};

}  // namespace part
