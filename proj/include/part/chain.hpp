#pragma once

// Block, transaction and tree model with per-branch account balances,
// partition-aware account splitting and the two-phase fork choice.

#include <boost/rational.hpp>

#include <compare>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace part {

using AccountId = std::uint32_t;
using ClientId = std::uint32_t;
using PeerId = std::uint32_t;
using PartitionId = std::uint32_t;
using Funds = std::int64_t;
using Round = std::int64_t;
using Fraction = boost::rational<std::int64_t>;

enum class BlockId : std::uint64_t {};

constexpr BlockId kGenesisId{0};
constexpr PartitionId kRootPartition = 0;

inline std::uint64_t raw(BlockId id) { return static_cast<std::uint64_t>(id); }

class ChainError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class DuplicateBlock : public ChainError {
 public:
  explicit DuplicateBlock(BlockId id);
};

class UnknownAccount : public ChainError {
 public:
  explicit UnknownAccount(AccountId a);
};

/// Transactions are ordered by sequence number first, then by client, so
/// that the queue of every peer has the same total order.
struct TxId {
  ClientId client = 0;
  std::uint64_t seq = 0;

  friend bool operator==(const TxId&, const TxId&) = default;
  friend std::strong_ordering operator<=>(const TxId& a, const TxId& b) {
    if (auto c = a.seq <=> b.seq; c != 0) return c;
    return a.client <=> b.client;
  }
};

struct TxIdHash {
  std::size_t operator()(const TxId& t) const noexcept {
    return std::hash<std::uint64_t>{}(t.seq * 0x9E3779B97F4A7C15ULL ^ t.client);
  }
};

struct Transaction {
  TxId id;
  AccountId source = 0;
  AccountId target = 0;
  Funds amount = 0;

  friend bool operator==(const Transaction&, const Transaction&) = default;
};

/// Age/epoch label recorded in a block when it is mined. `epoch` is 0 for
/// old blocks and counts split/merge events of the mining partition
/// otherwise; `partition` is the partition the miner belonged to.
struct Label {
  std::uint32_t epoch = 0;
  PartitionId partition = kRootPartition;

  bool old() const { return epoch == 0; }
  friend bool operator==(const Label&, const Label&) = default;
};

struct Block {
  BlockId id{};
  std::vector<BlockId> parents;  // empty for genesis, two for merge blocks
  std::optional<Transaction> tx;
  Label label;
  PeerId miner = 0;
  Round minedAt = 0;

  bool isGenesis() const { return parents.empty(); }
  bool isMerge() const { return parents.size() == 2; }
};

using BlockPtr = std::shared_ptr<const Block>;

BlockPtr makeGenesis();

enum class InsertResult { kInserted, kNotLinkable };

/// Tree (a DAG once merge blocks appear) of blocks rooted at the genesis.
/// Blocks whose parents are missing are rejected with kNotLinkable and must
/// be held by the caller.
class BlockTree {
 public:
  BlockTree();
  explicit BlockTree(BlockPtr genesis);

  InsertResult insert(BlockPtr b);
  bool canLink(const Block& b) const;
  bool contains(BlockId id) const { return nodes_.count(id) != 0; }
  const Block& at(BlockId id) const;
  const BlockPtr& ptr(BlockId id) const;
  const std::vector<BlockId>& children(BlockId id) const;
  BlockId genesis() const { return genesis_; }
  std::size_t size() const { return nodes_.size(); }

  /// All blocks sorted by id.
  std::vector<BlockPtr> blocks() const;

 private:
  struct Node {
    BlockPtr block;
    std::vector<BlockId> children;  // sorted
  };
  std::unordered_map<BlockId, Node> nodes_;
  BlockId genesis_ = kGenesisId;
};

/// Ordered list of blocks from the genesis; each element is a parent of the
/// next one.
struct Branch {
  std::vector<BlockPtr> blocks;

  const Block& tail() const { return *blocks.back(); }
  std::size_t size() const { return blocks.size(); }
  bool contains(BlockId id) const;
  friend bool operator==(const Branch& a, const Branch& b);
};

// ---------------------------------------------------------------------------
// Partitions and account splitting

/// Per-account share assigned to one child of a split.
struct FractionTable {
  Fraction defaultShare{1, 2};
  std::map<AccountId, Fraction> overrides;

  Fraction share(AccountId a) const;
};

struct PartitionInfo {
  PartitionId id = kRootPartition;
  std::uint32_t era = 0;
  std::optional<PartitionId> splitParent;
  std::optional<PartitionId> sibling;  // other child of the same split
  std::vector<PartitionId> mergedFrom;
  FractionTable share;  // share of the split parent's funds (split children only)
};

/// Lineage of partitions created by splits and merges, together with the
/// fraction tables used at each split and the genesis allocation.
class SplitContext {
 public:
  SplitContext() = default;
  explicit SplitContext(std::vector<Funds> endowment);

  /// Registers a split of `parent` into `first` and `second`. The share
  /// table of `second` is given; `first` receives the complement.
  void addSplit(PartitionId parent, PartitionId first, PartitionId second,
                const FractionTable& secondShare);
  void addMerge(PartitionId a, PartitionId b, PartitionId merged);

  const std::vector<Funds>& endowment() const { return endowment_; }
  std::size_t accounts() const { return endowment_.size(); }
  Funds total() const;

  bool known(PartitionId p) const { return parts_.count(p) != 0; }
  const PartitionInfo& info(PartitionId p) const;
  std::uint32_t era(PartitionId p) const { return info(p).era; }

  /// True if `desc` is reachable from `anc` through split edges only.
  bool splitDescends(PartitionId desc, PartitionId anc) const;
  /// All partitions `p` derives from, including itself.
  std::vector<PartitionId> ancestors(PartitionId p) const;

  /// Portion of `amount` of account `a` that moves from `from` down the
  /// split edges to `to`. At each split the second child gets the floor of
  /// its share and the first child keeps the remainder.
  Funds portion(Funds amount, AccountId a, PartitionId from, PartitionId to) const;

  /// Exact share of the genesis funds of account `a` held by partition `p`.
  Fraction share(PartitionId p, AccountId a) const;

 private:
  std::vector<Funds> endowment_;
  std::map<PartitionId, PartitionInfo> parts_{{kRootPartition, PartitionInfo{}}};
};

/// Balances after applying a block, plus the partition whose account share
/// the balances represent.
struct Ledger {
  std::vector<Funds> balances;
  PartitionId partition = kRootPartition;
  bool valid = true;  // false if the block drove an account negative
};

Ledger genesisLedger(const SplitContext& ctx);

/// Balances a new block with `label` would start from when linked to a
/// parent with `parentLedger`/`parentLabel`: the account split is applied
/// when the epoch advances into a split-descendant partition.
Ledger transitionLedger(const Ledger& parentLedger, const Label& parentLabel,
                        const Label& label, const SplitContext& ctx);

/// Combines the ledgers of a merge block's parents. Returns nullopt when
/// the parents do not cover the two merged partitions.
std::optional<Ledger> mergeLedger(const Ledger& a, const Ledger& b, PartitionId merged,
                                  const SplitContext& ctx);

void applyTransaction(Ledger& ledger, const Transaction& tx);

/// Memoized per-block ledgers; valid for any tree that contains the blocks,
/// since a ledger depends only on the block's ancestry.
class LedgerCache {
 public:
  explicit LedgerCache(const SplitContext& ctx) : ctx_(&ctx) {}

  const Ledger& at(const BlockTree& tree, BlockId id);
  const SplitContext& context() const { return *ctx_; }

 private:
  const SplitContext* ctx_;
  std::unordered_map<BlockId, Ledger> cache_;
};

/// Balance of `account` at the tail of `branch` in `tree`. Merge blocks
/// include the funds of both merged sides.
Funds balance(const BlockTree& tree, const Branch& branch, AccountId account,
              const SplitContext& ctx);

/// Transactions in the ancestor closure of `tip`.
std::vector<TxId> minedTransactions(const BlockTree& tree, BlockId tip);

/// Whether `tx` can be appended after the tail of `branch` by a block with
/// the tail's label.
bool isValid(const Transaction& tx, const BlockTree& tree, const Branch& branch,
             const SplitContext& ctx);

// ---------------------------------------------------------------------------
// Fork choice

/// Detector output for a block as seen by the calling peer.
using LabelOracle = std::function<Label(const Block&)>;

/// Two-phase (generally: per-epoch) longest-branch selection over the
/// blocks whose recorded label agrees with the detector. Ties go to the
/// smallest terminal block id.
Branch mainChain(const BlockTree& tree, const LabelOracle& detector);

/// Last block before the first epoch increase on `branch`.
const Block& seedOf(const Branch& branch);

/// Whether the transactions of two branches can be interleaved in every
/// order-preserving way without any becoming invalid, given that both are
/// split on the same seed.
bool mergeable(const BlockTree& tree, const Branch& a, const Branch& b,
               const SplitContext& ctx);

// ---------------------------------------------------------------------------
// Text form: one block per line, `id parents tx label miner round`.

std::string serialize(const Block& b);
std::string serialize(const BlockTree& tree);

}  // namespace part
