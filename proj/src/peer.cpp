#include "part/peer.hpp"

#include <algorithm>
#include <deque>
#include <unordered_set>

namespace part {

MessageKind kindOf(const Payload& p) {
  switch (p.index()) {
    case 0: return MessageKind::kNewTransaction;
    case 1: return MessageKind::kMinedBlock;
    case 2: return MessageKind::kCatchupRequest;
    case 3: return MessageKind::kCatchupReply;
    default: return MessageKind::kDetectorUpdate;
  }
}

// ---------------------------------------------------------------------------
// SharedChain

namespace {

std::unordered_set<BlockId> closure(const BlockTree& tree, BlockId from) {
  std::unordered_set<BlockId> seen{from};
  std::vector<BlockId> stack{from};
  while (!stack.empty()) {
    BlockId cur = stack.back();
    stack.pop_back();
    for (BlockId p : tree.at(cur).parents)
      if (seen.insert(p).second) stack.push_back(p);
  }
  return seen;
}

}  // namespace

const std::vector<BlockId>& SharedChain::sideBlocks(const BlockTree& tree, const Block& merge, BlockId via) {
  auto key = std::make_pair(merge.id, via);
  if (auto it = sides_.find(key); it != sides_.end()) return it->second;
  BlockId other = merge.parents[0] == via ? merge.parents[1] : merge.parents[0];
  auto main = closure(tree, via);
  std::vector<BlockId> out;
  for (BlockId b : closure(tree, other))
    if (!main.count(b)) out.push_back(b);
  std::sort(out.begin(), out.end());
  return sides_.emplace(key, std::move(out)).first->second;
}

// ---------------------------------------------------------------------------
// Fork choice

int compareKeys(const StageKey& a, const StageKey& b) {
  std::size_t n = std::min(a.size(), b.size());
  for (std::size_t i = 0; i < n; ++i) {
    if (a[i].epoch != b[i].epoch) return a[i].epoch < b[i].epoch ? 1 : -1;
    if (a[i].length != b[i].length) return a[i].length > b[i].length ? 1 : -1;
    if (a[i].terminal != b[i].terminal) return a[i].terminal < b[i].terminal ? 1 : -1;
  }
  if (a.size() != b.size()) return a.size() > b.size() ? 1 : -1;
  return 0;
}

void ForkChoiceIndex::rebuild(const BlockTree& tree, const Agrees& agrees) {
  entries_.clear();
  best_ = tree.genesis();
  // Parents before children (merge blocks have two).
  std::unordered_map<BlockId, int> missing;
  std::deque<BlockId> ready{tree.genesis()};
  while (!ready.empty()) {
    BlockId cur = ready.front();
    ready.pop_front();
    add(tree.at(cur), agrees);
    for (BlockId c : tree.children(cur)) {
      const Block& child = tree.at(c);
      auto [it, fresh] = missing.try_emplace(c, static_cast<int>(child.parents.size()));
      if (--it->second == 0) ready.push_back(c);
    }
  }
}

void ForkChoiceIndex::add(const Block& b, const Agrees& agrees) {
  if (b.isGenesis()) {
    entries_[b.id] = Entry{{Stage{0, 1, b.id}}, b.id, 0};
    best_ = b.id;
    return;
  }
  if (!agrees(b)) return;
  std::optional<Entry> chosen;
  for (BlockId p : b.parents) {
    auto it = entries_.find(p);
    if (it == entries_.end()) continue;
    const StageKey& pk = it->second.key;
    if (b.label.epoch < pk.back().epoch) continue;
    Entry e{pk, p, it->second.depth + 1};
    if (b.label.epoch == pk.back().epoch) {
      ++e.key.back().length;
      e.key.back().terminal = b.id;
    } else {
      e.key.push_back(Stage{b.label.epoch, 1, b.id});
    }
    if (!chosen || compareKeys(e.key, chosen->key) > 0) chosen = std::move(e);
  }
  if (!chosen) return;
  bool better = compareKeys(chosen->key, entries_.at(best_).key) > 0;
  entries_[b.id] = std::move(*chosen);
  if (better) best_ = b.id;
}

bool ForkChoiceIndex::candidate(BlockId id) const { return entries_.count(id) != 0; }

const StageKey& ForkChoiceIndex::key(BlockId id) const { return entries_.at(id).key; }

BlockId ForkChoiceIndex::via(BlockId id) const { return entries_.at(id).via; }

std::uint32_t ForkChoiceIndex::depth(BlockId id) const { return entries_.at(id).depth; }

Branch ForkChoiceIndex::branch(const BlockTree& tree) const {
  Branch out;
  BlockId cur = best_;
  while (true) {
    out.blocks.push_back(tree.ptr(cur));
    const Entry& e = entries_.at(cur);
    if (e.depth == 0) break;
    cur = e.via;
  }
  std::reverse(out.blocks.begin(), out.blocks.end());
  return out;
}

// ---------------------------------------------------------------------------
// Peer

Peer::Peer(PeerConfig config, const Detector& detector, std::shared_ptr<SharedChain> shared)
    : config_(config), detector_(&detector), shared_(std::move(shared)) {
  index_.rebuild(tree_, [](const Block&) { return true; });
  updateChain(true);
}

bool Peer::agrees(const Block& b, Round r) const {
  return b.isGenesis() || detector_->query(config_.id, b, r) == b.label;
}

void Peer::insertLinked(const BlockPtr& first, Round r) {
  auto ag = [&](const Block& b) { return agrees(b, r); };
  std::vector<BlockPtr> work{first};
  while (!work.empty()) {
    BlockPtr b = work.back();
    work.pop_back();
    tree_.insert(b);
    index_.add(*b, ag);
    requested_.erase(b->id);
    auto w = waitingOn_.find(b->id);
    if (w == waitingOn_.end()) continue;
    std::vector<BlockId> waiters = std::move(w->second);
    waitingOn_.erase(w);
    for (BlockId c : waiters) {
      auto u = unlinked_.find(c);
      if (u == unlinked_.end() || !tree_.canLink(*u->second)) continue;
      work.push_back(u->second);
      unlinked_.erase(u);
    }
  }
}

void Peer::receiveBlock(const BlockPtr& nb, Round r) {
  if (tree_.contains(nb->id) || unlinked_.count(nb->id)) return;
  if (nb->tx && txs_.emplace(nb->tx->id, *nb->tx).second && !onChain_.count(nb->tx->id))
    pending_.insert(nb->tx->id);
  if (tree_.canLink(*nb)) {
    insertLinked(nb, r);
    return;
  }
  unlinked_.emplace(nb->id, nb);
  for (BlockId p : nb->parents)
    if (!tree_.contains(p)) waitingOn_[p].push_back(nb->id);
}

void Peer::contributeOne(const Block& b, bool add) {
  if (b.tx) {
    const TxId& id = b.tx->id;
    if (add) {
      if (++onChain_[id] == 1) pending_.erase(id);
    } else {
      auto it = onChain_.find(id);
      if (--it->second == 0) {
        onChain_.erase(it);
        if (txs_.count(id)) pending_.insert(id);
      }
    }
  }
  if (observer_) observer_(config_.id, b, add);
}

void Peer::contribute(const Block& b, BlockId via, bool add) {
  contributeOne(b, add);
  if (b.isMerge())
    for (BlockId s : shared_->sideBlocks(tree_, b, via)) contributeOne(tree_.at(s), add);
}

void Peer::updateChain(bool full) {
  BlockId newTip = index_.best();
  if (!full && !path_.empty() && path_.back() == newTip) return;
  if (full) {
    while (!path_.empty()) {
      contribute(tree_.at(path_.back()), pathVia_.back(), false);
      path_.pop_back();
      pathVia_.pop_back();
    }
  }
  std::vector<BlockId> added;
  BlockId x = newTip;
  bool joined = false;
  while (true) {
    std::uint32_t d = index_.depth(x);
    if (d < path_.size() && path_[d] == x) {
      joined = true;
      break;
    }
    added.push_back(x);
    if (d == 0) break;
    x = index_.via(x);
  }
  std::size_t keep = joined ? index_.depth(x) + 1 : 0;
  while (path_.size() > keep) {
    contribute(tree_.at(path_.back()), pathVia_.back(), false);
    path_.pop_back();
    pathVia_.pop_back();
  }
  for (auto it = added.rbegin(); it != added.rend(); ++it) {
    BlockId v = index_.via(*it);
    path_.push_back(*it);
    pathVia_.push_back(v);
    contribute(tree_.at(*it), v, true);
  }
}

void Peer::deliver(const Message& m, Round r, Outbox& out) {
  std::visit(
      [&](const auto& p) {
        using T = std::decay_t<decltype(p)>;
        if constexpr (std::is_same_v<T, TransactionMsg>) {
          if (txs_.emplace(p.tx.id, p.tx).second && !onChain_.count(p.tx.id)) pending_.insert(p.tx.id);
        } else if constexpr (std::is_same_v<T, MinedBlockMsg>) {
          receiveBlock(p.block, r);
        } else if constexpr (std::is_same_v<T, CatchupRequest>) {
          onCatchupRequest(p.missing, m.sender, r, out);
        } else if constexpr (std::is_same_v<T, CatchupReply>) {
          for (const auto& b : p.blocks) receiveBlock(b, r);
        }
      },
      m.payload);
}

void Peer::onReceiveTransaction(const Transaction& t, Round r, Outbox& out) {
  deliver(Message{TransactionMsg{t}, config_.id, r, partition_}, r, out);
  settle(r, out);
}

void Peer::onReceiveBlock(const BlockPtr& nb, Round r, Outbox& out) {
  receiveBlock(nb, r);
  settle(r, out);
}

void Peer::onCatchupRequest(BlockId missing, PeerId requester, Round, Outbox& out) {
  if (!tree_.contains(missing) || requester == config_.id) return;
  CatchupReply reply;
  std::unordered_set<BlockId> seen{missing};
  std::deque<BlockId> queue{missing};
  while (!queue.empty() && reply.blocks.size() < config_.catchupBatch) {
    BlockId cur = queue.front();
    queue.pop_front();
    const Block& b = tree_.at(cur);
    if (b.isGenesis()) continue;
    reply.blocks.push_back(tree_.ptr(cur));
    for (BlockId p : b.parents)
      if (seen.insert(p).second) queue.push_back(p);
  }
  out.push_back(Outgoing{std::move(reply), requester});
}

void Peer::catchup(Round r, Outbox& out) {
  if (!config_.catchup) return;
  std::vector<BlockId> missing;
  for (const auto& [id, waiters] : waitingOn_)
    if (!tree_.contains(id) && !unlinked_.count(id)) missing.push_back(id);
  std::sort(missing.begin(), missing.end());
  for (BlockId id : missing) {
    auto it = requested_.find(id);
    if (it != requested_.end() && r - it->second < config_.catchupInterval) continue;
    requested_[id] = r;
    out.push_back(Outgoing{CatchupRequest{id}, std::nullopt});
  }
}

MineOutcome Peer::onMineSuccess(BlockId newId, Round r, Outbox& out) {
  if (!target_) throw ChainError("peer " + std::to_string(config_.id) + " has nothing to mine");
  auto b = std::make_shared<Block>();
  b->id = newId;
  b->parents = target_->tx ? std::vector<BlockId>{tip()} : target_->parents;
  b->tx = target_->tx;
  b->label = target_->label;
  b->miner = config_.id;
  b->minedAt = r;
  BlockPtr nb = b;

  Label seen = detector_->query(config_.id, *nb, r);
  MineOutcome res{nb, seen == nb->label};
  if (res.accepted) {
    insertLinked(nb, r);
    out.push_back(Outgoing{MinedBlockMsg{nb}, std::nullopt});
  } else {
    currentAge_ = seen.epoch;
  }
  settle(r, out);
  return res;
}

void Peer::refresh(Round r, Outbox& out) {
  index_.rebuild(tree_, [&](const Block& b) { return agrees(b, r); });
  indexRound_ = r;
  updateChain(true);
  settle(r, out);
}

void Peer::setPartition(PartitionId p, Round r, Outbox& out) {
  if (p != partition_) {
    partition_ = p;
    partitionSince_ = r;
  }
  settle(r, out);
}

void Peer::settle(Round r, Outbox& out) {
  BlockId before = path_.empty() ? BlockId{} : path_.back();
  updateChain(false);
  // A received block that the detector accepted and that became the tip
  // carries the detector's latest output for this peer.
  if (!path_.empty() && path_.back() != before) {
    const Block& t = tree_.at(path_.back());
    if (!t.isGenesis() && t.miner != config_.id) currentAge_ = t.label.epoch;
  }
  auto t = computeTarget(r, out);
  if (t != target_) {
    target_ = std::move(t);
    ++targetVersion_;
  }
}

// Mining label and candidate transaction -------------------------------------

namespace {

std::optional<Transaction> firstValid(const std::set<TxId>& pending,
                                      const std::unordered_map<TxId, Transaction, TxIdHash>& txs,
                                      const Ledger& base) {
  for (const TxId& id : pending) {
    const Transaction& t = txs.at(id);
    if (t.amount < 0 || t.source >= base.balances.size() || t.target >= base.balances.size()) continue;
    if (base.balances[t.source] >= t.amount) return t;
  }
  return std::nullopt;
}

}  // namespace

std::optional<Transaction> Peer::nextValid(Round r) const {
  Label label = config_.smpart ? detector_->current(config_.id, r) : Label{currentAge_, partition_};
  const Block& t = tree_.at(index_.best());
  Ledger base = transitionLedger(shared_->ledger(tree_, t.id), t.label, label, shared_->context());
  return firstValid(pending_, txs_, base);
}

std::optional<MiningTarget> Peer::computeTarget(Round r, Outbox& out) {
  Label label{currentAge_, partition_};
  if (config_.smpart) {
    label = detector_->current(config_.id, r);
    currentAge_ = label.epoch;
    const auto& ctx = shared_->context();
    if (!ctx.info(label.partition).mergedFrom.empty() && ledger(tip()).partition != label.partition) {
      if (announcedFor_ != label.partition) {
        announcedFor_ = label.partition;
        out.push_back(Outgoing{MinedBlockMsg{tree_.ptr(tip())}, std::nullopt});
      }
      return mergeTarget(r, label);
    }
  }
  const Block& t = tree_.at(tip());
  Ledger base = transitionLedger(ledger(t.id), t.label, label, shared_->context());
  auto tx = firstValid(pending_, txs_, base);
  if (!tx) return std::nullopt;
  return MiningTarget{tx, {}, label};
}

std::optional<BlockId> Peer::bestOnSide(PartitionId side) const {
  std::optional<BlockId> best;
  for (const auto& b : tree_.blocks()) {
    if (!index_.candidate(b->id) || shared_->ledger(tree_, b->id).partition != side) continue;
    if (!best || compareKeys(index_.key(b->id), index_.key(*best)) > 0) best = b->id;
  }
  return best;
}

BlockId Peer::seedFor(BlockId leaf, const std::vector<PartitionId>& common) {
  BlockId x = leaf;
  while (true) {
    PartitionId p = ledger(x).partition;
    if (std::find(common.begin(), common.end(), p) != common.end()) return x;
    if (index_.depth(x) == 0) return x;
    x = index_.via(x);
  }
}

std::optional<MiningTarget> Peer::mergeTarget(Round r, const Label& now) {
  // Wait until outstanding catchup has filled the tree.
  if (!unlinked_.empty()) return std::nullopt;
  const auto& ctx = shared_->context();
  const auto& from = ctx.info(now.partition).mergedFrom;
  PartitionId sx = from[0], sy = from[1];
  std::vector<PartitionId> common;
  auto ax = ctx.ancestors(sx), ay = ctx.ancestors(sy);
  for (PartitionId p : ax)
    if (std::find(ay.begin(), ay.end(), p) != ay.end()) common.push_back(p);

  auto lx = bestOnSide(sx), ly = bestOnSide(sy);
  auto make = [&](BlockId a, BlockId b) {
    std::vector<BlockId> ps{std::min(a, b), std::max(a, b)};
    return MiningTarget{std::nullopt, ps, now};
  };
  if (lx && ly && seedFor(*lx, common) == seedFor(*ly, common)) return make(*lx, *ly);
  if (r - partitionSince_ < config_.mergeWait) return std::nullopt;

  // One side produced nothing usable: merge the other side with its seed.
  for (auto [leaf, otherSide] : {std::pair{lx, sy}, std::pair{ly, sx}}) {
    if (!leaf) continue;
    BlockId seed = seedFor(*leaf, common);
    if (seed == *leaf) continue;
    PartitionId sp = ledger(seed).partition;
    if (sp == otherSide || ctx.splitDescends(otherSide, sp)) return make(*leaf, seed);
  }
  return std::nullopt;
}

}  // namespace part
