#include "part/chain.hpp"

#include <algorithm>
#include <set>
#include <sstream>
#include <unordered_set>

namespace part {

namespace {

// Floor of x * num / den for den > 0.
Funds floorMul(Funds x, const Fraction& f) {
  __int128 p = static_cast<__int128>(x) * f.numerator();
  __int128 d = f.denominator();
  __int128 q = p / d;
  if ((p % d != 0) && ((p < 0) != (d < 0))) --q;
  return static_cast<Funds>(q);
}

}  // namespace

DuplicateBlock::DuplicateBlock(BlockId id)
    : ChainError("duplicate block " + std::to_string(raw(id))) {}

UnknownAccount::UnknownAccount(AccountId a)
    : ChainError("unknown account " + std::to_string(a)) {}

BlockPtr makeGenesis() {
  auto g = std::make_shared<Block>();
  g->id = kGenesisId;
  return g;
}

// ---------------------------------------------------------------------------
// BlockTree

BlockTree::BlockTree() : BlockTree(makeGenesis()) {}

BlockTree::BlockTree(BlockPtr genesis) : genesis_(genesis->id) {
  if (!genesis->isGenesis()) throw ChainError("genesis block must have no parents");
  nodes_.emplace(genesis_, Node{std::move(genesis), {}});
}

bool BlockTree::canLink(const Block& b) const {
  if (b.parents.empty()) return false;
  return std::all_of(b.parents.begin(), b.parents.end(),
                     [&](BlockId p) { return contains(p); });
}

InsertResult BlockTree::insert(BlockPtr b) {
  if (contains(b->id)) throw DuplicateBlock(b->id);
  if (!canLink(*b)) return InsertResult::kNotLinkable;
  for (BlockId p : b->parents) {
    auto& kids = nodes_.at(p).children;
    kids.insert(std::upper_bound(kids.begin(), kids.end(), b->id), b->id);
  }
  BlockId id = b->id;
  nodes_.emplace(id, Node{std::move(b), {}});
  return InsertResult::kInserted;
}

const Block& BlockTree::at(BlockId id) const { return *ptr(id); }

const BlockPtr& BlockTree::ptr(BlockId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ChainError("block " + std::to_string(raw(id)) + " not in tree");
  return it->second.block;
}

const std::vector<BlockId>& BlockTree::children(BlockId id) const {
  auto it = nodes_.find(id);
  if (it == nodes_.end()) throw ChainError("block " + std::to_string(raw(id)) + " not in tree");
  return it->second.children;
}

std::vector<BlockPtr> BlockTree::blocks() const {
  std::vector<BlockPtr> out;
  out.reserve(nodes_.size());
  for (const auto& [id, node] : nodes_) out.push_back(node.block);
  std::sort(out.begin(), out.end(), [](const BlockPtr& a, const BlockPtr& b) { return a->id < b->id; });
  return out;
}

bool Branch::contains(BlockId id) const {
  return std::any_of(blocks.begin(), blocks.end(), [&](const BlockPtr& b) { return b->id == id; });
}

bool operator==(const Branch& a, const Branch& b) {
  return std::equal(a.blocks.begin(), a.blocks.end(), b.blocks.begin(), b.blocks.end(),
                    [](const BlockPtr& x, const BlockPtr& y) { return x->id == y->id; });
}

// ---------------------------------------------------------------------------
// SplitContext

Fraction FractionTable::share(AccountId a) const {
  auto it = overrides.find(a);
  return it == overrides.end() ? defaultShare : it->second;
}

SplitContext::SplitContext(std::vector<Funds> endowment) : endowment_(std::move(endowment)) {}

Funds SplitContext::total() const {
  Funds t = 0;
  for (Funds f : endowment_) t += f;
  return t;
}

const PartitionInfo& SplitContext::info(PartitionId p) const {
  auto it = parts_.find(p);
  if (it == parts_.end()) throw ChainError("unknown partition " + std::to_string(p));
  return it->second;
}

void SplitContext::addSplit(PartitionId parent, PartitionId first, PartitionId second,
                            const FractionTable& secondShare) {
  if (!known(parent)) throw ChainError("split of unknown partition " + std::to_string(parent));
  if (known(first) || known(second) || first == second)
    throw ChainError("split children must be fresh partitions");
  if (first > second) throw ChainError("split: first child must have the smaller id");

  auto valid = [](const Fraction& f) { return f >= 0 && f <= 1; };
  if (!valid(secondShare.defaultShare)) throw ChainError("split share outside [0,1]");
  for (const auto& [a, f] : secondShare.overrides)
    if (!valid(f)) throw ChainError("split share outside [0,1] for account " + std::to_string(a));

  FractionTable firstShare;
  firstShare.defaultShare = Fraction(1) - secondShare.defaultShare;
  for (const auto& [a, f] : secondShare.overrides) firstShare.overrides[a] = Fraction(1) - f;

  // Each side must be left with some funds.
  auto holdsFunds = [&](const FractionTable& t) {
    for (AccountId a = 0; a < endowment_.size(); ++a)
      if (t.share(a) > 0) return true;
    return endowment_.empty();
  };
  if (!holdsFunds(firstShare) || !holdsFunds(secondShare))
    throw ChainError("split leaves a partition with zero share of every account");

  std::uint32_t era = info(parent).era + 1;
  parts_[first] = PartitionInfo{first, era, parent, second, {}, firstShare};
  parts_[second] = PartitionInfo{second, era, parent, first, {}, secondShare};
}

void SplitContext::addMerge(PartitionId a, PartitionId b, PartitionId merged) {
  if (!known(a) || !known(b)) throw ChainError("merge of unknown partition");
  if (known(merged)) throw ChainError("merge target must be a fresh partition");
  PartitionInfo m;
  m.id = merged;
  m.era = std::max(info(a).era, info(b).era) + 1;
  m.mergedFrom = {std::min(a, b), std::max(a, b)};
  parts_[merged] = m;
}

bool SplitContext::splitDescends(PartitionId desc, PartitionId anc) const {
  PartitionId cur = desc;
  while (true) {
    if (cur == anc) return true;
    const auto& i = info(cur);
    if (!i.splitParent) return false;
    cur = *i.splitParent;
  }
}

std::vector<PartitionId> SplitContext::ancestors(PartitionId p) const {
  std::vector<PartitionId> out;
  std::vector<PartitionId> todo{p};
  while (!todo.empty()) {
    PartitionId cur = todo.back();
    todo.pop_back();
    if (std::find(out.begin(), out.end(), cur) != out.end()) continue;
    out.push_back(cur);
    const auto& i = info(cur);
    if (i.splitParent) todo.push_back(*i.splitParent);
    for (PartitionId m : i.mergedFrom) todo.push_back(m);
  }
  std::sort(out.begin(), out.end());
  return out;
}

Funds SplitContext::portion(Funds amount, AccountId a, PartitionId from, PartitionId to) const {
  std::vector<PartitionId> path;  // `to` up to (excluding) `from`
  for (PartitionId cur = to; cur != from;) {
    path.push_back(cur);
    const auto& i = info(cur);
    if (!i.splitParent) throw ChainError("partition " + std::to_string(to) +
                                         " does not descend from " + std::to_string(from));
    cur = *i.splitParent;
  }
  Funds x = amount;
  for (auto it = path.rbegin(); it != path.rend(); ++it) {
    const auto& child = info(*it);
    // The first child of a split has the smaller id. The second child's
    // portion is floored; the first keeps the remainder.
    bool isSecond = child.id > *child.sibling;
    PartitionId second = isSecond ? child.id : *child.sibling;
    Funds secondPart = floorMul(x, info(second).share.share(a));
    x = isSecond ? secondPart : x - secondPart;
  }
  return x;
}

Fraction SplitContext::share(PartitionId p, AccountId a) const {
  const auto& i = info(p);
  if (i.splitParent) return share(*i.splitParent, a) * i.share.share(a);
  if (!i.mergedFrom.empty()) {
    Fraction s = 0;
    for (PartitionId m : i.mergedFrom) s += share(m, a);
    return s;
  }
  return Fraction(1);
}

// ---------------------------------------------------------------------------
// Ledgers

Ledger genesisLedger(const SplitContext& ctx) {
  return Ledger{ctx.endowment(), kRootPartition, true};
}

Ledger transitionLedger(const Ledger& parentLedger, const Label& parentLabel, const Label& label,
                        const SplitContext& ctx) {
  Ledger out{parentLedger.balances, parentLedger.partition, true};
  if (label.epoch > parentLabel.epoch && label.partition != parentLedger.partition &&
      ctx.known(label.partition) && ctx.splitDescends(label.partition, parentLedger.partition)) {
    for (AccountId a = 0; a < out.balances.size(); ++a)
      out.balances[a] = ctx.portion(out.balances[a], a, parentLedger.partition, label.partition);
    out.partition = label.partition;
  }
  return out;
}

std::optional<Ledger> mergeLedger(const Ledger& a, const Ledger& b, PartitionId merged,
                                  const SplitContext& ctx) {
  const auto& from = ctx.info(merged).mergedFrom;
  if (from.size() != 2) return std::nullopt;

  auto contribution = [&](const Ledger& l, PartitionId side) -> std::optional<std::vector<Funds>> {
    if (l.partition == side) return l.balances;
    if (!ctx.splitDescends(side, l.partition)) return std::nullopt;
    std::vector<Funds> out(l.balances.size());
    for (AccountId acc = 0; acc < out.size(); ++acc)
      out[acc] = ctx.portion(l.balances[acc], acc, l.partition, side);
    return out;
  };

  for (int swap = 0; swap < 2; ++swap) {
    auto ca = contribution(a, from[swap]);
    auto cb = contribution(b, from[1 - swap]);
    if (!ca || !cb) continue;
    Ledger out{std::move(*ca), merged, true};
    for (std::size_t i = 0; i < out.balances.size(); ++i) out.balances[i] += (*cb)[i];
    return out;
  }
  return std::nullopt;
}

void applyTransaction(Ledger& ledger, const Transaction& tx) {
  if (tx.source >= ledger.balances.size()) throw UnknownAccount(tx.source);
  if (tx.target >= ledger.balances.size()) throw UnknownAccount(tx.target);
  ledger.balances[tx.source] -= tx.amount;
  ledger.balances[tx.target] += tx.amount;
  if (ledger.balances[tx.source] < 0 || tx.amount < 0) ledger.valid = false;
}

const Ledger& LedgerCache::at(const BlockTree& tree, BlockId id) {
  if (auto it = cache_.find(id); it != cache_.end()) return it->second;

  // Iterative post-order over missing ancestors.
  std::vector<BlockId> stack{id};
  while (!stack.empty()) {
    BlockId cur = stack.back();
    if (cache_.count(cur)) {
      stack.pop_back();
      continue;
    }
    const Block& b = tree.at(cur);
    bool ready = true;
    for (BlockId p : b.parents)
      if (!cache_.count(p)) {
        stack.push_back(p);
        ready = false;
      }
    if (!ready) continue;
    stack.pop_back();

    Ledger l;
    if (b.isGenesis()) {
      l = genesisLedger(*ctx_);
    } else if (b.isMerge()) {
      auto m = mergeLedger(cache_.at(b.parents[0]), cache_.at(b.parents[1]), b.label.partition, *ctx_);
      if (!m) throw ChainError("merge block " + std::to_string(raw(b.id)) + " does not cover its partitions");
      l = std::move(*m);
    } else {
      const Block& parent = tree.at(b.parents[0]);
      l = transitionLedger(cache_.at(parent.id), parent.label, b.label, *ctx_);
    }
    if (b.tx) applyTransaction(l, *b.tx);
    cache_.emplace(cur, std::move(l));
  }
  return cache_.at(id);
}

Funds balance(const BlockTree& tree, const Branch& branch, AccountId account, const SplitContext& ctx) {
  if (account >= ctx.accounts()) throw UnknownAccount(account);
  LedgerCache cache(ctx);
  return cache.at(tree, branch.tail().id).balances[account];
}

std::vector<TxId> minedTransactions(const BlockTree& tree, BlockId tip) {
  std::vector<TxId> out;
  std::unordered_set<BlockId> seen;
  std::vector<BlockId> todo{tip};
  while (!todo.empty()) {
    BlockId cur = todo.back();
    todo.pop_back();
    if (!seen.insert(cur).second) continue;
    const Block& b = tree.at(cur);
    if (b.tx) out.push_back(b.tx->id);
    for (BlockId p : b.parents) todo.push_back(p);
  }
  std::sort(out.begin(), out.end());
  return out;
}

bool isValid(const Transaction& tx, const BlockTree& tree, const Branch& branch, const SplitContext& ctx) {
  if (tx.amount < 0) return false;
  auto mined = minedTransactions(tree, branch.tail().id);
  if (std::binary_search(mined.begin(), mined.end(), tx.id)) return false;
  return balance(tree, branch, tx.source, ctx) - tx.amount >= 0;
}

// ---------------------------------------------------------------------------
// Fork choice

Branch mainChain(const BlockTree& tree, const LabelOracle& detector) {
  auto agrees = [&](const Block& b) { return b.isGenesis() || detector(b) == b.label; };

  std::set<std::uint32_t> epochs{0};
  for (const auto& b : tree.blocks())
    if (agrees(*b)) epochs.insert(b->label.epoch);

  Branch out;
  out.blocks.push_back(tree.ptr(tree.genesis()));
  BlockId tail = tree.genesis();

  for (std::uint32_t epoch : epochs) {
    // Longest chain of `epoch` blocks hanging from the current tail.
    std::unordered_map<BlockId, BlockId> via;
    std::optional<BlockId> best;
    std::size_t bestDepth = 0;
    std::vector<std::pair<BlockId, std::size_t>> stack{{tail, 0}};
    while (!stack.empty()) {
      auto [cur, depth] = stack.back();
      stack.pop_back();
      if (depth > 0 && (depth > bestDepth || (depth == bestDepth && cur < *best))) {
        best = cur;
        bestDepth = depth;
      }
      for (BlockId c : tree.children(cur)) {
        const Block& child = tree.at(c);
        if (child.label.epoch != epoch || !agrees(child) || via.count(c)) continue;
        via.emplace(c, cur);
        stack.emplace_back(c, depth + 1);
      }
    }
    if (!best) continue;
    std::vector<BlockPtr> seg;
    for (BlockId cur = *best; cur != tail; cur = via.at(cur)) seg.push_back(tree.ptr(cur));
    out.blocks.insert(out.blocks.end(), seg.rbegin(), seg.rend());
    tail = *best;
  }
  return out;
}

const Block& seedOf(const Branch& branch) {
  for (std::size_t i = 1; i < branch.blocks.size(); ++i)
    if (branch.blocks[i]->label.epoch > branch.blocks[i - 1]->label.epoch) return *branch.blocks[i - 1];
  return branch.tail();
}

bool mergeable(const BlockTree& tree, const Branch& a, const Branch& b, const SplitContext& ctx) {
  if (seedOf(a).id != seedOf(b).id) return false;

  std::size_t common = 0;
  while (common < a.size() && common < b.size() && a.blocks[common]->id == b.blocks[common]->id) ++common;
  if (common == 0) return false;

  LedgerCache cache(ctx);
  const auto& base = cache.at(tree, a.blocks[common - 1]->id).balances;

  auto suffixTxs = [&](const Branch& br) {
    std::vector<Transaction> out;
    for (std::size_t i = common; i < br.size(); ++i)
      if (br.blocks[i]->tx) out.push_back(*br.blocks[i]->tx);
    return out;
  };
  auto ta = suffixTxs(a);
  auto tb = suffixTxs(b);

  // Every (i, j) prefix pair is reachable by some interleaving, so a debit
  // at step i of one branch must be covered even after the other branch's
  // most draining prefix.
  auto covered = [&](const std::vector<Transaction>& own, const std::vector<Transaction>& other) {
    for (AccountId acc = 0; acc < base.size(); ++acc) {
      Funds run = 0, minOther = 0;
      for (const auto& t : other) {
        if (t.source == acc) run -= t.amount;
        if (t.target == acc) run += t.amount;
        minOther = std::min(minOther, run);
      }
      Funds mine = 0;
      for (const auto& t : own) {
        if (t.amount < 0) return false;
        if (t.source == acc) mine -= t.amount;
        if (t.target == acc) mine += t.amount;
        if (t.source == acc && base[acc] + mine + minOther < 0) return false;
      }
    }
    return true;
  };
  for (const auto& t : ta)
    if (t.source >= base.size() || t.target >= base.size()) throw UnknownAccount(std::max(t.source, t.target));
  for (const auto& t : tb)
    if (t.source >= base.size() || t.target >= base.size()) throw UnknownAccount(std::max(t.source, t.target));
  return covered(ta, tb) && covered(tb, ta);
}

// ---------------------------------------------------------------------------
// Serialization

std::string serialize(const Block& b) {
  std::ostringstream os;
  os << raw(b.id) << " p=";
  if (b.parents.empty()) os << '-';
  for (std::size_t i = 0; i < b.parents.size(); ++i) os << (i ? "," : "") << raw(b.parents[i]);
  os << " tx=";
  if (b.tx)
    os << b.tx->id.client << ':' << b.tx->id.seq << ':' << b.tx->source << '>' << b.tx->target << ':'
       << b.tx->amount;
  else
    os << '-';
  os << " age=" << b.label.epoch << '@' << b.label.partition << " miner=" << b.miner
     << " round=" << b.minedAt;
  return os.str();
}

std::string serialize(const BlockTree& tree) {
  std::string out;
  for (const auto& b : tree.blocks()) {
    out += serialize(*b);
    out += '\n';
  }
  return out;
}

}  // namespace part
