#pragma once

// Builders and brute-force oracles shared by the unit tests.

#include "part/chain.hpp"

#include <algorithm>
#include <functional>
#include <optional>
#include <random>
#include <set>
#include <utility>
#include <vector>

namespace part::test {

inline BlockPtr blk(std::uint64_t id, std::vector<std::uint64_t> parents, std::optional<Transaction> tx = std::nullopt,
                    Label label = {}) {
  auto b = std::make_shared<Block>();
  b->id = BlockId{id};
  for (auto p : parents) b->parents.push_back(BlockId{p});
  b->tx = tx;
  b->label = label;
  return b;
}

/// Genesis-to-`tip` branch following first parents.
inline Branch branchOf(const BlockTree& t, std::uint64_t tip) {
  Branch out;
  for (BlockId cur{tip};; cur = t.at(cur).parents.front()) {
    out.blocks.insert(out.blocks.begin(), t.ptr(cur));
    if (t.at(cur).isGenesis()) break;
  }
  return out;
}

inline LabelOracle perfect() {
  return [](const Block& b) { return b.label; };
}

// Five old branches ending at seeds A..E. C and D tie for the longest old
// branch; C has the smaller id. Block 1 hangs from A with the longest
// overall branch; block 2 ends the longer of C's two new branches.
constexpr BlockId kFigA{1}, kFigB{3}, kFigC{6}, kFigD{9}, kFigE{50};
constexpr BlockId kFigBlock1{34}, kFigBlock2{22};

inline std::vector<BlockPtr> figureTree() {
  const Label old{0, 0}, fresh{1, 1};
  return {
      blk(1, {0}, std::nullopt, old),     // A
      blk(2, {0}, std::nullopt, old),
      blk(3, {2}, std::nullopt, old),     // B
      blk(4, {0}, std::nullopt, old),
      blk(5, {4}, std::nullopt, old),
      blk(6, {5}, std::nullopt, old),     // C
      blk(7, {0}, std::nullopt, old),
      blk(8, {7}, std::nullopt, old),
      blk(9, {8}, std::nullopt, old),     // D
      blk(50, {0}, std::nullopt, old),    // E
      blk(21, {6}, std::nullopt, fresh),
      blk(22, {21}, std::nullopt, fresh),  // block 2
      blk(23, {6}, std::nullopt, fresh),
      blk(30, {1}, std::nullopt, fresh),
      blk(31, {30}, std::nullopt, fresh),
      blk(32, {31}, std::nullopt, fresh),
      blk(33, {32}, std::nullopt, fresh),
      blk(34, {33}, std::nullopt, fresh),  // block 1
      blk(40, {9}, std::nullopt, fresh),
      blk(51, {50}, std::nullopt, fresh),
  };
}

/// Random tree of `n` non-genesis blocks with epochs in 0..3 and a random
/// set of blocks the detector disagrees with.
inline std::pair<BlockTree, std::set<BlockId>> randomTree(std::mt19937_64& rng, std::size_t n) {
  BlockTree t;
  std::set<BlockId> disagree;
  std::vector<std::uint64_t> ids(n);
  for (std::size_t i = 0; i < n; ++i) ids[i] = i + 1;
  std::shuffle(ids.begin(), ids.end(), rng);  // ids unrelated to depth
  std::vector<std::uint64_t> present{0};
  std::vector<std::uint32_t> presentEpoch{0};
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t pi = rng() % present.size();
    std::uint32_t pe = presentEpoch[pi];
    std::uint32_t e;
    switch (rng() % 10) {
      case 0: case 1: case 2: case 3: case 4: e = pe; break;
      case 5: case 6: case 7: e = std::min<std::uint32_t>(pe + 1, 3); break;
      default: e = static_cast<std::uint32_t>(rng() % 4);
    }
    t.insert(blk(ids[i], {present[pi]}, std::nullopt, Label{e, e}));
    if (rng() % 7 == 0) disagree.insert(BlockId{ids[i]});
    present.push_back(ids[i]);
    presentEpoch.push_back(e);
  }
  return {std::move(t), std::move(disagree)};
}

/// Picks the best genesis-rooted path directly: every block agrees with the
/// detector, epochs never decrease, and paths are ranked epoch by epoch by
/// segment length (longer first) and then by segment end (smaller id first).
inline Branch enumerateMainChain(const BlockTree& t, const std::set<BlockId>& disagree) {
  std::set<std::uint32_t> epochs{0};
  for (const auto& b : t.blocks())
    if (!b->isGenesis() && !disagree.count(b->id)) epochs.insert(b->label.epoch);

  using Key = std::vector<std::pair<std::size_t, std::uint64_t>>;  // (length, end) per epoch
  std::optional<Key> bestKey;
  Branch best;
  for (const auto& b : t.blocks()) {
    Branch path = branchOf(t, raw(b->id));
    bool ok = true;
    for (std::size_t i = 1; i < path.size(); ++i)
      if (disagree.count(path.blocks[i]->id) || path.blocks[i]->label.epoch < path.blocks[i - 1]->label.epoch)
        ok = false;
    if (!ok) continue;
    Key key;
    for (auto e : epochs) {
      std::size_t len = 0;
      std::uint64_t end = 0;
      for (std::size_t i = 1; i < path.size(); ++i)
        if (path.blocks[i]->label.epoch == e) {
          ++len;
          end = raw(path.blocks[i]->id);
        }
      key.emplace_back(len, end);
    }
    auto better = [](const Key& x, const Key& y) {
      for (std::size_t i = 0; i < x.size(); ++i) {
        if (x[i].first != y[i].first) return x[i].first > y[i].first;
        if (x[i].first > 0 && x[i].second != y[i].second) return x[i].second < y[i].second;
      }
      return false;
    };
    if (!bestKey || better(key, *bestKey)) {
      bestKey = key;
      best = path;
    }
  }
  return best;
}

/// True if applying `a` and `b` in every order-preserving interleaving
/// never leaves a source account negative.
inline bool allInterleavingsValid(const std::vector<Funds>& base, const std::vector<Transaction>& a,
                                  const std::vector<Transaction>& b) {
  std::function<bool(std::size_t, std::size_t, std::vector<Funds>&)> go =
      [&](std::size_t i, std::size_t j, std::vector<Funds>& bal) {
        if (i == a.size() && j == b.size()) return true;
        for (int side = 0; side < 2; ++side) {
          const auto& seq = side ? b : a;
          std::size_t k = side ? j : i;
          if (k == seq.size()) continue;
          const Transaction& t = seq[k];
          bal[t.source] -= t.amount;
          bal[t.target] += t.amount;
          bool ok = bal[t.source] >= 0 && go(side ? i : i + 1, side ? j + 1 : j, bal);
          bal[t.source] += t.amount;
          bal[t.target] -= t.amount;
          if (!ok) return false;
        }
        return true;
      };
  std::vector<Funds> bal = base;
  return go(0, 0, bal);
}

}  // namespace part::test
