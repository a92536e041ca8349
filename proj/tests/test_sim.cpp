#include "doctest.h"

#include "part/metrics.hpp"
#include "part/network.hpp"
#include "part/world.hpp"

#include <map>
#include <set>

using namespace part;

namespace {

ScenarioConfig small(std::size_t peers = 20, Round rounds = 300) {
  ScenarioConfig c;
  c.name = "small";
  c.peers = peers;
  c.rounds = rounds;
  return c;
}

ScenarioConfig singleSplit(std::size_t peers = 20, Round rounds = 300) {
  ScenarioConfig c = small(peers, rounds);
  SplitSpec s;
  s.round = 100;
  s.secondPeers = upperHalf(peers);
  c.splits = {s};
  return c;
}

}  // namespace

TEST_CASE("network delivers next round with unit delay") {
  GroundTruth truth(3, {10});
  Network net(truth, 1, LossModel{}, 1);
  net.broadcast(0, 5, TransactionMsg{});
  CHECK(net.collect(5).empty());
  auto got = net.collect(6);
  REQUIRE(got.size() == 2);
  CHECK(got[0].to == 1);
  CHECK(got[1].to == 2);
  CHECK(net.inFlight() == 0);
}

TEST_CASE("messages sent before a split reach the other side") {
  SplitSpec s;
  s.round = 100;
  s.secondPeers = {2, 3};
  GroundTruth truth(4, {10}, {s});
  Network net(truth, 2, LossModel{}, 4);
  net.broadcast(0, 99, TransactionMsg{});
  std::set<PeerId> got;
  for (Round r = 99; r <= 101; ++r)
    for (const auto& d : net.collect(r)) got.insert(d.to);
  CHECK(got == std::set<PeerId>{1, 2, 3});

  net.broadcast(0, 100, TransactionMsg{});
  got.clear();
  for (Round r = 100; r <= 103; ++r)
    for (const auto& d : net.collect(r)) got.insert(d.to);
  CHECK(got == std::set<PeerId>{1});
}

TEST_CASE("lost messages are eventually forced through") {
  GroundTruth truth(2, {10});
  LossModel loss;
  loss.rate = 1.0;
  loss.protectDesignated = false;
  Network net(truth, 1, loss, 9);
  std::size_t received = 0;
  for (Round r = 0; r < 3; ++r) {
    net.unicast(0, 1, r, CatchupRequest{BlockId{4}});
    received += net.collect(r + 1).size();
  }
  CHECK(received == 1);
  CHECK(net.dropped() == 2);
}

TEST_CASE("identical seeds give identical runs") {
  auto c = singleSplit();
  World a(c), b(c);
  a.run();
  b.run();
  CHECK(serialize(a.globalTree()) == serialize(b.globalTree()));
  REQUIRE(a.records().size() == b.records().size());
  for (std::size_t i = 0; i < a.records().size(); ++i) {
    CHECK(a.records()[i].confirmed == b.records()[i].confirmed);
    CHECK(a.records()[i].forks == b.records()[i].forks);
  }
  c.seed = 2;
  World other(c);
  other.run();
  CHECK(serialize(other.globalTree()) != serialize(a.globalTree()));
}

TEST_CASE("zero rounds") {
  auto c = small();
  c.rounds = 0;
  World w(c);
  w.run();
  CHECK(w.records().empty());
  CHECK(summarize(w).rolling.empty());
}

TEST_CASE("confirmations match a brute-force checker") {
  auto c = singleSplit(24, 300);
  World w(c);
  std::map<std::uint64_t, Round> want;
  w.setRoundHook([&](const World& w) {
    const Round r = w.round() - 1;
    std::vector<std::set<std::uint64_t>> onChain(w.peers().size());
    for (const auto& p : w.peers())
      for (const auto& b : p->mainChain().blocks)
        if (b->tx && w.truthful(b->id)) onChain[p->id()].insert(b->tx->id.seq);
    for (const TxRecord& t : w.transactions()) {
      if (want.count(t.tx.id.seq)) continue;
      bool all = true;
      for (PeerId p : w.truth().members(t.partition, t.submittedAt))
        if (!onChain[p].count(t.tx.id.seq)) all = false;
      if (all) want[t.tx.id.seq] = r;
    }
  });
  w.run();
  std::size_t confirmed = 0;
  for (const TxRecord& t : w.transactions()) {
    auto it = want.find(t.tx.id.seq);
    if (it == want.end()) {
      CHECK_FALSE(t.confirmedAt);
    } else {
      REQUIRE(t.confirmedAt);
      CHECK(*t.confirmedAt == it->second);
      ++confirmed;
    }
  }
  CHECK(confirmed > 50);
}

TEST_CASE("confirmed transactions stay confirmed under a perfect detector") {
  World w(singleSplit(20, 300));
  std::size_t checks = 0;
  w.setRoundHook([&](const World& w) {
    std::vector<std::set<std::uint64_t>> onChain(w.peers().size());
    for (const auto& p : w.peers())
      for (const auto& b : p->mainChain().blocks)
        if (b->tx) onChain[p->id()].insert(b->tx->id.seq);
    for (const TxRecord& t : w.transactions()) {
      if (!t.confirmedAt) continue;
      for (PeerId p : w.truth().members(t.partition, t.submittedAt)) {
        CHECK(onChain[p].count(t.tx.id.seq) == 1);
        ++checks;
      }
    }
  });
  w.run();
  CHECK(checks > 0);
}

TEST_CASE("no old block is created after the split under a perfect detector") {
  auto c = singleSplit(20, 200);
  World w(c);
  w.run();
  std::size_t after = 0;
  for (const auto& b : w.globalTree().blocks())
    if (b->minedAt >= 100 && !b->isGenesis()) {
      CHECK(b->label.epoch == 1);
      ++after;
    }
  CHECK(after > 0);
}

TEST_CASE("main chains keep growing") {
  World w(singleSplit(20, 400));
  std::vector<std::size_t> mid;
  w.setRoundHook([&](const World& w) {
    if (w.round() == 200)
      for (const auto& p : w.peers()) mid.push_back(p->mainChain().size());
  });
  w.run();
  for (const auto& p : w.peers()) CHECK(p->mainChain().size() > mid[p->id()]);
}

TEST_CASE("catchup repairs message loss") {
  auto c = small(20, 250);
  c.loss.rate = 0.3;
  c.catchup = true;
  World w(c);
  w.run();
  CHECK(w.network().dropped() > 0);
  // Lost blocks that something builds on are fetched again.
  std::size_t checked = 0;
  for (const auto& b : w.peer(0).mainChain().blocks) {
    if (b->minedAt >= 230) continue;
    for (const auto& p : w.peers()) CHECK(p->tree().contains(b->id));
    ++checked;
  }
  CHECK(checked > 20);
}

TEST_CASE("split and merge keep funds conserved") {
  World w(preset("multi-split-merge"));
  w.run();
  for (const auto& r : w.records()) REQUIRE(r.conservationViolations == 0);
  CHECK(commonPrefixLength(w) > 100);
  PropertyReport rep = checkProperties(w);
  CHECK(rep.confirmationValidity);
  CHECK(rep.branchCompatibility);
}

TEST_CASE("single split satisfies the safety checks and common prefix") {
  World w(singleSplit(20, 400));
  w.run();
  PropertyReport rep = checkProperties(w);
  CHECK(rep.safe());
  auto seed = commonSeed(w);
  REQUIRE(seed);
  CHECK(w.globalTree().at(*seed).label.epoch == 0);
}

TEST_CASE("truncated lagging run reports pending transactions without breaking safety") {
  auto c = preset("lagging-age");
  c.rounds = 201;
  c.progressBefore = 150;
  World w(c);
  w.run();
  PropertyReport rep = checkProperties(w);
  CHECK(rep.safe());
  CHECK_FALSE(rep.progress);
  CHECK_FALSE(rep.counterexamples.empty());
}
