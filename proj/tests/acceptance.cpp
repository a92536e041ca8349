// Acceptance suite: one PASS/FAIL line per criterion, exit status 1 if any
// fails.

#include "part/reduction.hpp"
#include "part/runner.hpp"
#include "support.hpp"

#include <chrono>
#include <cstdio>
#include <sstream>
#include <string>

using namespace part;

namespace {

int failures = 0;

void report(bool ok, const std::string& name, const std::string& detail) {
  std::printf("%s %s: %s\n", ok ? "PASS" : "FAIL", name.c_str(), detail.c_str());
  std::fflush(stdout);
  if (!ok) ++failures;
}

std::string fmt(const char* f, double a, double b = 0, double c = 0, double d = 0, double e = 0) {
  char buf[256];
  std::snprintf(buf, sizeof buf, f, a, b, c, d, e);
  return buf;
}

RunOptions runs(std::size_t n, bool props = false) {
  RunOptions o;
  o.runs = n;
  o.checkProperties = props;
  return o;
}

// Dip and recovery of the rolling throughput around a detector lie window.
void lieWindowShape(const std::string& name, bool forks) {
  ScenarioConfig c = preset(name);
  c.rounds = 400;
  auto t0 = std::chrono::steady_clock::now();
  Aggregate a = runExperiment(c, runs(100)).aggregate;
  double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();

  double pre = meanRolling(a, 0, 100), dip = meanRolling(a, 150, 200), post = meanRolling(a, 300, 400);
  bool ok = dip < 0.25 * pre && post >= pre;
  std::string detail = fmt("pre %.4f, dip %.4f (< %.4f), post %.4f (>= pre), %.1fs", pre, dip, 0.25 * pre, post, secs);
  if (forks) {
    double fpre = meanForks(a, 0, 100), fpost = meanForks(a, 300, 400);
    ok = ok && fpost >= fpre;
    detail += fmt(", forks/round pre %.4f post %.4f", fpre, fpost);
  } else {
    ok = ok && secs < 120;
  }
  report(ok, name + " shape", detail);
}

void messageLoss() {
  ScenarioConfig c = preset("message-loss");
  c.rounds = 700;
  c.progressBefore = 300;
  ExperimentResult r = runExperiment(c, runs(100, true));
  std::size_t unsafe = 0, stuck = 0;
  double submitted = 0;
  for (const auto& row : r.aggregate.rows) submitted += row.submitted;
  for (const auto& rep : r.reports) {
    unsafe += !rep.safe();
    stuck += !rep.progress;
  }
  report(unsafe == 0 && stuck == 0, "message-loss progress",
         fmt("%.0f of 100 runs leave transactions from before round 300 unconfirmed, %.0f unsafe, "
             "confirmed by round 700: %.1f of %.0f submitted",
             stuck, unsafe, r.aggregate.rows.back().confirmedCum, submitted));
}

void multiSplitMerge() {
  const std::size_t seeds = 20;
  std::size_t violations = 0, late = 0;
  Round worst = 0;
  for (std::uint64_t s = 1; s <= seeds; ++s) {
    ScenarioConfig c = preset("multi-split-merge");
    c.seed = s;
    PartitionId finalPart = c.merges.back().merged;
    Round mergeRound = c.merges.back().round;
    World w(c);
    std::optional<Round> converged;
    w.setRoundHook([&](const World& w) {
      const Round r = w.round() - 1;
      if (converged || r < mergeRound) return;
      const Branch chain = w.peer(0).mainChain();
      std::size_t prefix = commonPrefixLength(w);
      for (std::size_t i = 0; i < prefix; ++i)
        if (chain.blocks[i]->isMerge() && chain.blocks[i]->label.partition == finalPart) converged = r;
    });
    w.run();
    for (const auto& rec : w.records()) violations += rec.conservationViolations;
    Round took = converged ? *converged - mergeRound : 1'000'000;
    worst = std::max(worst, took);
    late += took > 50;
  }
  report(violations == 0 && late == 0, "multi-split-merge conservation and convergence",
         fmt("%.0f seeds, %.0f conservation violations, slowest convergence %.0f rounds after the final merge",
             seeds, violations, worst));
}

ScenarioConfig perfectSingleSplit() {
  ScenarioConfig c = preset("lagging-age");
  c.name = "single-split";
  c.detector = DetectorSchedule{};
  c.rounds = 700;
  c.progressBefore = 150;
  return c;
}

void singleSplitProperties() {
  ScenarioConfig c = perfectSingleSplit();
  std::size_t valid = 0, compatible = 0, progress = 0, prefix = 0;
  std::string first;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    c.seed = s;
    World w(c);
    w.run();
    PropertyReport rep = checkProperties(w);
    valid += rep.confirmationValidity;
    compatible += rep.branchCompatibility;
    progress += rep.progress;
    if (!rep.ok() && first.empty() && !rep.counterexamples.empty())
      first = "; seed " + std::to_string(s) + ": " + rep.counterexamples.front();

    auto seed = commonSeed(w);
    bool same = seed && w.globalTree().at(*seed).label.epoch == 0;
    if (same)
      for (const auto& p : w.peers())
        if (!p->mainChain().contains(*seed)) same = false;
    prefix += same;
  }
  report(valid == 100 && compatible == 100 && progress == 100, "single-split properties",
         fmt("validity %.0f/100, compatibility %.0f/100, progress before round 150 %.0f/100", valid, compatible,
             progress) +
             first);
  report(prefix == 100, "common prefix through the seed", fmt("%.0f/100 runs share one seed on all peers", prefix));
}

void reduction() {
  std::size_t ok = 0;
  Round last = -1;
  for (std::uint64_t s = 1; s <= 100; ++s) {
    ReductionConfig c;
    c.seed = s;
    ReductionResult r = runReduction(c);
    ok += r.converged;
    last = std::max(last, r.lastWrong);
  }
  report(ok == 100, "weak age reduction", fmt("%.0f/100 runs converge, last wrong output at round %.0f", ok, last));
}

void oracles() {
  std::mt19937_64 rng(20240601);
  std::size_t chainOk = 0;
  for (int i = 0; i < 1000; ++i) {
    auto [tree, disagree] = test::randomTree(rng, 1 + rng() % 20);
    LabelOracle det = [&](const Block& b) {
      return disagree.count(b.id) ? Label{b.label.epoch + 7, b.label.partition} : b.label;
    };
    chainOk += mainChain(tree, det) == test::enumerateMainChain(tree, disagree);
  }
  std::size_t mergeOk = 0;
  const int mergeTrials = 1000;
  for (int i = 0; i < mergeTrials; ++i) {
    std::vector<Funds> endow(3);
    for (auto& e : endow) e = std::uniform_int_distribution<Funds>(0, 60)(rng);
    SplitContext ctx(endow);
    ctx.addSplit(0, 1, 2, FractionTable{});
    BlockTree t;
    t.insert(test::blk(1, {0}));
    std::uint64_t next = 2, seq = 1, tails[2] = {1, 1};
    std::vector<Transaction> sides[2];
    for (int s = 0; s < 2; ++s)
      for (std::size_t k = rng() % 7; k > 0; --k) {
        auto src = static_cast<AccountId>(rng() % 3);
        Transaction tx{{0, seq++}, src, static_cast<AccountId>((src + 1 + rng() % 2) % 3),
                       std::uniform_int_distribution<Funds>(0, 30)(rng)};
        sides[s].push_back(tx);
        t.insert(test::blk(next, {tails[s]}, tx, {1, static_cast<PartitionId>(s + 1)}));
        tails[s] = next++;
      }
    mergeOk += mergeable(t, test::branchOf(t, tails[0]), test::branchOf(t, tails[1]), ctx) ==
               test::allInterleavingsValid(endow, sides[0], sides[1]);
  }
  report(chainOk == 1000 && mergeOk == mergeTrials, "oracle equivalence",
         fmt("mainChain %.0f/1000 trees, mergeable %.0f/%.0f branch pairs", chainOk, mergeOk, mergeTrials));
}

void determinism() {
  std::size_t same = 0;
  for (const auto& name : presetNames()) {
    ScenarioConfig c = preset(name);
    c.rounds = 300;
    c.seed = 7;
    std::string out[2];
    for (int k = 0; k < 2; ++k) {
      RunOptions o = runs(3);
      o.threads = k ? 1 : 3;
      std::ostringstream os;
      writeCsv(os, runExperiment(c, o).aggregate);
      out[k] = os.str();
    }
    same += out[0] == out[1];
  }
  report(same == presetNames().size(), "byte-identical reruns",
         fmt("%.0f/%.0f presets", same, static_cast<double>(presetNames().size())));
}

}  // namespace

int main() {
  lieWindowShape("lagging-age", false);
  lieWindowShape("lying-age", true);
  messageLoss();
  multiSplitMerge();
  singleSplitProperties();
  reduction();
  oracles();
  determinism();
  return failures ? 1 : 0;
}
