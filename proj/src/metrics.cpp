#include "part/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <ostream>

namespace part {

std::vector<double> rollingMean(const std::vector<double>& x, std::size_t window) {
  std::vector<double> out(x.size());
  double sum = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sum += x[i];
    if (i >= window) sum -= x[i - window];
    out[i] = sum / static_cast<double>(std::min(i + 1, window));
  }
  return out;
}

RunMetrics summarize(const World& w) {
  RunMetrics m;
  m.rounds = w.records();
  std::vector<double> confirmed;
  for (const auto& r : m.rounds) confirmed.push_back(r.confirmed);
  m.rolling = rollingMean(confirmed);
  return m;
}

Aggregate aggregate(const std::string& scenario, const std::vector<RunMetrics>& runs) {
  Aggregate a;
  a.scenario = scenario;
  a.runs = runs.size();
  if (runs.empty()) return a;
  const std::size_t n = runs.front().rounds.size();
  for (const auto& r : runs)
    if (r.rounds.size() != n || r.rolling.size() != n) throw LengthMismatch("runs differ in length");

  std::vector<double> submittedCum(runs.size(), 0), confirmedCum(runs.size(), 0);
  const double k = static_cast<double>(runs.size());
  for (std::size_t i = 0; i < n; ++i) {
    AggregateRow row;
    row.round = runs.front().rounds[i].round;
    row.excluded = row.round < kExcludedRounds;
    double sq = 0;
    for (std::size_t j = 0; j < runs.size(); ++j) {
      const RoundRecord& rec = runs[j].rounds[i];
      submittedCum[j] += rec.submitted;
      confirmedCum[j] += rec.confirmed;
      row.meanRolling += runs[j].rolling[i];
      sq += runs[j].rolling[i] * runs[j].rolling[i];
      row.submitted += rec.submitted;
      row.confirmedCum += confirmedCum[j];
      row.forks += rec.forks;
      row.cumulativeRatio += submittedCum[j] > 0 ? confirmedCum[j] / submittedCum[j] : 0.0;
    }
    row.meanRolling /= k;
    row.sdRolling = std::sqrt(std::max(0.0, sq / k - row.meanRolling * row.meanRolling));
    row.submitted /= k;
    row.confirmedCum /= k;
    row.forks /= k;
    row.cumulativeRatio /= k;
    a.rows.push_back(row);
  }
  return a;
}

const char* const kCsvHeader =
    "scenario,seed_count,round,mean_rolling_confirmed,submitted,confirmed_cum,forks,excluded_flag,cumulative_ratio";

void writeCsv(std::ostream& out, const Aggregate& a) {
  out << kCsvHeader << '\n';
  char buf[256];
  for (const auto& r : a.rows) {
    std::snprintf(buf, sizeof buf, "%lld,%.6f,%.6f,%.6f,%.6f,%d,%.6f", static_cast<long long>(r.round),
                  r.meanRolling, r.submitted, r.confirmedCum, r.forks, r.excluded ? 1 : 0, r.cumulativeRatio);
    out << a.scenario << ',' << a.runs << ',' << buf << '\n';
  }
}

namespace {

double meanOf(const Aggregate& a, Round from, Round to, double AggregateRow::*field) {
  double sum = 0;
  std::size_t n = 0;
  for (const auto& r : a.rows)
    if (r.round >= from && r.round < to) {
      sum += r.*field;
      ++n;
    }
  return n ? sum / static_cast<double>(n) : 0.0;
}

}  // namespace

double meanRolling(const Aggregate& a, Round from, Round to) { return meanOf(a, from, to, &AggregateRow::meanRolling); }

double meanForks(const Aggregate& a, Round from, Round to) { return meanOf(a, from, to, &AggregateRow::forks); }

// ---------------------------------------------------------------------------
// Properties

PropertyReport checkProperties(const World& w) {
  PropertyReport rep;
  const SplitContext& ctx = w.truth().context();
  const BlockTree& tree = w.globalTree();
  LedgerCache ledgers(ctx);
  const Round end = w.round();

  std::vector<Branch> chains;
  for (const auto& p : w.peers()) chains.push_back(p->mainChain());

  // Confirmation validity: replaying every main chain keeps balances
  // non-negative.
  for (PeerId p = 0; p < chains.size(); ++p)
    for (const auto& b : chains[p].blocks) {
      const Ledger& l = ledgers.at(tree, b->id);
      bool neg = std::any_of(l.balances.begin(), l.balances.end(), [](Funds f) { return f < 0; });
      if (!l.valid || neg) {
        rep.confirmationValidity = false;
        rep.counterexamples.push_back("peer " + std::to_string(p) + ": block " + std::to_string(raw(b->id)) +
                                      (b->tx ? " tx " + std::to_string(b->tx->id.seq) : "") +
                                      " overdraws an account");
        break;
      }
    }

  // Branch compatibility between the final partitions.
  std::map<PartitionId, PeerId> rep0;
  for (PeerId p = 0; p < chains.size(); ++p) rep0.try_emplace(w.truth().partitionOf(p, end > 0 ? end - 1 : 0), p);
  for (auto i = rep0.begin(); i != rep0.end(); ++i)
    for (auto j = std::next(i); j != rep0.end(); ++j)
      if (!mergeable(tree, chains[i->second], chains[j->second], ctx)) {
        rep.branchCompatibility = false;
        rep.counterexamples.push_back("partitions " + std::to_string(i->first) + " and " + std::to_string(j->first) +
                                      ": main chains not mergeable");
      }

  // Progress: every transaction submitted early enough that is still
  // affordable on the relevant main chains has been confirmed.
  const Round before = w.config().progressBefore;
  for (const TxRecord& t : w.transactions()) {
    if (t.submittedAt >= before || t.confirmedAt) continue;
    bool affordable = true;
    for (PeerId p : w.truth().members(t.partition, t.submittedAt)) {
      const Ledger& l = ledgers.at(tree, chains[p].tail().id);
      if (l.balances.at(t.tx.source) < t.tx.amount) affordable = false;
    }
    if (affordable) {
      rep.progress = false;
      if (rep.counterexamples.size() < 50)
        rep.counterexamples.push_back("tx " + std::to_string(t.tx.id.seq) + " submitted at round " +
                                      std::to_string(t.submittedAt) + " never confirmed");
    }
  }
  return rep;
}

std::size_t commonPrefixLength(const World& w) {
  std::vector<Branch> chains;
  for (const auto& p : w.peers()) chains.push_back(p->mainChain());
  std::size_t len = chains.front().size();
  for (const auto& c : chains) {
    std::size_t i = 0;
    while (i < len && i < c.size() && c.blocks[i]->id == chains.front().blocks[i]->id) ++i;
    len = i;
  }
  return len;
}

std::optional<BlockId> commonSeed(const World& w) {
  std::optional<BlockId> seed;
  std::vector<Branch> chains;
  for (const auto& p : w.peers()) chains.push_back(p->mainChain());
  for (const auto& c : chains) {
    BlockId s = seedOf(c).id;
    if (seed && *seed != s) return std::nullopt;
    seed = s;
  }
  // Identical prefix through the seed.
  const Branch& first = chains.front();
  std::size_t upto = 0;
  while (first.blocks[upto]->id != *seed) ++upto;
  for (const auto& c : chains)
    for (std::size_t i = 0; i <= upto; ++i)
      if (c.size() <= i || c.blocks[i]->id != first.blocks[i]->id) return std::nullopt;
  return seed;
}

}  // namespace part
