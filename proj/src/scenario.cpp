#include "part/scenario.hpp"

#include "json.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace part {

using nlohmann::json;

std::string toString(MiningModel m) {
  return m == MiningModel::kUniformCompletion ? "uniform-completion" : "per-round-bernoulli";
}

MiningModel miningModelFromString(const std::string& s) {
  if (s == "uniform-completion") return MiningModel::kUniformCompletion;
  if (s == "per-round-bernoulli") return MiningModel::kPerRoundBernoulli;
  throw ConfigInvalid("mining_model: unknown value '" + s + "'");
}

std::vector<PeerId> upperHalf(std::size_t n) {
  std::vector<PeerId> out;
  for (PeerId p = static_cast<PeerId>(n / 2); p < n; ++p) out.push_back(p);
  return out;
}

void ScenarioConfig::validate() const {
  auto fail = [](const std::string& field, const std::string& why) { throw ConfigInvalid(field + ": " + why); };
  if (peers < 2) fail("peers", "need at least 2 peers");
  if (maxDelay < 1) fail("max_delay", "must be at least 1");
  if (rounds < 0) fail("rounds", "must be non-negative");
  if (endowment.empty()) fail("endowment", "need at least one account");
  for (std::size_t i = 0; i < endowment.size(); ++i)
    if (endowment[i] < 0) fail("endowment[" + std::to_string(i) + "]", "must be non-negative");
  if (amountQuantum < 1) fail("amount_quantum", "must be positive");
  if (maxAmount < 0) fail("max_amount", "must be non-negative");
  if (loss.rate < 0.0 || loss.rate >= 1.0) fail("loss.rate", "must be in [0, 1)");
  if (loss.forceAfter < 1) fail("loss.force_after", "must be positive");
  if (catchupBatch < 1) fail("catchup_batch", "must be positive");
  if (smpart && detector.kind != DetectorKind::kSplitMergeAge)
    fail("smpart", "cooperative merge needs the SMAGE detector");
  if (!merges.empty() && !smpart) fail("merges", "merges need smpart");
  if (isWeak(detector.kind)) fail("detector.kind", "weak detectors run through the reduction harness");
  try {
    detector.validate();
    GroundTruth(peers, endowment, splits, merges);
  } catch (const ScheduleInvalid& e) {
    fail("splits/merges/detector", e.what());
  } catch (const ChainError& e) {
    fail("splits", e.what());
  }
  if (isSingleSplit(detector.kind) && splits.size() > 1) fail("detector.kind", "age detectors handle one split");
}

// ---------------------------------------------------------------------------
// JSON

namespace {

class Reader {
 public:
  Reader(const json& j, std::string path) : j_(j), path_(std::move(path)) {
    if (!j_.is_object()) throw ConfigInvalid(where() + ": expected an object");
  }

  template <typename T>
  void get(const char* key, T& out) {
    seen_.insert(key);
    auto it = j_.find(key);
    if (it == j_.end()) return;
    try {
      out = it->template get<T>();
    } catch (const json::exception&) {
      throw ConfigInvalid(field(key) + ": wrong type");
    }
  }

  const json* child(const char* key) {
    seen_.insert(key);
    auto it = j_.find(key);
    return it == j_.end() ? nullptr : &*it;
  }

  std::string field(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string where() const { return path_.empty() ? "<root>" : path_; }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigInvalid(field(it.key()) + ": unknown key");
  }

 private:
  const json& j_;
  std::string path_;
  std::set<std::string> seen_;
};

Fraction parseFraction(const json& j, const std::string& field) {
  try {
    if (j.is_number_integer()) return Fraction(j.get<std::int64_t>());
    if (j.is_string()) {
      std::string s = j.get<std::string>();
      auto slash = s.find('/');
      if (slash == std::string::npos) return Fraction(std::stoll(s));
      return Fraction(std::stoll(s.substr(0, slash)), std::stoll(s.substr(slash + 1)));
    }
  } catch (const std::exception&) {
  }
  throw ConfigInvalid(field + ": expected an integer or a string \"p/q\"");
}

std::string fractionString(const Fraction& f) {
  return std::to_string(f.numerator()) + "/" + std::to_string(f.denominator());
}

const json& arrayAt(const json* j, const std::string& field) {
  if (!j->is_array()) throw ConfigInvalid(field + ": expected an array");
  return *j;
}

SplitSpec parseSplit(const json& j, const std::string& path, std::size_t peers) {
  SplitSpec s;
  Reader r(j, path);
  r.get("round", s.round);
  r.get("parent", s.parent);
  r.get("first", s.first);
  r.get("second", s.second);
  r.get("second_peers", s.secondPeers);
  bool half = false;
  r.get("upper_half", half);
  if (half) s.secondPeers = upperHalf(peers);
  if (const json* share = r.child("second_share")) {
    Reader sr(*share, r.field("second_share"));
    if (const json* d = sr.child("default")) s.secondShare.defaultShare = parseFraction(*d, sr.field("default"));
    if (const json* o = sr.child("overrides")) {
      if (!o->is_object()) throw ConfigInvalid(sr.field("overrides") + ": expected an object");
      for (auto it = o->begin(); it != o->end(); ++it) {
        std::string f = sr.field("overrides." + it.key());
        AccountId a = 0;
        try {
          a = static_cast<AccountId>(std::stoul(it.key()));
        } catch (const std::exception&) {
          throw ConfigInvalid(f + ": account id must be an integer");
        }
        s.secondShare.overrides[a] = parseFraction(*it, f);
      }
    }
    sr.finish();
  }
  r.finish();
  return s;
}

LieWindow parseWindow(const json& j, const std::string& path) {
  LieWindow w;
  Reader r(j, path);
  if (const json* p = r.child("peers")) w.peers = p->get<std::vector<PeerId>>();
  if (const json* p = r.child("mined_from")) w.minedFrom = p->get<Round>();
  if (const json* p = r.child("mined_to")) w.minedTo = p->get<Round>();
  if (const json* p = r.child("blocks")) {
    std::vector<BlockId> ids;
    for (auto x : p->get<std::vector<std::uint64_t>>()) ids.push_back(BlockId{x});
    w.blocks = ids;
  }
  r.get("from", w.fromRound);
  r.get("to", w.toRound);
  r.get("forced_epoch", w.forcedEpoch);
  r.finish();
  return w;
}

}  // namespace

ScenarioConfig parseScenario(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    std::size_t line = 1 + static_cast<std::size_t>(
                               std::count(text.begin(), text.begin() + std::min(e.byte, text.size()), '\n'));
    throw ConfigInvalid("line " + std::to_string(line) + ": " + e.what());
  }

  ScenarioConfig c;
  Reader r(j, "");
  if (const json* p = r.child("preset")) {
    if (!p->is_string()) throw ConfigInvalid("preset: expected a string");
    c = preset(p->get<std::string>());
  }
  r.get("name", c.name);
  r.get("peers", c.peers);
  r.get("max_delay", c.maxDelay);
  r.get("rounds", c.rounds);
  r.get("tx_per_round", c.txPerRound);
  r.get("seed", c.seed);
  std::string model = toString(c.miningModel);
  r.get("mining_model", model);
  c.miningModel = miningModelFromString(model);
  r.get("endowment", c.endowment);
  r.get("amount_quantum", c.amountQuantum);
  r.get("max_amount", c.maxAmount);
  r.get("catchup", c.catchup);
  r.get("smpart", c.smpart);
  r.get("merge_wait", c.mergeWait);
  r.get("catchup_batch", c.catchupBatch);
  r.get("progress_before", c.progressBefore);

  if (const json* s = r.child("splits")) {
    c.splits.clear();
    const json& a = arrayAt(s, "splits");
    for (std::size_t i = 0; i < a.size(); ++i)
      c.splits.push_back(parseSplit(a[i], "splits[" + std::to_string(i) + "]", c.peers));
  }
  if (const json* m = r.child("merges")) {
    c.merges.clear();
    const json& a = arrayAt(m, "merges");
    for (std::size_t i = 0; i < a.size(); ++i) {
      MergeSpec ms;
      Reader mr(a[i], "merges[" + std::to_string(i) + "]");
      mr.get("round", ms.round);
      mr.get("a", ms.a);
      mr.get("b", ms.b);
      mr.get("merged", ms.merged);
      mr.finish();
      c.merges.push_back(ms);
    }
  }
  if (const json* d = r.child("detector")) {
    Reader dr(*d, "detector");
    std::string kind = toString(c.detector.kind);
    dr.get("kind", kind);
    try {
      c.detector.kind = detectorKindFromString(kind);
    } catch (const ScheduleInvalid& e) {
      throw ConfigInvalid(std::string("detector.kind: ") + e.what());
    }
    dr.get("weak_window", c.detector.weakWindow);
    if (const json* w = dr.child("lie_windows")) {
      c.detector.lieWindows.clear();
      const json& a = arrayAt(w, "detector.lie_windows");
      for (std::size_t i = 0; i < a.size(); ++i) {
        std::string path = "detector.lie_windows[" + std::to_string(i) + "]";
        try {
          c.detector.lieWindows.push_back(parseWindow(a[i], path));
        } catch (const json::exception&) {
          throw ConfigInvalid(path + ": wrong type");
        }
      }
    }
    dr.finish();
  }
  if (const json* l = r.child("loss")) {
    Reader lr(*l, "loss");
    lr.get("rate", c.loss.rate);
    lr.get("force_after", c.loss.forceAfter);
    lr.get("protect_designated", c.loss.protectDesignated);
    lr.finish();
  }
  r.finish();
  c.validate();
  return c;
}

ScenarioConfig loadScenario(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigInvalid(path + ": cannot open");
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parseScenario(ss.str());
  } catch (const ConfigInvalid& e) {
    throw ConfigInvalid(path + ": " + e.what());
  }
}

std::string toJson(const ScenarioConfig& c) {
  json j;
  j["name"] = c.name;
  j["peers"] = c.peers;
  j["max_delay"] = c.maxDelay;
  j["rounds"] = c.rounds;
  j["tx_per_round"] = c.txPerRound;
  j["seed"] = c.seed;
  j["mining_model"] = toString(c.miningModel);
  j["endowment"] = c.endowment;
  j["amount_quantum"] = c.amountQuantum;
  j["max_amount"] = c.maxAmount;
  j["catchup"] = c.catchup;
  j["smpart"] = c.smpart;
  j["merge_wait"] = c.mergeWait;
  j["catchup_batch"] = c.catchupBatch;
  j["progress_before"] = c.progressBefore;
  j["splits"] = json::array();
  for (const auto& s : c.splits) {
    json o{{"round", s.round}, {"parent", s.parent}, {"first", s.first}, {"second", s.second},
           {"second_peers", s.secondPeers}};
    json share{{"default", fractionString(s.secondShare.defaultShare)}};
    for (const auto& [a, f] : s.secondShare.overrides) share["overrides"][std::to_string(a)] = fractionString(f);
    o["second_share"] = share;
    j["splits"].push_back(o);
  }
  j["merges"] = json::array();
  for (const auto& m : c.merges) j["merges"].push_back({{"round", m.round}, {"a", m.a}, {"b", m.b}, {"merged", m.merged}});
  json d{{"kind", toString(c.detector.kind)}, {"weak_window", c.detector.weakWindow}, {"lie_windows", json::array()}};
  for (const auto& w : c.detector.lieWindows) {
    json o{{"from", w.fromRound}, {"to", w.toRound}, {"forced_epoch", w.forcedEpoch}};
    if (w.peers) o["peers"] = *w.peers;
    if (w.minedFrom) o["mined_from"] = *w.minedFrom;
    if (w.minedTo) o["mined_to"] = *w.minedTo;
    if (w.blocks) {
      std::vector<std::uint64_t> ids;
      for (BlockId b : *w.blocks) ids.push_back(raw(b));
      o["blocks"] = ids;
    }
    d["lie_windows"].push_back(o);
  }
  j["detector"] = d;
  j["loss"] = {{"rate", c.loss.rate}, {"force_after", c.loss.forceAfter},
               {"protect_designated", c.loss.protectDesignated}};
  return j.dump(2);
}

// ---------------------------------------------------------------------------
// Presets

const std::vector<std::string>& presetNames() {
  static const std::vector<std::string> names{"baseline", "lagging-age", "lying-age", "message-loss",
                                              "multi-split-merge"};
  return names;
}

namespace {

SplitSpec halfSplit(Round round, PartitionId parent, PartitionId first, PartitionId second,
                    std::vector<PeerId> secondPeers) {
  SplitSpec s;
  s.round = round;
  s.parent = parent;
  s.first = first;
  s.second = second;
  s.secondPeers = std::move(secondPeers);
  return s;
}

ScenarioConfig lagging(std::string name) {
  ScenarioConfig c;
  c.name = std::move(name);
  c.splits.push_back(halfSplit(100, kRootPartition, 1, 2, upperHalf(c.peers)));
  c.detector.kind = DetectorKind::kEventualAge;
  LieWindow w;
  w.fromRound = 100;
  w.toRound = 200;
  w.forcedEpoch = 0;
  c.detector.lieWindows.push_back(w);
  return c;
}

}  // namespace

ScenarioConfig preset(const std::string& name) {
  if (name == "baseline") {
    ScenarioConfig c;
    c.name = name;
    return c;
  }
  if (name == "lagging-age") return lagging(name);
  if (name == "lying-age") {
    ScenarioConfig c;
    c.name = name;
    c.detector.kind = DetectorKind::kEventualAge;
    LieWindow w;
    w.fromRound = 100;
    w.toRound = 200;
    w.forcedEpoch = 1;
    c.detector.lieWindows.push_back(w);
    return c;
  }
  if (name == "message-loss") {
    ScenarioConfig c = lagging(name);
    c.maxDelay = 2;
    c.loss.rate = 0.05;
    c.catchup = true;
    return c;
  }
  if (name == "multi-split-merge") {
    ScenarioConfig c;
    c.name = name;
    c.detector.kind = DetectorKind::kSplitMergeAge;
    c.smpart = true;
    c.catchup = true;
    std::vector<PeerId> quarter;
    for (PeerId p = 25; p < 50; ++p) quarter.push_back(p);
    c.splits.push_back(halfSplit(100, kRootPartition, 1, 2, upperHalf(c.peers)));
    c.splits.push_back(halfSplit(200, 1, 3, 4, quarter));
    c.merges.push_back(MergeSpec{300, 3, 4, 5});
    c.merges.push_back(MergeSpec{500, 5, 2, 6});
    return c;
  }
  throw ConfigInvalid("preset: unknown preset '" + name + "'");
}

}  // namespace part
