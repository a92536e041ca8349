#include "part/detectors.hpp"

#include <algorithm>
#include <limits>
#include <set>

namespace part {

UnknownBlock::UnknownBlock(BlockId id)
    : std::runtime_error("unknown block " + std::to_string(raw(id))) {}

// ---------------------------------------------------------------------------
// GroundTruth

GroundTruth::GroundTruth(std::size_t peers, std::vector<Funds> endowment, std::vector<SplitSpec> splits,
                         std::vector<MergeSpec> merges)
    : peers_(peers),
      ctx_(std::move(endowment)),
      splits_(std::move(splits)),
      merges_(std::move(merges)),
      history_(peers, {{std::numeric_limits<Round>::min(), kRootPartition}}) {
  struct Ev {
    Round round;
    int order;
    std::size_t index;
    bool split;
  };
  std::vector<Ev> evs;
  for (std::size_t i = 0; i < splits_.size(); ++i) evs.push_back({splits_[i].round, 0, i, true});
  for (std::size_t i = 0; i < merges_.size(); ++i) evs.push_back({merges_[i].round, 1, i, false});
  std::stable_sort(evs.begin(), evs.end(), [](const Ev& a, const Ev& b) {
    return a.round != b.round ? a.round < b.round : a.order < b.order;
  });

  std::vector<PartitionId> current(peers, kRootPartition);
  for (const Ev& e : evs) {
    if (e.split) {
      const SplitSpec& s = splits_[e.index];
      std::vector<PeerId> members;
      for (PeerId p = 0; p < peers; ++p)
        if (current[p] == s.parent) members.push_back(p);
      if (members.empty())
        throw ScheduleInvalid("split at round " + std::to_string(s.round) + " of partition " +
                              std::to_string(s.parent) + " which has no peers");
      std::set<PeerId> second(s.secondPeers.begin(), s.secondPeers.end());
      for (PeerId p : second)
        if (p >= peers || current[p] != s.parent)
          throw ScheduleInvalid("split at round " + std::to_string(s.round) + ": peer " +
                                std::to_string(p) + " is not in partition " + std::to_string(s.parent));
      if (second.empty() || second.size() == members.size())
        throw ScheduleInvalid("split at round " + std::to_string(s.round) + " must leave both sides non-empty");
      ctx_.addSplit(s.parent, s.first, s.second, s.secondShare);
      for (PeerId p : members) {
        current[p] = second.count(p) ? s.second : s.first;
        history_[p].emplace_back(s.round, current[p]);
      }
    } else {
      const MergeSpec& m = merges_[e.index];
      bool seenA = false, seenB = false;
      for (PeerId p = 0; p < peers; ++p) {
        seenA |= current[p] == m.a;
        seenB |= current[p] == m.b;
      }
      if (!seenA || !seenB)
        throw ScheduleInvalid("merge at round " + std::to_string(m.round) + " of a partition that is not alive");
      ctx_.addMerge(m.a, m.b, m.merged);
      for (PeerId p = 0; p < peers; ++p)
        if (current[p] == m.a || current[p] == m.b) {
          current[p] = m.merged;
          history_[p].emplace_back(m.round, m.merged);
        }
    }
  }
}

PartitionId GroundTruth::partitionOf(PeerId p, Round r) const {
  const auto& h = history_.at(p);
  auto it = std::upper_bound(h.begin(), h.end(), r,
                             [](Round x, const std::pair<Round, PartitionId>& e) { return x < e.first; });
  return std::prev(it)->second;
}

std::vector<PeerId> GroundTruth::members(PartitionId part, Round r) const {
  std::vector<PeerId> out;
  for (PeerId p = 0; p < peers_; ++p)
    if (partitionOf(p, r) == part) out.push_back(p);
  return out;
}

std::vector<PartitionId> GroundTruth::partitions(Round r) const {
  std::set<PartitionId> s;
  for (PeerId p = 0; p < peers_; ++p) s.insert(partitionOf(p, r));
  return {s.begin(), s.end()};
}

bool GroundTruth::splitOccurred(Round r) const {
  return std::any_of(splits_.begin(), splits_.end(), [&](const SplitSpec& s) { return s.round <= r; });
}

std::vector<Round> GroundTruth::eventRounds() const {
  std::set<Round> s;
  for (const auto& x : splits_) s.insert(x.round);
  for (const auto& x : merges_) s.insert(x.round);
  return {s.begin(), s.end()};
}

Label GroundTruth::label(const Block& b) const {
  if (b.isGenesis()) return Label{};
  PartitionId part = partitionOf(b.miner, b.minedAt);
  return Label{ctx_.era(part), part};
}

void GroundTruth::record(const BlockPtr& b) {
  mined_.emplace(b->id, b);
  delivered_.try_emplace(b->id, peers_, false);
}

const Block& GroundTruth::block(BlockId id) const {
  auto it = mined_.find(id);
  if (it == mined_.end()) throw UnknownBlock(id);
  return *it->second;
}

void GroundTruth::markDelivered(BlockId id, PeerId p) {
  auto it = delivered_.find(id);
  if (it == delivered_.end()) throw UnknownBlock(id);
  it->second.at(p) = true;
}

bool GroundTruth::propagated(BlockId id) const {
  auto it = delivered_.find(id);
  if (it == delivered_.end()) throw UnknownBlock(id);
  return std::all_of(it->second.begin(), it->second.end(), [](bool x) { return x; });
}

// ---------------------------------------------------------------------------
// Detector kinds and schedules

std::string toString(DetectorKind k) {
  switch (k) {
    case DetectorKind::kAge: return "AGE";
    case DetectorKind::kEventualAge: return "EAGE";
    case DetectorKind::kWeakAge: return "WAGE";
    case DetectorKind::kMultiAge: return "MAGE";
    case DetectorKind::kEventualMultiAge: return "EMAGE";
    case DetectorKind::kWeakMultiAge: return "WMAGE";
    case DetectorKind::kSplitMergeAge: return "SMAGE";
    case DetectorKind::kSplit: return "SPLIT";
    case DetectorKind::kProp: return "PROP";
  }
  return "?";
}

DetectorKind detectorKindFromString(const std::string& s) {
  for (auto k : {DetectorKind::kAge, DetectorKind::kEventualAge, DetectorKind::kWeakAge, DetectorKind::kMultiAge,
                 DetectorKind::kEventualMultiAge, DetectorKind::kWeakMultiAge, DetectorKind::kSplitMergeAge,
                 DetectorKind::kSplit, DetectorKind::kProp})
    if (toString(k) == s) return k;
  throw ScheduleInvalid("unknown detector kind '" + s + "'");
}

bool isPerfect(DetectorKind k) {
  return k == DetectorKind::kAge || k == DetectorKind::kMultiAge || k == DetectorKind::kSplitMergeAge ||
         k == DetectorKind::kSplit || k == DetectorKind::kProp;
}

bool isWeak(DetectorKind k) { return k == DetectorKind::kWeakAge || k == DetectorKind::kWeakMultiAge; }

bool isSingleSplit(DetectorKind k) {
  return k == DetectorKind::kAge || k == DetectorKind::kEventualAge || k == DetectorKind::kWeakAge;
}

bool LieWindow::covers(PeerId p, const Block& b, Round r) const {
  if (r < fromRound || r >= toRound) return false;
  if (peers && std::find(peers->begin(), peers->end(), p) == peers->end()) return false;
  if (minedFrom && b.minedAt < *minedFrom) return false;
  if (minedTo && b.minedAt >= *minedTo) return false;
  if (blocks && std::find(blocks->begin(), blocks->end(), b.id) == blocks->end()) return false;
  return true;
}

void DetectorSchedule::validate() const {
  if (isPerfect(kind) && !lieWindows.empty())
    throw ScheduleInvalid("perfect detector " + toString(kind) + " cannot have lie windows");
  for (const auto& w : lieWindows) {
    if (w.toRound < w.fromRound) throw ScheduleInvalid("lie window ends before it starts");
    if (isSingleSplit(kind) && w.forcedEpoch > 1) throw ScheduleInvalid("age detector can only output old or new");
  }
  if (weakWindow < 1) throw ScheduleInvalid("weak window must be positive");
}

Detector::Detector(const GroundTruth& truth, DetectorSchedule schedule)
    : truth_(&truth), schedule_(std::move(schedule)) {
  schedule_.validate();
}

Label Detector::query(PeerId p, const Block& b, Round r) const {
  if (b.isGenesis()) return Label{};
  Label out = truth_->label(b);
  if (isSingleSplit(schedule_.kind)) out.epoch = std::min<std::uint32_t>(out.epoch, 1);
  // Later windows take precedence.
  for (auto it = schedule_.lieWindows.rbegin(); it != schedule_.lieWindows.rend(); ++it)
    if (it->covers(p, b, r)) {
      out.epoch = it->forcedEpoch;
      break;
    }
  return out;
}

Label Detector::queryById(PeerId p, BlockId id, Round r) const {
  const Block& b = truth_->block(id);
  return query(p, b, r);
}

Label Detector::current(PeerId p, Round r) const {
  Block probe;
  probe.id = BlockId{~0ULL};
  probe.parents = {kGenesisId};
  probe.miner = p;
  probe.minedAt = r;
  return query(p, probe, r);
}

AgeLabel Detector::age(PeerId p, const Block& b, Round r) const {
  return query(p, b, r).epoch == 0 ? AgeLabel::kOld : AgeLabel::kNew;
}

std::uint32_t Detector::epoch(PeerId p, const Block& b, Round r) const { return query(p, b, r).epoch; }

bool Detector::splitFlag(PeerId p, const Block& b, Round r) const {
  if (b.isGenesis()) return false;
  PartitionId part = query(p, b, r).partition;
  return truth_->members(part, b.minedAt).size() != truth_->peers();
}

std::vector<Round> Detector::changeRounds() const {
  std::set<Round> s;
  for (const auto& w : schedule_.lieWindows) {
    s.insert(w.fromRound);
    s.insert(w.toRound);
  }
  return {s.begin(), s.end()};
}

Round Detector::lastLieRound() const {
  Round last = -1;
  for (const auto& w : schedule_.lieWindows)
    if (w.toRound > w.fromRound) last = std::max(last, w.toRound - 1);
  return last;
}

// ---------------------------------------------------------------------------
// Reduction

std::optional<FlipUpdate> reductionStep(ReductionState& state, const ReductionEvent& event) {
  if (const auto* local = std::get_if<LocalWageChange>(&event)) {
    PeerId p = local->self;
    if (state.ages.at(p) == local->output) return std::nullopt;
    state.ages[p] = local->output;
    ++state.flips[p];
    return FlipUpdate{p, state.flips[p], state.ages[p]};
  }
  const auto& upd = std::get<FlipUpdate>(event);
  if (upd.numFlips < state.flips.at(upd.sender))
    throw StaleUpdate("update from peer " + std::to_string(upd.sender) + " carries " +
                      std::to_string(upd.numFlips) + " flips, already have " +
                      std::to_string(state.flips[upd.sender]));
  state.flips[upd.sender] = upd.numFlips;
  state.ages[upd.sender] = upd.age;
  return std::nullopt;
}

AgeLabel reducedOutput(const ReductionState& state) {
  if (state.flips.empty()) return AgeLabel::kOld;
  auto it = std::min_element(state.flips.begin(), state.flips.end());
  return state.ages[static_cast<std::size_t>(it - state.flips.begin())];
}

AgeLabel reducedOutput(const ReductionState& state, const std::vector<PeerId>& scope) {
  std::optional<PeerId> best;
  for (PeerId p : scope)
    if (!best || state.flips.at(p) < state.flips[*best] || (state.flips[p] == state.flips[*best] && p < *best))
      best = p;
  return best ? state.ages[*best] : AgeLabel::kOld;
}

}  // namespace part
