#include "part/reduction.hpp"

#include "part/network.hpp"

#include <algorithm>

namespace part {

bool WageSchedule::wrongAt(Round r) const {
  auto n = std::upper_bound(toggles.begin(), toggles.end(), r) - toggles.begin();
  return n % 2 == 1;
}

bool WageSchedule::weaklyCorrect(Round from, Round to, Round window) const {
  for (std::size_t i = 0; i < toggles.size(); i += 2) {
    Round start = std::max(toggles[i], from);
    Round end = i + 1 < toggles.size() ? toggles[i + 1] : to;
    if (std::min(end, to) - start >= window) return false;
  }
  return true;
}

std::vector<WageSchedule> generateSchedules(const std::vector<std::vector<PeerId>>& partitions, Round minedAt,
                                            Round rounds, Round window, Round lieFreeAfter,
                                            std::uint64_t seed, std::uint64_t blockIndex) {
  auto g = substream(seed, Stream::kSchedule, blockIndex);
  std::size_t n = 0;
  for (const auto& part : partitions) n += part.size();
  std::vector<WageSchedule> out(n);
  const Round seg = std::max<Round>(1, window / 2);

  auto alternate = [&](WageSchedule& s, Round from, Round to) {
    bool wrong = uniformInt(g, 0, 1) == 1;
    for (Round r = from; r < to;) {
      Round len = uniformInt(g, 1, seg);
      if (wrong) {
        s.toggles.push_back(r);
        s.toggles.push_back(std::min(r + len, to));
      }
      wrong = !wrong;
      r += len;
    }
  };

  for (const auto& part : partitions) {
    if (part.empty()) continue;
    PeerId designated = part[static_cast<std::size_t>(uniformInt(g, 0, static_cast<std::int64_t>(part.size()) - 1))];
    for (PeerId p : part) {
      if (p == designated)
        alternate(out[p], minedAt, minedAt + uniformInt(g, 0, lieFreeAfter));
      else
        alternate(out[p], minedAt, rounds);
    }
  }
  return out;
}

ReductionResult runReduction(const ReductionConfig& c) {
  std::vector<SplitSpec> splits;
  if (c.splitRound >= 0) {
    SplitSpec s;
    s.round = c.splitRound;
    for (PeerId p = static_cast<PeerId>(c.peers / 2); p < c.peers; ++p) s.secondPeers.push_back(p);
    splits.push_back(s);
  }
  GroundTruth truth(c.peers, {1000}, splits);
  LossModel noLoss;
  Network net(truth, c.maxDelay, noLoss, c.seed);

  // Blocks spread over the run's first part, half before the split.
  Round span = c.splitRound >= 0 ? 2 * c.splitRound : c.rounds / 4;
  std::vector<Block> blocks(c.blocks);
  std::vector<AgeLabel> correct(c.blocks);
  for (std::size_t i = 0; i < c.blocks; ++i) {
    Block& b = blocks[i];
    b.id = BlockId{i + 1};
    b.parents = {kGenesisId};
    b.miner = static_cast<PeerId>(i % c.peers);
    b.minedAt = static_cast<Round>(i) * span / static_cast<Round>(std::max<std::size_t>(1, c.blocks));
    b.label = truth.label(b);
    correct[i] = b.label.epoch == 0 ? AgeLabel::kOld : AgeLabel::kNew;
  }

  std::vector<std::vector<WageSchedule>> schedules;
  if (!c.wrong) {
    std::vector<std::vector<PeerId>> finalParts;
    for (PartitionId part : truth.partitions(c.rounds)) finalParts.push_back(truth.members(part, c.rounds));
    for (std::size_t i = 0; i < c.blocks; ++i)
      schedules.push_back(
          generateSchedules(finalParts, blocks[i].minedAt, c.rounds, c.weakWindow, c.lieFreeAfter, c.seed, i));
  }
  auto wrongAt = [&](PeerId p, std::size_t i, Round r) {
    return c.wrong ? c.wrong(p, i, r) : schedules[i][p].wrongAt(r);
  };
  auto flip = [](AgeLabel a) { return a == AgeLabel::kOld ? AgeLabel::kNew : AgeLabel::kOld; };

  // state[p][i]: peer p's reduction state for block i.
  std::vector<std::vector<ReductionState>> state(c.peers, std::vector<ReductionState>(c.blocks, ReductionState(c.peers)));
  ReductionResult res;
  std::vector<std::vector<Round>> lastWrong(c.peers, std::vector<Round>(c.blocks, -1));

  for (Round r = 0; r < c.rounds; ++r) {
    for (const Delivery& d : net.collect(r)) {
      const auto& upd = std::get<DetectorUpdate>(d.message->payload);
      try {
        reductionStep(state[d.to][raw(upd.block) - 1], upd.update);
      } catch (const StaleUpdate& e) {
        res.converged = false;
        res.failures.push_back(e.what());
      }
    }
    for (PeerId p = 0; p < c.peers; ++p) {
      std::vector<PeerId> scope = truth.members(truth.partitionOf(p, r), r);
      for (std::size_t i = 0; i < c.blocks; ++i) {
        if (r < blocks[i].minedAt) continue;
        AgeLabel out = wrongAt(p, i, r) ? flip(correct[i]) : correct[i];
        if (auto upd = reductionStep(state[p][i], LocalWageChange{p, out})) {
          net.broadcast(p, r, DetectorUpdate{blocks[i].id, *upd});
          ++res.updates;
        }
        if (reducedOutput(state[p][i], scope) != correct[i]) lastWrong[p][i] = r;
      }
    }
  }

  const Round settled = c.rounds - c.rounds / 4;
  for (PeerId p = 0; p < c.peers; ++p)
    for (std::size_t i = 0; i < c.blocks; ++i) {
      res.lastWrong = std::max(res.lastWrong, lastWrong[p][i]);
      if (lastWrong[p][i] >= settled) {
        res.converged = false;
        res.failures.push_back("peer " + std::to_string(p) + " block " + std::to_string(i + 1) +
                               " still wrong at round " + std::to_string(lastWrong[p][i]));
      }
    }
  return res;
}

}  // namespace part
