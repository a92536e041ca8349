#include "part/network.hpp"

#include <algorithm>

namespace part {

namespace {

std::uint64_t mix(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

// Content key of a message for the forced-delivery rule.
std::uint64_t contentKey(const Payload& p) {
  std::uint64_t kind = static_cast<std::uint64_t>(p.index());
  std::uint64_t id = std::visit(
      [](const auto& m) -> std::uint64_t {
        using T = std::decay_t<decltype(m)>;
        if constexpr (std::is_same_v<T, TransactionMsg>) return m.tx.id.seq * 131 + m.tx.id.client;
        else if constexpr (std::is_same_v<T, MinedBlockMsg>) return raw(m.block->id);
        else if constexpr (std::is_same_v<T, CatchupRequest>) return raw(m.missing);
        else if constexpr (std::is_same_v<T, CatchupReply>) return m.blocks.empty() ? 0 : raw(m.blocks.front()->id);
        else return raw(m.block) * 1000003 + m.update.sender * 7919 + m.update.numFlips;
      },
      p);
  return mix(kind ^ mix(id));
}

bool carriesBlocks(const Payload& p) {
  return std::holds_alternative<MinedBlockMsg>(p) || std::holds_alternative<CatchupReply>(p);
}

}  // namespace

std::mt19937_64 substream(std::uint64_t seed, Stream purpose, std::uint64_t index) {
  std::seed_seq seq{mix(seed), mix(static_cast<std::uint64_t>(purpose)), mix(index)};
  return std::mt19937_64(seq);
}

std::int64_t uniformInt(std::mt19937_64& g, std::int64_t lo, std::int64_t hi) {
  return std::uniform_int_distribution<std::int64_t>(lo, hi)(g);
}

double uniformReal(std::mt19937_64& g) { return std::uniform_real_distribution<double>(0.0, 1.0)(g); }

Network::Network(const GroundTruth& truth, Round maxDelay, LossModel loss, std::uint64_t seed)
    : truth_(&truth),
      peers_(truth.peers()),
      maxDelay_(maxDelay),
      loss_(loss),
      lastDelivery_(peers_ * peers_, 0) {
  for (PeerId p = 0; p < peers_; ++p) {
    delayRng_.push_back(substream(seed, Stream::kDelay, p));
    lossRng_.push_back(substream(seed, Stream::kLoss, p));
  }
}

void Network::enqueue(PeerId from, PeerId to, Round r, const std::shared_ptr<const Message>& m) {
  Round at = r + uniformInt(delayRng_[from], 1, maxDelay_);
  Round& last = lastDelivery_[from * peers_ + to];
  at = std::max(at, last);
  last = at;
  queue_[at].push_back(Pending{to, from, seq_++, m});
  ++inFlight_;
  ++sent_;
}

void Network::broadcast(PeerId from, Round r, Payload payload) {
  PartitionId part = truth_->partitionOf(from, r);
  auto m = std::make_shared<const Message>(Message{std::move(payload), from, r, part});
  for (PeerId to = 0; to < peers_; ++to)
    if (to != from && truth_->partitionOf(to, r) == part) enqueue(from, to, r, m);
}

void Network::unicast(PeerId from, PeerId to, Round r, Payload payload) {
  PartitionId part = truth_->partitionOf(from, r);
  if (to == from || truth_->partitionOf(to, r) != part) return;
  enqueue(from, to, r, std::make_shared<const Message>(Message{std::move(payload), from, r, part}));
}

void Network::send(PeerId from, Round r, Outgoing out) {
  if (out.to)
    unicast(from, *out.to, r, std::move(out.payload));
  else
    broadcast(from, r, std::move(out.payload));
}

bool Network::lose(const Pending& p) {
  if (loss_.rate <= 0.0) return false;
  const Payload& payload = p.message->payload;
  if (loss_.protectDesignated && carriesBlocks(payload)) {
    auto members = truth_->members(truth_->partitionOf(p.to, p.message->sendRound), p.message->sendRound);
    if (!members.empty() && members.front() == p.to) return false;
  }
  if (uniformReal(lossRng_[p.to]) >= loss_.rate) return false;
  std::uint64_t key = mix(contentKey(payload) ^ mix(p.to + 1));
  int& drops = dropCounts_[key];
  if (drops + 1 >= loss_.forceAfter) return false;
  ++drops;
  return true;
}

std::vector<Delivery> Network::collect(Round r) {
  std::vector<Delivery> out;
  auto it = queue_.find(r);
  if (it == queue_.end()) return out;
  std::vector<Pending> due = std::move(it->second);
  queue_.erase(it);
  inFlight_ -= due.size();
  std::sort(due.begin(), due.end(), [](const Pending& a, const Pending& b) {
    if (a.to != b.to) return a.to < b.to;
    if (a.from != b.from) return a.from < b.from;
    return a.seq < b.seq;
  });
  for (const Pending& p : due) {
    if (truth_->partitionOf(p.to, p.message->sendRound) != p.message->senderPartition)
      throw std::logic_error("message crossed a partition boundary");
    if (lose(p)) {
      ++dropped_;
      continue;
    }
    out.push_back(Delivery{p.to, p.message});
  }
  return out;
}

}  // namespace part
