#pragma once

// Seeded random substreams and the simulated clique of FIFO channels with
// bounded random delays, partition-aware delivery and message loss.

#include "part/detectors.hpp"
#include "part/peer.hpp"

#include <cstdint>
#include <map>
#include <memory>
#include <random>
#include <unordered_map>
#include <vector>

namespace part {

enum class Stream : std::uint64_t {
  kDelay = 1,
  kLoss = 2,
  kMining = 3,
  kSubmit = 4,
  kReduction = 5,
  kSchedule = 6,
};

/// Independent generator for (seed, purpose, index).
std::mt19937_64 substream(std::uint64_t seed, Stream purpose, std::uint64_t index = 0);

/// Uniform integer in [lo, hi].
std::int64_t uniformInt(std::mt19937_64& g, std::int64_t lo, std::int64_t hi);
double uniformReal(std::mt19937_64& g);

struct LossModel {
  double rate = 0.0;
  /// A message to the same receiver with the same content is dropped at
  /// most this many times minus one.
  int forceAfter = 3;
  /// One member per partition never loses blocks, so every block seen in
  /// a partition has all its ancestors held somewhere in it.
  bool protectDesignated = true;
};

struct Delivery {
  PeerId to = 0;
  std::shared_ptr<const Message> message;
};

class Network {
 public:
  Network(const GroundTruth& truth, Round maxDelay, LossModel loss, std::uint64_t seed);

  /// Sends to every other member of the sender's partition at `r`.
  void broadcast(PeerId from, Round r, Payload payload);
  /// Sends to one peer if it shares the sender's partition at `r`.
  void unicast(PeerId from, PeerId to, Round r, Payload payload);
  void send(PeerId from, Round r, Outgoing out);

  /// Messages due at `r`, ordered by receiver, then sender, then send order.
  /// Lost messages are removed here.
  std::vector<Delivery> collect(Round r);

  std::size_t inFlight() const { return inFlight_; }
  std::uint64_t sent() const { return sent_; }
  std::uint64_t dropped() const { return dropped_; }

 private:
  struct Pending {
    PeerId to;
    PeerId from;
    std::uint64_t seq;
    std::shared_ptr<const Message> message;
  };

  void enqueue(PeerId from, PeerId to, Round r, const std::shared_ptr<const Message>& m);
  bool lose(const Pending& p);

  const GroundTruth* truth_;
  std::size_t peers_;
  Round maxDelay_;
  LossModel loss_;
  std::vector<std::mt19937_64> delayRng_;  // per sender
  std::vector<std::mt19937_64> lossRng_;   // per receiver
  std::vector<Round> lastDelivery_;        // per ordered pair
  std::map<Round, std::vector<Pending>> queue_;
  std::unordered_map<std::uint64_t, int> dropCounts_;
  std::uint64_t seq_ = 0;
  std::size_t inFlight_ = 0;
  std::uint64_t sent_ = 0;
  std::uint64_t dropped_ = 0;
};

}  // namespace part
