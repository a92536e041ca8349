#include "part/world.hpp"

#include <algorithm>
#include <ostream>

namespace part {

World::World(ScenarioConfig config) : config_(std::move(config)) {
  config_.validate();
  truth_ = std::make_unique<GroundTruth>(config_.peers, config_.endowment, config_.splits, config_.merges);
  detector_ = std::make_unique<Detector>(*truth_, config_.detector);
  shared_ = std::make_shared<SharedChain>(truth_->context());
  network_ = std::make_unique<Network>(*truth_, config_.maxDelay, config_.loss, config_.seed);
  submitRng_ = substream(config_.seed, Stream::kSubmit);

  for (Round r : truth_->eventRounds()) eventRounds_.insert(r);
  for (Round r : detector_->changeRounds()) changeRounds_.insert(r);

  confirmable_.resize(config_.peers);
  miners_.resize(config_.peers);
  for (PeerId p = 0; p < config_.peers; ++p) {
    PeerConfig pc;
    pc.id = p;
    pc.catchup = config_.catchup;
    pc.smpart = config_.smpart;
    pc.mergeWait = config_.mergeWait;
    pc.catchupBatch = config_.catchupBatch;
    peers_.push_back(std::make_unique<Peer>(pc, *detector_, shared_));
    peers_.back()->setChainObserver([this](PeerId who, const Block& b, bool added) { observe(who, b, added); });
    miningRng_.push_back(substream(config_.seed, Stream::kMining, p));
  }
  truthful_[global_.genesis()] = true;
}

void World::run() {
  while (round_ < config_.rounds) step();
}

void World::flush(PeerId from, Round r, Outbox& out) {
  for (auto& o : out) {
    if (trace_ && std::holds_alternative<CatchupRequest>(o.payload))
      *trace_ << r << " " << from << " catchup-request " << raw(std::get<CatchupRequest>(o.payload).missing) << "\n";
    network_->send(from, r, std::move(o));
  }
  out.clear();
}

void World::step() {
  const Round r = round_;
  RoundRecord rec;
  rec.round = r;
  std::vector<Outbox> outs(config_.peers);

  // (1) Scheduled events and detector output changes.
  if (eventRounds_.count(r) || changeRounds_.count(r)) {
    for (PeerId p = 0; p < config_.peers; ++p) {
      Peer& peer = *peers_[p];
      if (changeRounds_.count(r)) peer.refresh(r, outs[p]);
      PartitionId part = truth_->partitionOf(p, r);
      if (part != peer.partition()) {
        if (trace_) *trace_ << r << " " << p << " partition " << part << "\n";
        peer.setPartition(part, r, outs[p]);
      }
    }
  }

  // (2) Delivery.
  std::vector<Delivery> due = network_->collect(r);

  // (3) Submission: the entry peer learns the transaction directly and
  // broadcasts it to its partition.
  for (std::uint32_t i = 0; i < config_.txPerRound; ++i) {
    PeerId entry = static_cast<PeerId>(uniformInt(submitRng_, 0, static_cast<std::int64_t>(config_.peers) - 1));
    Transaction t;
    t.id = TxId{0, nextSeq_++};
    const auto accounts = static_cast<std::int64_t>(config_.endowment.size());
    t.source = static_cast<AccountId>(uniformInt(submitRng_, 0, accounts - 1));
    t.target = static_cast<AccountId>(uniformInt(submitRng_, 0, accounts - 1));
    t.amount = config_.amountQuantum * uniformInt(submitRng_, 0, config_.maxAmount / config_.amountQuantum);
    PartitionId part = truth_->partitionOf(entry, r);
    txs_.push_back(TxRecord{t, r, entry, part, std::nullopt});
    txMembers_.push_back(truth_->members(part, r));
    if (trace_) *trace_ << r << " " << entry << " submit " << t.id.seq << "\n";
    peers_[entry]->deliver(Message{TransactionMsg{t}, entry, r, part}, r, outs[entry]);
    outs[entry].push_back(Outgoing{TransactionMsg{t}, std::nullopt});
    ++rec.submitted;
  }

  // (4) Handlers, in peer-id order.
  std::size_t next = 0;
  for (PeerId p = 0; p < config_.peers; ++p) {
    Peer& peer = *peers_[p];
    for (; next < due.size() && due[next].to == p; ++next) {
      const Message& m = *due[next].message;
      if (const auto* mb = std::get_if<MinedBlockMsg>(&m.payload)) truth_->markDelivered(mb->block->id, p);
      if (const auto* cr = std::get_if<CatchupReply>(&m.payload))
        for (const auto& b : cr->blocks) truth_->markDelivered(b->id, p);
      peer.deliver(m, r, outs[p]);
    }
    peer.catchup(r, outs[p]);
    peer.settle(r, outs[p]);
  }

  // (5) Mining completions, then new draws for changed targets.
  for (PeerId p = 0; p < config_.peers; ++p) {
    Peer& peer = *peers_[p];
    Miner& m = miners_[p];
    if (!peer.miningTarget()) continue;
    bool success = false;
    if (config_.miningModel == MiningModel::kUniformCompletion)
      success = m.drawnVersion == peer.targetVersion() && m.completion && *m.completion == r;
    else
      success = uniformInt(miningRng_[p], 1, config_.miningBound()) == 1;
    if (!success) continue;
    BlockId id{nextBlock_++};
    MineOutcome res = peer.onMineSuccess(id, r, outs[p]);
    if (res.accepted) {
      BlockId parent = res.block->parents.front();
      if (globalChildren_[parent]++ > 0 && !res.block->isMerge()) ++rec.forks;
      record(res.block);
      ++rec.mined;
      if (trace_) *trace_ << r << " " << p << " mine " << raw(id) << "\n";
    } else {
      ++rec.discarded;
      if (trace_) *trace_ << r << " " << p << " discard " << raw(id) << "\n";
    }
  }
  redraw(r);

  // (6) Outgoing messages.
  for (PeerId p = 0; p < config_.peers; ++p) flush(p, r, outs[p]);

  confirm(r, rec);
  rec.conservationViolations = checkConservation();
  rec.inFlight = network_->inFlight();
  records_.push_back(rec);
  ++round_;
  if (hook_) hook_(*this);
}

void World::redraw(Round r) {
  for (PeerId p = 0; p < config_.peers; ++p) {
    Peer& peer = *peers_[p];
    Miner& m = miners_[p];
    if (m.drawnVersion == peer.targetVersion()) continue;
    m.drawnVersion = peer.targetVersion();
    m.completion.reset();
    if (peer.miningTarget() && config_.miningModel == MiningModel::kUniformCompletion)
      m.completion = r + uniformInt(miningRng_[p], 1, config_.miningBound());
  }
}

void World::record(const BlockPtr& b) {
  truth_->record(b);
  global_.insert(b);
  bool ok = b->label == truth_->label(*b);
  for (BlockId p : b->parents) ok = ok && truthful_.at(p);
  truthful_[b->id] = ok;
}

void World::observe(PeerId p, const Block& b, bool added) {
  if (!b.tx) return;
  auto it = truthful_.find(b.id);
  bool ok;
  if (it != truthful_.end()) {
    ok = it->second;
  } else {
    // The miner's own block is observed before it is recorded.
    ok = b.label == truth_->label(b);
    for (BlockId q : b.parents) ok = ok && truthful_.at(q);
  }
  if (!ok) return;
  auto& counts = confirmable_[p];
  if (added) {
    if (++counts[b.tx->id] == 1) candidates_.insert(b.tx->id.seq);
  } else {
    auto c = counts.find(b.tx->id);
    if (--c->second == 0) counts.erase(c);
  }
}

void World::confirm(Round r, RoundRecord& rec) {
  for (std::uint64_t seq : candidates_) {
    TxRecord& t = txs_.at(seq - 1);
    if (t.confirmedAt) continue;
    bool all = true;
    for (PeerId p : txMembers_[seq - 1])
      if (!confirmable_[p].count(t.tx.id)) {
        all = false;
        break;
      }
    if (all) {
      t.confirmedAt = r;
      ++rec.confirmed;
    }
  }
  candidates_.clear();
}

std::uint32_t World::checkConservation() const {
  const SplitContext& ctx = truth_->context();
  std::uint32_t bad = 0;
  for (const auto& peer : peers_) {
    const Ledger& l = shared_->ledger(peer->tree(), peer->tip());
    auto it = expected_.find(l.partition);
    if (it == expected_.end()) {
      Fraction e = 0;
      for (AccountId a = 0; a < ctx.accounts(); ++a) e += ctx.share(l.partition, a) * Fraction(ctx.endowment()[a]);
      it = expected_.emplace(l.partition, e).first;
    }
    Funds sum = 0;
    for (Funds f : l.balances) sum += f;
    if (Fraction(sum) != it->second) ++bad;
  }
  return bad;
}

}  // namespace part
