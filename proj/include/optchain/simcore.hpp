#pragma once

// Discrete-event simulator of a sharded UTXO ledger running the
// lock / proof / unlock-to-commit protocol for cross-shard transactions.
//
// Model:
//  * A client submits transactions at a fixed interval (or Poisson) and picks
//    the output shard with the configured placement strategy.
//  * Same-shard and coinbase transactions go straight to the output shard as
//    a commit request. Cross-shard transactions send a lock request to every
//    input shard, wait for all proofs, then send unlock-to-commit to the
//    output shard (or unlock-to-abort to the shards that accepted).
//  * Every shard has one FIFO mempool. A block takes up to block_capacity
//    items, is cut on a periodic timer or as soon as the mempool is full, and
//    keeps the shard busy for consensus_base_delay plus the block's
//    transmission time. Results leave when the block is done.
//  * A message costs link_latency plus avg_tx_bytes over the bandwidth.
//  * A transaction counts as committed when its confirmation reaches the
//    client.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <deque>
#include <optional>
#include <ostream>
#include <queue>
#include <span>
#include <string>
#include <unordered_map>
#include <unordered_set>
#include <utility>
#include <vector>

#include "optchain/error.hpp"
#include "optchain/ingest.hpp"
#include "optchain/l2s.hpp"
#include "optchain/placement.hpp"
#include "optchain/tan.hpp"

namespace optchain {

struct SimConfig {
  std::size_t k = 4;
  double tx_rate = 2000.0;
  std::size_t block_capacity = 2000;
  std::size_t block_bytes = 1048576;
  std::size_t avg_tx_bytes = 500;
  double link_latency = 0.1;
  double bandwidth = 20e6;  // bits/s
  double consensus_base_delay = 0.5;
  double block_interval = 1.0;
  std::uint64_t rng_seed = 1;
  StrategyConfig strategy{};
  double sample_period = 50.0;
  /// How often the client refreshes its shard rate estimates (OptChain).
  double telemetry_period = 0.1;
  double rate_half_life = 30.0;
  bool poisson_arrivals = false;
  double latency_bin = 0.1;

  void validate() const {
    auto bad = [](const std::string& what) { throw Error(ErrorKind::kConfigInvalid, what); };
    if (k == 0) bad("k must be >= 1");
    if (strategy.k != k) bad("strategy shard count differs from simulator shard count");
    if (!(tx_rate > 0.0)) bad("tx_rate must be > 0");
    if (block_capacity == 0 || block_bytes == 0 || avg_tx_bytes == 0) bad("block sizes must be > 0");
    if (block_capacity * avg_tx_bytes > block_bytes) bad("block_capacity * avg_tx_bytes exceeds block_bytes");
    if (!(link_latency > 0.0) || !(bandwidth > 0.0)) bad("link latency and bandwidth must be > 0");
    if (!(consensus_base_delay > 0.0) || !(block_interval > 0.0)) bad("consensus delay and block interval must be > 0");
    if (!(sample_period > 0.0) || !(telemetry_period > 0.0) || !(rate_half_life > 0.0)) bad("periods must be > 0");
    if (!(latency_bin > 0.0)) bad("latency_bin must be > 0");
    strategy.validate();
  }

  double message_delay() const {
    return link_latency + static_cast<double>(avg_tx_bytes) * 8.0 / bandwidth;
  }
  double block_delay(std::size_t items) const {
    return consensus_base_delay + static_cast<double>(items * avg_tx_bytes) * 8.0 / bandwidth;
  }
  /// Items per second one saturated shard can process.
  double shard_capacity() const {
    return static_cast<double>(block_capacity) / block_delay(block_capacity);
  }
};

enum class TxStatus : std::uint8_t { kPending, kCommitted, kAborted };

struct TxLifecycle {
  TxId tx = 0;
  double submit_time = 0.0;
  ShardId output_shard = 0;
  bool cross_shard = false;
  std::vector<ShardId> input_shards;
  std::uint32_t proofs_outstanding = 0;
  std::vector<ShardId> accepted_shards;
  bool rejected = false;
  double last_proof_time = 0.0;
  std::optional<double> commit_time;
  double end_time = 0.0;
  TxStatus status = TxStatus::kPending;
  bool abort_emitted = false;
};

struct SampleRow {
  double time = 0.0;
  std::uint64_t committed_window = 0;
  std::size_t queue_max = 0;
  std::size_t queue_min = 0;
  double ratio = 1.0;
  double cross_frac = 0.0;
  std::uint64_t injected = 0;
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  std::uint64_t pending = 0;
  std::uint64_t queued_total = 0;
};

struct HistogramBin {
  double lo = 0.0;
  double hi = 0.0;
  std::uint64_t count = 0;
  double cdf = 0.0;
};

struct MetricsReport {
  std::string strategy;
  std::size_t k = 0;
  double tx_rate = 0.0;
  std::uint64_t injected = 0;
  std::uint64_t committed = 0;
  std::uint64_t aborted = 0;
  std::uint64_t pending = 0;
  double duration = 0.0;
  double throughput = 0.0;
  double mean_latency = 0.0;
  double max_latency = 0.0;
  double p50_latency = 0.0;
  double p99_latency = 0.0;
  double mean_latency_cross = 0.0;
  double mean_latency_same = 0.0;
  std::uint64_t committed_cross = 0;
  std::uint64_t committed_same = 0;
  double cross_fraction = 0.0;
  std::uint64_t all_full_events = 0;
  std::uint64_t blocks = 0;
  /// Time-weighted mean of the sampled max/min queue ratio.
  double mean_queue_ratio = 1.0;
  std::vector<SampleRow> series;
  std::vector<HistogramBin> latency_histogram;
};

/// Inserts, right after a fraction of the non-coinbase transactions, a twin
/// that spends exactly the same outputs. Returns the renumbered stream and the
/// (twin, original) pairs.
struct DoubleSpendStream {
  std::vector<TxRecord> records;
  std::vector<std::pair<TxId, TxId>> twins;
};

inline DoubleSpendStream inject_double_spends(std::span<const TxRecord> stream, double fraction,
                                              std::uint64_t seed) {
  std::vector<TxId> candidates;
  for (const auto& r : stream) {
    if (!r.is_coinbase()) candidates.push_back(r.id);
  }
  const auto want = static_cast<std::size_t>(std::llround(fraction * static_cast<double>(stream.size())));
  if (want > candidates.size()) throw Error(ErrorKind::kConfigInvalid, "not enough non-coinbase txs");
  Rng rng(seed);
  // Partial Fisher-Yates.
  for (std::size_t i = 0; i < want; ++i) {
    std::swap(candidates[i], candidates[i + rng.below(candidates.size() - i)]);
  }
  std::vector<bool> doubled(stream.size(), false);
  for (std::size_t i = 0; i < want; ++i) doubled[candidates[i]] = true;

  DoubleSpendStream out;
  std::vector<TxId> remap(stream.size());
  for (const auto& r : stream) {
    auto renumber = [&](TxId newid) {
      std::vector<TxId> parents;
      for (TxId p : r.inputs) parents.push_back(remap[p]);
      TxRecord copy = r;
      copy.id = newid;
      copy.inputs = std::move(parents);
      return copy;
    };
    const auto id = static_cast<TxId>(out.records.size());
    remap[r.id] = id;
    out.records.push_back(renumber(id));
    if (doubled[r.id]) {
      const auto twin = static_cast<TxId>(out.records.size());
      out.records.push_back(renumber(twin));
      out.twins.emplace_back(twin, id);
    }
  }
  return out;
}

class Simulator {
 public:
  Simulator(SimConfig cfg, std::vector<TxRecord> stream,
            std::vector<std::pair<TxId, TxId>> twins = {}, std::vector<ShardId> partition = {})
      : cfg_(std::move(cfg)), stream_(std::move(stream)), placer_((cfg_.validate(), cfg_.strategy), std::move(partition)),
        estimator_(cfg_.k, RateEstimatorConfig{cfg_.rate_half_life,
                                               ShardRates{1.0 / (2.0 * cfg_.message_delay()),
                                                          1.0 / cfg_.block_interval},
                                               cfg_.block_capacity}),
        shards_(cfg_.k) {
    for (std::size_t i = 0; i < stream_.size(); ++i) {
      if (stream_[i].id != i) throw Error(ErrorKind::kConfigInvalid, "stream ids must be dense");
    }
    build_utxo_keys(twins);
    placer_.reserve(stream_.size());
  }

  /// Newline-delimited JSON, one line per processed event.
  void set_event_log(std::ostream* os) { log_ = os; }

  MetricsReport run() {
    if (ran_) throw Error(ErrorKind::kConfigInvalid, "simulator already ran");
    ran_ = true;
    if (cfg_.strategy.kind == StrategyKind::kOptChain) placer_.set_rates(estimator_.estimate());
    lifecycles_.reserve(stream_.size());
    if (!stream_.empty()) {
      schedule(next_arrival_time(0.0), EventKind::kClientSubmit, {});
      schedule(cfg_.block_interval, EventKind::kBlockTimer, {});
      schedule(cfg_.sample_period, EventKind::kSampleTick, {});
      if (cfg_.strategy.kind == StrategyKind::kOptChain) {
        schedule(cfg_.telemetry_period, EventKind::kTelemetryTick, {});
      }
    }
    while (!events_.empty()) {
      Event ev = events_.top();
      events_.pop();
      now_ = ev.time;
      dispatch(ev);
    }
    return finalize();
  }

  const SimConfig& config() const noexcept { return cfg_; }
  std::span<const TxLifecycle> lifecycles() const noexcept { return lifecycles_; }
  std::span<const PlacementDecision> decisions() const noexcept { return decisions_; }
  const std::unordered_set<std::uint64_t>& spent(ShardId s) const { return shards_.at(s).spent; }
  std::span<const std::uint64_t> utxo_keys(TxId u) const { return keys_.at(u); }
  const Placer& placer() const noexcept { return placer_; }

  /// UTXO key: (parent id, output slot).
  static constexpr std::uint64_t utxo_key(TxId parent, std::uint32_t slot) {
    return (static_cast<std::uint64_t>(parent) << 32) | slot;
  }
  static constexpr TxId key_parent(std::uint64_t key) { return static_cast<TxId>(key >> 32); }

 private:
  enum class EventKind : std::uint8_t {
    kBlockDone = 0,
    kMsgArrival = 1,
    kBlockTimer = 2,
    kClientSubmit = 3,
    kTelemetryTick = 4,
    kSampleTick = 5,
  };
  enum class Msg : std::uint8_t {
    kLockRequest,
    kCommitRequest,
    kUnlockCommit,
    kUnlockAbort,
    kProofAccept,
    kProofReject,
    kConfirm,
    kReject,
  };
  static constexpr ShardId kClient = static_cast<ShardId>(-1);

  struct Payload {
    Msg msg = Msg::kLockRequest;
    TxId tx = 0;
    ShardId shard = 0;  // destination shard, or kClient
    ShardId from = 0;   // origin shard for client-bound messages
  };
  struct Event {
    double time;
    EventKind kind;
    std::uint64_t seq;
    Payload p;
  };
  struct Later {
    bool operator()(const Event& a, const Event& b) const {
      if (a.time != b.time) return a.time > b.time;
      if (a.kind != b.kind) return a.kind > b.kind;
      return a.seq > b.seq;
    }
  };
  struct Item {
    Msg msg;
    TxId tx;
  };
  struct Shard {
    std::deque<Item> mempool;
    std::unordered_set<std::uint64_t> spent;
    bool busy = false;
    std::vector<Payload> outbox;
    std::optional<double> last_block_done;
    std::uint64_t committed = 0;
  };

  static const char* msg_name(Msg m) {
    switch (m) {
      case Msg::kLockRequest: return "lock";
      case Msg::kCommitRequest: return "commit_req";
      case Msg::kUnlockCommit: return "unlock_commit";
      case Msg::kUnlockAbort: return "unlock_abort";
      case Msg::kProofAccept: return "proof_accept";
      case Msg::kProofReject: return "proof_reject";
      case Msg::kConfirm: return "confirm";
      case Msg::kReject: return "reject";
    }
    return "?";
  }

  void build_utxo_keys(const std::vector<std::pair<TxId, TxId>>& twins) {
    std::unordered_map<TxId, TxId> original_of;
    for (auto [twin, orig] : twins) {
      if (twin >= stream_.size() || orig >= twin || stream_[twin].inputs != stream_[orig].inputs ||
          stream_[orig].is_coinbase()) {
        throw Error(ErrorKind::kConfigInvalid, "invalid double-spend twin " + std::to_string(twin));
      }
      original_of.emplace(twin, orig);
    }
    std::vector<std::uint32_t> next_slot(stream_.size(), 0);
    keys_.resize(stream_.size());
    for (const auto& r : stream_) {
      if (auto it = original_of.find(r.id); it != original_of.end()) {
        keys_[r.id] = keys_[it->second];
        continue;
      }
      for (TxId v : r.inputs) {
        if (v >= r.id) throw Error(ErrorKind::kForwardReference, "stream is not topologically ordered");
        keys_[r.id].push_back(utxo_key(v, next_slot[v]++));
      }
    }
  }

  void schedule(double time, EventKind kind, Payload p) {
    if (kind == EventKind::kMsgArrival) ++in_flight_;
    events_.push(Event{time, kind, seq_++, p});
  }

  void send(Payload p) {
    const double at = now_ + cfg_.message_delay();
    if (p.from == kClient && p.shard != kClient) unseen_[p.shard].push_back(at);
    schedule(at, EventKind::kMsgArrival, p);
  }

  double next_arrival_time(double prev) {
    if (cfg_.poisson_arrivals) return prev + injection_rng_.exponential(cfg_.tx_rate);
    return static_cast<double>(submitted_ + 1) / cfg_.tx_rate;
  }

  bool work_remains() const {
    if (submitted_ < stream_.size() || pending_ > 0 || in_flight_ > 0) return true;
    for (const auto& s : shards_) {
      if (s.busy || !s.mempool.empty()) return true;
    }
    return false;
  }

  void log_line(const char* ev, const Payload& p, long extra = -1) {
    if (!log_) return;
    char buf[192];
    if (extra >= 0) {
      std::snprintf(buf, sizeof buf, "{\"t\":%.9f,\"ev\":\"%s\",\"shard\":%u,\"items\":%ld}\n", now_,
                    ev, p.shard, extra);
    } else {
      std::snprintf(buf, sizeof buf, "{\"t\":%.9f,\"ev\":\"%s\",\"msg\":\"%s\",\"tx\":%u,\"shard\":%d}\n",
                    now_, ev, msg_name(p.msg), p.tx,
                    p.shard == kClient ? -1 : static_cast<int>(p.shard));
    }
    *log_ << buf;
  }

  void dispatch(const Event& ev) {
    switch (ev.kind) {
      case EventKind::kClientSubmit: on_submit(); break;
      case EventKind::kMsgArrival:
        --in_flight_;
        on_message(ev.p);
        break;
      case EventKind::kBlockDone: on_block_done(ev.p.shard); break;
      case EventKind::kBlockTimer:
        for (ShardId s = 0; s < shards_.size(); ++s) {
          if (!shards_[s].busy && !shards_[s].mempool.empty()) form_block(s);
        }
        if (work_remains()) schedule(now_ + cfg_.block_interval, EventKind::kBlockTimer, {});
        break;
      case EventKind::kTelemetryTick:
        refresh_rates();
        if (work_remains()) schedule(now_ + cfg_.telemetry_period, EventKind::kTelemetryTick, {});
        break;
      case EventKind::kSampleTick:
        take_sample();
        if (work_remains()) schedule(now_ + cfg_.sample_period, EventKind::kSampleTick, {});
        break;
    }
  }

  void on_submit() {
    const TxId u = static_cast<TxId>(submitted_);
    const TxRecord& rec = stream_[u];
    // The literal integral is too slow to redo per decision; strict mode
    // keeps the periodic refresh only.
    if (cfg_.strategy.kind == StrategyKind::kOptChain && cfg_.strategy.l2s_mode == L2SMode::kConvolved) {
      for (ShardId s = 0; s < shards_.size(); ++s) {
        estimator_.observe_queue(s, observed_queue_[s] + unseen_[s].size());
      }
      placer_.set_rates(estimator_.estimate());
    }
    PlacementDecision d = placer_.place(rec);
    ++submitted_;
    ++pending_;
    if (d.is_cross_shard) ++cross_decisions_;

    TxLifecycle lc;
    lc.tx = u;
    lc.submit_time = now_;
    lc.output_shard = d.shard;
    lc.cross_shard = d.is_cross_shard;
    lc.input_shards = d.input_shards;
    if (log_) {
      char buf[160];
      std::snprintf(buf, sizeof buf, "{\"t\":%.9f,\"ev\":\"submit\",\"tx\":%u,\"shard\":%u,\"cross\":%d}\n",
                    now_, u, d.shard, d.is_cross_shard ? 1 : 0);
      *log_ << buf;
    }
    if (!d.is_cross_shard) {
      send({Msg::kCommitRequest, u, d.shard, kClient});
    } else {
      lc.proofs_outstanding = static_cast<std::uint32_t>(d.input_shards.size());
      for (ShardId s : d.input_shards) send({Msg::kLockRequest, u, s, kClient});
    }
    lifecycles_.push_back(std::move(lc));
    decisions_.push_back(std::move(d));

    if (submitted_ < stream_.size()) {
      schedule(next_arrival_time(now_), EventKind::kClientSubmit, {});
    }
  }

  void on_message(const Payload& p) {
    log_line("arrive", p);
    if (p.shard != kClient) {
      Shard& s = shards_[p.shard];
      s.mempool.push_back({p.msg, p.tx});
      if (!s.busy && s.mempool.size() >= cfg_.block_capacity) form_block(p.shard);
      return;
    }
    TxLifecycle& lc = lifecycles_[p.tx];
    switch (p.msg) {
      case Msg::kProofAccept:
      case Msg::kProofReject:
        if (p.msg == Msg::kProofAccept) {
          lc.accepted_shards.push_back(p.from);
        } else {
          lc.rejected = true;
        }
        lc.last_proof_time = now_;
        if (--lc.proofs_outstanding == 0) {
          if (lc.rejected) {
            for (ShardId s : lc.accepted_shards) send({Msg::kUnlockAbort, lc.tx, s, kClient});
            lc.abort_emitted = true;
            finish(lc, TxStatus::kAborted);
          } else {
            send({Msg::kUnlockCommit, lc.tx, lc.output_shard, kClient});
          }
        }
        break;
      case Msg::kConfirm:
        lc.commit_time = now_;
        finish(lc, TxStatus::kCommitted);
        break;
      case Msg::kReject:
        lc.rejected = true;
        finish(lc, TxStatus::kAborted);
        break;
      default:
        throw Error(ErrorKind::kConfigInvalid, "shard-bound message delivered to client");
    }
  }

  void finish(TxLifecycle& lc, TxStatus status) {
    lc.status = status;
    lc.end_time = now_;
    --pending_;
    if (status == TxStatus::kCommitted) {
      ++committed_;
      ++committed_since_sample_;
    } else {
      ++aborted_;
    }
    last_terminal_ = now_;
  }

  // Tries to lock every input of `tx` that lives in `shard`; all or nothing.
  bool try_lock(Shard& s, ShardId shard, TxId tx) {
    const auto assignment = placer_.assignment();
    for (std::uint64_t key : keys_[tx]) {
      if (assignment[key_parent(key)] == shard && s.spent.contains(key)) return false;
    }
    for (std::uint64_t key : keys_[tx]) {
      if (assignment[key_parent(key)] == shard) s.spent.insert(key);
    }
    return true;
  }

  void form_block(ShardId shard) {
    Shard& s = shards_[shard];
    const std::size_t n = std::min(cfg_.block_capacity, s.mempool.size());
    if (n == 0) return;
    s.busy = true;
    ++blocks_;
    for (std::size_t i = 0; i < n; ++i) {
      const Item item = s.mempool.front();
      s.mempool.pop_front();
      switch (item.msg) {
        case Msg::kLockRequest:
          s.outbox.push_back({try_lock(s, shard, item.tx) ? Msg::kProofAccept : Msg::kProofReject,
                              item.tx, kClient, shard});
          break;
        case Msg::kCommitRequest:
          if (try_lock(s, shard, item.tx)) {
            ++s.committed;
            s.outbox.push_back({Msg::kConfirm, item.tx, kClient, shard});
          } else {
            s.outbox.push_back({Msg::kReject, item.tx, kClient, shard});
          }
          break;
        case Msg::kUnlockCommit:
          ++s.committed;
          s.outbox.push_back({Msg::kConfirm, item.tx, kClient, shard});
          break;
        case Msg::kUnlockAbort: {
          const auto assignment = placer_.assignment();
          for (std::uint64_t key : keys_[item.tx]) {
            if (assignment[key_parent(key)] == shard) s.spent.erase(key);
          }
          break;
        }
        default:
          throw Error(ErrorKind::kConfigInvalid, "client-bound message queued at shard");
      }
    }
    log_line("block", {Msg::kLockRequest, 0, shard, 0}, static_cast<long>(n));
    schedule(now_ + cfg_.block_delay(n), EventKind::kBlockDone, {Msg::kLockRequest, 0, shard, 0});
  }

  void on_block_done(ShardId shard) {
    Shard& s = shards_[shard];
    log_line("block_done", {Msg::kLockRequest, 0, shard, 0}, static_cast<long>(s.outbox.size()));
    s.busy = false;
    if (s.last_block_done) estimator_.observe_commit_interval(shard, now_, now_ - *s.last_block_done);
    s.last_block_done = now_;
    for (const auto& p : s.outbox) send(p);
    s.outbox.clear();
    if (s.mempool.size() >= cfg_.block_capacity) form_block(shard);
  }

  void refresh_rates() {
    const double rtt = 2.0 * cfg_.message_delay();
    for (ShardId s = 0; s < shards_.size(); ++s) {
      estimator_.observe_rtt(s, now_, rtt);
      observed_queue_[s] = shards_[s].mempool.size();
      auto& q = unseen_[s];
      while (!q.empty() && q.front() <= now_) q.pop_front();
      estimator_.observe_queue(s, observed_queue_[s] + q.size());
    }
    placer_.set_rates(estimator_.estimate());
  }

  void take_sample() {
    SampleRow row;
    row.time = now_;
    row.committed_window = committed_since_sample_;
    committed_since_sample_ = 0;
    row.queue_max = 0;
    row.queue_min = std::numeric_limits<std::size_t>::max();
    for (const auto& s : shards_) {
      row.queue_max = std::max(row.queue_max, s.mempool.size());
      row.queue_min = std::min(row.queue_min, s.mempool.size());
      row.queued_total += s.mempool.size();
    }
    row.ratio = static_cast<double>(std::max<std::size_t>(row.queue_max, 1)) /
                static_cast<double>(std::max<std::size_t>(row.queue_min, 1));
    row.cross_frac = submitted_ == 0 ? 0.0 : static_cast<double>(cross_decisions_) / static_cast<double>(submitted_);
    row.injected = submitted_;
    row.committed = committed_;
    row.aborted = aborted_;
    row.pending = pending_;
    series_.push_back(row);
  }

  MetricsReport finalize() {
    MetricsReport r;
    r.strategy = std::string(to_string(cfg_.strategy.kind));
    r.k = cfg_.k;
    r.tx_rate = cfg_.tx_rate;
    r.injected = submitted_;
    r.committed = committed_;
    r.aborted = aborted_;
    r.pending = pending_;
    r.duration = last_terminal_;
    r.throughput = r.duration > 0.0 ? static_cast<double>(committed_) / r.duration : 0.0;
    r.cross_fraction = submitted_ == 0 ? 0.0 : static_cast<double>(cross_decisions_) / static_cast<double>(submitted_);
    r.all_full_events = placer_.all_full_events();
    r.blocks = blocks_;
    r.series = series_;

    std::vector<double> latencies;
    double sum_cross = 0.0, sum_same = 0.0;
    for (const auto& lc : lifecycles_) {
      if (lc.status != TxStatus::kCommitted) continue;
      const double l = *lc.commit_time - lc.submit_time;
      latencies.push_back(l);
      if (lc.cross_shard) {
        sum_cross += l;
        ++r.committed_cross;
      } else {
        sum_same += l;
        ++r.committed_same;
      }
    }
    if (!latencies.empty()) {
      double sum = 0.0;
      for (double l : latencies) sum += l;
      r.mean_latency = sum / static_cast<double>(latencies.size());
      std::sort(latencies.begin(), latencies.end());
      r.max_latency = latencies.back();
      auto quantile = [&](double q) {
        const auto idx = static_cast<std::size_t>(std::ceil(q * static_cast<double>(latencies.size()))) - 1;
        return latencies[std::min(idx, latencies.size() - 1)];
      };
      r.p50_latency = quantile(0.5);
      r.p99_latency = quantile(0.99);
      const auto bins = static_cast<std::size_t>(std::floor(r.max_latency / cfg_.latency_bin)) + 1;
      r.latency_histogram.resize(bins);
      for (std::size_t b = 0; b < bins; ++b) {
        r.latency_histogram[b].lo = static_cast<double>(b) * cfg_.latency_bin;
        r.latency_histogram[b].hi = static_cast<double>(b + 1) * cfg_.latency_bin;
      }
      for (double l : latencies) {
        ++r.latency_histogram[std::min(bins - 1, static_cast<std::size_t>(std::floor(l / cfg_.latency_bin)))].count;
      }
      std::uint64_t acc = 0;
      for (auto& b : r.latency_histogram) {
        acc += b.count;
        b.cdf = static_cast<double>(acc) / static_cast<double>(latencies.size());
      }
    }
    if (r.committed_cross) r.mean_latency_cross = sum_cross / static_cast<double>(r.committed_cross);
    if (r.committed_same) r.mean_latency_same = sum_same / static_cast<double>(r.committed_same);

    // Each sample holds until the next one.
    if (!series_.empty()) {
      double weighted = 0.0, span = 0.0, prev = 0.0;
      for (const auto& row : series_) {
        weighted += row.ratio * (row.time - prev);
        span += row.time - prev;
        prev = row.time;
      }
      r.mean_queue_ratio = span > 0.0 ? weighted / span : 1.0;
    }
    return r;
  }

  SimConfig cfg_;
  std::vector<TxRecord> stream_;
  Placer placer_;
  RateEstimator estimator_;
  std::vector<Shard> shards_;
  // Client-side view for live rate estimates: last observed mempool length
  // and arrival times of own messages the observation could not yet include.
  std::vector<std::size_t> observed_queue_ = std::vector<std::size_t>(cfg_.k, 0);
  std::vector<std::deque<double>> unseen_ = std::vector<std::deque<double>>(cfg_.k);
  std::vector<std::vector<std::uint64_t>> keys_;
  std::vector<TxLifecycle> lifecycles_;
  std::vector<PlacementDecision> decisions_;
  std::vector<SampleRow> series_;
  std::priority_queue<Event, std::vector<Event>, Later> events_;
  Rng injection_rng_{stable_hash(cfg_.rng_seed ^ 0x696e6a656374ULL)};
  std::ostream* log_ = nullptr;
  double now_ = 0.0;
  double last_terminal_ = 0.0;
  std::uint64_t seq_ = 0;
  std::uint64_t in_flight_ = 0;
  std::uint64_t submitted_ = 0;
  std::uint64_t pending_ = 0;
  std::uint64_t committed_ = 0;
  std::uint64_t aborted_ = 0;
  std::uint64_t committed_since_sample_ = 0;
  std::uint64_t cross_decisions_ = 0;
  std::uint64_t blocks_ = 0;
  bool ran_ = false;
};

}  // namespace optchain
