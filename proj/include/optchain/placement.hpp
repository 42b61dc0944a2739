#pragma once

// Transaction placement strategies and the stateful engine that applies one
// of them to an arriving stream.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "optchain/error.hpp"
#include "optchain/l2s.hpp"
#include "optchain/t2s.hpp"
#include "optchain/tan.hpp"

namespace optchain {

enum class StrategyKind { kRandom, kGreedy, kT2S, kOptChain, kImported };

inline std::string_view to_string(StrategyKind kind) {
  switch (kind) {
    case StrategyKind::kRandom: return "random";
    case StrategyKind::kGreedy: return "greedy";
    case StrategyKind::kT2S: return "t2s";
    case StrategyKind::kOptChain: return "optchain";
    case StrategyKind::kImported: return "imported";
  }
  return "?";
}

inline StrategyKind parse_strategy(std::string_view name) {
  for (auto kind : {StrategyKind::kRandom, StrategyKind::kGreedy, StrategyKind::kT2S,
                    StrategyKind::kOptChain, StrategyKind::kImported}) {
    if (name == to_string(kind)) return kind;
  }
  if (name == "omniledger") return StrategyKind::kRandom;
  if (name == "metis") return StrategyKind::kImported;
  throw Error(ErrorKind::kConfigInvalid, "unknown strategy '" + std::string(name) + "'");
}

struct StrategyConfig {
  StrategyKind kind = StrategyKind::kOptChain;
  std::size_t k = 4;
  /// Load cap slack for Greedy and T2S: a shard accepts while its count is
  /// below (1 + epsilon) * floor(n / k).
  double epsilon = 0.1;
  double fitness_weight = 0.01;
  /// Total stream length for the cap. Unset means streaming mode, where the
  /// cap follows the number placed so far.
  std::optional<std::uint64_t> capacity_n;
  double alpha = ScoreState::kDefaultAlpha;
  std::uint64_t hash_salt = 0;
  L2SMode l2s_mode = L2SMode::kConvolved;

  void validate() const {
    if (k == 0) throw Error(ErrorKind::kConfigInvalid, "k must be >= 1");
    if (!(epsilon >= 0.0)) throw Error(ErrorKind::kConfigInvalid, "epsilon must be >= 0");
    if (!std::isfinite(fitness_weight)) throw Error(ErrorKind::kConfigInvalid, "fitness weight");
    if (!(alpha > 0.0 && alpha <= 1.0)) throw Error(ErrorKind::kConfigInvalid, "alpha in (0,1]");
    if (kind == StrategyKind::kOptChain && k > L2SScorer::kMaxShards) {
      throw Error(ErrorKind::kConfigInvalid, "optchain supports at most 64 shards");
    }
  }

  bool needs_scores() const noexcept {
    return kind == StrategyKind::kT2S || kind == StrategyKind::kOptChain;
  }
};

struct PlacementDecision {
  TxId tx = 0;
  ShardId shard = 0;
  /// Distinct shards holding u's parents, ascending.
  std::vector<ShardId> input_shards;
  bool is_cross_shard = false;

  friend bool operator==(const PlacementDecision&, const PlacementDecision&) = default;
};

/// A transaction is cross-shard unless its input shards are exactly {shard}.
/// Coinbase transactions (no inputs) never are.
inline PlacementDecision make_decision(TxId u, ShardId shard, std::vector<ShardId> input_shards) {
  const bool cross =
      !input_shards.empty() && !(input_shards.size() == 1 && input_shards.front() == shard);
  return {u, shard, std::move(input_shards), cross};
}

/// splitmix64 finalizer; stable across platforms and runs.
inline std::uint64_t stable_hash(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline PlacementDecision place_random(TxId u, std::vector<ShardId> input_shards, std::size_t k,
                                      std::uint64_t salt = 0) {
  const auto shard = static_cast<ShardId>(stable_hash(u ^ stable_hash(salt)) % k);
  return make_decision(u, shard, std::move(input_shards));
}

/// Largest per-shard count that still accepts a transaction (exclusive).
inline double shard_cap(const StrategyConfig& cfg, std::uint64_t placed) {
  const double k = static_cast<double>(cfg.k);
  if (cfg.capacity_n) return (1.0 + cfg.epsilon) * std::floor(static_cast<double>(*cfg.capacity_n) / k);
  return (1.0 + cfg.epsilon) * std::ceil(static_cast<double>(placed + 1) / k);
}

inline ShardId least_loaded(std::span<const std::uint64_t> counts) {
  return static_cast<ShardId>(std::min_element(counts.begin(), counts.end()) - counts.begin());
}

struct CappedChoice {
  ShardId shard = 0;
  bool all_full = false;
};

/// Greedy: among shards under the cap, minimize the number of parents not
/// already in the shard. `parent_shards` holds one entry per distinct parent.
inline CappedChoice greedy_choice(std::span<const ShardId> parent_shards,
                                  std::span<const std::uint64_t> counts, double cap) {
  std::optional<ShardId> best;
  std::size_t best_cost = std::numeric_limits<std::size_t>::max();
  for (ShardId j = 0; j < counts.size(); ++j) {
    if (static_cast<double>(counts[j]) >= cap) continue;
    const auto cost = static_cast<std::size_t>(
        std::count_if(parent_shards.begin(), parent_shards.end(), [j](ShardId s) { return s != j; }));
    if (cost < best_cost) {
      best_cost = cost;
      best = j;
    }
  }
  if (!best) return {least_loaded(counts), true};
  return {*best, false};
}

/// T2S-based: argmax of the normalized score among shards under the cap. A
/// transaction with no positive score among them goes to the least-loaded
/// open shard.
inline CappedChoice t2s_choice(std::span<const double> score, std::span<const std::uint64_t> counts,
                               double cap) {
  std::optional<ShardId> best;
  std::optional<ShardId> emptiest;
  for (ShardId j = 0; j < counts.size(); ++j) {
    if (static_cast<double>(counts[j]) >= cap) continue;
    if (!best || score[j] > score[*best]) best = j;
    if (!emptiest || counts[j] < counts[*emptiest]) emptiest = j;
  }
  if (!best) return {least_loaded(counts), true};
  if (!(score[*best] > 0.0)) return {*emptiest, false};
  return {*best, false};
}

/// Temporal fitness: argmax_j score[j] - weight * latency(j), lowest index on
/// ties. No load cap.
template <typename LatencyFn>
ShardId optchain_choice(std::span<const double> score, LatencyFn&& latency, double weight) {
  ShardId best = 0;
  double best_fitness = -std::numeric_limits<double>::infinity();
  for (ShardId j = 0; j < score.size(); ++j) {
    const double fitness = score[j] - weight * latency(j);
    if (fitness > best_fitness) {
      best_fitness = fitness;
      best = j;
    }
  }
  return best;
}

struct CrossTxReport {
  std::uint64_t total = 0;
  std::uint64_t cross_count = 0;
  double fraction = 0.0;
  std::vector<std::uint64_t> per_shard;
};

inline CrossTxReport cross_tx_report(std::span<const PlacementDecision> decisions, std::size_t k) {
  CrossTxReport r;
  r.per_shard.assign(k, 0);
  for (const auto& d : decisions) {
    ++r.total;
    if (d.is_cross_shard) ++r.cross_count;
    if (d.shard >= k) throw Error(ErrorKind::kBadShardIndex, "decision shard out of range");
    ++r.per_shard[d.shard];
  }
  r.fraction = r.total == 0 ? 0.0 : static_cast<double>(r.cross_count) / static_cast<double>(r.total);
  return r;
}

/// Metis-style partition: line r holds the shard of tx r.
inline std::vector<ShardId> read_partition(std::istream& is, std::optional<std::size_t> k = {}) {
  std::vector<ShardId> parts;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::size_t pos = 0;
    unsigned long value = 0;
    try {
      value = std::stoul(line, &pos);
    } catch (const std::exception&) {
      pos = 0;
    }
    if (pos == 0 || line.find_first_not_of(" \t", pos) != std::string::npos || line[0] == '-') {
      throw Error(ErrorKind::kParseError, "partition line " + std::to_string(lineno) + ": '" + line + "'");
    }
    if (k && value >= *k) {
      throw Error(ErrorKind::kBadShardIndex,
                  "partition line " + std::to_string(lineno) + " names shard " + std::to_string(value));
    }
    parts.push_back(static_cast<ShardId>(value));
  }
  return parts;
}

inline PlacementDecision place_imported(TxId u, std::span<const ShardId> partition,
                                        std::vector<ShardId> input_shards) {
  if (u >= partition.size()) {
    throw Error(ErrorKind::kMissingAssignment, "partition has no entry for tx " + std::to_string(u));
  }
  return make_decision(u, partition[u], std::move(input_shards));
}

inline void write_decision_log_header(std::ostream& os) { os << "tx_id,shard,is_cross,input_shards\n"; }

inline void write_decision_log_row(std::ostream& os, const PlacementDecision& d) {
  os << d.tx << ',' << d.shard << ',' << (d.is_cross_shard ? 1 : 0) << ',';
  for (std::size_t i = 0; i < d.input_shards.size(); ++i) {
    if (i) os << ';';
    os << d.input_shards[i];
  }
  os << '\n';
}

/// Per-candidate expected latency for one transaction: given the bitmask of
/// its input shards and a candidate output shard, returns seconds.
using LatencyFn = std::function<double(std::uint64_t input_mask, ShardId candidate)>;

/// Streams transactions through one strategy, owning the graph, the score
/// state (when the strategy needs it) and the shard assignment.
class Placer {
 public:
  explicit Placer(StrategyConfig cfg, std::vector<ShardId> partition = {})
      : cfg_(cfg), partition_(std::move(partition)), counts_(cfg.k, 0) {
    cfg_.validate();
    if (cfg_.needs_scores()) scores_.emplace(cfg_.k, cfg_.alpha);
    if (cfg_.kind == StrategyKind::kOptChain) {
      scorer_.emplace(RateModel(cfg_.k), cfg_.l2s_mode);
    }
  }

  const StrategyConfig& config() const noexcept { return cfg_; }
  const TanGraph& graph() const noexcept { return graph_; }
  const std::vector<std::uint64_t>& shard_counts() const noexcept { return counts_; }
  std::span<const ShardId> assignment() const noexcept { return assignment_; }
  std::uint64_t all_full_events() const noexcept { return all_full_events_; }
  const ScoreState* scores() const noexcept { return scores_ ? &*scores_ : nullptr; }

  void reserve(std::size_t n) {
    graph_.reserve(n);
    assignment_.reserve(n);
  }

  /// Refreshes the rate snapshot used by OptChain.
  void set_rates(RateModel model) {
    if (scorer_) scorer_->set_rates(std::move(model));
  }

  /// Replaces the L2S term with an arbitrary latency function.
  void set_latency_fn(LatencyFn fn) { latency_override_ = std::move(fn); }

  PlacementDecision place(TxRecord record) { return place_impl(std::move(record), std::nullopt); }

  /// Places with a fixed shard (warm start from an imported partition).
  PlacementDecision assign(TxRecord record, ShardId shard) {
    if (shard >= cfg_.k) throw Error(ErrorKind::kBadShardIndex, "shard out of range");
    return place_impl(std::move(record), shard);
  }

  ShardId shard_of(TxId u) const {
    if (u >= assignment_.size()) throw Error(ErrorKind::kMissingAssignment, "tx not placed");
    return assignment_[u];
  }

 private:
  PlacementDecision place_impl(TxRecord record, std::optional<ShardId> forced) {
    const TxId u = graph_.add_tx(std::move(record));
    const auto& rec = graph_.record(u);

    std::vector<ShardId> parent_shards;
    parent_shards.reserve(rec.inputs.size());
    for (TxId v : rec.inputs) parent_shards.push_back(assignment_[v]);
    std::vector<ShardId> input_shards = parent_shards;
    std::sort(input_shards.begin(), input_shards.end());
    input_shards.erase(std::unique(input_shards.begin(), input_shards.end()), input_shards.end());

    T2SVector score;
    if (scores_) score = scores_->compute_score(u, graph_);

    ShardId shard = 0;
    if (forced) {
      shard = *forced;
    } else {
      switch (cfg_.kind) {
        case StrategyKind::kRandom:
          shard = place_random(u, {}, cfg_.k, cfg_.hash_salt).shard;
          break;
        case StrategyKind::kGreedy: {
          auto c = greedy_choice(parent_shards, counts_, shard_cap(cfg_, assignment_.size()));
          all_full_events_ += c.all_full;
          shard = c.shard;
          break;
        }
        case StrategyKind::kT2S: {
          auto c = t2s_choice(score, counts_, shard_cap(cfg_, assignment_.size()));
          all_full_events_ += c.all_full;
          shard = c.shard;
          break;
        }
        case StrategyKind::kOptChain: {
          std::uint64_t mask = 0;
          for (ShardId s : input_shards) mask |= std::uint64_t{1} << s;
          auto latency = [&](ShardId j) {
            if (latency_override_) return latency_override_(mask, j);
            return scorer_->expected_latency(mask | (std::uint64_t{1} << j), j);
          };
          shard = optchain_choice(score, latency, cfg_.fitness_weight);
          break;
        }
        case StrategyKind::kImported:
          shard = place_imported(u, partition_, {}).shard;
          if (shard >= cfg_.k) throw Error(ErrorKind::kBadShardIndex, "partition shard out of range");
          break;
      }
    }

    if (scores_) scores_->commit_placement(u, shard);
    assignment_.push_back(shard);
    ++counts_[shard];
    return make_decision(u, shard, std::move(input_shards));
  }

  StrategyConfig cfg_;
  std::vector<ShardId> partition_;
  TanGraph graph_;
  std::optional<ScoreState> scores_;
  std::optional<L2SScorer> scorer_;
  LatencyFn latency_override_;
  std::vector<ShardId> assignment_;
  std::vector<std::uint64_t> counts_;
  std::uint64_t all_full_events_ = 0;
};

}  // namespace optchain
