#pragma once

// Transaction-to-Shard score.
//
// Every placed transaction v carries a raw k-vector p'(v). A new transaction
// u gets
//
//     p'(u) = (1 - alpha) * sum_{v in parents(u)} p'(v) / outdeg(v)
//
// and its normalized score is p'(u)[i] / max(|S_i|, 1). Once u is assigned to
// shard s, p'(u)[s] += alpha. Earlier vectors are never revisited, so a query
// costs O(k * |parents|). outdeg(v) is read right after u's edges have been
// attached and is not refreshed when v later gains more children.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "optchain/error.hpp"
#include "optchain/tan.hpp"

namespace optchain {

using ShardId = std::uint32_t;

/// Normalized per-shard score of one transaction.
using T2SVector = std::vector<double>;

class ScoreState {
 public:
  static constexpr double kDefaultAlpha = 0.5;

  explicit ScoreState(std::size_t k, double alpha = kDefaultAlpha) : k_(k), alpha_(alpha) {
    if (k == 0) throw Error(ErrorKind::kConfigInvalid, "shard count must be >= 1");
    if (!(alpha > 0.0 && alpha <= 1.0)) {
      throw Error(ErrorKind::kConfigInvalid, "alpha must lie in (0, 1]");
    }
    shard_sizes_.assign(k, 0);
  }

  std::size_t k() const noexcept { return k_; }
  double alpha() const noexcept { return alpha_; }
  std::size_t scored() const noexcept { return state_.size(); }
  const std::vector<std::uint64_t>& shard_sizes() const noexcept { return shard_sizes_; }

  bool is_placed(TxId u) const { return u < state_.size() && state_[u] == kPlaced; }

  std::span<const double> raw(TxId u) const {
    if (u >= state_.size()) {
      throw Error(ErrorKind::kMissingParentScore, "no score stored for tx " + std::to_string(u));
    }
    return {raw_.data() + static_cast<std::size_t>(u) * k_, k_};
  }

  /// Computes and stores p'(u) and returns the normalized score. `u` must be
  /// the most recently inserted node of `graph`. Calling again before the
  /// commit recomputes the same value.
  T2SVector compute_score(TxId u, const TanGraph& graph) {
    if (graph.size() == 0 || u + 1 != graph.size()) {
      throw Error(ErrorKind::kStaleQuery,
                  "tx " + std::to_string(u) + " is not the newest node of the graph");
    }
    if (u < state_.size() && state_[u] == kPlaced) {
      throw Error(ErrorKind::kDoubleCommit, "tx " + std::to_string(u) + " already placed");
    }
    if (u > state_.size()) {
      throw Error(ErrorKind::kMissingParentScore,
                  "tx " + std::to_string(state_.size()) + " was never scored");
    }
    if (u == state_.size()) {
      state_.push_back(kScored);
      raw_.resize(raw_.size() + k_, 0.0);
    }
    double* out = raw_.data() + static_cast<std::size_t>(u) * k_;
    std::fill(out, out + k_, 0.0);
    const auto& parents = graph.record(u).inputs;
    for (TxId v : parents) {
      if (v >= u) {
        throw Error(ErrorKind::kMissingParentScore, "parent " + std::to_string(v) + " of tx " +
                                                        std::to_string(u) + " has no score");
      }
      const std::uint32_t deg = graph.out_degree(v);
      if (deg == 0) {
        throw Error(ErrorKind::kZeroOutDegree, "parent " + std::to_string(v) + " of tx " +
                                                   std::to_string(u) + " has out-degree 0");
      }
      const double share = (1.0 - alpha_) / static_cast<double>(deg);
      const double* pv = raw_.data() + static_cast<std::size_t>(v) * k_;
      for (std::size_t i = 0; i < k_; ++i) out[i] += share * pv[i];
    }
    return normalized(u);
  }

  /// Current normalized score of a stored vector.
  T2SVector normalized(TxId u) const {
    auto r = raw(u);
    T2SVector score(k_);
    for (std::size_t i = 0; i < k_; ++i) {
      score[i] = r[i] / static_cast<double>(std::max<std::uint64_t>(shard_sizes_[i], 1));
    }
    return score;
  }

  void commit_placement(TxId u, ShardId shard) {
    if (shard >= k_) {
      throw Error(ErrorKind::kBadShardIndex,
                  "shard " + std::to_string(shard) + " out of range for k=" + std::to_string(k_));
    }
    if (u >= state_.size()) {
      throw Error(ErrorKind::kMissingParentScore,
                  "tx " + std::to_string(u) + " must be scored before it is placed");
    }
    if (state_[u] == kPlaced) {
      throw Error(ErrorKind::kDoubleCommit, "tx " + std::to_string(u) + " already placed");
    }
    state_[u] = kPlaced;
    raw_[static_cast<std::size_t>(u) * k_ + shard] += alpha_;
    ++shard_sizes_[shard];
  }

  // Checkpoint layout (all integers and doubles little-endian):
  //   magic "T2SC", u32 version = 1, u32 k, f64 alpha, u64 n,
  //   k x u64 shard sizes, n x u8 state (1 = scored, 2 = placed),
  //   n*k x f64 raw scores (row-major by tx).
  void save(std::ostream& os) const {
    os.write("T2SC", 4);
    put_u32(os, kCheckpointVersion);
    put_u32(os, static_cast<std::uint32_t>(k_));
    put_f64(os, alpha_);
    put_u64(os, state_.size());
    for (auto s : shard_sizes_) put_u64(os, s);
    os.write(reinterpret_cast<const char*>(state_.data()), static_cast<std::streamsize>(state_.size()));
    for (double d : raw_) put_f64(os, d);
    if (!os) throw Error(ErrorKind::kIo, "failed writing score checkpoint");
  }

  static ScoreState load(std::istream& is) {
    char magic[4];
    is.read(magic, 4);
    if (!is || std::memcmp(magic, "T2SC", 4) != 0) {
      throw Error(ErrorKind::kBadCheckpoint, "missing T2SC magic");
    }
    if (get_u32(is) != kCheckpointVersion) {
      throw Error(ErrorKind::kBadCheckpoint, "unsupported checkpoint version");
    }
    const std::uint32_t k = get_u32(is);
    const double alpha = get_f64(is);
    const std::uint64_t n = get_u64(is);
    if (!is || k == 0 || k > 4096) throw Error(ErrorKind::kBadCheckpoint, "corrupt header");
    ScoreState s(k, alpha);
    for (auto& size : s.shard_sizes_) size = get_u64(is);
    s.state_.resize(n);
    is.read(reinterpret_cast<char*>(s.state_.data()), static_cast<std::streamsize>(n));
    s.raw_.resize(n * k);
    for (auto& d : s.raw_) d = get_f64(is);
    if (!is) throw Error(ErrorKind::kBadCheckpoint, "truncated checkpoint");
    for (auto st : s.state_) {
      if (st != kScored && st != kPlaced) throw Error(ErrorKind::kBadCheckpoint, "bad node state");
    }
    return s;
  }

 private:
  static constexpr std::uint8_t kScored = 1;
  static constexpr std::uint8_t kPlaced = 2;
  static constexpr std::uint32_t kCheckpointVersion = 1;

  static void put_u64(std::ostream& os, std::uint64_t v) {
    char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 8);
  }
  static void put_u32(std::ostream& os, std::uint32_t v) {
    char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
    os.write(b, 4);
  }
  static void put_f64(std::ostream& os, double d) { put_u64(os, std::bit_cast<std::uint64_t>(d)); }
  static std::uint64_t get_u64(std::istream& is) {
    unsigned char b[8] = {};
    is.read(reinterpret_cast<char*>(b), 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
  }
  static std::uint32_t get_u32(std::istream& is) {
    unsigned char b[4] = {};
    is.read(reinterpret_cast<char*>(b), 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
  }
  static double get_f64(std::istream& is) { return std::bit_cast<double>(get_u64(is)); }

  std::size_t k_;
  double alpha_;
  std::vector<std::uint8_t> state_;
  std::vector<double> raw_;
  std::vector<std::uint64_t> shard_sizes_;
};

/// Recomputes every raw score from scratch given the final graph and the
/// shard of every transaction. Out-degree snapshots are reconstructed from
/// per-parent child lists (children with id <= u), so this path shares no
/// bookkeeping with ScoreState. Returns n*k values, row-major by tx.
inline std::vector<double> batch_oracle(const TanGraph& graph, std::span<const ShardId> placements,
                                        std::size_t k, double alpha = ScoreState::kDefaultAlpha) {
  const std::size_t n = graph.size();
  if (placements.size() < n) {
    throw Error(ErrorKind::kMissingAssignment, "placements do not cover the graph");
  }
  std::vector<std::vector<TxId>> children(n);
  for (const auto& rec : graph.records()) {
    for (TxId v : rec.inputs) children[v].push_back(rec.id);
  }
  std::vector<double> raw(n * k, 0.0);
  for (std::size_t u = 0; u < n; ++u) {
    double* out = raw.data() + u * k;
    for (TxId v : graph.record(static_cast<TxId>(u)).inputs) {
      const auto& ch = children[v];
      const auto snapshot = static_cast<double>(
          std::upper_bound(ch.begin(), ch.end(), static_cast<TxId>(u)) - ch.begin());
      const double* pv = raw.data() + static_cast<std::size_t>(v) * k;
      for (std::size_t i = 0; i < k; ++i) out[i] += (1.0 - alpha) * pv[i] / snapshot;
    }
    if (placements[u] >= k) throw Error(ErrorKind::kBadShardIndex, "placement out of range");
    out[placements[u]] += alpha;
  }
  return raw;
}

}  // namespace optchain
