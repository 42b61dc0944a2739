#pragma once

// Transactions-as-Nodes graph: one node per transaction, an edge from a
// transaction to every earlier transaction whose outputs it spends. Nodes are
// appended in arrival order, which is also a topological order.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "optchain/error.hpp"

namespace optchain {

/// Dense transaction index, assigned in arrival order starting at 0.
using TxId = std::uint32_t;

struct TxRecord {
  TxId id = 0;
  /// Distinct parent transactions, ascending.
  std::vector<TxId> inputs;
  /// UTXO-level input count before parent dedup.
  std::uint32_t input_count_raw = 0;
  std::uint32_t output_count = 0;

  bool is_coinbase() const noexcept { return inputs.empty(); }

  /// Builds a record from UTXO-level parent references (may repeat a parent).
  static TxRecord from_raw(TxId id, std::vector<TxId> raw_inputs, std::uint32_t output_count) {
    TxRecord r;
    r.id = id;
    r.input_count_raw = static_cast<std::uint32_t>(raw_inputs.size());
    r.output_count = output_count;
    std::sort(raw_inputs.begin(), raw_inputs.end());
    raw_inputs.erase(std::unique(raw_inputs.begin(), raw_inputs.end()), raw_inputs.end());
    r.inputs = std::move(raw_inputs);
    return r;
  }

  friend bool operator==(const TxRecord&, const TxRecord&) = default;
};

struct DegreeHistogram {
  std::map<std::size_t, std::size_t> in;
  std::map<std::size_t, std::size_t> out;
};

struct WindowMean {
  std::size_t window = 0;
  double mean_in_degree = 0.0;

  friend bool operator==(const WindowMean&, const WindowMean&) = default;
};

class TanGraph {
 public:
  TanGraph() = default;

  void reserve(std::size_t n) {
    nodes_.reserve(n);
    out_degree_.reserve(n);
  }

  /// Appends a record. Its id must be the next dense index and every parent
  /// must already be present. Parent lists are normalized (sorted, deduped).
  TxId add_tx(TxRecord record) {
    const auto next = static_cast<TxId>(nodes_.size());
    if (record.id < next) {
      throw Error(ErrorKind::kDuplicateId, "tx " + std::to_string(record.id) + " already inserted");
    }
    if (record.id > next) {
      throw Error(ErrorKind::kUnknownParent, "tx " + std::to_string(record.id) +
                                                 " arrived before tx " + std::to_string(next));
    }
    if (!std::is_sorted(record.inputs.begin(), record.inputs.end()) ||
        std::adjacent_find(record.inputs.begin(), record.inputs.end()) != record.inputs.end()) {
      std::sort(record.inputs.begin(), record.inputs.end());
      record.inputs.erase(std::unique(record.inputs.begin(), record.inputs.end()),
                          record.inputs.end());
    }
    for (TxId parent : record.inputs) {
      if (parent >= next) {
        throw Error(ErrorKind::kUnknownParent, "tx " + std::to_string(record.id) +
                                                   " references unknown parent " +
                                                   std::to_string(parent));
      }
    }
    for (TxId parent : record.inputs) ++out_degree_[parent];
    edges_ += record.inputs.size();
    nodes_.push_back(std::move(record));
    out_degree_.push_back(0);
    return next;
  }

  std::size_t size() const noexcept { return nodes_.size(); }
  bool empty() const noexcept { return nodes_.empty(); }
  std::size_t edge_count() const noexcept { return edges_; }

  const TxRecord& record(TxId id) const { return nodes_.at(id); }
  std::span<const TxRecord> records() const noexcept { return nodes_; }

  std::size_t in_degree(TxId id) const { return nodes_.at(id).inputs.size(); }
  std::uint32_t out_degree(TxId id) const { return out_degree_.at(id); }

  DegreeHistogram degree_histogram() const {
    DegreeHistogram h;
    for (std::size_t i = 0; i < nodes_.size(); ++i) {
      ++h.in[nodes_[i].inputs.size()];
      ++h.out[out_degree_[i]];
    }
    return h;
  }

  /// Mean in-degree over consecutive windows of `window` nodes in arrival
  /// order. The last window may be partial and is averaged over its own size.
  std::vector<WindowMean> avg_degree_series(std::size_t window) const {
    if (window == 0) throw Error(ErrorKind::kZeroWindow, "window must be >= 1");
    std::vector<WindowMean> series;
    for (std::size_t begin = 0; begin < nodes_.size(); begin += window) {
      const std::size_t end = std::min(nodes_.size(), begin + window);
      std::size_t edges = 0;
      for (std::size_t i = begin; i < end; ++i) edges += nodes_[i].inputs.size();
      series.push_back({begin / window, static_cast<double>(edges) / static_cast<double>(end - begin)});
    }
    return series;
  }

 private:
  std::vector<TxRecord> nodes_;
  std::vector<std::uint32_t> out_degree_;
  std::size_t edges_ = 0;
};

}  // namespace optchain
