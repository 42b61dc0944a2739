#pragma once

// Stream files, external dump conversion and synthetic stream generation.
//
// Canonical stream format (ASCII, '\n' line endings):
//
//     TANv1 <n>
//     <output_count>|<p1>,<p2>,...
//
// Line i after the header is tx i. Parents are earlier tx ids. A parent may
// repeat when several of its outputs are spent; the canonical form lists each
// parent once, ascending. A coinbase line is "<output_count>|".

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <istream>
#include <limits>
#include <optional>
#include <ostream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "optchain/error.hpp"
#include "optchain/tan.hpp"

namespace optchain {

namespace detail {

inline std::optional<std::uint64_t> parse_uint(std::string_view s) {
  if (s.empty()) return std::nullopt;
  std::uint64_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

inline std::string_view trim_cr(std::string_view s) {
  if (!s.empty() && s.back() == '\r') s.remove_suffix(1);
  return s;
}

}  // namespace detail

/// Sequential reader over a canonical stream. Validates the header, every
/// line's syntax and that parents only reference earlier lines.
class StreamReader {
 public:
  explicit StreamReader(std::istream& is) : is_(is) {
    std::string line;
    if (!std::getline(is_, line)) throw Error(ErrorKind::kBadHeader, "empty stream file");
    std::string_view h = detail::trim_cr(line);
    constexpr std::string_view kMagic = "TANv1 ";
    if (h.substr(0, kMagic.size()) != kMagic) {
      throw Error(ErrorKind::kBadHeader, "expected 'TANv1 <n>', got '" + line + "'");
    }
    auto n = detail::parse_uint(h.substr(kMagic.size()));
    if (!n || *n > std::numeric_limits<TxId>::max()) {
      throw Error(ErrorKind::kBadHeader, "bad transaction count in '" + line + "'");
    }
    expected_ = *n;
  }

  std::uint64_t expected_count() const noexcept { return expected_; }

  std::optional<TxRecord> next() {
    std::string line;
    if (!std::getline(is_, line)) {
      if (read_ != expected_) {
        throw Error(ErrorKind::kParseError, "stream ends after " + std::to_string(read_) +
                                                " records, header announced " +
                                                std::to_string(expected_));
      }
      return std::nullopt;
    }
    const std::size_t lineno = read_ + 2;
    std::string_view s = detail::trim_cr(line);
    if (read_ >= expected_) {
      if (s.empty() && is_.peek() == std::char_traits<char>::eof()) return std::nullopt;
      throw Error(ErrorKind::kParseError, "line " + std::to_string(lineno) + ": more records than header");
    }
    const auto bar = s.find('|');
    if (bar == std::string_view::npos) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(lineno) + ": missing '|'");
    }
    auto outputs = detail::parse_uint(s.substr(0, bar));
    if (!outputs || *outputs > std::numeric_limits<std::uint32_t>::max()) {
      throw Error(ErrorKind::kParseError, "line " + std::to_string(lineno) + ": bad output count");
    }
    const auto id = static_cast<TxId>(read_);
    std::vector<TxId> parents;
    std::string_view rest = s.substr(bar + 1);
    while (!rest.empty()) {
      const auto comma = rest.find(',');
      auto tok = rest.substr(0, comma);
      auto p = detail::parse_uint(tok);
      if (!p) {
        throw Error(ErrorKind::kParseError,
                    "line " + std::to_string(lineno) + ": bad parent '" + std::string(tok) + "'");
      }
      if (*p >= id) {
        throw Error(ErrorKind::kForwardReference, "line " + std::to_string(lineno) + ": tx " +
                                                      std::to_string(id) + " references tx " +
                                                      std::to_string(*p));
      }
      parents.push_back(static_cast<TxId>(*p));
      if (comma == std::string_view::npos) break;
      rest.remove_prefix(comma + 1);
      if (rest.empty()) {
        throw Error(ErrorKind::kParseError, "line " + std::to_string(lineno) + ": trailing ','");
      }
    }
    ++read_;
    return TxRecord::from_raw(id, std::move(parents), static_cast<std::uint32_t>(*outputs));
  }

 private:
  std::istream& is_;
  std::uint64_t expected_ = 0;
  std::uint64_t read_ = 0;
};

inline std::vector<TxRecord> parse_stream(std::istream& is) {
  StreamReader reader(is);
  std::vector<TxRecord> out;
  out.reserve(reader.expected_count());
  while (auto r = reader.next()) out.push_back(std::move(*r));
  return out;
}

inline std::vector<TxRecord> read_stream_file(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open stream file '" + path + "'");
  return parse_stream(is);
}

inline void write_stream(std::ostream& os, std::span<const TxRecord> records) {
  os << "TANv1 " << records.size() << '\n';
  for (const auto& r : records) {
    os << r.output_count << '|';
    for (std::size_t i = 0; i < r.inputs.size(); ++i) {
      if (i) os << ',';
      os << r.inputs[i];
    }
    os << '\n';
  }
  if (!os) throw Error(ErrorKind::kIo, "failed writing stream");
}

inline void write_stream_file(const std::string& path, std::span<const TxRecord> records) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot create '" + path + "'");
  write_stream(os, records);
}

struct ConvertStats {
  std::uint64_t transactions = 0;
  std::uint64_t edges = 0;
  /// Input references whose hash never appeared earlier in the dump.
  std::uint64_t dangling_inputs = 0;
};

/// Converts a hash-keyed CSV dump (`tx_hash,input_hashes,output_count`, input
/// hashes joined by ';', optional header row) into a canonical stream plus a
/// `hash,id` sidecar. Inputs that cannot be resolved to an earlier row are
/// dropped and counted; the transaction itself is kept.
inline ConvertStats convert_external(std::istream& csv, std::ostream& stream_out,
                                     std::ostream& sidecar_out) {
  std::unordered_map<std::string, TxId> ids;
  std::vector<TxRecord> records;
  ConvertStats stats;
  std::string line;
  std::size_t lineno = 0;
  sidecar_out << "hash,id\n";
  while (std::getline(csv, line)) {
    ++lineno;
    std::string_view s = detail::trim_cr(line);
    if (s.empty()) continue;
    const auto c1 = s.find(',');
    const auto c2 = c1 == std::string_view::npos ? c1 : s.find(',', c1 + 1);
    if (c2 == std::string_view::npos) {
      throw Error(ErrorKind::kParseError, "dump line " + std::to_string(lineno) + ": expected 3 fields");
    }
    std::string hash(s.substr(0, c1));
    std::string_view inputs = s.substr(c1 + 1, c2 - c1 - 1);
    std::string_view outputs = s.substr(c2 + 1);
    if (lineno == 1 && hash == "tx_hash") continue;
    auto out_count = detail::parse_uint(outputs);
    if (hash.empty() || !out_count) {
      throw Error(ErrorKind::kParseError, "dump line " + std::to_string(lineno) + ": bad fields");
    }
    if (ids.contains(hash)) {
      throw Error(ErrorKind::kDuplicateHash, "dump line " + std::to_string(lineno) + ": " + hash);
    }
    const auto id = static_cast<TxId>(records.size());
    std::vector<TxId> parents;
    while (!inputs.empty()) {
      const auto semi = inputs.find(';');
      std::string tok(inputs.substr(0, semi));
      if (!tok.empty()) {
        if (auto it = ids.find(tok); it != ids.end()) {
          parents.push_back(it->second);
        } else {
          ++stats.dangling_inputs;
        }
      }
      if (semi == std::string_view::npos) break;
      inputs.remove_prefix(semi + 1);
    }
    ids.emplace(hash, id);
    sidecar_out << hash << ',' << id << '\n';
    records.push_back(TxRecord::from_raw(id, std::move(parents), static_cast<std::uint32_t>(*out_count)));
    stats.edges += records.back().inputs.size();
  }
  stats.transactions = records.size();
  write_stream(stream_out, records);
  if (!sidecar_out) throw Error(ErrorKind::kIo, "failed writing sidecar");
  return stats;
}

/// Portable sampling on top of mt19937_64 (whose output sequence is fixed by
/// the standard, unlike the std distributions).
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : engine_(seed) {}

  std::uint64_t next() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }
  /// Uniform in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return static_cast<std::uint64_t>((static_cast<unsigned __int128>(engine_()) * n) >> 64);
  }
  double exponential(double rate) { return -std::log1p(-uniform()) / rate; }

 private:
  std::mt19937_64 engine_;
};

struct SynthConfig {
  std::uint64_t n = 100000;
  /// Fraction of transactions without inputs (beyond the forced first one).
  double coinbase_fraction = 0.02;
  double target_mean_in_degree = 2.3;
  /// Truncated power law P(d) ~ d^-exponent on [1, max_in_degree]. Unset:
  /// solved so that the expected overall mean hits the target.
  std::optional<double> powerlaw_exponent;
  std::uint32_t max_in_degree = 64;
  /// Probability that a parent is drawn from the recent past (geometric
  /// distance with mean `locality_scale`) rather than by preferential
  /// attachment on out-degree + 1.
  double recency_bias = 0.5;
  double locality_scale = 40.0;
  std::uint32_t max_outputs = 4;
  std::uint64_t seed = 1;

  void validate() const {
    if (n == 0) throw Error(ErrorKind::kConfigInvalid, "synthetic stream needs n >= 1");
    if (!(coinbase_fraction >= 0.0 && coinbase_fraction < 1.0)) {
      throw Error(ErrorKind::kConfigInvalid, "coinbase fraction must lie in [0, 1)");
    }
    if (max_in_degree == 0 || max_outputs == 0) throw Error(ErrorKind::kConfigInvalid, "degree caps");
    if (!(recency_bias >= 0.0 && recency_bias <= 1.0) || !(locality_scale > 0.0)) {
      throw Error(ErrorKind::kConfigInvalid, "locality parameters");
    }
    const double needed = target_mean_in_degree / (1.0 - coinbase_fraction);
    if (!powerlaw_exponent && !(needed >= 1.0 && needed < (1.0 + max_in_degree) / 2.0)) {
      throw Error(ErrorKind::kConfigInvalid, "target mean in-degree unreachable with these caps");
    }
  }
};

namespace detail {

inline double truncated_powerlaw_mean(double exponent, std::uint32_t cap) {
  double num = 0.0, den = 0.0;
  for (std::uint32_t d = 1; d <= cap; ++d) {
    const double w = std::pow(static_cast<double>(d), -exponent);
    num += d * w;
    den += w;
  }
  return num / den;
}

}  // namespace detail

/// Exponent giving the requested mean of the truncated power law on [1, cap].
inline double solve_powerlaw_exponent(double mean, std::uint32_t cap) {
  double lo = 0.0, hi = 20.0;
  for (int i = 0; i < 200; ++i) {
    const double mid = 0.5 * (lo + hi);
    (detail::truncated_powerlaw_mean(mid, cap) > mean ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

/// Power-law DAG with temporal locality. Deterministic for a fixed config.
inline std::vector<TxRecord> generate_synthetic(const SynthConfig& cfg) {
  cfg.validate();
  const double exponent = cfg.powerlaw_exponent.value_or(solve_powerlaw_exponent(
      cfg.target_mean_in_degree / (1.0 - cfg.coinbase_fraction), cfg.max_in_degree));
  std::vector<double> cdf(cfg.max_in_degree);
  double acc = 0.0;
  for (std::uint32_t d = 1; d <= cfg.max_in_degree; ++d) {
    acc += std::pow(static_cast<double>(d), -exponent);
    cdf[d - 1] = acc;
  }
  for (auto& c : cdf) c /= acc;

  Rng rng(cfg.seed);
  std::vector<TxRecord> out;
  out.reserve(cfg.n);
  // Each node appears once, plus once per child it gains: uniform picks from
  // here are proportional to out-degree + 1.
  std::vector<TxId> endpoints;
  endpoints.reserve(cfg.n * 4);
  std::vector<TxId> parents;
  for (std::uint64_t i = 0; i < cfg.n; ++i) {
    const auto u = static_cast<TxId>(i);
    const auto outputs = static_cast<std::uint32_t>(1 + rng.below(cfg.max_outputs));
    parents.clear();
    if (u > 0 && rng.uniform() >= cfg.coinbase_fraction) {
      const double x = rng.uniform();
      auto degree = static_cast<std::uint32_t>(std::lower_bound(cdf.begin(), cdf.end(), x) - cdf.begin()) + 1;
      degree = std::min<std::uint32_t>(degree, u);
      const double p_stop = 1.0 / cfg.locality_scale;
      for (std::uint32_t attempt = 0; parents.size() < degree && attempt < 8 * degree; ++attempt) {
        TxId v;
        if (rng.uniform() < cfg.recency_bias) {
          // Geometric distance >= 1 with mean locality_scale.
          const auto back = 1 + static_cast<std::uint64_t>(std::floor(std::log1p(-rng.uniform()) / std::log1p(-p_stop)));
          v = back > u ? 0 : static_cast<TxId>(u - back);
        } else {
          v = endpoints[rng.below(endpoints.size())];
        }
        if (std::find(parents.begin(), parents.end(), v) == parents.end()) parents.push_back(v);
      }
      for (TxId v : parents) endpoints.push_back(v);
    }
    endpoints.push_back(u);
    out.push_back(TxRecord::from_raw(u, parents, outputs));
  }
  return out;
}

/// Stream where every transaction after the first `seeds` spends exactly two
/// distinct, uniformly chosen earlier transactions.
inline std::vector<TxRecord> generate_two_input_stream(std::uint64_t n, std::uint64_t seed,
                                                       std::uint32_t seeds = 2) {
  if (seeds < 2) throw Error(ErrorKind::kConfigInvalid, "two-input streams need >= 2 seed txs");
  Rng rng(seed);
  std::vector<TxRecord> out;
  out.reserve(n);
  for (std::uint64_t i = 0; i < n; ++i) {
    const auto u = static_cast<TxId>(i);
    if (i < seeds) {
      out.push_back(TxRecord::from_raw(u, {}, 2));
      continue;
    }
    const auto a = static_cast<TxId>(rng.below(i));
    auto b = static_cast<TxId>(rng.below(i - 1));
    if (b >= a) ++b;
    out.push_back(TxRecord::from_raw(u, {a, b}, 1));
  }
  return out;
}

}  // namespace optchain
