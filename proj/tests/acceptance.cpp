// End-to-end acceptance checks. Prints one line per criterion:
//   CRITERION <n> <PASS|FAIL|SKIP> <summary>
// and exits nonzero when any criterion fails.
//
// Set OPTCHAIN_BITCOIN_STREAM to a converted 1M-transaction Bitcoin prefix
// to enable the dataset half of criterion 3.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "optchain/ingest.hpp"
#include "optchain/l2s.hpp"
#include "optchain/placement.hpp"
#include "optchain/simcore.hpp"
#include "optchain/t2s.hpp"

using namespace optchain;

namespace {

enum class Verdict { kPass, kFail, kSkip };

struct Outcome {
  Verdict verdict;
  std::string detail;
};

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// The synthetic streams shared by criteria 1 and 3.
std::vector<std::vector<TxRecord>> power_law_streams() {
  std::vector<std::vector<TxRecord>> out;
  const std::pair<std::uint64_t, std::uint64_t> shapes[] = {{10000, 101}, {50000, 202}, {100000, 303}};
  for (auto [n, seed] : shapes) {
    SynthConfig sc;
    sc.n = n;
    sc.seed = seed;
    out.push_back(generate_synthetic(sc));
  }
  return out;
}

double cross_fraction(std::span<const TxRecord> s, StrategyKind kind, std::size_t k, bool offline_cap) {
  StrategyConfig c;
  c.kind = kind;
  c.k = k;
  if (offline_cap) c.capacity_n = s.size();
  Placer p(c);
  p.reserve(s.size());
  std::vector<PlacementDecision> d;
  d.reserve(s.size());
  for (const auto& r : s) d.push_back(p.place(r));
  return cross_tx_report(d, k).fraction;
}

Outcome criterion1(const std::vector<std::vector<TxRecord>>& streams) {
  double worst = 0.0, slowest = 0.0;
  for (const auto& s : streams) {
    const auto t0 = Clock::now();
    for (std::size_t k : {4u, 16u}) {
      StrategyConfig c;
      c.kind = StrategyKind::kT2S;
      c.k = k;
      c.capacity_n = s.size();
      Placer p(c);
      p.reserve(s.size());
      for (const auto& r : s) p.place(r);
      const auto oracle = batch_oracle(p.graph(), p.assignment(), k, c.alpha);
      for (TxId u = 0; u < s.size(); ++u) {
        const auto raw = p.scores()->raw(u);
        for (std::size_t i = 0; i < k; ++i) worst = std::max(worst, std::abs(raw[i] - oracle[u * k + i]));
      }
    }
    slowest = std::max(slowest, seconds_since(t0));
  }
  const bool ok = worst <= 1e-9 && slowest < 30.0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("%zu streams, k in {4,16}: max |incremental - batch| = %.3g (tol 1e-9), slowest stream %.2f s (< 30 s)",
              streams.size(), worst, slowest)};
}

Outcome criterion2() {
  const auto s = generate_two_input_stream(1'000'000, 2);
  const double f4 = cross_fraction(s, StrategyKind::kRandom, 4, false);
  const double f16 = cross_fraction(s, StrategyKind::kRandom, 16, false);
  const double t4 = 1.0 - 1.0 / 16.0, t16 = 1.0 - 1.0 / 256.0;
  const bool ok = std::abs(f4 - t4) <= 0.005 && std::abs(f16 - t16) <= 0.002;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("k=4: %.3f%% (target %.2f%% +/-0.5), k=16: %.3f%% (target %.2f%% +/-0.2)", 100 * f4, 100 * t4,
              100 * f16, 100 * t16)};
}

std::vector<Outcome> criterion3(const std::vector<std::vector<TxRecord>>& streams) {
  std::vector<Outcome> out;
  bool ok = true;
  std::string detail;
  for (std::size_t i = 0; i < streams.size(); ++i) {
    for (std::size_t k : {4u, 8u, 16u}) {
      const double t = cross_fraction(streams[i], StrategyKind::kT2S, k, true);
      const double g = cross_fraction(streams[i], StrategyKind::kGreedy, k, true);
      const double r = cross_fraction(streams[i], StrategyKind::kRandom, k, true);
      ok = ok && t < g && g < r;
      detail += fmt("%s[n=%zu k=%zu] t2s %.3f < greedy %.3f < random %.3f", detail.empty() ? "" : "; ",
                    streams[i].size(), k, t, g, r);
    }
  }
  out.push_back({ok ? Verdict::kPass : Verdict::kFail, detail});

  const char* path = std::getenv("OPTCHAIN_BITCOIN_STREAM");
  if (!path || !*path) {
    out.push_back({Verdict::kSkip, "Bitcoin 1M-prefix table: OPTCHAIN_BITCOIN_STREAM not set"});
    return out;
  }
  auto btc = read_stream_file(path);
  if (btc.size() > 1'000'000) btc.resize(1'000'000);
  const std::pair<std::size_t, double> table[] = {{4, 9.28}, {8, 12.52}, {16, 15.73}, {32, 18.94}, {64, 21.65}};
  bool tok = true;
  std::string td;
  for (auto [k, want] : table) {
    const double got = 100.0 * cross_fraction(btc, StrategyKind::kT2S, k, true);
    tok = tok && std::abs(got - want) <= 2.0;
    td += fmt("%sk=%zu %.2f%% (ref %.2f%%)", td.empty() ? "" : ", ", k, got, want);
  }
  out.push_back({tok ? Verdict::kPass : Verdict::kFail, "Bitcoin T2S column +/-2 points: " + td});
  return out;
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  std::mt19937_64 eng(77);
  std::uniform_real_distribution<double> rate(0.2, 10.0);
  double worst_mc = 0.0, worst_norm = 0.0, worst_erlang = 0.0, raw_pdf_gap = 0.0;
  const int configs = 12;
  for (int trial = 0; trial < configs; ++trial) {
    RateModel m;
    for (int i = 0; i < 4; ++i) m.push_back({rate(eng), rate(eng)});
    std::vector<ShardId> proofs;
    for (ShardId i = 0; i <= static_cast<ShardId>(trial % 4); ++i) proofs.push_back(i);
    const ShardId out = static_cast<ShardId>((trial * 3) % 4);
    const double e = expected_latency(m, {out, proofs});

    // Monte-Carlo oracle on an unrelated engine and the std distributions.
    std::mt19937_64 mc(5000 + trial);
    auto draw = [&](const ShardRates& r) {
      return std::exponential_distribution<double>(r.lambda_c)(mc) +
             std::exponential_distribution<double>(r.lambda_v)(mc);
    };
    double sum = 0.0;
    const int samples = 1'000'000;
    for (int s = 0; s < samples; ++s) {
      double mx = 0.0;
      for (ShardId i : proofs) mx = std::max(mx, draw(m[i]));
      sum += mx + draw(m[out]);
    }
    worst_mc = std::max(worst_mc, std::abs(e / (sum / samples) - 1.0));

    const double T = detail::horizon(m, proofs, {});
    const double mass = simpson([&](double t) { return all_proofs_pdf(m, proofs, t); }, 0.0, T, 4096);
    worst_norm = std::max(worst_norm, std::abs(mass - 1.0));
    for (ShardId i : proofs) {
      const double one = simpson([&](double t) { return proof_time_pdf(m[i], t); }, 0.0, T, 4096);
      worst_norm = std::max(worst_norm, std::abs(one - 1.0));
    }
  }
  for (double lc : {0.25, 1.0, 4.0, 12.0}) {
    const ShardRates near{lc, lc * (1.0 + 1e-6)};
    for (double t = 0.05; t < 40.0 / lc; t += 0.37 / lc) {
      const double pdf = lc * lc * t * std::exp(-lc * t);
      const double cdf = 1.0 - std::exp(-lc * t) * (1.0 + lc * t);
      // Density compared in units of the mean (f / lambda against lambda * t).
      raw_pdf_gap = std::max(raw_pdf_gap, std::abs(proof_time_pdf(near, t) - pdf));
      worst_erlang = std::max({worst_erlang, std::abs(proof_time_pdf(near, t) - pdf) / lc,
                               std::abs(proof_time_cdf(near, t) - cdf)});
    }
  }
  const double secs = seconds_since(t0);
  const bool ok = worst_mc <= 0.02 && worst_norm <= 1e-4 && worst_erlang <= 1e-6 && secs < 60.0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("%d configs: max MC rel err %.4f (tol 0.02), max |mass-1| %.2g (tol 1e-4), Erlang gap %.2g "
              "(tol 1e-6; raw density gap %.2g), %.1f s (< 60 s)",
              configs, worst_mc, worst_norm, worst_erlang, raw_pdf_gap, secs)};
}

// The configurations shipped in samples/ plus a double-spend run.
struct ShippedConfig {
  std::size_t k;
  double rate;
  StrategyKind kind;
  double double_spend;
};

Outcome criterion5() {
  std::vector<ShippedConfig> configs;
  for (auto kind : {StrategyKind::kRandom, StrategyKind::kGreedy, StrategyKind::kOptChain}) {
    for (std::size_t k : {4u, 8u}) {
      for (double rate : {2000.0, 4000.0}) configs.push_back({k, rate, kind, 0.0});
    }
  }
  configs.push_back({4, 3000.0, StrategyKind::kT2S, 0.01});
  configs.push_back({8, 3000.0, StrategyKind::kOptChain, 0.01});

  SynthConfig sc;
  sc.n = 20000;
  sc.seed = 7;
  const auto base_stream = generate_synthetic(sc);
  std::size_t violations = 0, samples = 0, mismatched_logs = 0;
  for (const auto& cfg : configs) {
    SimConfig c;
    c.k = cfg.k;
    c.tx_rate = cfg.rate;
    c.sample_period = 1.0;
    c.rng_seed = 7;
    c.strategy.kind = cfg.kind;
    c.strategy.k = cfg.k;
    std::vector<TxRecord> stream = base_stream;
    std::vector<std::pair<TxId, TxId>> twins;
    if (cfg.double_spend > 0.0) {
      auto ds = inject_double_spends(base_stream, cfg.double_spend, 7);
      stream = std::move(ds.records);
      twins = std::move(ds.twins);
    }
    std::ostringstream a, b;
    Simulator x(c, stream, twins), y(c, stream, twins);
    x.set_event_log(&a);
    y.set_event_log(&b);
    const auto r = x.run();
    y.run();
    for (const auto& row : r.series) {
      ++samples;
      violations += row.injected != row.committed + row.aborted + row.pending;
    }
    violations += r.injected != r.committed + r.aborted + r.pending;
    mismatched_logs += a.str() != b.str();
  }
  const bool ok = violations == 0 && mismatched_logs == 0 && samples > 0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("%zu configs, %zu sample ticks: %zu conservation violations, %zu non-identical event logs",
              configs.size(), samples, violations, mismatched_logs)};
}

Outcome criterion6() {
  const auto t0 = Clock::now();
  SynthConfig sc;
  sc.n = 100000;
  const auto stream = generate_synthetic(sc);
  SimConfig probe;
  probe.k = 8;
  // Overload relative to the aggregate single-shard-transaction capacity.
  const double rate = 1.5 * static_cast<double>(probe.k) * probe.shard_capacity();
  auto run = [&](StrategyKind kind) {
    SimConfig c = probe;
    c.tx_rate = rate;
    c.sample_period = 1.0;
    c.strategy.kind = kind;
    c.strategy.k = c.k;
    return Simulator(c, stream).run();
  };
  const auto rnd = run(StrategyKind::kRandom);
  const auto grd = run(StrategyKind::kGreedy);
  const auto opt = run(StrategyKind::kOptChain);
  const double thr = opt.throughput / rnd.throughput;
  const double lat = opt.mean_latency / rnd.mean_latency;
  const bool a = thr >= 1.3, b = lat <= 0.5, c = opt.mean_queue_ratio <= grd.mean_queue_ratio;
  const double secs = seconds_since(t0);
  return {a && b && c && secs < 600.0 ? Verdict::kPass : Verdict::kFail,
          fmt("k=8, rate %.0f tx/s: (a) throughput %.0f vs random %.0f = %.3fx (need >= 1.3) %s; "
              "(b) mean latency %.2f s vs random %.2f s = %.3fx (need <= 0.5) %s; "
              "(c) queue ratio %.2f vs greedy %.2f %s; cross-TX optchain %.3f random %.3f; %.1f s",
              rate, opt.throughput, rnd.throughput, thr, a ? "ok" : "MISS", opt.mean_latency, rnd.mean_latency,
              lat, b ? "ok" : "MISS", opt.mean_queue_ratio, grd.mean_queue_ratio, c ? "ok" : "MISS",
              opt.cross_fraction, rnd.cross_fraction, secs)};
}

Outcome criterion7() {
  SynthConfig sc;
  sc.n = 50000;
  SimConfig c;
  c.k = 8;
  c.tx_rate = 0.1 * static_cast<double>(c.k) * c.shard_capacity();
  c.strategy.kind = StrategyKind::kRandom;
  c.strategy.k = c.k;
  const auto r = Simulator(c, generate_synthetic(sc)).run();
  const double gap = r.mean_latency_cross - r.mean_latency_same;
  const bool ok = r.committed_cross > 0 && r.committed_same > 0 && gap >= 2.0 * c.link_latency;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("rate %.0f tx/s: cross %.3f s, same-shard %.3f s, gap %.3f s (need >= %.3f s)", c.tx_rate,
              r.mean_latency_cross, r.mean_latency_same, gap, 2.0 * c.link_latency)};
}

Outcome criterion8() {
  SynthConfig sc;
  sc.n = 10000;
  sc.seed = 8;
  const auto ds = inject_double_spends(generate_synthetic(sc), 0.01, 8);
  std::size_t bad_pairs = 0, bad_spent = 0, runs = 0;
  for (auto kind : {StrategyKind::kRandom, StrategyKind::kGreedy, StrategyKind::kT2S, StrategyKind::kOptChain}) {
    SimConfig c;
    c.k = 4;
    c.tx_rate = 3000;
    c.strategy.kind = kind;
    c.strategy.k = 4;
    Simulator sim(c, ds.records, ds.twins);
    sim.run();
    ++runs;
    for (auto [twin, orig] : ds.twins) {
      const auto a = sim.lifecycles()[twin].status, b = sim.lifecycles()[orig].status;
      const bool one_each = (a == TxStatus::kCommitted && b == TxStatus::kAborted) ||
                            (a == TxStatus::kAborted && b == TxStatus::kCommitted);
      bad_pairs += !one_each;
    }
    // Every committed transaction's outputs-spent appear exactly once, in the
    // parent's shard, and nothing else is marked.
    std::unordered_map<std::uint64_t, int> seen;
    std::size_t expected = 0;
    for (const auto& lc : sim.lifecycles()) {
      if (lc.status != TxStatus::kCommitted) continue;
      for (auto key : sim.utxo_keys(lc.tx)) {
        ++expected;
        if (++seen[key] > 1) ++bad_spent;
      }
    }
    std::size_t marked = 0;
    for (ShardId s = 0; s < 4; ++s) {
      marked += sim.spent(s).size();
      for (auto key : sim.spent(s)) {
        if (sim.placer().shard_of(Simulator::key_parent(key)) != s || !seen.contains(key)) ++bad_spent;
      }
    }
    bad_spent += marked != expected;
  }
  const bool ok = bad_pairs == 0 && bad_spent == 0;
  return {ok ? Verdict::kPass : Verdict::kFail,
          fmt("%zu conflicting pairs x %zu strategies: %zu pairs without exactly one commit and one abort, "
              "%zu spent-set inconsistencies",
              ds.twins.size(), runs, bad_pairs, bad_spent)};
}

}  // namespace

int main() {
  int failures = 0;
  auto report = [&](int n, const Outcome& o) {
    const char* v = o.verdict == Verdict::kPass ? "PASS" : o.verdict == Verdict::kFail ? "FAIL" : "SKIP";
    std::printf("CRITERION %d %s %s\n", n, v, o.detail.c_str());
    std::fflush(stdout);
    failures += o.verdict == Verdict::kFail;
  };
  auto guarded = [&](int n, const std::function<std::vector<Outcome>()>& fn) {
    try {
      for (const auto& o : fn()) report(n, o);
    } catch (const std::exception& e) {
      report(n, {Verdict::kFail, std::string("exception: ") + e.what()});
    }
  };

  const auto streams = power_law_streams();
  guarded(1, [&] { return std::vector<Outcome>{criterion1(streams)}; });
  guarded(2, [] { return std::vector<Outcome>{criterion2()}; });
  guarded(3, [&] { return criterion3(streams); });
  guarded(4, [] { return std::vector<Outcome>{criterion4()}; });
  guarded(5, [] { return std::vector<Outcome>{criterion5()}; });
  guarded(6, [] { return std::vector<Outcome>{criterion6()}; });
  guarded(7, [] { return std::vector<Outcome>{criterion7()}; });
  guarded(8, [] { return std::vector<Outcome>{criterion8()}; });
  std::printf("%s: %d criterion line(s) failed\n", failures ? "ACCEPTANCE FAILED" : "ACCEPTANCE PASSED", failures);
  return failures ? 1 : 0;
}
