#pragma once

// Experiment pipelines shared by the command-line tool and the tests: graph
// statistics, offline placement runs, simulation grids and report merging.
// Every writer produces plain CSV/JSON and is deterministic for fixed input.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "optchain/error.hpp"
#include "optchain/ingest.hpp"
#include "optchain/l2s.hpp"
#include "optchain/placement.hpp"
#include "optchain/simcore.hpp"
#include "optchain/tan.hpp"

namespace optchain {

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

inline std::string fmt_num(double v) {
  char buf[48];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

inline std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw Error(ErrorKind::kIo, "cannot write " + path.string());
  return os;
}

/// Writes through a temporary file so an interrupted run never leaves a
/// truncated output behind.
template <typename Fn>
void write_atomically(const fs::path& path, Fn&& body) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    auto os = open_out(tmp);
    body(os);
    os.flush();
    if (!os) throw Error(ErrorKind::kIo, "failed writing " + tmp.string());
  }
  fs::rename(tmp, path);
}

inline json read_json_file(const fs::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw Error(ErrorKind::kIo, "cannot open " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, path.string() + ": " + e.what());
  }
}

// ---------------------------------------------------------------- stats

struct StatsSummary {
  std::uint64_t transactions = 0;
  std::uint64_t edges = 0;
  std::uint64_t coinbase = 0;
  double mean_in_degree = 0.0;
  double mean_out_degree = 0.0;
};

inline StatsSummary graph_summary(const TanGraph& g) {
  StatsSummary s;
  s.transactions = g.size();
  s.edges = g.edge_count();
  for (const auto& r : g.records()) s.coinbase += r.is_coinbase();
  if (g.size()) {
    s.mean_in_degree = static_cast<double>(g.edge_count()) / static_cast<double>(g.size());
    s.mean_out_degree = s.mean_in_degree;
  }
  return s;
}

/// degree_histogram.csv: direction,degree,count (ascending degree).
inline void write_degree_histogram_csv(std::ostream& os, const DegreeHistogram& h) {
  os << "direction,degree,count\n";
  for (const auto& [d, c] : h.in) os << "in," << d << ',' << c << '\n';
  for (const auto& [d, c] : h.out) os << "out," << d << ',' << c << '\n';
}

/// avg_degree.csv: window,first_tx,mean_in_degree.
inline void write_avg_degree_csv(std::ostream& os, const std::vector<WindowMean>& series,
                                 std::uint64_t window) {
  os << "window,first_tx,mean_in_degree\n";
  for (std::size_t i = 0; i < series.size(); ++i) {
    os << i << ',' << i * window << ',' << fmt_num(series[i].mean_in_degree) << '\n';
  }
}

inline json stats_to_json(const StatsSummary& s) {
  return json{{"transactions", s.transactions},
              {"edges", s.edges},
              {"coinbase", s.coinbase},
              {"mean_in_degree", s.mean_in_degree},
              {"mean_out_degree", s.mean_out_degree}};
}

inline StatsSummary cmd_stats(std::span<const TxRecord> stream, std::uint64_t window, const fs::path& out) {
  TanGraph g;
  g.reserve(stream.size());
  for (const auto& r : stream) g.add_tx(r);
  const auto series = g.avg_degree_series(window);
  const auto summary = graph_summary(g);
  fs::create_directories(out);
  write_atomically(out / "degree_histogram.csv", [&](std::ostream& os) {
    write_degree_histogram_csv(os, g.degree_histogram());
  });
  write_atomically(out / "avg_degree.csv",
                   [&](std::ostream& os) { write_avg_degree_csv(os, series, window); });
  write_atomically(out / "stats.json",
                   [&](std::ostream& os) { os << stats_to_json(summary).dump(2) << '\n'; });
  return summary;
}

// ---------------------------------------------------------------- rates

/// {"shards": [{"lambda_c": 5.0, "lambda_v": 1.0}, ...]}
inline RateModel parse_rate_model(const json& j, std::size_t k) {
  if (!j.is_object() || !j.contains("shards") || !j["shards"].is_array()) {
    throw Error(ErrorKind::kConfigInvalid, "rate file needs a 'shards' array");
  }
  RateModel model;
  for (const auto& s : j["shards"]) {
    ShardRates r;
    try {
      r.lambda_c = s.at("lambda_c").get<double>();
      r.lambda_v = s.at("lambda_v").get<double>();
    } catch (const json::exception& e) {
      throw Error(ErrorKind::kConfigInvalid, std::string("rate entry: ") + e.what());
    }
    if (!(r.lambda_c > 0.0) || !(r.lambda_v > 0.0)) {
      throw Error(ErrorKind::kNonPositiveRate, "rates must be > 0");
    }
    model.push_back(r);
  }
  if (model.size() != k) {
    throw Error(ErrorKind::kConfigInvalid, "rate file lists " + std::to_string(model.size()) +
                                               " shards, expected " + std::to_string(k));
  }
  return model;
}

// ---------------------------------------------------------------- place

struct PlaceOptions {
  StrategyConfig strategy;
  /// Number of leading transactions assigned from `partition` before the
  /// strategy takes over.
  std::uint64_t warm_start = 0;
  std::vector<ShardId> partition;
  std::optional<RateModel> rates;
};

struct PlaceResult {
  std::vector<PlacementDecision> decisions;  // suffix only
  CrossTxReport report;                      // over the suffix
  std::vector<std::uint64_t> shard_sizes;    // whole stream
  std::uint64_t all_full_events = 0;
};

inline PlaceResult run_place(std::span<const TxRecord> stream, const PlaceOptions& opt) {
  StrategyConfig cfg = opt.strategy;
  if (opt.warm_start > stream.size()) {
    throw Error(ErrorKind::kConfigInvalid, "warm start longer than the stream");
  }
  if (opt.warm_start > opt.partition.size()) {
    throw Error(ErrorKind::kMissingAssignment, "partition shorter than the warm-start prefix");
  }
  Placer placer(cfg, opt.partition);
  placer.reserve(stream.size());
  if (opt.rates) placer.set_rates(*opt.rates);
  PlaceResult res;
  res.decisions.reserve(stream.size() - opt.warm_start);
  for (std::size_t i = 0; i < stream.size(); ++i) {
    if (i < opt.warm_start) {
      placer.assign(stream[i], opt.partition[i]);
    } else {
      res.decisions.push_back(placer.place(stream[i]));
    }
  }
  res.report = cross_tx_report(res.decisions, cfg.k);
  res.shard_sizes = placer.shard_counts();
  res.all_full_events = placer.all_full_events();
  return res;
}

inline json place_summary_json(const PlaceResult& r, const PlaceOptions& opt) {
  return json{{"strategy", std::string(to_string(opt.strategy.kind))},
              {"k", opt.strategy.k},
              {"warm_start", opt.warm_start},
              {"placed", r.report.total},
              {"cross_count", r.report.cross_count},
              {"fraction", r.report.fraction},
              {"placed_per_shard", r.report.per_shard},
              {"shard_sizes", r.shard_sizes},
              {"all_full_events", r.all_full_events}};
}

inline PlaceResult cmd_place(std::span<const TxRecord> stream, const PlaceOptions& opt, const fs::path& out) {
  auto res = run_place(stream, opt);
  fs::create_directories(out);
  write_atomically(out / "decisions.csv", [&](std::ostream& os) {
    write_decision_log_header(os);
    for (const auto& d : res.decisions) write_decision_log_row(os, d);
  });
  write_atomically(out / "summary.json",
                   [&](std::ostream& os) { os << place_summary_json(res, opt).dump(2) << '\n'; });
  return res;
}

// ---------------------------------------------------------------- metrics I/O

inline json metrics_to_json(const MetricsReport& r) {
  json hist = json::array();
  for (const auto& b : r.latency_histogram) {
    hist.push_back(json{{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"cdf", b.cdf}});
  }
  return json{{"strategy", r.strategy},
              {"k", r.k},
              {"tx_rate", r.tx_rate},
              {"injected", r.injected},
              {"committed", r.committed},
              {"aborted", r.aborted},
              {"pending", r.pending},
              {"duration", r.duration},
              {"throughput", r.throughput},
              {"mean_latency", r.mean_latency},
              {"max_latency", r.max_latency},
              {"p50_latency", r.p50_latency},
              {"p99_latency", r.p99_latency},
              {"mean_latency_cross", r.mean_latency_cross},
              {"mean_latency_same", r.mean_latency_same},
              {"committed_cross", r.committed_cross},
              {"committed_same", r.committed_same},
              {"cross_fraction", r.cross_fraction},
              {"all_full_events", r.all_full_events},
              {"blocks", r.blocks},
              {"mean_queue_ratio", r.mean_queue_ratio},
              {"samples", r.series.size()},
              {"latency_histogram", hist}};
}

inline MetricsReport metrics_from_json(const json& j) {
  MetricsReport r;
  try {
    r.strategy = j.at("strategy").get<std::string>();
    r.k = j.at("k").get<std::size_t>();
    r.tx_rate = j.at("tx_rate").get<double>();
    r.injected = j.at("injected").get<std::uint64_t>();
    r.committed = j.at("committed").get<std::uint64_t>();
    r.aborted = j.at("aborted").get<std::uint64_t>();
    r.pending = j.at("pending").get<std::uint64_t>();
    r.duration = j.at("duration").get<double>();
    r.throughput = j.at("throughput").get<double>();
    r.mean_latency = j.at("mean_latency").get<double>();
    r.max_latency = j.at("max_latency").get<double>();
    r.p50_latency = j.at("p50_latency").get<double>();
    r.p99_latency = j.at("p99_latency").get<double>();
    r.mean_latency_cross = j.at("mean_latency_cross").get<double>();
    r.mean_latency_same = j.at("mean_latency_same").get<double>();
    r.committed_cross = j.at("committed_cross").get<std::uint64_t>();
    r.committed_same = j.at("committed_same").get<std::uint64_t>();
    r.cross_fraction = j.at("cross_fraction").get<double>();
    r.all_full_events = j.at("all_full_events").get<std::uint64_t>();
    r.blocks = j.at("blocks").get<std::uint64_t>();
    r.mean_queue_ratio = j.at("mean_queue_ratio").get<double>();
    for (const auto& b : j.at("latency_histogram")) {
      r.latency_histogram.push_back(HistogramBin{b.at("lo").get<double>(), b.at("hi").get<double>(),
                                                 b.at("count").get<std::uint64_t>(),
                                                 b.at("cdf").get<double>()});
    }
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("metrics file: ") + e.what());
  }
  return r;
}

inline void write_timeseries_csv(std::ostream& os, std::span<const SampleRow> rows) {
  os << "time,committed_window,queue_max,queue_min,ratio,cross_frac,injected,committed,aborted,pending\n";
  for (const auto& r : rows) {
    os << fmt_num(r.time) << ',' << r.committed_window << ',' << r.queue_max << ',' << r.queue_min << ','
       << fmt_num(r.ratio) << ',' << fmt_num(r.cross_frac) << ',' << r.injected << ',' << r.committed << ','
       << r.aborted << ',' << r.pending << '\n';
  }
}

inline void write_latency_histogram_csv(std::ostream& os, std::span<const HistogramBin> bins) {
  os << "lo,hi,count,cdf\n";
  for (const auto& b : bins) {
    os << fmt_num(b.lo) << ',' << fmt_num(b.hi) << ',' << b.count << ',' << fmt_num(b.cdf) << '\n';
  }
}

// ---------------------------------------------------------------- experiment grid

struct ExperimentSpec {
  /// Stream file; when empty a synthetic stream is generated from `synth`.
  std::string dataset;
  SynthConfig synth;
  std::vector<std::size_t> shard_counts{4};
  std::vector<double> rates{2000.0};
  std::vector<StrategyKind> strategies{StrategyKind::kOptChain};
  std::uint64_t seed = 1;
  SimConfig sim;  // k, tx_rate, strategy.kind and seeds are set per cell
  std::string partition;  // required by the imported strategy
  double double_spend_fraction = 0.0;
  bool event_logs = false;

  void validate() const {
    if (shard_counts.empty() || rates.empty() || strategies.empty()) {
      throw Error(ErrorKind::kConfigInvalid, "experiment grid is empty");
    }
    for (auto k : shard_counts) {
      if (k == 0) throw Error(ErrorKind::kConfigInvalid, "k must be >= 1");
    }
    for (double r : rates) {
      if (!(r > 0.0)) throw Error(ErrorKind::kConfigInvalid, "rates must be > 0");
    }
    if (!(double_spend_fraction >= 0.0 && double_spend_fraction < 1.0)) {
      throw Error(ErrorKind::kConfigInvalid, "double-spend fraction must lie in [0, 1)");
    }
    for (auto s : strategies) {
      if (s == StrategyKind::kImported && partition.empty()) {
        throw Error(ErrorKind::kConfigInvalid, "imported strategy needs a partition file");
      }
    }
    for (auto k : shard_counts) {
      for (double r : rates) {
        for (auto s : strategies) cell_config(k, r, s).validate();
      }
    }
  }

  SimConfig cell_config(std::size_t k, double rate, StrategyKind kind) const {
    SimConfig c = sim;
    c.k = k;
    c.tx_rate = rate;
    c.rng_seed = seed;
    c.strategy.kind = kind;
    c.strategy.k = k;
    c.strategy.hash_salt = seed;
    return c;
  }
};

inline std::string cell_name(StrategyKind kind, std::size_t k, double rate) {
  return std::string(to_string(kind)) + "_k" + std::to_string(k) + "_r" + fmt_num(rate);
}

inline json sim_to_json(const SimConfig& c) {
  return json{{"block_capacity", c.block_capacity},
              {"block_bytes", c.block_bytes},
              {"avg_tx_bytes", c.avg_tx_bytes},
              {"link_latency", c.link_latency},
              {"bandwidth", c.bandwidth},
              {"consensus_base_delay", c.consensus_base_delay},
              {"block_interval", c.block_interval},
              {"sample_period", c.sample_period},
              {"telemetry_period", c.telemetry_period},
              {"rate_half_life", c.rate_half_life},
              {"poisson_arrivals", c.poisson_arrivals},
              {"latency_bin", c.latency_bin},
              {"epsilon", c.strategy.epsilon},
              {"fitness_weight", c.strategy.fitness_weight},
              {"alpha", c.strategy.alpha},
              {"strict_paper_l2s", c.strategy.l2s_mode == L2SMode::kStrict}};
}

inline SimConfig sim_from_json(const json& j) {
  SimConfig c;
  try {
    c.block_capacity = j.at("block_capacity").get<std::size_t>();
    c.block_bytes = j.at("block_bytes").get<std::size_t>();
    c.avg_tx_bytes = j.at("avg_tx_bytes").get<std::size_t>();
    c.link_latency = j.at("link_latency").get<double>();
    c.bandwidth = j.at("bandwidth").get<double>();
    c.consensus_base_delay = j.at("consensus_base_delay").get<double>();
    c.block_interval = j.at("block_interval").get<double>();
    c.sample_period = j.at("sample_period").get<double>();
    c.telemetry_period = j.at("telemetry_period").get<double>();
    c.rate_half_life = j.at("rate_half_life").get<double>();
    c.poisson_arrivals = j.at("poisson_arrivals").get<bool>();
    c.latency_bin = j.at("latency_bin").get<double>();
    c.strategy.epsilon = j.at("epsilon").get<double>();
    c.strategy.fitness_weight = j.at("fitness_weight").get<double>();
    c.strategy.alpha = j.at("alpha").get<double>();
    c.strategy.l2s_mode = j.at("strict_paper_l2s").get<bool>() ? L2SMode::kStrict : L2SMode::kConvolved;
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("experiment sim block: ") + e.what());
  }
  return c;
}

inline json spec_to_json(const ExperimentSpec& s) {
  json strategies = json::array();
  for (auto k : s.strategies) strategies.push_back(std::string(to_string(k)));
  return json{{"format", "optchain-experiment/1"},
              {"dataset", s.dataset},
              {"synth",
               {{"n", s.synth.n},
                {"coinbase_fraction", s.synth.coinbase_fraction},
                {"target_mean_in_degree", s.synth.target_mean_in_degree},
                {"max_in_degree", s.synth.max_in_degree},
                {"recency_bias", s.synth.recency_bias},
                {"locality_scale", s.synth.locality_scale},
                {"max_outputs", s.synth.max_outputs}}},
              {"shard_counts", s.shard_counts},
              {"rates", s.rates},
              {"strategies", strategies},
              {"seed", s.seed},
              {"partition", s.partition},
              {"double_spend_fraction", s.double_spend_fraction},
              {"sim", sim_to_json(s.sim)}};
}

inline ExperimentSpec spec_from_json(const json& j) {
  ExperimentSpec s;
  try {
    s.dataset = j.at("dataset").get<std::string>();
    const auto& sy = j.at("synth");
    s.synth.n = sy.at("n").get<std::uint64_t>();
    s.synth.coinbase_fraction = sy.at("coinbase_fraction").get<double>();
    s.synth.target_mean_in_degree = sy.at("target_mean_in_degree").get<double>();
    s.synth.max_in_degree = sy.at("max_in_degree").get<std::uint32_t>();
    s.synth.recency_bias = sy.at("recency_bias").get<double>();
    s.synth.locality_scale = sy.at("locality_scale").get<double>();
    s.synth.max_outputs = sy.at("max_outputs").get<std::uint32_t>();
    s.shard_counts = j.at("shard_counts").get<std::vector<std::size_t>>();
    s.rates = j.at("rates").get<std::vector<double>>();
    s.strategies.clear();
    for (const auto& name : j.at("strategies")) s.strategies.push_back(parse_strategy(name.get<std::string>()));
    s.seed = j.at("seed").get<std::uint64_t>();
    s.synth.seed = s.seed;
    s.partition = j.at("partition").get<std::string>();
    s.double_spend_fraction = j.at("double_spend_fraction").get<double>();
    s.sim = sim_from_json(j.at("sim"));
  } catch (const json::exception& e) {
    throw Error(ErrorKind::kParseError, std::string("experiment.json: ") + e.what());
  }
  return s;
}

struct CellOutcome {
  std::string name;
  bool reused = false;
  MetricsReport metrics;
};

/// Runs every (strategy, k, rate) cell. A cell whose metrics.json already
/// exists with a matching configuration is loaded instead of re-run, so an
/// interrupted grid resumes where it stopped.
inline std::vector<CellOutcome> cmd_simulate(const ExperimentSpec& spec, const fs::path& out) {
  spec.validate();
  std::vector<TxRecord> stream;
  if (spec.dataset.empty()) {
    SynthConfig sc = spec.synth;
    sc.seed = spec.seed;
    stream = generate_synthetic(sc);
  } else {
    stream = read_stream_file(spec.dataset);
  }
  std::vector<std::pair<TxId, TxId>> twins;
  if (spec.double_spend_fraction > 0.0) {
    auto ds = inject_double_spends(stream, spec.double_spend_fraction, spec.seed);
    stream = std::move(ds.records);
    twins = std::move(ds.twins);
  }
  std::vector<ShardId> partition;
  if (!spec.partition.empty()) {
    std::ifstream is(spec.partition);
    if (!is) throw Error(ErrorKind::kIo, "cannot open partition " + spec.partition);
    partition = read_partition(is);
  }

  fs::create_directories(out);
  const json spec_json = spec_to_json(spec);
  write_atomically(out / "experiment.json", [&](std::ostream& os) { os << spec_json.dump(2) << '\n'; });

  std::vector<CellOutcome> outcomes;
  for (auto kind : spec.strategies) {
    for (auto k : spec.shard_counts) {
      for (double rate : spec.rates) {
        CellOutcome cell;
        cell.name = cell_name(kind, k, rate);
        const fs::path dir = out / "cells" / cell.name;
        const fs::path metrics_path = dir / "metrics.json";
        const SimConfig cfg = spec.cell_config(k, rate, kind);
        json cell_key = spec_json;
        cell_key.erase("shard_counts");
        cell_key.erase("rates");
        cell_key.erase("strategies");
        if (fs::exists(metrics_path)) {
          const json prior = read_json_file(metrics_path);
          if (prior.contains("cell_key") && prior["cell_key"] == cell_key) {
            cell.reused = true;
            cell.metrics = metrics_from_json(prior.at("metrics"));
            outcomes.push_back(std::move(cell));
            continue;
          }
        }
        fs::create_directories(dir);
        if (kind == StrategyKind::kImported && partition.size() < stream.size()) {
          throw Error(ErrorKind::kMissingAssignment, "partition shorter than the stream");
        }
        Simulator sim(cfg, stream, twins, kind == StrategyKind::kImported ? partition : std::vector<ShardId>{});
        std::optional<std::ofstream> log;
        if (spec.event_logs) {
          log.emplace(open_out(dir / "events.ndjson"));
          sim.set_event_log(&*log);
        }
        cell.metrics = sim.run();
        write_atomically(dir / "timeseries.csv",
                         [&](std::ostream& os) { write_timeseries_csv(os, cell.metrics.series); });
        write_atomically(dir / "latency_hist.csv", [&](std::ostream& os) {
          write_latency_histogram_csv(os, cell.metrics.latency_histogram);
        });
        // Written last: its presence marks the cell complete.
        write_atomically(metrics_path, [&](std::ostream& os) {
          os << json{{"cell_key", cell_key}, {"metrics", metrics_to_json(cell.metrics)}}.dump(2) << '\n';
        });
        outcomes.push_back(std::move(cell));
      }
    }
  }
  return outcomes;
}

// ---------------------------------------------------------------- report

struct ReportOptions {
  /// A cell sustains its rate when the backlog clears within this many
  /// seconds after the last injection.
  double drain_slack = 11.0;
};

struct ReportResult {
  std::size_t rows = 0;
  std::vector<std::string> missing;
};

/// True when the run kept up with its injection rate: everything injected
/// reached a terminal state no later than `slack` after injection ended.
inline bool sustains_rate(const MetricsReport& m, double slack) {
  if (m.injected == 0) return true;
  if (m.pending > 0) return false;
  const double injection_span = static_cast<double>(m.injected) / m.tx_rate;
  return m.duration <= injection_span + slack;
}

inline ReportResult cmd_report(const fs::path& dir, const ReportOptions& opt = {},
                               std::ostream* warnings = nullptr) {
  const ExperimentSpec spec = spec_from_json(read_json_file(dir / "experiment.json"));
  ReportResult res;
  std::ostringstream summary, cdf, scal;
  summary << "strategy,k,rate,injected,committed,aborted,pending,duration,throughput,mean_latency,"
             "p50_latency,p99_latency,max_latency,mean_latency_cross,mean_latency_same,cross_fraction,"
             "mean_queue_ratio,sustained\n";
  cdf << "strategy,k,rate,latency,cdf\n";
  scal << "strategy,k,max_sustained_rate\n";
  for (auto kind : spec.strategies) {
    for (auto k : spec.shard_counts) {
      double best = 0.0;
      for (double rate : spec.rates) {
        const std::string name = cell_name(kind, k, rate);
        const fs::path path = dir / "cells" / name / "metrics.json";
        if (!fs::exists(path)) {
          res.missing.push_back(name);
          if (warnings) *warnings << "MissingCell: " << name << '\n';
          continue;
        }
        const MetricsReport m = metrics_from_json(read_json_file(path).at("metrics"));
        const bool ok = sustains_rate(m, opt.drain_slack);
        if (ok) best = std::max(best, rate);
        const std::string head = std::string(to_string(kind)) + ',' + std::to_string(k) + ',' + fmt_num(rate);
        summary << head << ',' << m.injected << ',' << m.committed << ',' << m.aborted << ',' << m.pending << ','
                << fmt_num(m.duration) << ',' << fmt_num(m.throughput) << ',' << fmt_num(m.mean_latency) << ','
                << fmt_num(m.p50_latency) << ',' << fmt_num(m.p99_latency) << ',' << fmt_num(m.max_latency)
                << ',' << fmt_num(m.mean_latency_cross) << ',' << fmt_num(m.mean_latency_same) << ','
                << fmt_num(m.cross_fraction) << ',' << fmt_num(m.mean_queue_ratio) << ',' << (ok ? 1 : 0)
                << '\n';
        for (const auto& b : m.latency_histogram) {
          cdf << head << ',' << fmt_num(b.hi) << ',' << fmt_num(b.cdf) << '\n';
        }
        ++res.rows;
      }
      scal << to_string(kind) << ',' << k << ',' << fmt_num(best) << '\n';
    }
  }
  write_atomically(dir / "summary.csv", [&](std::ostream& os) { os << summary.str(); });
  write_atomically(dir / "latency_cdf.csv", [&](std::ostream& os) { os << cdf.str(); });
  write_atomically(dir / "scalability.csv", [&](std::ostream& os) { os << scal.str(); });
  return res;
}

}  // namespace optchain
