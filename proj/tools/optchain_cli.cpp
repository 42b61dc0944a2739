// optchain: command-line front end for stream statistics, offline placement,
// simulation grids and report merging.
//
// Exit codes: 0 ok, 2 configuration error, 3 data error.

#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "optchain/experiment.hpp"

namespace {

using namespace optchain;

constexpr int kExitOk = 0;
constexpr int kExitConfig = 2;
constexpr int kExitData = 3;

std::vector<TxRecord> load_stream(const std::string& path) {
  if (path.empty()) throw Error(ErrorKind::kConfigInvalid, "--stream is required");
  return read_stream_file(path);
}

std::vector<ShardId> load_partition(const std::string& path, std::size_t k) {
  std::ifstream is(path);
  if (!is) throw Error(ErrorKind::kIo, "cannot open partition " + path);
  return read_partition(is, k);
}

struct StrategyFlags {
  std::string strategy = "optchain";
  std::size_t k = 4;
  double epsilon = 0.1;
  double weight = 0.01;
  double alpha = ScoreState::kDefaultAlpha;

  void add(CLI::App* cmd, bool with_kind) {
    if (with_kind) {
      cmd->add_option("--strategy", strategy, "random|greedy|t2s|optchain|imported (aliases: omniledger, metis)")
          ->capture_default_str();
      cmd->add_option("-k,--shards", k, "Number of shards")->capture_default_str();
    }
    cmd->add_option("--epsilon", epsilon, "Load cap slack for greedy/t2s")->capture_default_str();
    cmd->add_option("--weight", weight, "Latency weight in the temporal fitness")->capture_default_str();
    cmd->add_option("--alpha", alpha, "Score restart probability")->capture_default_str();
  }
};

struct SimFlags {
  SimConfig c;
  void add(CLI::App* cmd) {
    cmd->add_option("--block-capacity", c.block_capacity, "Transactions per block")->capture_default_str();
    cmd->add_option("--block-bytes", c.block_bytes, "Block size in bytes")->capture_default_str();
    cmd->add_option("--avg-tx-bytes", c.avg_tx_bytes, "Bytes per transaction/message")->capture_default_str();
    cmd->add_option("--link-latency", c.link_latency, "Seconds per message hop")->capture_default_str();
    cmd->add_option("--bandwidth", c.bandwidth, "Bits per second")->capture_default_str();
    cmd->add_option("--consensus-delay", c.consensus_base_delay, "Base seconds per block")->capture_default_str();
    cmd->add_option("--block-interval", c.block_interval, "Block timer period (s)")->capture_default_str();
    cmd->add_option("--sample-period", c.sample_period, "Metric sample period (s)")->capture_default_str();
    cmd->add_option("--telemetry-period", c.telemetry_period, "Rate refresh period (s)")->capture_default_str();
    cmd->add_option("--rate-half-life", c.rate_half_life, "Estimator half-life (s)")->capture_default_str();
    cmd->add_option("--latency-bin", c.latency_bin, "Latency histogram bin width (s)")->capture_default_str();
    cmd->add_flag("--poisson", c.poisson_arrivals, "Poisson arrivals instead of a fixed interval");
  }
};

struct SynthFlags {
  SynthConfig s;
  void add(CLI::App* cmd, const std::string& prefix) {
    cmd->add_option(prefix + "n", s.n, "Transactions to generate")->capture_default_str();
    cmd->add_option(prefix + "coinbase-fraction", s.coinbase_fraction, "Share of input-less txs")
        ->capture_default_str();
    cmd->add_option(prefix + "mean-in-degree", s.target_mean_in_degree, "Target mean in-degree")
        ->capture_default_str();
    cmd->add_option(prefix + "max-in-degree", s.max_in_degree, "In-degree cap")->capture_default_str();
    cmd->add_option(prefix + "recency-bias", s.recency_bias, "Share of parents drawn from the recent past")
        ->capture_default_str();
    cmd->add_option(prefix + "locality-scale", s.locality_scale, "Mean look-back distance")
        ->capture_default_str();
    cmd->add_option(prefix + "max-outputs", s.max_outputs, "Output count cap")->capture_default_str();
  }
};

StrategyConfig build_strategy(const StrategyFlags& f, bool strict, std::uint64_t seed) {
  StrategyConfig c;
  c.kind = parse_strategy(f.strategy);
  c.k = f.k;
  c.epsilon = f.epsilon;
  c.fitness_weight = f.weight;
  c.alpha = f.alpha;
  c.hash_salt = seed;
  c.l2s_mode = strict ? L2SMode::kStrict : L2SMode::kConvolved;
  return c;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Transaction placement analysis and sharded-ledger simulation"};
  app.require_subcommand(1);
  app.fallthrough();
  app.set_config("--config", "", "TOML-style config file ([subcommand] sections)");

  std::uint64_t seed = 1;
  std::string out;
  bool strict = false;
  app.add_option("--seed", seed, "Seed for generation, hashing and arrivals")->capture_default_str();
  app.add_option("--out", out, "Output directory or file");
  app.add_flag("--strict-paper-l2s", strict, "Use the literal self-convolution latency integral");

  // stats
  auto* stats = app.add_subcommand("stats", "Degree histograms and windowed mean in-degree");
  std::string stream_path;
  std::uint64_t window = 10000;
  stats->add_option("--stream", stream_path, "Stream file")->required();
  stats->add_option("--window", window, "Transactions per averaging window")->capture_default_str();

  // place
  auto* place = app.add_subcommand("place", "Offline placement with a cross-shard report");
  StrategyFlags place_flags;
  std::string place_partition, rates_path;
  std::uint64_t warm_start = 0;
  bool offline_cap = false;
  place->add_option("--stream", stream_path, "Stream file")->required();
  place_flags.add(place, true);
  place->add_option("--partition", place_partition, "Partition file (imported strategy / warm start)");
  place->add_option("--warm-start", warm_start, "Leading txs assigned from the partition")
      ->capture_default_str();
  place->add_option("--rates", rates_path, "Rate override JSON for optchain");
  place->add_flag("--offline-cap", offline_cap, "Cap loads against the full stream length");

  // simulate
  auto* simulate = app.add_subcommand("simulate", "Run a simulation grid");
  ExperimentSpec spec;
  StrategyFlags sim_flags;
  SimFlags sim_params;
  SynthFlags sim_synth;
  std::vector<std::string> strategy_names{"optchain"};
  simulate->add_option("--stream", spec.dataset, "Stream file (default: synthetic)");
  simulate->add_option("--k", spec.shard_counts, "Shard counts")->delimiter(',')->capture_default_str();
  simulate->add_option("--rate", spec.rates, "Injection rates (tx/s)")->delimiter(',')->capture_default_str();
  simulate->add_option("--strategies", strategy_names, "Strategies")->delimiter(',')->capture_default_str();
  simulate->add_option("--partition", spec.partition, "Partition file for the imported strategy");
  simulate->add_option("--double-spend", spec.double_spend_fraction, "Fraction of conflicting twins")
      ->capture_default_str();
  simulate->add_flag("--event-log", spec.event_logs, "Write events.ndjson per cell");
  sim_flags.add(simulate, false);
  sim_params.add(simulate);
  sim_synth.add(simulate, "--synth-");

  // report
  auto* report = app.add_subcommand("report", "Merge grid cells into plotting tables");
  ReportOptions report_opt;
  report->add_option("--drain-slack", report_opt.drain_slack, "Seconds allowed to clear the backlog")
      ->capture_default_str();

  // convert
  auto* convert = app.add_subcommand("convert", "Convert a hash-keyed CSV dump to a stream file");
  std::string csv_path, sidecar_path;
  convert->add_option("--input", csv_path, "CSV: tx_hash,input_hashes(;),output_count")->required();
  convert->add_option("--sidecar", sidecar_path, "hash,id map (default: <out>.ids.csv)");

  // synth
  auto* synth = app.add_subcommand("synth", "Generate a synthetic stream");
  SynthFlags synth_flags;
  synth_flags.add(synth, "--");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  auto need_out = [&]() {
    if (out.empty()) throw Error(ErrorKind::kConfigInvalid, "--out is required");
    return fs::path(out);
  };

  try {
    if (*stats) {
      const auto s = cmd_stats(load_stream(stream_path), window, need_out());
      std::cout << stats_to_json(s).dump(2) << '\n';
    } else if (*place) {
      PlaceOptions opt;
      opt.strategy = build_strategy(place_flags, strict, seed);
      opt.warm_start = warm_start;
      auto stream = load_stream(stream_path);
      if (offline_cap) opt.strategy.capacity_n = stream.size();
      if (!place_partition.empty()) opt.partition = load_partition(place_partition, opt.strategy.k);
      if (!rates_path.empty()) opt.rates = parse_rate_model(read_json_file(rates_path), opt.strategy.k);
      const auto res = cmd_place(stream, opt, need_out());
      std::cout << place_summary_json(res, opt).dump(2) << '\n';
    } else if (*simulate) {
      spec.seed = seed;
      spec.synth = sim_synth.s;
      spec.sim = sim_params.c;
      spec.sim.strategy = build_strategy(sim_flags, strict, seed);
      spec.strategies.clear();
      for (const auto& n : strategy_names) spec.strategies.push_back(parse_strategy(n));
      const auto cells = cmd_simulate(spec, need_out());
      for (const auto& c : cells) {
        std::printf("%-32s %s committed=%llu throughput=%.1f mean_latency=%.3f\n", c.name.c_str(),
                    c.reused ? "reused" : "ran   ", static_cast<unsigned long long>(c.metrics.committed),
                    c.metrics.throughput, c.metrics.mean_latency);
      }
    } else if (*report) {
      const auto res = cmd_report(need_out(), report_opt, &std::cerr);
      std::printf("rows=%zu missing=%zu\n", res.rows, res.missing.size());
    } else if (*convert) {
      const fs::path dst = need_out();
      const fs::path side = sidecar_path.empty() ? fs::path(dst.string() + ".ids.csv") : fs::path(sidecar_path);
      std::ifstream in(csv_path, std::ios::binary);
      if (!in) throw Error(ErrorKind::kIo, "cannot open " + csv_path);
      auto so = open_out(dst);
      auto sc = open_out(side);
      const auto st = convert_external(in, so, sc);
      std::printf("transactions=%llu edges=%llu dangling_inputs=%llu\n",
                  static_cast<unsigned long long>(st.transactions), static_cast<unsigned long long>(st.edges),
                  static_cast<unsigned long long>(st.dangling_inputs));
    } else if (*synth) {
      SynthConfig sc = synth_flags.s;
      sc.seed = seed;
      const auto stream = generate_synthetic(sc);
      write_stream_file(need_out().string(), stream);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return e.is_config_error() ? kExitConfig : kExitData;
  } catch (const fs::filesystem_error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitData;
  }
  return kExitOk;
}
