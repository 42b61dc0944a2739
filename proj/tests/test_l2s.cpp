#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "optchain/l2s.hpp"

using namespace optchain;

namespace {

// Independent sampler: std distributions on a separate engine.
double mc_latency(const RateModel& m, const std::vector<ShardId>& proofs, std::optional<ShardId> out,
                  std::size_t samples, std::uint64_t seed) {
  std::mt19937_64 eng(seed);
  auto draw = [&](const ShardRates& r) {
    std::exponential_distribution<double> c(r.lambda_c), v(r.lambda_v);
    return c(eng) + v(eng);
  };
  double sum = 0.0;
  for (std::size_t s = 0; s < samples; ++s) {
    double mx = 0.0;
    for (ShardId i : proofs) mx = std::max(mx, draw(m[i]));
    if (out) mx += draw(m[*out]);
    sum += mx;
  }
  return sum / static_cast<double>(samples);
}

}  // namespace

TEST(ProofTime, PdfValues) {
  EXPECT_EQ(proof_time_pdf({1, 2}, 0.0), 0.0);
  EXPECT_NEAR(proof_time_pdf({1, 2}, 1.0), 2.0 * (std::exp(-1.0) - std::exp(-2.0)), 1e-14);
  EXPECT_NEAR(proof_time_pdf({1, 2}, 1.0), 0.4651, 5e-5);
  EXPECT_NEAR(proof_time_pdf({1, 1}, 1.0), std::exp(-1.0), 1e-14);
  EXPECT_NEAR(proof_time_pdf({1, 1}, 1.0), 0.3679, 5e-5);
}

TEST(ProofTime, CdfValues) {
  EXPECT_EQ(proof_time_cdf({1, 2}, 0.0), 0.0);
  EXPECT_NEAR(proof_time_cdf({1, 2}, 1e3), 1.0, 1e-15);
  const double want = 2.0 * (1.0 - std::exp(-1.0)) - (1.0 - std::exp(-2.0));
  EXPECT_NEAR(proof_time_cdf({1, 2}, 1.0), want, 1e-14);
  EXPECT_NEAR(proof_time_cdf({1, 2}, 1.0), 0.3996, 5e-5);
  const double integral = simpson([](double t) { return proof_time_pdf({1, 2}, t); }, 0.0, 1.0, 4096);
  EXPECT_NEAR(integral, want, 1e-6);
}

TEST(ProofTime, StableFormsMatchTextbookForms) {
  std::mt19937_64 eng(3);
  std::uniform_real_distribution<double> rate(0.05, 20.0), time(0.0, 10.0);
  for (int i = 0; i < 500; ++i) {
    ShardRates r{rate(eng), rate(eng)};
    if (std::abs(r.lambda_c - r.lambda_v) < 0.05) continue;
    const double t = time(eng);
    EXPECT_NEAR(proof_time_pdf(r, t), proof_time_pdf_direct(r, t), 1e-10);
    EXPECT_NEAR(proof_time_cdf(r, t), proof_time_cdf_direct(r, t), 1e-10);
  }
}

TEST(ProofTime, CdfMonotoneInUnitInterval) {
  for (ShardRates r : {ShardRates{1, 2}, ShardRates{3, 3}, ShardRates{10, 0.2}}) {
    double prev = 0.0;
    for (double t = 0.0; t < 60.0; t += 0.01) {
      const double c = proof_time_cdf(r, t);
      EXPECT_GE(c, prev);
      EXPECT_LE(c, 1.0);
      prev = c;
    }
  }
}

TEST(ProofTime, ErlangContinuity) {
  for (double lc : {0.3, 1.0, 7.0}) {
    const ShardRates near{lc, lc * (1.0 + 1e-9)};
    for (double t : {0.1, 0.5, 1.0, 3.0, 10.0}) {
      const double erlang_pdf = lc * lc * t * std::exp(-lc * t);
      const double erlang_cdf = 1.0 - std::exp(-lc * t) * (1.0 + lc * t);
      EXPECT_NEAR(proof_time_pdf(near, t), erlang_pdf, 1e-6);
      EXPECT_NEAR(proof_time_cdf(near, t), erlang_cdf, 1e-6);
    }
    const RateModel m{near};
    EXPECT_NEAR(expected_latency(m, {0, {0}}), 4.0 / lc, 1e-6 * 4.0 / lc);
  }
}

TEST(ProofTime, RejectsBadInput) {
  EXPECT_THROW(proof_time_pdf({1, 2}, -1.0), Error);
  EXPECT_THROW(proof_time_cdf({1, 2}, -0.5), Error);
  const RateModel bad{{0.0, 1.0}};
  const ShardId one[] = {0};
  try {
    all_proofs_cdf(bad, one, 1.0);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kNonPositiveRate);
  }
  try {
    expected_latency(RateModel{{1, 1}}, L2SQuery{0, {}});
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.kind(), ErrorKind::kEmptyProofSet);
  }
}

TEST(AllProofs, SingletonEqualsShardPdf) {
  const RateModel m{{1, 2}, {4, 0.5}};
  const ShardId s[] = {1};
  for (double t : {0.0, 0.3, 2.0, 9.0}) EXPECT_DOUBLE_EQ(all_proofs_pdf(m, s, t), proof_time_pdf(m[1], t));
}

TEST(AllProofs, PdfsNormalize) {
  std::mt19937_64 eng(17);
  std::uniform_real_distribution<double> rate(0.2, 8.0);
  for (int trial = 0; trial < 12; ++trial) {
    RateModel m;
    for (int i = 0; i < 4; ++i) m.push_back({rate(eng), rate(eng)});
    std::vector<ShardId> shards;
    for (ShardId i = 0; i < 1 + trial % 4; ++i) shards.push_back(i);
    const double T = detail::horizon(m, shards, {});
    const double mass = simpson([&](double t) { return all_proofs_pdf(m, shards, t); }, 0.0, T, 4096);
    EXPECT_NEAR(mass, 1.0, 1e-4);
  }
  const RateModel iid{{1, 2}, {1, 2}};
  const ShardId both[] = {0, 1};
  EXPECT_NEAR(simpson([&](double t) { return all_proofs_pdf(iid, both, t); }, 0.0, 60.0, 4096), 1.0, 1e-4);
}

TEST(ExpectedLatency, SameShardUnitRates) {
  const RateModel m{{1, 1}};
  EXPECT_NEAR(expected_latency(m, {0, {0}}), 4.0, 1e-6);
}

TEST(ExpectedLatency, TwoIidShardsMatchMonteCarlo) {
  const RateModel m{{1, 2}, {1, 2}, {1, 2}};
  const double e = expected_latency(m, {2, {0, 1}});
  const double mc = mc_latency(m, {0, 1}, 2, 1'000'000, 99);
  EXPECT_NEAR(e / mc, 1.0, 0.02);
  const ShardId both[] = {0, 1};
  EXPECT_NEAR(e - expected_proof_time(m, both), 1.5, 1e-6);
}

TEST(ExpectedLatency, RandomConfigsMatchMonteCarlo) {
  std::mt19937_64 eng(2024);
  std::uniform_real_distribution<double> rate(0.2, 10.0);
  for (int trial = 0; trial < 10; ++trial) {
    RateModel m;
    for (int i = 0; i < 5; ++i) m.push_back({rate(eng), rate(eng)});
    std::vector<ShardId> proofs;
    for (ShardId i = 0; i < 5; ++i) {
      if ((trial + i) % 3 != 0) proofs.push_back(i);
    }
    const ShardId out = static_cast<ShardId>(trial % 5);
    const double e = expected_latency(m, {out, proofs});
    const double mc = mc_latency(m, proofs, out, 1'000'000, 1000 + trial);
    EXPECT_NEAR(e / mc, 1.0, 0.02) << "trial " << trial;
  }
}

TEST(ExpectedLatency, TimeRescaling) {
  const RateModel m{{1, 2}, {3, 0.7}};
  RateModel fast = m;
  for (auto& r : fast) r.lambda_c *= 10, r.lambda_v *= 10;
  const L2SQuery q{1, {0, 1}};
  EXPECT_NEAR(expected_latency(fast, q), expected_latency(m, q) / 10.0, 1e-9);
}

TEST(ExpectedLatency, MonotoneInProofSet) {
  const RateModel m{{1, 2}, {3, 0.7}, {5, 5}, {0.5, 9}};
  std::vector<ShardId> set;
  double prev = 0.0;
  for (ShardId i = 0; i < 4; ++i) {
    set.push_back(i);
    const double e = expected_latency(m, {0, set});
    EXPECT_GE(e, prev);
    prev = e;
  }
}

TEST(ExpectedLatency, StrictModeIsSelfConvolution) {
  // Mean of a sum of two iid copies of the latest-proof time.
  const RateModel m{{1, 2}, {2, 0.8}};
  const ShardId both[] = {0, 1};
  const double strict = expected_latency(m, {0, {0, 1}}, L2SMode::kStrict);
  EXPECT_NEAR(strict / (2.0 * expected_proof_time(m, both)), 1.0, 1e-3);
}

TEST(ClosedForm, AgreesWithQuadrature) {
  std::mt19937_64 eng(8);
  std::uniform_real_distribution<double> rate(0.1, 12.0);
  int evaluated = 0;
  for (int trial = 0; trial < 60; ++trial) {
    RateModel m;
    for (int i = 0; i < 6; ++i) m.push_back({rate(eng), rate(eng)});
    std::vector<ShardId> shards;
    for (ShardId i = 0; i < 1 + trial % 6; ++i) shards.push_back(i);
    auto exact = expected_proof_time_closed_form(m, shards);
    if (!exact) continue;
    ++evaluated;
    EXPECT_NEAR(*exact / expected_proof_time(m, shards), 1.0, 1e-6);
  }
  EXPECT_GT(evaluated, 20);
  const RateModel equal{{2, 2}};
  const ShardId one[] = {0};
  EXPECT_FALSE(expected_proof_time_closed_form(equal, one).has_value());
}

TEST(Scorer, CachedValuesMatchDirect) {
  const RateModel m{{5, 1}, {5, 0.5}, {4, 2}, {5, 1}};
  L2SScorer sc(m);
  for (std::uint64_t mask = 1; mask < 16; ++mask) {
    std::vector<ShardId> shards;
    for (ShardId i = 0; i < 4; ++i) {
      if (mask >> i & 1) shards.push_back(i);
    }
    for (ShardId j = 0; j < 4; ++j) {
      const double direct = expected_latency(m, {j, shards});
      EXPECT_NEAR(sc.expected_latency(mask, j), direct, 1e-6 * direct);
      EXPECT_NEAR(sc.expected_latency(mask, j), direct, 1e-6 * direct);  // cached
    }
  }
  EXPECT_THROW(sc.expected_latency(0, 0), Error);
  EXPECT_THROW(sc.expected_latency(1, 4), Error);
}

TEST(Estimator, DefaultsWithoutTelemetry) {
  RateEstimatorConfig cfg;
  cfg.defaults = {3.0, 0.25};
  RateEstimator est(3, cfg);
  for (const auto& r : est.estimate()) EXPECT_EQ(r, (ShardRates{3.0, 0.25}));
}

TEST(Estimator, ConstantRtt) {
  RateEstimator est(1);
  for (int i = 0; i < 20; ++i) est.observe_rtt(0, i * 0.5, 0.2);
  EXPECT_NEAR(est.estimate()[0].lambda_c, 5.0, 1e-12);
}

TEST(Estimator, QueueInflatesVerification) {
  RateEstimatorConfig cfg;
  cfg.block_capacity = 2000;
  RateEstimator est(2, cfg);
  est.observe_commit_interval(0, 1.0, 1.0);
  est.observe_queue(0, 4000);
  const auto m = est.estimate();
  EXPECT_NEAR(1.0 / m[0].lambda_v, 3.0, 1e-12);
  EXPECT_EQ(m[1], cfg.defaults);
}

TEST(Estimator, OldSamplesDecay) {
  RateEstimatorConfig cfg;
  cfg.half_life = 1.0;
  RateEstimator est(1, cfg);
  est.observe_rtt(0, 0.0, 1.0);
  est.observe_rtt(0, 50.0, 0.1);  // 50 half-lives later
  EXPECT_NEAR(est.estimate()[0].lambda_c, 10.0, 1e-6);
}
