#pragma once

// Latency-to-Shard model.
//
// Getting a proof-of-acceptance from shard i takes a communication stage and a
// verification stage, each exponential (rates lambda_c, lambda_v). Their sum
// is hypoexponential. Proofs are requested from all shards in parallel, so
// the time until the last one arrives is the max over the proof shards. After
// that the output shard confirms, which is one more hypoexponential stage.

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "optchain/error.hpp"
#include "optchain/t2s.hpp"

namespace optchain {

struct ShardRates {
  double lambda_c = 5.0;  ///< 1 / mean communication time (1/s)
  double lambda_v = 1.0;  ///< 1 / mean verification time (1/s)

  double mean() const noexcept { return 1.0 / lambda_c + 1.0 / lambda_v; }

  friend bool operator==(const ShardRates&, const ShardRates&) = default;
};

using RateModel = std::vector<ShardRates>;

struct L2SQuery {
  ShardId output_shard = 0;
  std::vector<ShardId> proof_shards;
};

enum class L2SMode {
  /// E = E[all proofs] + E[output-shard confirmation].
  kConvolved,
  /// Literal integral of t * (f_v * f_v)(t), the all-proofs density
  /// convolved with itself.
  kStrict,
};

namespace detail {

// (1 - exp(-x)) / x, continuous at 0.
inline double one_minus_exp_over(double x) {
  if (std::abs(x) < 1e-9) return 1.0 - 0.5 * x;
  return -std::expm1(-x) / x;
}

inline void check_time(double t) {
  if (!(t >= 0.0)) throw Error(ErrorKind::kNegativeTime, "time must be >= 0");
}

inline void check_rates(const ShardRates& r) {
  if (!(r.lambda_c > 0.0) || !(r.lambda_v > 0.0) || !std::isfinite(r.lambda_c) ||
      !std::isfinite(r.lambda_v)) {
    throw Error(ErrorKind::kNonPositiveRate, "rates must be finite and > 0");
  }
}

}  // namespace detail

/// Density of one shard's proof time. With lo <= hi the two rates, written as
/// lc*lv*t*exp(-lo*t) * (1 - exp(-(hi-lo)t)) / ((hi-lo)t), which equals the
/// textbook two-exponential form and tends to the Erlang-2 density as the
/// rates meet.
inline double proof_time_pdf(const ShardRates& r, double t) {
  detail::check_time(t);
  const double lo = std::min(r.lambda_c, r.lambda_v);
  const double hi = std::max(r.lambda_c, r.lambda_v);
  return r.lambda_c * r.lambda_v * t * std::exp(-lo * t) * detail::one_minus_exp_over((hi - lo) * t);
}

/// P(proof time < T). Survival is exp(-lo*T) * (1 + lo*T*phi((hi-lo)T)).
inline double proof_time_cdf(const ShardRates& r, double T) {
  detail::check_time(T);
  const double lo = std::min(r.lambda_c, r.lambda_v);
  const double hi = std::max(r.lambda_c, r.lambda_v);
  const double survival = std::exp(-lo * T) * (1.0 + lo * T * detail::one_minus_exp_over((hi - lo) * T));
  return std::clamp(1.0 - survival, 0.0, 1.0);
}

/// Textbook closed forms with the explicit (lv - lc) denominator. Used to
/// check the stable forms above; unusable when the rates coincide.
inline double proof_time_pdf_direct(const ShardRates& r, double t) {
  return r.lambda_c * r.lambda_v / (r.lambda_v - r.lambda_c) *
         (std::exp(-r.lambda_c * t) - std::exp(-r.lambda_v * t));
}
inline double proof_time_cdf_direct(const ShardRates& r, double T) {
  const double d = r.lambda_v - r.lambda_c;
  return r.lambda_v / d * (1.0 - std::exp(-r.lambda_c * T)) -
         r.lambda_c / d * (1.0 - std::exp(-r.lambda_v * T));
}

inline const ShardRates& rates_of(const RateModel& model, ShardId i) {
  if (i >= model.size()) {
    throw Error(ErrorKind::kBadShardIndex, "no rates for shard " + std::to_string(i));
  }
  detail::check_rates(model[i]);
  return model[i];
}

/// P(every proof shard has answered by T).
inline double all_proofs_cdf(const RateModel& model, std::span<const ShardId> shards, double T) {
  if (shards.empty()) throw Error(ErrorKind::kEmptyProofSet, "proof shard set is empty");
  double p = 1.0;
  for (ShardId i : shards) p *= proof_time_cdf(rates_of(model, i), T);
  return p;
}

/// Density of the latest proof arrival: sum_i f_i(t) * prod_{r != i} F_r(t).
inline double all_proofs_pdf(const RateModel& model, std::span<const ShardId> shards, double t) {
  if (shards.empty()) throw Error(ErrorKind::kEmptyProofSet, "proof shard set is empty");
  detail::check_time(t);
  const std::size_t m = shards.size();
  thread_local std::vector<double> pdf, cdf;
  pdf.resize(m);
  cdf.resize(m);
  for (std::size_t i = 0; i < m; ++i) {
    const auto& r = rates_of(model, shards[i]);
    const double lo = std::min(r.lambda_c, r.lambda_v);
    const double hi = std::max(r.lambda_c, r.lambda_v);
    const double e = std::exp(-lo * t);
    const double phi = detail::one_minus_exp_over((hi - lo) * t);
    pdf[i] = r.lambda_c * r.lambda_v * t * e * phi;
    cdf[i] = std::clamp(1.0 - e * (1.0 + lo * t * phi), 0.0, 1.0);
  }
  // f_i times the product of the other cdfs, via prefix and suffix products.
  double total = 0.0;
  double prefix = 1.0;
  thread_local std::vector<double> suffix;
  suffix.assign(m + 1, 1.0);
  for (std::size_t i = m; i-- > 0;) suffix[i] = suffix[i + 1] * cdf[i];
  for (std::size_t i = 0; i < m; ++i) {
    total += pdf[i] * prefix * suffix[i + 1];
    prefix *= cdf[i];
  }
  return total;
}

/// Composite Simpson rule on [a, b] with `panels` (even) sub-intervals.
template <typename F>
double simpson(F&& f, double a, double b, int panels) {
  if (panels % 2 != 0) ++panels;
  const double h = (b - a) / panels;
  double sum = f(a) + f(b);
  for (int i = 1; i < panels; ++i) sum += (i % 2 == 1 ? 4.0 : 2.0) * f(a + i * h);
  return sum * h / 3.0;
}

struct QuadratureConfig {
  int panels = 4096;
  double horizon_factor = 20.0;
  double tail_bound = 1e-6;
};

namespace detail {

// Integration horizon: a multiple of the summed stage means, extended until
// the neglected tail mass is below the bound.
inline double horizon(const RateModel& model, std::span<const ShardId> shards,
                      const QuadratureConfig& q) {
  double sum = 0.0;
  for (ShardId i : shards) sum += rates_of(model, i).mean();
  double T = q.horizon_factor * sum;
  for (int guard = 0; guard < 16 && 1.0 - all_proofs_cdf(model, shards, T) >= q.tail_bound; ++guard) {
    T *= 2.0;
  }
  return T;
}

}  // namespace detail

/// E[time until all proofs have arrived], by quadrature of t * density.
inline double expected_proof_time(const RateModel& model, std::span<const ShardId> shards,
                                  const QuadratureConfig& q = {}) {
  if (shards.empty()) throw Error(ErrorKind::kEmptyProofSet, "proof shard set is empty");
  const double T = detail::horizon(model, shards, q);
  return simpson([&](double t) { return t * all_proofs_pdf(model, shards, t); }, 0.0, T, q.panels);
}

/// Literal double integral of t * (f_v conv f_v)(t). Inner convolution by
/// the trapezoid rule on the Simpson grid, outer by Simpson.
inline double expected_self_convolved_proof_time(const RateModel& model,
                                                 std::span<const ShardId> shards,
                                                 const QuadratureConfig& q = {}) {
  if (shards.empty()) throw Error(ErrorKind::kEmptyProofSet, "proof shard set is empty");
  const double T = detail::horizon(model, shards, q);
  const int n = q.panels % 2 == 0 ? q.panels : q.panels + 1;
  const double h = T / n;
  const int m = 2 * n;
  std::vector<double> f(static_cast<std::size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) f[i] = all_proofs_pdf(model, shards, i * h);
  double sum = 0.0;
  for (int j = 0; j <= m; ++j) {
    double conv = 0.0;
    for (int i = 0; i <= j; ++i) {
      const double w = (i == 0 || i == j) ? 0.5 : 1.0;
      conv += w * f[i] * f[j - i];
    }
    conv *= h;
    const double weight = (j == 0 || j == m) ? 1.0 : (j % 2 == 1 ? 4.0 : 2.0);
    sum += weight * (j * h) * conv;
  }
  return sum * h / 3.0;
}

/// Exact E[max of the proof times] when it can be evaluated stably.
///
/// Each survival 1 - F_i(t) is a_i e^{-lc t} + b_i e^{-lv t}, so by
/// inclusion-exclusion E[max] = sum over nonempty subsets A of
/// (-1)^{|A|+1} * integral of prod_{i in A} (1 - F_i), and every product is a
/// sum of exponentials. Costs 3^m terms. Returns nullopt when the rates of a
/// shard nearly coincide or the coefficients would cancel catastrophically.
inline std::optional<double> expected_proof_time_closed_form(const RateModel& model,
                                                             std::span<const ShardId> shards) {
  if (shards.empty()) throw Error(ErrorKind::kEmptyProofSet, "proof shard set is empty");
  constexpr std::size_t kMaxTerms = 8;
  if (shards.size() > kMaxTerms) return std::nullopt;
  struct Stage {
    double a, c, b, v;
  };
  std::vector<Stage> st;
  st.reserve(shards.size());
  double growth = 1.0;
  for (ShardId i : shards) {
    const auto& r = rates_of(model, i);
    const double gap = r.lambda_v - r.lambda_c;
    if (std::abs(gap) < 1e-3 * std::max(r.lambda_c, r.lambda_v)) return std::nullopt;
    const Stage s{r.lambda_v / gap, r.lambda_c, -r.lambda_c / gap, r.lambda_v};
    growth *= std::max(std::abs(s.a), std::abs(s.b));
    st.push_back(s);
  }
  if (growth > 1e4) return std::nullopt;
  double total = 0.0;
  // Depth-first over {absent, lc-term, lv-term} per stage.
  auto walk = [&](auto&& self, std::size_t idx, double coef, double rate, int used) -> void {
    if (idx == st.size()) {
      if (used > 0) total += ((used % 2 == 1) ? 1.0 : -1.0) * coef / rate;
      return;
    }
    const Stage& s = st[idx];
    self(self, idx + 1, coef, rate, used);
    self(self, idx + 1, coef * s.a, rate + s.c, used + 1);
    self(self, idx + 1, coef * s.b, rate + s.v, used + 1);
  };
  walk(walk, 0, 1.0, 0.0, 0);
  return total;
}

inline double expected_latency(const RateModel& model, const L2SQuery& query,
                               L2SMode mode = L2SMode::kConvolved,
                               const QuadratureConfig& q = {}) {
  if (query.proof_shards.empty()) {
    throw Error(ErrorKind::kEmptyProofSet, "transaction has no proof shards");
  }
  if (mode == L2SMode::kStrict) {
    return expected_self_convolved_proof_time(model, query.proof_shards, q);
  }
  const ShardId out[] = {query.output_shard};
  return expected_proof_time(model, query.proof_shards, q) + expected_proof_time(model, out, q);
}

/// Per-shard observations feeding the rate estimate. Averages decay
/// exponentially in simulated time with the configured half-life.
struct RateEstimatorConfig {
  double half_life = 30.0;
  ShardRates defaults{};
  std::size_t block_capacity = 2000;
};

class RateEstimator {
 public:
  RateEstimator(std::size_t k, RateEstimatorConfig cfg = {})
      : cfg_(cfg), rtt_(k), interval_(k), queue_(k, std::nullopt) {
    detail::check_rates(cfg_.defaults);
    if (!(cfg_.half_life > 0.0) || cfg_.block_capacity == 0) {
      throw Error(ErrorKind::kConfigInvalid, "half-life and block capacity must be positive");
    }
  }

  std::size_t k() const noexcept { return rtt_.size(); }

  void observe_rtt(ShardId shard, double now, double rtt) { rtt_.at(shard).add(now, rtt, cfg_.half_life); }
  void observe_commit_interval(ShardId shard, double now, double interval) {
    interval_.at(shard).add(now, interval, cfg_.half_life);
  }
  void observe_queue(ShardId shard, std::size_t length) { queue_.at(shard) = length; }

  RateModel estimate() const {
    RateModel model(k(), cfg_.defaults);
    for (std::size_t i = 0; i < k(); ++i) {
      if (rtt_[i].has_value()) model[i].lambda_c = 1.0 / rtt_[i].value();
      if (!interval_[i].has_value() && !queue_[i]) continue;
      const double interval =
          interval_[i].has_value() ? interval_[i].value() : 1.0 / cfg_.defaults.lambda_v;
      const double backlog =
          1.0 + static_cast<double>(queue_[i].value_or(0)) / static_cast<double>(cfg_.block_capacity);
      model[i].lambda_v = 1.0 / (interval * backlog);
    }
    return model;
  }

 private:
  class DecayedMean {
   public:
    void add(double now, double x, double half_life) {
      if (weight_ > 0.0) {
        const double decay = std::exp2(-std::max(0.0, now - last_) / half_life);
        sum_ *= decay;
        weight_ *= decay;
      }
      sum_ += x;
      weight_ += 1.0;
      last_ = now;
    }
    bool has_value() const noexcept { return weight_ > 0.0; }
    double value() const noexcept { return sum_ / weight_; }

   private:
    double sum_ = 0.0;
    double weight_ = 0.0;
    double last_ = 0.0;
  };

  RateEstimatorConfig cfg_;
  std::vector<DecayedMean> rtt_;
  std::vector<DecayedMean> interval_;
  std::vector<std::optional<std::size_t>> queue_;
};

/// Memoized E(j) for one rate snapshot. Proof sets are bitmasks over at most
/// 64 shards. In the default mode the closed form is used where it is stable
/// and quadrature elsewhere.
class L2SScorer {
 public:
  static constexpr std::size_t kMaxShards = 64;

  L2SScorer(RateModel model, L2SMode mode = L2SMode::kConvolved, QuadratureConfig q = {})
      : mode_(mode), quad_(q) {
    set_rates(std::move(model));
  }

  void set_rates(RateModel model) {
    if (model.size() > kMaxShards) {
      throw Error(ErrorKind::kConfigInvalid, "latency scoring supports at most 64 shards");
    }
    for (const auto& r : model) detail::check_rates(r);
    model_ = std::move(model);
    proofs_.clear();
    confirm_.assign(model_.size(), std::nullopt);
  }

  const RateModel& rates() const noexcept { return model_; }
  L2SMode mode() const noexcept { return mode_; }

  double expected_latency(std::uint64_t proof_mask, ShardId output_shard) {
    if (proof_mask == 0) throw Error(ErrorKind::kEmptyProofSet, "empty proof mask");
    if (output_shard >= model_.size()) throw Error(ErrorKind::kBadShardIndex, "output shard");
    double proofs;
    if (auto it = proofs_.find(proof_mask); it != proofs_.end()) {
      proofs = it->second;
    } else {
      std::vector<ShardId> shards;
      for (std::uint64_t m = proof_mask; m != 0; m &= m - 1) {
        shards.push_back(static_cast<ShardId>(std::countr_zero(m)));
      }
      if (mode_ == L2SMode::kStrict) {
        proofs = expected_self_convolved_proof_time(model_, shards, quad_);
      } else if (auto exact = expected_proof_time_closed_form(model_, shards)) {
        proofs = *exact;
      } else {
        proofs = expected_proof_time(model_, shards, quad_);
      }
      proofs_.emplace(proof_mask, proofs);
    }
    if (mode_ == L2SMode::kStrict) return proofs;
    auto& c = confirm_[output_shard];
    if (!c) {
      const ShardId out[] = {output_shard};
      auto exact = expected_proof_time_closed_form(model_, out);
      c = exact ? *exact : expected_proof_time(model_, out, quad_);
    }
    return proofs + *c;
  }

 private:
  L2SMode mode_;
  QuadratureConfig quad_;
  RateModel model_;
  std::unordered_map<std::uint64_t, double> proofs_;
  std::vector<std::optional<double>> confirm_;
};

}  // namespace optchain
