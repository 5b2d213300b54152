#pragma once

// Validation oracles: sample concrete realizations of the random
// interconnection, decide per-realization stability at a decay rate, and
// estimate the failure probability with exact binomial confidence bounds or
// compute it exactly by joint enumeration on small models. These routes are
// independent of the certificate machinery, so they can audit it.

#include <Eigen/Dense>
#include <cstdint>
#include <json.hpp>
#include <string>

#include "posnet/model.hpp"
#include "posnet/policy.hpp"

namespace posnet::montecarlo {

// Which rate the per-realization stability event uses. Certificates bound
// the decay of the Lyapunov function V = x^T P x like e^{-lambda t}, i.e.
// spectral abscissa < -lambda/2 ("lyapunov", the default); the state-norm
// reading ||x(t)|| ~ e^{-lambda t} needs abscissa < -lambda ("state").
enum class RateConvention { lyapunov, state };

struct McReport {
  long long samples = 0;
  long long failures = 0;
  double p_hat = 0.0;     // failures / samples
  double ci_lower = 0.0;  // exact (Clopper-Pearson) two-sided 95% interval
  double ci_upper = 1.0;  //   0 <= ci_lower <= p_hat <= ci_upper <= 1
  std::uint64_t seed = 0;
  double lambda = 0.0;
};

// One concrete interconnection matrix. Block (i, j) (A1) or block-row i
// (A2, second coordinate 0) is drawn independently by inverse CDF over its
// finite support at the uniform variate rng::uniform01(seed, i, j, k + 1)
// for draw index k (the +1 keeps realizations off the c = 0 substream the
// graph generator uses). A pure function of (model, seed, draw_index), so
// samples are reproducible regardless of scheduling.
Eigen::MatrixXd sample_realization(const model::NetworkModel& m,
                                   std::uint64_t seed,
                                   std::uint64_t draw_index = 0);

// True iff the Metzler matrix a is stable with decay rate lambda: its
// spectral abscissa lies strictly below -lambda/2 (or -lambda under the
// state convention). Decided by the exact Metzler-Hurwitz test on the
// shifted matrix, which for Metzler a is equivalent to the existence of a
// diagonal P > 0 with a^T P + P a + lambda P < 0 — the per-realization
// event the certificates quantify over. Throws std::domain_error for
// non-Metzler input.
bool stable_with_rate(const Eigen::MatrixXd& a, double lambda,
                      RateConvention convention = RateConvention::lyapunov);

// I.i.d. sampling of the instability probability at rate lambda. Draw k is
// a pure function of (seed, k), so the report is identical for every thread
// count and schedule; threads > 1 only partitions the index range. The
// confidence bounds are exact Clopper-Pearson (two-sided 95%).
McReport estimate_instability_prob(
    const model::NetworkModel& m, double lambda, long long samples,
    std::uint64_t seed, int threads = 1,
    RateConvention convention = RateConvention::lyapunov);

// Exact instability probability: sums the product weight of every joint
// support combination (blocks for A1, block-rows for A2) whose realization
// fails stable_with_rate. Throws std::length_error naming the computed
// joint support size when it exceeds cap.
double brute_force_prob(const model::NetworkModel& m, double lambda,
                        unsigned long long cap = policy::kEnumCap,
                        RateConvention convention = RateConvention::lyapunov);

// Report serializations: a JSON object with the field names above, and a
// two-line CSV (header + one row, 12 significant digits).
nlohmann::json mc_report_json(const McReport& report);
std::string mc_report_csv(const McReport& report);

}  // namespace posnet::montecarlo
