#include <doctest.h>

#include <Eigen/Dense>
#include <cmath>
#include <map>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "oracles.hpp"
#include "posnet/certify.hpp"
#include "posnet/linalg.hpp"
#include "posnet/model.hpp"
#include "posnet/montecarlo.hpp"

using namespace posnet;
using namespace posnet::montecarlo;
using model::FiniteMatrixDistribution;
using model::NetworkModel;

namespace {

Eigen::MatrixXd scalar(double v) {
  Eigen::MatrixXd m(1, 1);
  m << v;
  return m;
}

// Single subsystem whose diagonal block is -0.1 (fails rate 1) with
// probability r and -2 (comfortably stable) otherwise.
NetworkModel bernoulli_node(double r) {
  NetworkModel::BlockMap blocks;
  blocks.emplace(std::make_pair(0, 0),
                 FiniteMatrixDistribution::two_point(r, scalar(-0.1), scalar(-2.0)));
  return NetworkModel::a1(1, 1, std::move(blocks));
}

// Directed 3-ring with recovery delta and independent two-point edge rates;
// its spectral abscissa has the closed form cbrt(b1 b2 b3) - delta.
NetworkModel ring3(double delta, double hi, double lo, const double r[3]) {
  NetworkModel::BlockMap blocks;
  for (int i = 0; i < 3; ++i) {
    blocks.emplace(std::make_pair(i, i),
                   FiniteMatrixDistribution::deterministic(scalar(-delta)));
    blocks.emplace(std::make_pair(i, (i + 2) % 3),
                   FiniteMatrixDistribution::two_point(r[i], scalar(hi), scalar(lo)));
  }
  return NetworkModel::a1(3, 1, std::move(blocks));
}

// Exhaustive binomial tail via lgamma; the independent route for the
// Clopper-Pearson bounds.
double binom_cdf(long long n, long long k, double p) {
  if (k < 0) return 0.0;
  if (k >= n) return 1.0;
  if (p <= 0.0) return 1.0;
  if (p >= 1.0) return 0.0;
  double sum = 0.0;
  for (long long j = 0; j <= k; ++j) {
    const double logpmf = std::lgamma(static_cast<double>(n) + 1.0) -
                          std::lgamma(static_cast<double>(j) + 1.0) -
                          std::lgamma(static_cast<double>(n - j) + 1.0) +
                          static_cast<double>(j) * std::log(p) +
                          static_cast<double>(n - j) * std::log1p(-p);
    sum += std::exp(logpmf);
  }
  return std::min(sum, 1.0);
}

// [DERIVED: exhaustive binomial sums] exact 95% bounds by bisection on the
// binomial tails, independent of any beta-quantile implementation.
double cp_upper_oracle(long long n, long long k) {
  if (k >= n) return 1.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (binom_cdf(n, k, mid) > 0.025 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

double cp_lower_oracle(long long n, long long k) {
  if (k <= 0) return 0.0;
  double lo = 0.0, hi = 1.0;
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    (binom_cdf(n, k - 1, mid) >= 0.975 ? lo : hi) = mid;
  }
  return 0.5 * (lo + hi);
}

}  // namespace

TEST_CASE("sample_realization: deterministic model reproduces its support") {
  NetworkModel::BlockMap blocks;
  blocks.emplace(std::make_pair(0, 0),
                 FiniteMatrixDistribution::deterministic(scalar(-1.5)));
  blocks.emplace(std::make_pair(1, 1),
                 FiniteMatrixDistribution::deterministic(scalar(-0.5)));
  blocks.emplace(std::make_pair(0, 1),
                 FiniteMatrixDistribution::deterministic(scalar(0.25)));
  const NetworkModel m = NetworkModel::a1(2, 1, std::move(blocks));
  for (std::uint64_t k = 0; k < 5; ++k) {
    CHECK(sample_realization(m, 17, k) == m.mean_matrix());  // [TRIVIAL]
  }
}

TEST_CASE("sample_realization: Bernoulli frequency within binomial bounds") {
  // [DERIVED: binomial statistics] the hi-branch frequency over 1e5 draws
  // stays within 3 sigma of r for a correct inverse CDF.
  const double r = 0.3;
  const NetworkModel m = bernoulli_node(r);
  long long hits = 0;
  const long long draws = 100000;
  for (long long k = 0; k < draws; ++k) {
    if (sample_realization(m, 123, static_cast<std::uint64_t>(k))(0, 0) == -0.1) {
      ++hits;
    }
  }
  const double freq = static_cast<double>(hits) / static_cast<double>(draws);
  const double sigma = std::sqrt(r * (1.0 - r) / static_cast<double>(draws));
  CHECK(std::abs(freq - r) < 3.0 * sigma);

  // Determinism: the same (seed, draw) always returns the same matrix, and
  // the stream actually varies across draws.
  CHECK(sample_realization(m, 123, 5) == sample_realization(m, 123, 5));
  bool varied = false;
  for (std::uint64_t k = 1; k < 100 && !varied; ++k) {
    varied = sample_realization(m, 123, k) != sample_realization(m, 123, 0);
  }
  CHECK(varied);
}

TEST_CASE("sample_realization: block-rows draw as correlated units") {
  // Row 0 has two support points whose entries are correlated; a sampled
  // realization must be exactly one of them, never a mixture.
  Eigen::MatrixXd row_hi(1, 2), row_lo(1, 2), row_fix(1, 2);
  row_hi << -1.0, 1.0;
  row_lo << -2.0, 3.0;
  row_fix << 0.5, -1.0;
  NetworkModel::RowMap rows;
  rows.emplace(0, FiniteMatrixDistribution::two_point(0.25, row_hi, row_lo));
  rows.emplace(1, FiniteMatrixDistribution::deterministic(row_fix));
  const NetworkModel m = NetworkModel::a2(2, 1, std::move(rows));

  long long hi_count = 0;
  const long long draws = 2000;
  for (long long k = 0; k < draws; ++k) {
    const Eigen::MatrixXd a = sample_realization(m, 9, static_cast<std::uint64_t>(k));
    const bool is_hi = a(0, 0) == -1.0 && a(0, 1) == 1.0;
    const bool is_lo = a(0, 0) == -2.0 && a(0, 1) == 3.0;
    CHECK((is_hi || is_lo));
    CHECK(a(1, 0) == 0.5);
    CHECK(a(1, 1) == -1.0);
    if (is_hi) ++hi_count;
  }
  const double freq = static_cast<double>(hi_count) / static_cast<double>(draws);
  CHECK(std::abs(freq - 0.25) < 3.0 * std::sqrt(0.25 * 0.75 / 2000.0));
}

TEST_CASE("stable_with_rate: trivial, boundary, and convention cases") {
  const Eigen::MatrixXd mi = -Eigen::MatrixXd::Identity(3, 3);
  CHECK(stable_with_rate(mi, 1.0));          // [TRIVIAL] -1 < -0.5
  CHECK_FALSE(stable_with_rate(mi, 2.0));    // [TRIVIAL] boundary is strict
  CHECK(stable_with_rate(mi, 0.0));
  CHECK(stable_with_rate(mi, 0.9, RateConvention::state));   // -1 < -0.9
  CHECK_FALSE(stable_with_rate(mi, 1.0, RateConvention::state));
  CHECK_FALSE(stable_with_rate(mi, 1.0, RateConvention::state) !=
              stable_with_rate(mi, 2.0));  // state at l == lyapunov at 2l

  Eigen::MatrixXd bad(2, 2);
  bad << -1.0, -0.5, 0.0, -1.0;
  CHECK_THROWS_AS(stable_with_rate(bad, 0.5), std::domain_error);
  CHECK_THROWS_AS(stable_with_rate(mi, -0.5), std::invalid_argument);
}

TEST_CASE("stable_with_rate: agrees with eigenvalue and LMI oracles") {
  // [DERIVED: small-scale LMI oracle] on random Metzler samples the verdict
  // matches the spectral abscissa test, and every stable verdict admits the
  // diagonal Lyapunov witness P = diag(u_i / v_i) built from the shifted
  // matrix's positive solves.
  oracle::TestRng rng(2024);
  int stable_seen = 0;
  for (int trial = 0; trial < 200; ++trial) {
    const Eigen::MatrixXd a = oracle::random_metzler(rng, 4, -3.0, 0.5);
    for (double lambda : {0.0, 0.3, 1.0}) {
      const bool got = stable_with_rate(a, lambda);
      const bool want = oracle::eigen_abscissa(a) < -lambda / 2.0;
      CHECK(got == want);
      if (!got) continue;
      ++stable_seen;
      Eigen::MatrixXd shifted = a;
      shifted.diagonal().array() += lambda / 2.0;
      const Eigen::VectorXd ones = Eigen::VectorXd::Constant(4, 1.0);
      const Eigen::VectorXd v = shifted.partialPivLu().solve(-ones);
      const Eigen::VectorXd u = shifted.transpose().partialPivLu().solve(-ones);
      REQUIRE(v.minCoeff() > 0.0);
      REQUIRE(u.minCoeff() > 0.0);
      const Eigen::MatrixXd p = (u.array() / v.array()).matrix().asDiagonal();
      const Eigen::MatrixXd lmi =
          a.transpose() * p + p * a + lambda * p;
      CHECK(oracle::jacobi_eig_max(0.5 * (lmi + lmi.transpose())) < 0.0);
    }
  }
  CHECK(stable_seen > 50);  // the sample actually exercises both branches
}

TEST_CASE("estimate_instability_prob: deterministic endpoints") {
  NetworkModel::BlockMap stable;
  stable.emplace(std::make_pair(0, 0),
                 FiniteMatrixDistribution::deterministic(scalar(-2.0)));
  const McReport ok = estimate_instability_prob(
      NetworkModel::a1(1, 1, std::move(stable)), 1.0, 7, 99);
  CHECK(ok.samples == 7);
  CHECK(ok.failures == 0);   // [TRIVIAL]
  CHECK(ok.p_hat == 0.0);
  CHECK(ok.ci_lower == 0.0);
  // k = 0: exact upper bound is 1 - (alpha/2)^(1/n).
  CHECK(ok.ci_upper == doctest::Approx(1.0 - std::pow(0.025, 1.0 / 7.0))
                           .epsilon(1e-12));
  CHECK(ok.seed == 99);
  CHECK(ok.lambda == 1.0);

  NetworkModel::BlockMap unstable;
  unstable.emplace(std::make_pair(0, 0),
                   FiniteMatrixDistribution::deterministic(scalar(-0.1)));
  const McReport bad = estimate_instability_prob(
      NetworkModel::a1(1, 1, std::move(unstable)), 1.0, 7, 99);
  CHECK(bad.failures == 7);  // [TRIVIAL]
  CHECK(bad.p_hat == 1.0);
  CHECK(bad.ci_upper == 1.0);
  // k = n: exact lower bound is (alpha/2)^(1/n).
  CHECK(bad.ci_lower == doctest::Approx(std::pow(0.025, 1.0 / 7.0))
                            .epsilon(1e-12));
}

TEST_CASE("Clopper-Pearson bounds match exhaustive binomial sums") {
  // [DERIVED: dual route] the shipped beta-quantile bounds against direct
  // bisection on lgamma-based binomial tails, across failure regimes.
  for (double r : {0.05, 0.3, 0.82}) {
    for (std::uint64_t seed : {1ull, 2ull}) {
      const McReport rep =
          estimate_instability_prob(bernoulli_node(r), 1.0, 400, seed);
      CHECK(rep.ci_upper ==
            doctest::Approx(cp_upper_oracle(rep.samples, rep.failures))
                .epsilon(1e-9));
      CHECK(rep.ci_lower ==
            doctest::Approx(cp_lower_oracle(rep.samples, rep.failures))
                .epsilon(1e-9));
      CHECK(rep.ci_lower <= rep.p_hat);
      CHECK(rep.p_hat <= rep.ci_upper);
    }
  }
}

TEST_CASE("estimate_instability_prob: thread count never changes the report") {
  const double r[3] = {0.2, 0.5, 0.7};
  const NetworkModel m = ring3(1.0, 0.85, 0.1, r);
  const McReport one = estimate_instability_prob(m, 0.5, 501, 31, 1);
  for (int threads : {2, 3, 8}) {
    const McReport many = estimate_instability_prob(m, 0.5, 501, 31, threads);
    CHECK(many.failures == one.failures);
    CHECK(many.p_hat == one.p_hat);
    CHECK(many.ci_lower == one.ci_lower);
    CHECK(many.ci_upper == one.ci_upper);
  }
  CHECK_THROWS_AS(estimate_instability_prob(m, 0.5, 0, 31),
                  std::invalid_argument);
  CHECK_THROWS_AS(estimate_instability_prob(m, 0.5, 10, 31, 0),
                  std::invalid_argument);
}

TEST_CASE("brute_force_prob: single destabilizing Bernoulli block equals r") {
  // [TRIVIAL: single-event] the hi branch fails rate 1, the lo branch holds.
  CHECK(brute_force_prob(bernoulli_node(0.37), 1.0) == doctest::Approx(0.37).epsilon(1e-14));
  CHECK(brute_force_prob(bernoulli_node(0.37), 5.0) == 1.0);  // both fail
  NetworkModel::BlockMap det;
  det.emplace(std::make_pair(0, 0),
              FiniteMatrixDistribution::deterministic(scalar(-2.0)));
  CHECK(brute_force_prob(NetworkModel::a1(1, 1, std::move(det)), 1.0) == 0.0);
}

TEST_CASE("brute_force_prob: three-edge ring against hand enumeration") {
  // [DERIVED: hand enumeration] the ring abscissa is cbrt(b1 b2 b3) - delta,
  // so the 8 joint outcomes can be classified without any matrix code.
  const double r[3] = {0.2, 0.5, 0.7};
  const double hi = 0.85, lo = 0.1, delta = 1.0;
  const NetworkModel m = ring3(delta, hi, lo, r);
  for (double lambda : {0.5, 1.2}) {
    double want = 0.0;
    for (int mask = 0; mask < 8; ++mask) {
      double weight = 1.0, product = 1.0;
      for (int e = 0; e < 3; ++e) {
        const bool take_hi = mask & (1 << e);
        weight *= take_hi ? r[e] : 1.0 - r[e];
        product *= take_hi ? hi : lo;
      }
      if (std::cbrt(product) - delta >= -lambda / 2.0) want += weight;
    }
    CHECK(brute_force_prob(m, lambda) == doctest::Approx(want).epsilon(1e-12));
    // A2 conversion preserves the joint distribution, hence the probability.
    CHECK(brute_force_prob(model::to_a2(m), lambda) ==
          doctest::Approx(want).epsilon(1e-12));
  }
  // At lambda = 0.5 only the all-hi outcome fails: probability r1 r2 r3.
  CHECK(brute_force_prob(m, 0.5) == doctest::Approx(0.2 * 0.5 * 0.7).epsilon(1e-12));
}

TEST_CASE("brute_force_prob: support overflow names the joint size") {
  const double r[3] = {0.2, 0.5, 0.7};
  const NetworkModel m = ring3(1.0, 0.85, 0.1, r);
  CHECK_THROWS_WITH_AS(brute_force_prob(m, 0.5, 4),
                       doctest::Contains("8 exceeds cap 4"), std::length_error);
}

TEST_CASE("estimate_instability_prob: CI covers the enumerated truth") {
  // [DERIVED: enumeration oracle] tiny model, exact probability known.
  const double r[3] = {0.2, 0.5, 0.7};
  const NetworkModel m = ring3(1.0, 0.85, 0.1, r);
  const double exact = brute_force_prob(m, 0.5);
  const McReport rep = estimate_instability_prob(m, 0.5, 4000, 11);
  CHECK(rep.ci_lower <= exact);
  CHECK(exact <= rep.ci_upper);
  CHECK(std::abs(rep.p_hat - exact) < 0.02);
}

TEST_CASE("montecarlo: certificates are sound against enumeration") {
  // The headline invariant on one enumerable model: eps* from the
  // certificate search upper-bounds the exact instability probability.
  // Small non-prevention rates keep the tail certifiable while the all-hi
  // outcome still fails the rate, so both sides are nontrivial.
  const double r[3] = {0.1, 0.15, 0.2};
  const NetworkModel m = ring3(1.0, 0.85, 0.05, r);
  const double lambda = 0.5;
  const certify::MinEpsResult res = certify::min_unreliability(m, lambda);
  REQUIRE_FALSE(res.uncertifiable);
  CHECK(res.eps_star < 1.0);
  CHECK(brute_force_prob(m, lambda) <= res.eps_star * (1.0 + 1e-9));
}

TEST_CASE("montecarlo: report serialization") {
  NetworkModel::BlockMap det;
  det.emplace(std::make_pair(0, 0),
              FiniteMatrixDistribution::deterministic(scalar(-2.0)));
  const McReport rep = estimate_instability_prob(
      NetworkModel::a1(1, 1, std::move(det)), 0.25, 4, 12345);
  const nlohmann::json j = mc_report_json(rep);
  CHECK(j.at("samples").get<long long>() == 4);
  CHECK(j.at("failures").get<long long>() == 0);
  CHECK(j.at("p_hat").get<double>() == 0.0);
  CHECK(j.at("ci_lower").get<double>() == 0.0);
  CHECK(j.at("ci_upper").get<double>() == rep.ci_upper);
  CHECK(j.at("seed").get<std::uint64_t>() == 12345);
  CHECK(j.at("lambda").get<double>() == 0.25);

  const std::string csv = mc_report_csv(rep);
  const std::string want =
      "samples,failures,p_hat,ci_lower,ci_upper,seed,lambda\n4,0,0,0," +
      [&] {
        char buf[40];
        std::snprintf(buf, sizeof buf, "%.12g", rep.ci_upper);
        return std::string(buf);
      }() +
      ",12345,0.25\n";
  CHECK(csv == want);
}
