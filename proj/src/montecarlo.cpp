#include "posnet/montecarlo.hpp"

#include <boost/math/distributions/beta.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "posnet/linalg.hpp"
#include "posnet/rng.hpp"

namespace posnet::montecarlo {

namespace {

using model::FiniteMatrixDistribution;
using model::NetworkModel;

// Inverse CDF over the stored support order; the final point absorbs any
// 1e-12-scale weight-sum slack so every u in [0, 1) selects something.
const Eigen::MatrixXd& pick(const FiniteMatrixDistribution& dist, double u) {
  double cum = 0.0;
  const auto& support = dist.support();
  for (const auto& sp : support) {
    cum += sp.weight;
    if (u < cum) return sp.matrix;
  }
  return support.back().matrix;
}

void place_block(Eigen::MatrixXd& a, int n, int i, int j,
                 const Eigen::MatrixXd& block) {
  a.block(static_cast<Eigen::Index>(i) * n, static_cast<Eigen::Index>(j) * n,
          block.rows(), block.cols()) = block;
}

double shift_for(double lambda, RateConvention convention) {
  if (!std::isfinite(lambda) || lambda < 0.0) {
    throw std::invalid_argument(
        "stable_with_rate: lambda must be finite and nonnegative");
  }
  return convention == RateConvention::lyapunov ? 0.5 * lambda : lambda;
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

}  // namespace

Eigen::MatrixXd sample_realization(const NetworkModel& m, std::uint64_t seed,
                                   std::uint64_t draw_index) {
  const int n = m.dim();
  const int dim = m.global_dim();
  Eigen::MatrixXd a = Eigen::MatrixXd::Zero(dim, dim);
  if (m.mode() == model::IndependenceMode::a1) {
    for (const auto& [key, dist] : m.blocks()) {
      const auto [i, j] = key;
      const double u =
          rng::uniform01(seed, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(j), draw_index + 1);
      place_block(a, n, i, j, pick(dist, u));
    }
  } else {
    for (const auto& [i, dist] : m.rows()) {
      const double u = rng::uniform01(seed, static_cast<std::uint64_t>(i), 0,
                                      draw_index + 1);
      place_block(a, n, i, 0, pick(dist, u));
    }
  }
  return a;
}

bool stable_with_rate(const Eigen::MatrixXd& a, double lambda,
                      RateConvention convention) {
  const double shift = shift_for(lambda, convention);
  if (a.rows() != a.cols() || a.rows() == 0) {
    throw std::domain_error("stable_with_rate: matrix must be square");
  }
  if (!linalg::is_metzler(a)) {
    throw std::domain_error("stable_with_rate: matrix is not Metzler");
  }
  Eigen::MatrixXd shifted = a;
  shifted.diagonal().array() += shift;
  return linalg::metzler_is_hurwitz(shifted);
}

McReport estimate_instability_prob(const NetworkModel& m, double lambda,
                                   long long samples, std::uint64_t seed,
                                   int threads, RateConvention convention) {
  shift_for(lambda, convention);  // validates lambda up front
  if (samples < 1) {
    throw std::invalid_argument(
        "estimate_instability_prob: samples must be positive");
  }
  if (threads < 1) {
    throw std::invalid_argument(
        "estimate_instability_prob: threads must be positive");
  }
  threads = static_cast<int>(
      std::min<long long>(threads, samples));

  // Draw k depends only on (seed, k): any partition of the index range
  // yields the same failure count, so the report is schedule-independent.
  std::atomic<long long> failures{0};
  auto worker = [&](long long lo, long long hi) {
    long long local = 0;
    for (long long k = lo; k < hi; ++k) {
      const Eigen::MatrixXd a =
          sample_realization(m, seed, static_cast<std::uint64_t>(k));
      if (!stable_with_rate(a, lambda, convention)) ++local;
    }
    failures += local;
  };
  if (threads == 1) {
    worker(0, samples);
  } else {
    std::vector<std::thread> pool;
    pool.reserve(threads);
    const long long chunk = (samples + threads - 1) / threads;
    for (int t = 0; t < threads; ++t) {
      const long long lo = t * chunk;
      const long long hi = std::min<long long>(samples, lo + chunk);
      if (lo >= hi) break;
      pool.emplace_back(worker, lo, hi);
    }
    for (std::thread& th : pool) th.join();
  }

  McReport report;
  report.samples = samples;
  report.failures = failures.load();
  report.p_hat =
      static_cast<double>(report.failures) / static_cast<double>(samples);
  report.seed = seed;
  report.lambda = lambda;

  // Exact Clopper-Pearson two-sided 95% interval via beta quantiles.
  const double alpha = 0.05;
  const double k = static_cast<double>(report.failures);
  const double nn = static_cast<double>(samples);
  if (report.failures == 0) {
    report.ci_lower = 0.0;
  } else {
    boost::math::beta_distribution<double> lo(k, nn - k + 1.0);
    report.ci_lower = boost::math::quantile(lo, alpha / 2.0);
  }
  if (report.failures == samples) {
    report.ci_upper = 1.0;
  } else {
    boost::math::beta_distribution<double> hi(k + 1.0, nn - k);
    report.ci_upper = boost::math::quantile(hi, 1.0 - alpha / 2.0);
  }
  return report;
}

double brute_force_prob(const NetworkModel& m, double lambda,
                        unsigned long long cap, RateConvention convention) {
  shift_for(lambda, convention);  // validates lambda up front

  // Collect the independent pieces in deterministic (map) order.
  struct Piece {
    int i = 0;
    int j = 0;
    const FiniteMatrixDistribution* dist = nullptr;
  };
  std::vector<Piece> pieces;
  if (m.mode() == model::IndependenceMode::a1) {
    for (const auto& [key, dist] : m.blocks()) {
      pieces.push_back({key.first, key.second, &dist});
    }
  } else {
    for (const auto& [i, dist] : m.rows()) pieces.push_back({i, 0, &dist});
  }

  // Name the full joint size in the error even when it would overflow the
  // counter (long double holds the magnitude fine).
  long double joint = 1.0L;
  for (const Piece& piece : pieces) {
    joint *= static_cast<long double>(piece.dist->support().size());
  }
  if (joint > static_cast<long double>(cap)) {
    std::string size_text;
    if (joint < 1e18L) {
      size_text = std::to_string(static_cast<unsigned long long>(joint));
    } else {
      char buf[48];
      std::snprintf(buf, sizeof buf, "%.6Lg", joint);
      size_text = buf;
    }
    throw std::length_error("brute_force_prob: joint support size " +
                            size_text + " exceeds cap " + std::to_string(cap));
  }

  const int n = m.dim();
  const int dim = m.global_dim();
  std::vector<std::size_t> index(pieces.size(), 0);
  double prob = 0.0;
  Eigen::MatrixXd a(dim, dim);
  while (true) {
    a.setZero();
    double weight = 1.0;
    for (std::size_t b = 0; b < pieces.size(); ++b) {
      const auto& sp = pieces[b].dist->support()[index[b]];
      weight *= sp.weight;
      place_block(a, n, pieces[b].i, pieces[b].j, sp.matrix);
    }
    if (!stable_with_rate(a, lambda, convention)) prob += weight;

    std::size_t b = 0;
    for (; b < pieces.size(); ++b) {
      if (++index[b] < pieces[b].dist->support().size()) break;
      index[b] = 0;
    }
    if (b == pieces.size()) break;
  }
  return prob;
}

nlohmann::json mc_report_json(const McReport& report) {
  return nlohmann::json{{"samples", report.samples},
                        {"failures", report.failures},
                        {"p_hat", report.p_hat},
                        {"ci_lower", report.ci_lower},
                        {"ci_upper", report.ci_upper},
                        {"seed", report.seed},
                        {"lambda", report.lambda}};
}

std::string mc_report_csv(const McReport& report) {
  std::string out = "samples,failures,p_hat,ci_lower,ci_upper,seed,lambda\n";
  out += std::to_string(report.samples) + "," +
         std::to_string(report.failures) + "," + num(report.p_hat) + "," +
         num(report.ci_lower) + "," + num(report.ci_upper) + "," +
         std::to_string(report.seed) + "," + num(report.lambda) + "\n";
  return out;
}

}  // namespace posnet::montecarlo
