#include "posnet/sis.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <optional>
#include <stdexcept>
#include <string>
#include <tuple>
#include <utility>
#include <vector>

#include "posnet/certify.hpp"
#include "posnet/gpsolve.hpp"
#include "posnet/linalg.hpp"
#include "posnet/policy.hpp"
#include "posnet/rng.hpp"

namespace posnet::sis {

namespace {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using gpsolve::Monomial;
using gpsolve::Posynomial;
using model::FiniteMatrixDistribution;
using model::NetworkModel;

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("sis: " + msg);
}

std::string num(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void check_probability(double r, const std::string& what) {
  if (!(r >= 0.0 && r <= 1.0)) {
    fail(what + " = " + num(r) + " outside [0, 1]");
  }
}

// Adjacency must be a square 0/1 matrix with a zero diagonal (no
// self-loops); entry (i, j) = 1 is a transmission link from node j into
// node i. Messages use 1-based indices like the file formats.
void check_adjacency(const MatrixXd& a_g) {
  if (a_g.rows() != a_g.cols() || a_g.rows() < 1) {
    fail("adjacency must be square and nonempty");
  }
  for (int i = 0; i < a_g.rows(); ++i) {
    for (int j = 0; j < a_g.cols(); ++j) {
      const double v = a_g(i, j);
      if (v != 0.0 && v != 1.0) {
        fail("adjacency entries must be 0 or 1 (entry (" +
             std::to_string(i + 1) + ", " + std::to_string(j + 1) +
             ") = " + num(v) + ")");
      }
      if (i == j && v != 0.0) {
        fail("adjacency diagonal must be zero (entry (" +
             std::to_string(i + 1) + ", " + std::to_string(i + 1) + "))");
      }
    }
  }
}

void check_params(const MatrixXd& a_g, const SisParams& params) {
  check_adjacency(a_g);
  if (params.N != a_g.rows()) {
    fail("params.N = " + std::to_string(params.N) +
         " does not match adjacency size " + std::to_string(a_g.rows()));
  }
  if (!(params.delta > 0.0) || !std::isfinite(params.delta)) {
    fail("recovery rate delta must be positive");
  }
  if (!(params.beta_lo >= 0.0) || !(params.beta_hi >= params.beta_lo) ||
      !std::isfinite(params.beta_hi)) {
    fail("transmission rates need 0 <= beta_lo <= beta_hi");
  }
}

MatrixXd scalar_block(double v) {
  MatrixXd m(1, 1);
  m << v;
  return m;
}

// Unreliability of the certificate family at a fixed scaling p, the closed
// form nN exp(-3 / t(p)) with t = 2 delta / a + 6 sigma^2 / a^2, clamped to
// [kEpsFloor, 1]; 1 when p does not certify the mean at rate lambda.
double pooled_eps(const NetworkModel& m, const VectorXd& p, double lambda) {
  const double a = certify::a_max(m, p, lambda);
  if (!(a > 0.0)) return 1.0;
  const auto [delta, sigma] = certify::delta_sigma_a1(m, p);
  const double t = 2.0 * delta / a + 6.0 * sigma * sigma / (a * a);
  const double nn = static_cast<double>(m.global_dim());
  const double eps = t <= 0.0 ? 0.0 : nn * std::exp(-3.0 / t);
  return std::clamp(eps, policy::kEpsFloor, 1.0);
}

// Warm-started grid points need far fewer coordinate-descent sweeps than
// the first (cold) point; the final pool re-scoring recovers anything a
// truncated search leaves on the table.
constexpr int kWarmSweeps = 12;
constexpr double kWarmStep = 0.12;
constexpr double kPoolDupTol = 1e-9;

}  // namespace

Protection Protection::uniform(double r) {
  check_probability(r, "protection probability r");
  Protection p;
  p.kind_ = Kind::uniform;
  p.scalar_ = r;
  return p;
}

Protection Protection::per_node(VectorXd r) {
  for (int i = 0; i < r.size(); ++i) {
    check_probability(r(i), "protection probability r_" + std::to_string(i + 1));
  }
  Protection p;
  p.kind_ = Kind::per_node;
  p.node_ = std::move(r);
  return p;
}

Protection Protection::per_edge(MatrixXd r) {
  for (int i = 0; i < r.rows(); ++i) {
    for (int j = 0; j < r.cols(); ++j) {
      check_probability(r(i, j), "protection probability r(" +
                                     std::to_string(i + 1) + ", " +
                                     std::to_string(j + 1) + ")");
    }
  }
  Protection p;
  p.kind_ = Kind::per_edge;
  p.edge_ = std::move(r);
  return p;
}

double Protection::operator()(int i, int j) const {
  switch (kind_) {
    case Kind::uniform:
      return scalar_;
    case Kind::per_node:
      if (i < 0 || i >= node_.size()) {
        fail("per-node protection has " + std::to_string(node_.size()) +
             " entries but node " + std::to_string(i + 1) + " was requested");
      }
      return node_(i);
    case Kind::per_edge:
      if (i < 0 || j < 0 || i >= edge_.rows() || j >= edge_.cols()) {
        fail("per-edge protection is " + std::to_string(edge_.rows()) + " x " +
             std::to_string(edge_.cols()) + " but link (" +
             std::to_string(i + 1) + ", " + std::to_string(j + 1) +
             ") was requested");
      }
      return edge_(i, j);
  }
  fail("corrupt protection kind");
}

MatrixXd erdos_renyi(int N, double p, std::uint64_t seed) {
  if (N < 1) fail("node count must be positive");
  check_probability(p, "edge probability p");
  MatrixXd a = MatrixXd::Zero(N, N);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      if (i == j) continue;
      if (rng::uniform01(seed, static_cast<std::uint64_t>(i),
                         static_cast<std::uint64_t>(j), 0) < p) {
        a(i, j) = 1.0;
      }
    }
  }
  return a;
}

SisParams calibrated_params(const MatrixXd& a_g, double edge_prob,
                            Protection r, std::uint64_t seed) {
  check_adjacency(a_g);
  const double lmax = linalg::perron_value(a_g);
  if (!(lmax > 0.0)) {
    fail("calibration requires lambda_max(A_G) > 0 (got " + num(lmax) + ")");
  }
  SisParams params;
  params.N = static_cast<int>(a_g.rows());
  params.edge_prob = edge_prob;
  params.delta = 1.0;
  params.beta_hi = 1.1 / lmax;
  params.beta_lo = 0.1 / lmax;
  params.r = std::move(r);
  params.seed = seed;
  return params;
}

NetworkModel build_sis_model(const MatrixXd& a_g, const SisParams& params) {
  check_params(a_g, params);
  const int N = params.N;
  NetworkModel::BlockMap blocks;
  const MatrixXd recovery = scalar_block(-params.delta);
  const MatrixXd hi = scalar_block(params.beta_hi);
  const MatrixXd lo = scalar_block(params.beta_lo);
  for (int i = 0; i < N; ++i) {
    blocks.emplace(std::make_pair(i, i),
                   FiniteMatrixDistribution::deterministic(recovery));
    for (int j = 0; j < N; ++j) {
      if (a_g(i, j) == 0.0) continue;
      const double r = params.r(i, j);
      if (r >= 1.0) {
        blocks.emplace(std::make_pair(i, j),
                       FiniteMatrixDistribution::deterministic(hi));
      } else if (r <= 0.0) {
        blocks.emplace(std::make_pair(i, j),
                       FiniteMatrixDistribution::deterministic(lo));
      } else {
        blocks.emplace(std::make_pair(i, j),
                       FiniteMatrixDistribution::two_point(r, hi, lo));
      }
    }
  }
  return NetworkModel::a1(N, 1, std::move(blocks));
}

design::DesignFamily sis_design_family(const MatrixXd& a_g,
                                       const SisParams& params,
                                       double cost_bound, double eps_bound) {
  check_params(a_g, params);
  if (!(cost_bound > 0.0) || !std::isfinite(cost_bound)) {
    fail("cost bound must be positive");
  }
  if (!(eps_bound > 0.0 && eps_bound < 1.0)) {
    fail("eps bound must lie in (0, 1)");
  }
  const int N = params.N;
  const double dbeta = params.beta_hi - params.beta_lo;

  design::DesignFamily family;
  family.N = N;
  family.n = 1;
  family.m_params = N;
  family.mode = model::IndependenceMode::a1;
  family.mean_plus = design::PosyMatrix(N, N);
  for (int i = 0; i < N; ++i) {
    family.mean_minus[i] = Monomial{params.delta, {}};
    const std::string ri = "r" + std::to_string(i + 1);
    for (int j = 0; j < N; ++j) {
      if (i == j || a_g(i, j) == 0.0) continue;
      Posynomial mean;
      if (params.beta_lo > 0.0) mean.terms.push_back({params.beta_lo, {}});
      if (dbeta > 0.0) mean.terms.push_back({dbeta, {{ri, 1.0}}});
      family.mean_plus.set(i, j, mean);
      if (dbeta > 0.0) {
        family.eta[{i, j}] = Posynomial::from(Monomial{dbeta, {}});
        design::PosyMatrix second(1, 1);
        second.set(0, 0, Posynomial::from(Monomial{dbeta * dbeta, {{ri, 1.0}}}));
        family.phi[{i, j}] = second;
        family.psi[{i, j}] = second;
      }
    }
    family.cost.terms.push_back({1.0, {{ri, -1.0}}});
  }
  family.cost_bound = cost_bound;
  family.ineq_constraints.push_back(Posynomial::from(
      Monomial{std::log(static_cast<double>(N) / eps_bound), {{"rho", -1.0}}}));

  SisParams base = params;
  family.realize = [a_g, base](const VectorXd& r) {
    SisParams concrete = base;
    concrete.r = Protection::per_node(r);
    return build_sis_model(a_g, concrete);
  };
  return family;
}

std::vector<Fig1Row> fig1_sweep(const MatrixXd& a_g, const SisParams& params,
                                std::vector<double> lambda_grid,
                                std::vector<double> r_grid) {
  check_params(a_g, params);
  if (lambda_grid.empty() || r_grid.empty()) fail("sweep grids must be nonempty");
  for (double l : lambda_grid) {
    if (!std::isfinite(l) || l < 0.0) {
      fail("lambda grid entry " + num(l) + " must be finite and nonnegative");
    }
  }
  for (double r : r_grid) check_probability(r, "r grid entry");
  std::sort(lambda_grid.begin(), lambda_grid.end());
  std::sort(r_grid.begin(), r_grid.end());
  const int R = static_cast<int>(r_grid.size());
  const int L = static_cast<int>(lambda_grid.size());

  std::vector<NetworkModel> models;
  models.reserve(R);
  for (double r : r_grid) {
    SisParams point = params;
    point.r = Protection::uniform(r);
    models.push_back(build_sis_model(a_g, point));
  }

  std::vector<VectorXd> pool;
  auto add_pool = [&pool](const VectorXd& p) {
    for (const VectorXd& q : pool) {
      if ((q - p).cwiseAbs().maxCoeff() <= kPoolDupTol) return;
    }
    pool.push_back(p);
  };

  // Search every grid point, warming each from its (r, lambda) neighbors so
  // only the very first point pays for a cold multi-start descent.
  std::vector<std::vector<std::optional<VectorXd>>> witness(
      R, std::vector<std::optional<VectorXd>>(L));
  for (int ri = 0; ri < R; ++ri) {
    for (int li = 0; li < L; ++li) {
      certify::SearchOptions opts;
      opts.bisection_check = false;
      if (!pool.empty()) {
        opts.max_sweeps = kWarmSweeps;
        opts.init_step = kWarmStep;
        opts.skip_default_starts = true;
        if (li > 0 && witness[ri][li - 1]) {
          opts.warm_starts.push_back(*witness[ri][li - 1]);
        }
        if (ri > 0 && witness[ri - 1][li]) {
          opts.warm_starts.push_back(*witness[ri - 1][li]);
        }
        if (opts.warm_starts.empty()) {
          const int take = std::min<int>(2, static_cast<int>(pool.size()));
          opts.warm_starts.assign(pool.end() - take, pool.end());
        }
      }
      const certify::MinEpsResult point =
          certify::min_unreliability(models[ri], lambda_grid[li], opts);
      if (point.witness) {
        witness[ri][li] = point.witness->p;
        add_pool(point.witness->p);
      }
    }
  }

  // Re-score every grid point against the shared pool with one evaluator
  // and report the minimum: each pooled candidate's unreliability is
  // nondecreasing in lambda, so the reported table is too.
  std::vector<Fig1Row> rows;
  rows.reserve(static_cast<std::size_t>(R) * L);
  for (int ri = 0; ri < R; ++ri) {
    for (int li = 0; li < L; ++li) {
      double best = 1.0;
      for (const VectorXd& p : pool) {
        best = std::min(best, pooled_eps(models[ri], p, lambda_grid[li]));
      }
      rows.push_back({r_grid[ri], lambda_grid[li], best});
    }
  }
  std::sort(rows.begin(), rows.end(), [](const Fig1Row& x, const Fig1Row& y) {
    return std::tie(x.r, x.lambda, x.eps_star) <
           std::tie(y.r, y.lambda, y.eps_star);
  });
  return rows;
}

Fig2Result fig2_run(const MatrixXd& a_g, const SisParams& params,
                    double cost_bound, double eps_bound) {
  Fig2Result out;
  const design::DesignFamily family =
      sis_design_family(a_g, params, cost_bound, eps_bound);
  out.design = design::solve_design(family, design::EpsMode::free_eps);
  out.rows.reserve(params.N);
  for (int i = 0; i < params.N; ++i) {
    Fig2Row row;
    row.node = i + 1;
    row.in_degree = static_cast<int>(std::lround(a_g.row(i).sum()));
    row.r_star = out.design.r_star(i);
    out.rows.push_back(row);
  }
  return out;
}

std::string fig1_csv(std::vector<Fig1Row> rows) {
  std::sort(rows.begin(), rows.end(), [](const Fig1Row& x, const Fig1Row& y) {
    return std::tie(x.r, x.lambda, x.eps_star) <
           std::tie(y.r, y.lambda, y.eps_star);
  });
  std::string out = "r,lambda,eps_star\n";
  for (const Fig1Row& row : rows) {
    out += num(row.r) + "," + num(row.lambda) + "," + num(row.eps_star) + "\n";
  }
  return out;
}

std::string fig2_csv(std::vector<Fig2Row> rows) {
  std::sort(rows.begin(), rows.end(), [](const Fig2Row& x, const Fig2Row& y) {
    return std::tie(x.node, x.in_degree, x.r_star) <
           std::tie(y.node, y.in_degree, y.r_star);
  });
  std::string out = "node,in_degree,r_star\n";
  for (const Fig2Row& row : rows) {
    out += std::to_string(row.node) + "," + std::to_string(row.in_degree) +
           "," + num(row.r_star) + "\n";
  }
  return out;
}

namespace {
void write_text(const std::string& text, const std::string& path,
                const std::string& who) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error(who + ": cannot open " + path);
  out << text;
  out.flush();
  if (!out) throw std::runtime_error(who + ": write failed for " + path);
}
}  // namespace

void write_fig1_csv(const std::vector<Fig1Row>& rows, const std::string& path) {
  write_text(fig1_csv(rows), path, "write_fig1_csv");
}

void write_fig2_csv(const std::vector<Fig2Row>& rows, const std::string& path) {
  write_text(fig2_csv(rows), path, "write_fig2_csv");
}

}  // namespace posnet::sis
