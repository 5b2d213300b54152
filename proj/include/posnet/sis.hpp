#pragma once

// Networked susceptible-infected-susceptible case study: an Erdos-Renyi
// contact graph, the positive linearization dx/dt = (B - D) x with Bernoulli
// link protection (each present link transmits at its natural rate beta_hi
// with probability r, at the protected rate beta_lo otherwise), the analysis
// sweep (minimum unreliability over an (r, lambda) grid) and the budgeted
// protection design run.

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "posnet/design.hpp"
#include "posnet/model.hpp"

namespace posnet::sis {

// Non-prevention probabilities: r(i, j) is the chance that link (i, j) (an
// edge from transmitter j into receiver i) keeps its natural rate. Stored as
// a uniform scalar, one value per receiving node (r_ij = r_i), or a full
// per-edge matrix. Values live in [0, 1]; the endpoints are accepted and
// collapse the link to a deterministic rate.
class Protection {
 public:
  static Protection uniform(double r);
  static Protection per_node(Eigen::VectorXd r);  // r_ij = r_i (receiver)
  static Protection per_edge(Eigen::MatrixXd r);

  // Value for link (i, j); validates stored sizes against the index and the
  // [0, 1] range, naming the offending entry.
  double operator()(int i, int j) const;

 private:
  enum class Kind { uniform, per_node, per_edge };
  Kind kind_ = Kind::uniform;
  double scalar_ = 1.0;
  Eigen::VectorXd node_;
  Eigen::MatrixXd edge_;
};

struct SisParams {
  int N = 0;                             // nodes
  double edge_prob = 0.0;                // diedge probability of the graph
  double delta = 1.0;                    // recovery rate
  double beta_hi = 0.0;                  // natural transmission rate
  double beta_lo = 0.0;                  // protected transmission rate
  Protection r = Protection::uniform(1.0);
  std::uint64_t seed = 0;
};

// Directed Erdos-Renyi adjacency in {0,1}^{N x N}: each ordered pair (i, j),
// i != j, is included independently with probability p; no self-loops. The
// draw for pair (i, j) is rng::uniform01(seed, i, j, 0), so the matrix is a
// pure function of (N, p, seed).
Eigen::MatrixXd erdos_renyi(int N, double p, std::uint64_t seed);

// Parameters pinned to the graph scale: delta = 1, beta_hi = 1.1 / lmax,
// beta_lo = 0.1 / lmax with lmax the Perron value of A_G, so the unprotected
// mean system beta_hi * A_G - I has instability margin exactly 0.1. Requires
// lmax > 0.
SisParams calibrated_params(const Eigen::MatrixXd& a_g, double edge_prob,
                            Protection r, std::uint64_t seed);

// Independent-block model (A1, n = 1): diagonal blocks deterministic
// {-delta}, block (i, j) present iff a_ij = 1 and two-point
// {(r_ij, beta_hi), (1 - r_ij, beta_lo)}. r_ij in {0, 1} or beta_hi =
// beta_lo produce deterministic blocks.
model::NetworkModel build_sis_model(const Eigen::MatrixXd& a_g,
                                    const SisParams& params);

// Design family over per-node non-prevention probabilities r_1..r_N:
//   E[A+](i,j) = a_ij (beta_lo + r_i (beta_hi - beta_lo)),  E[A-] = delta I,
//   eta_ij = a_ij (beta_hi - beta_lo),
//   Phi_ij = Psi_ij = a_ij r_i (beta_hi - beta_lo)^2,
//   cost  sum_i 1/r_i <= cost_bound,
//   unreliability bound as the monomial constraint log(nN/eps_bound)/rho <= 1.
// params.r is ignored (the probabilities are the design variables).
design::DesignFamily sis_design_family(const Eigen::MatrixXd& a_g,
                                       const SisParams& params,
                                       double cost_bound,
                                       double eps_bound = 0.2);

struct Fig1Row {
  double r = 0.0;
  double lambda = 0.0;
  double eps_star = 1.0;
};

// Minimum unreliability over the (r, lambda) grid with r uniform per point
// (params.r is ignored). Grid points share a pool of searched scalings p:
// after the per-point searches, every point is re-scored against the whole
// pool with one evaluator and reports the pool minimum, which makes the
// table monotone in lambda by construction (each pooled candidate is) and
// lets warm-started points run much cheaper searches than the first one.
// Rows are sorted by (r, lambda). Uncertifiable points report eps_star = 1.
std::vector<Fig1Row> fig1_sweep(const Eigen::MatrixXd& a_g,
                                const SisParams& params,
                                std::vector<double> lambda_grid,
                                std::vector<double> r_grid);

struct Fig2Row {
  int node = 0;  // 1-based
  int in_degree = 0;
  double r_star = 1.0;
};

struct Fig2Result {
  std::vector<Fig2Row> rows;  // sorted by node
  design::DesignResult design;
};

// Budgeted protection design: solve_design on sis_design_family, reported
// per node against the in-degree (the number of incoming links, row sums of
// the adjacency).
Fig2Result fig2_run(const Eigen::MatrixXd& a_g, const SisParams& params,
                    double cost_bound, double eps_bound = 0.2);

// CSV tables, header row mandatory, 12 significant digits, rows sorted by
// (r, lambda) / by node.
std::string fig1_csv(std::vector<Fig1Row> rows);
std::string fig2_csv(std::vector<Fig2Row> rows);
void write_fig1_csv(const std::vector<Fig1Row>& rows, const std::string& path);
void write_fig2_csv(const std::vector<Fig2Row>& rows, const std::string& path);

}  // namespace posnet::sis
