#pragma once

// Distribution design: given a family of network models whose means and
// moment surrogates are posynomial functions of design parameters r, build
// the geometric program that maximizes the certifiable decay rate lambda
// subject to the certificate constraints and a resource budget, solve it,
// and close the surrogate gap by re-certifying the realized concrete model
// at the optimum.

#include <Eigen/Dense>
#include <functional>
#include <json.hpp>
#include <map>
#include <utility>
#include <vector>

#include "posnet/certify.hpp"
#include "posnet/gpsolve.hpp"
#include "posnet/model.hpp"
#include "posnet/policy.hpp"

namespace posnet::design {

using model::IndependenceMode;
using model::NetworkModel;

// Sparse matrix with posynomial entries (absent = zero). Indices 0-based.
struct PosyMatrix {
  int rows = 0;
  int cols = 0;
  std::map<std::pair<int, int>, gpsolve::Posynomial> entries;

  PosyMatrix() = default;
  PosyMatrix(int r, int c) : rows(r), cols(c) {}

  // Stores a simplified entry; zero posynomials are erased, not stored.
  void set(int r, int c, const gpsolve::Posynomial& p);
  // nullptr when the entry is absent (i.e. identically zero).
  const gpsolve::Posynomial* find(int r, int c) const;
  bool empty() const { return entries.empty(); }
};

// A parametrized family of positive network models. Posynomial entries are
// functions of the design variables "r1".."rm" (and optionally "rho"); the
// solver additionally owns the names "a", "Delta", "sigma", "rho", "lambda",
// "p1".."pN", "v1".."v{nN}" and "w..." which families must not declare.
//
// Mode a1 uses eta/phi/psi keyed by edge (i,j); mode a2 uses eta_i/phi_i
// keyed by block-row i. `realize` instantiates the concrete NetworkModel at
// a parameter vector (used for post-verification and downstream analysis).
struct DesignFamily {
  int N = 0;         // number of subsystems
  int n = 1;         // subsystem dimension
  int m_params = 0;  // number of design parameters r
  IndependenceMode mode = IndependenceMode::a1;

  PosyMatrix mean_plus;                            // nN x nN, E[A+](r)
  std::map<int, gpsolve::Monomial> mean_minus;     // global diag k -> monomial
  std::map<std::pair<int, int>, gpsolve::Posynomial> eta;  // a1: edge bounds
  std::map<std::pair<int, int>, PosyMatrix> phi;   // a1: n x n  Phi_ij(r)
  std::map<std::pair<int, int>, PosyMatrix> psi;   // a1: n x n  Psi_ij(r)
  std::vector<gpsolve::Posynomial> eta_i;          // a2: row bounds (size N)
  std::vector<PosyMatrix> phi_i;                   // a2: nN x nN (size N)

  gpsolve::Posynomial cost;  // R(r, rho); zero => unbudgeted
  double cost_bound = 0.0;   // R-bar, required positive when cost is nonzero
  std::vector<gpsolve::Posynomial> ineq_constraints;  // f_k(r, rho) <= 1
  std::vector<gpsolve::Posynomial> eq_constraints;    // monomial g(r,rho) = 1
  Eigen::VectorXd r_lo, r_hi;  // boxes; empty => defaults [1e-4, 1]

  std::function<NetworkModel(const Eigen::VectorXd&)> realize;
};

enum class EpsMode { free_eps, fixed_eps };

struct DesignResult {
  Eigen::VectorXd r_star;
  double lambda_star = 0.0;
  double rho_star = 0.0;
  double eps_star = 1.0;  // nN e^{-rho*}, in (0, 1]
  Eigen::VectorXd p_star;
  double a = 0.0;
  double delta = 0.0;  // 0 when the family declares no eta
  double sigma = 0.0;  // 0 when the family declares no phi/psi
  Eigen::VectorXd v;                // Perron-like witness, size nN
  Eigen::MatrixXd w;                // a1: n x N (column i = w_i); a2: nN x 1
  gpsolve::GpStatus gp_status = gpsolve::GpStatus::max_iterations;
  certify::CertificateParams certificate;  // as re-verified
  certify::CertResult verification;        // check_certificate at realize(r*)
};

// Builds the design GP. Variables in declaration order: a, Delta, sigma,
// rho, lambda, p1..pN, r1..rm, v1..v{nN}, then the variance eigenvector
// components (a1: w{i}_{k} per node i = 1..N, k = 1..n; a2: shared w1..w{nN}).
// Gauge equalities p1 = v1 = (w_i)_1 = 1 remove the scaling freedom of the
// certificate system; rho's lower box bound log(nN) keeps eps* <= 1.
// fixed_eps pins rho = log(nN/eps) by a constant monomial equality.
// Throws std::invalid_argument on structural violations, naming the entry.
gpsolve::GeometricProgram build_design_gp_a1(const DesignFamily& family,
                                             EpsMode mode, double eps = 0.0);
gpsolve::GeometricProgram build_design_gp_a2(const DesignFamily& family,
                                             EpsMode mode, double eps = 0.0);

// Builds, solves, unpacks, and post-verifies: the concrete model at r* must
// pass check_certificate with the returned (p, a, Delta, sigma, lambda*,
// eps*), closing the gap between the surrogates and the exact moments.
// Throws std::runtime_error "no design meets cost/constraints at any rate"
// when the GP is infeasible and "surrogate bounds violated at r*" when the
// realized model fails re-certification (an invalid family).
DesignResult solve_design(const DesignFamily& family, EpsMode mode,
                          double eps = 0.0, double tol = policy::kGpTol);

// JSON family description (posynomial terms in the gpsolve interchange term
// format, keyed by matrix position; indices 1-based on disk). An optional
// "realize" block describes per-edge constant or two-point blocks whose
// high-point probability is one of the design parameters.
DesignFamily family_from_json(const nlohmann::json& j);
DesignFamily load_family(const std::string& path);

}  // namespace posnet::design
