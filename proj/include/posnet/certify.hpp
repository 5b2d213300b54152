#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>
#include <vector>

#include "posnet/model.hpp"
#include "posnet/policy.hpp"

// Stability certification: builds the deviation/variance/decay quantities
// (delta, sigma, a) from exact moments, checks a certificate tuple against
// the constraint system, searches the diagonal scaling p, and computes the
// minimum unreliability eps*.

namespace posnet::certify {

using model::IndependenceMode;
using model::NetworkModel;

// A full certificate: the system is stable with Lyapunov decay rate lambda
// (V = x^T P x decays like e^{-lambda t}, P = diag blocks of p_i) with
// probability at least 1 - eps. rho = log(nN/eps) must stay consistent.
struct CertificateParams {
  Eigen::VectorXd p;
  double a = 0.0;
  double delta = 0.0;
  double sigma = 0.0;
  double rho = 0.0;
  double lambda = 0.0;
  double eps = 1.0;
  IndependenceMode mode = IndependenceMode::a1;
};

// Canonical constructor: validates fields, jointly rescales (p, a, delta,
// sigma) so max_i p_i = 1 (the constraint system is homogeneous in that
// scaling), and fills rho from eps.
CertificateParams make_certificate(Eigen::VectorXd p, double a, double delta,
                                   double sigma, double lambda, double eps,
                                   IndependenceMode mode, int n, int N);

// Rebind a certificate to a new unreliability (recomputes rho only).
CertificateParams with_eps(CertificateParams params, double eps, int n, int N);

struct CertSlacks {
  double a_slack = 0.0;       // a_max(p, lambda) - a
  double delta_slack = 0.0;   // delta - delta_min(p)
  double sigma2_slack = 0.0;  // sigma^2 - sigma_min(p)^2
  double margin = 0.0;        // 3 - (2 rho delta / a + 6 rho sigma^2 / a^2)
};

struct CertResult {
  bool feasible = false;
  std::optional<CertificateParams> witness;  // present when feasible
  CertSlacks slack;
  std::vector<std::string> binding;  // active/violated constraint labels
  std::string diagnostic;
};

// Tightest (delta, sigma) for independent blocks:
//   delta  = max_{edges (i,j)} p_i esssup||A_ij - E[A_ij]||
//   sigma^2 = max_i || p_i^2 sum_j W(A_ij^T) + sum_j p_j^2 W(A_ji) ||.
// Models with no uncertain blocks give (0, 0).
std::pair<double, double> delta_sigma_a1(const NetworkModel& m,
                                         const Eigen::VectorXd& p);

// Tightest (delta, sigma) for independent block-rows:
//   delta  = max_i 2 p_i esssup||A_i - E[A_i]||
//   sigma^2 = || sum_i p_i^2 Var(S_i) ||.
// A1 models are converted by row enumeration (cap on joint support size).
std::pair<double, double> delta_sigma_a2(
    const NetworkModel& m, const Eigen::VectorXd& p,
    unsigned long long cap = policy::kEnumCap);

// Largest a with E[A]^T P + P E[A] + aI + lambda P <= 0; may be <= 0.
double a_max(const NetworkModel& m, const Eigen::VectorXd& p, double lambda);

// Verifies a certificate: decay LMI via a_max, deviation and variance bounds
// via delta_sigma_*, and the scalar tail test with strict margin 1e-9.
// Throws std::invalid_argument on non-positive models (naming the offending
// block), mode mismatch, or inconsistent rho/eps.
CertResult check_certificate(const NetworkModel& m,
                             const CertificateParams& params);

struct SearchOptions {
  int max_sweeps = 60;        // coordinate-descent sweeps per start
  double rel_tol = 1e-8;      // stop when a sweep improves less than this
  int line_evals = 10;        // objective evaluations per golden section
  double init_step = 1.2;     // initial half-width of the log-p line search
  std::vector<Eigen::VectorXd> warm_starts;  // extra p starts (normalized)
  bool skip_default_starts = false;  // use only warm_starts when any are
                                     // usable (grid sweeps with good pools)
  bool bisection_check = true;  // cross-validate eps* by bisection
  unsigned long long enum_cap = policy::kEnumCap;  // A2 row enumeration cap
};

// Maximizes the tail-test margin over log p (coordinate descent with
// golden-section line searches, deterministic multi-start) at fixed lambda
// and eps; for fixed p the optimal a is a_max(p) since the tail test is
// monotone in a, so the search is unconstrained in p alone.
CertResult search_certificate(const NetworkModel& m, double lambda, double eps,
                              const SearchOptions& opts = {});

struct MinEpsResult {
  double eps_star = 1.0;          // clamped to [1e-300, 1]
  bool uncertifiable = false;     // no eps in (0,1] certifies
  bool floor_clamped = false;     // true eps* below the reporting floor
  double t_min = 0.0;             // 2 delta/a + 6 sigma^2/a^2 at the best p
  std::optional<CertificateParams> witness;  // certifies eps slightly > eps*
};

// eps*(p) = nN exp(-3 / t(p)) minimized over p (t = 0 gives the floor);
// cross-checked against a bisection over eps whose feasibility oracle is the
// strict scalar tail test at the searched optimum.
MinEpsResult min_unreliability(const NetworkModel& m, double lambda,
                               const SearchOptions& opts = {});

}  // namespace posnet::certify
