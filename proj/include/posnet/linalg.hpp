#pragma once

#include <Eigen/Dense>

#include "posnet/policy.hpp"

// Dense numerical kernels: symmetric eigensolve, spectral norms, PSD square
// roots, and Perron values / Hurwitz tests for Metzler matrices.

namespace posnet::linalg {

// Real symmetric matrix wrapper. Construction rejects inputs whose asymmetry
// exceeds 1e-10 (scaled by max(1, max|entry|)) and stores the symmetrized
// average, so downstream eigensolves always see an exactly symmetric matrix.
class SymMatrix {
 public:
  explicit SymMatrix(const Eigen::MatrixXd& m);

  int order() const { return static_cast<int>(entries_.rows()); }
  const Eigen::MatrixXd& entries() const { return entries_; }

 private:
  Eigen::MatrixXd entries_;
};

// Largest eigenvalue of a symmetric matrix (absolute error <=
// 1e-9 * max(1, ||M||)). Throws std::runtime_error if the underlying
// iteration fails to converge.
double sym_eig_max(const SymMatrix& m);

// Largest singular value of a (possibly rectangular) matrix.
double spectral_norm(const Eigen::MatrixXd& m);

// Factor F with F * F^T = M for PSD M; F keeps one column per eigenvalue
// above 1e-12 * lambda_max. Eigenvalues in [-1e-10 * ||M||, 0) clip to zero;
// anything more negative throws with the offending eigenvalue in the message.
Eigen::MatrixXd psd_sqrt(const SymMatrix& m);

// True iff all off-diagonal entries are >= -tol.
bool is_metzler(const Eigen::MatrixXd& m, double tol = 1e-12);

// Exact Hurwitz test for Metzler matrices: eta(M) < 0 iff some v > 0 has
// Mv < 0, and for Hurwitz M the choice v = -M^{-1} 1 works. One LU solve
// plus sign checks; sound in both directions up to roundoff in M*v.
bool metzler_is_hurwitz(const Eigen::MatrixXd& m);

// Spectral abscissa (rightmost eigenvalue, real by Perron-Frobenius) of a
// Metzler matrix, certified to 1e-9 * max(1, ||M||). Shift-and-power with
// Collatz-Wielandt brackets; when the bracket stalls (reducible or defective
// inputs), finishes by bisection on metzler_is_hurwitz, which is exact.
// If eigvec is non-null it receives the final (approximate, nonnegative)
// iterate, normalized to unit max entry.
double perron_value(const Eigen::MatrixXd& m, Eigen::VectorXd* eigvec = nullptr);

}  // namespace posnet::linalg
