#include "posnet/linalg.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace posnet::linalg {

namespace {

void require_finite(const Eigen::MatrixXd& m, const char* where) {
  if (!m.allFinite()) {
    throw std::invalid_argument(std::string(where) + ": non-finite entries");
  }
}

}  // namespace

SymMatrix::SymMatrix(const Eigen::MatrixXd& m) {
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("SymMatrix: input is not square");
  }
  require_finite(m, "SymMatrix");
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double asym = (m - m.transpose()).cwiseAbs().maxCoeff();
  if (asym > 1e-10 * scale) {
    std::ostringstream os;
    os << "SymMatrix: asymmetry " << asym << " exceeds tolerance "
       << 1e-10 * scale;
    throw std::invalid_argument(os.str());
  }
  entries_ = 0.5 * (m + m.transpose());
}

double sym_eig_max(const SymMatrix& m) {
  if (m.order() == 0) {
    throw std::invalid_argument("sym_eig_max: empty matrix");
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.entries(),
                                                    Eigen::EigenvaluesOnly);
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("sym_eig_max: eigensolver did not converge");
  }
  return es.eigenvalues().maxCoeff();
}

double spectral_norm(const Eigen::MatrixXd& m) {
  require_finite(m, "spectral_norm");
  if (m.size() == 0) return 0.0;
  // Form the smaller Gram matrix; sqrt of its top eigenvalue.
  Eigen::MatrixXd gram;
  if (m.rows() <= m.cols()) {
    gram = m * m.transpose();
  } else {
    gram = m.transpose() * m;
  }
  const double top = sym_eig_max(SymMatrix(gram));
  return std::sqrt(std::max(0.0, top));
}

Eigen::MatrixXd psd_sqrt(const SymMatrix& m) {
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(m.entries());
  if (es.info() != Eigen::Success) {
    throw std::runtime_error("psd_sqrt: eigensolver did not converge");
  }
  const Eigen::VectorXd& ev = es.eigenvalues();
  const double top = std::max(0.0, ev.maxCoeff());
  const double norm = m.entries().cwiseAbs().maxCoeff();
  const double clip = -1e-10 * std::max(norm, 1e-300);
  if (ev.minCoeff() < clip) {
    std::ostringstream os;
    os << "psd_sqrt: matrix is indefinite (eigenvalue " << ev.minCoeff()
       << " below tolerance " << clip << ")";
    throw std::invalid_argument(os.str());
  }
  const double rank_thresh = 1e-12 * top;
  int rank = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > rank_thresh) ++rank;
  }
  Eigen::MatrixXd f(m.order(), rank);
  int col = 0;
  for (int i = 0; i < ev.size(); ++i) {
    if (ev(i) > rank_thresh) {
      f.col(col++) = es.eigenvectors().col(i) * std::sqrt(ev(i));
    }
  }
  return f;
}

bool is_metzler(const Eigen::MatrixXd& m, double tol) {
  if (m.rows() != m.cols()) return false;
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      if (i != j && m(i, j) < -tol) return false;
    }
  }
  return true;
}

bool metzler_is_hurwitz(const Eigen::MatrixXd& m) {
  require_finite(m, "metzler_is_hurwitz");
  if (m.rows() != m.cols()) {
    throw std::invalid_argument("metzler_is_hurwitz: matrix not square");
  }
  if (!is_metzler(m)) {
    throw std::invalid_argument("metzler_is_hurwitz: matrix is not Metzler");
  }
  const Eigen::Index n = m.rows();
  if (n == 0) return true;
  const Eigen::VectorXd v =
      Eigen::PartialPivLU<Eigen::MatrixXd>(m).solve(
          Eigen::VectorXd::Constant(n, -1.0));
  if (!v.allFinite() || v.minCoeff() <= 0.0) return false;
  return (m * v).maxCoeff() < 0.0;
}

double perron_value(const Eigen::MatrixXd& m, Eigen::VectorXd* eigvec) {
  require_finite(m, "perron_value");
  if (m.rows() != m.cols() || m.rows() == 0) {
    throw std::invalid_argument("perron_value: matrix must be square, nonempty");
  }
  if (!is_metzler(m)) {
    throw std::invalid_argument("perron_value: matrix is not Metzler");
  }
  const Eigen::Index n = m.rows();
  if (n == 1) {
    if (eigvec) *eigvec = Eigen::VectorXd::Ones(1);
    return m(0, 0);
  }
  const double scale = std::max(1.0, m.cwiseAbs().maxCoeff());
  const double tol = policy::kEigTol * scale;

  // Structural brackets: diag(M) <= M entrywise gives eta >= max diag;
  // Gershgorin with nonnegative off-diagonals gives eta <= max row sum.
  double lo = m.diagonal().maxCoeff();
  double hi = m.rowwise().sum().maxCoeff();
  if (hi - lo <= tol) {
    if (eigvec) *eigvec = Eigen::VectorXd::Ones(n) / 1.0;
    return 0.5 * (lo + hi);
  }

  // Power iteration on the nonnegative shift B = M + cI. Every iterate with
  // strictly positive entries yields Collatz-Wielandt bounds
  //   min_i (Bv)_i / v_i <= rho(B) <= max_i (Bv)_i / v_i.
  const double shift = m.diagonal().cwiseAbs().maxCoeff() + 0.01 * scale;
  Eigen::MatrixXd b = m;
  b.diagonal().array() += shift;
  Eigen::VectorXd v = Eigen::VectorXd::Ones(n);
  const int max_power_iters = 500;
  for (int it = 0; it < max_power_iters && hi - lo > tol; ++it) {
    Eigen::VectorXd w = b * v;
    const double wmax = w.maxCoeff();
    if (wmax <= 0.0) break;  // rho(B) = 0 corner; brackets already tight-ish
    if (v.minCoeff() > 0.0) {
      const Eigen::ArrayXd ratio = w.array() / v.array();
      lo = std::max(lo, ratio.minCoeff() - shift);
      hi = std::min(hi, ratio.maxCoeff() - shift);
    }
    v = w / wmax;
  }

  // Close any remaining gap by bisection on the exact Hurwitz test:
  // eta(M) < t  <=>  M - tI is Hurwitz.
  Eigen::MatrixXd probe = m;
  for (int it = 0; it < 200 && hi - lo > tol; ++it) {
    const double mid = 0.5 * (lo + hi);
    probe = m;
    probe.diagonal().array() -= mid;
    if (metzler_is_hurwitz(probe)) {
      hi = mid;
    } else {
      lo = mid;
    }
  }
  if (hi - lo > 2.0 * tol) {
    throw std::runtime_error("perron_value: bracket failed to converge");
  }
  if (eigvec) {
    const double vmax = v.maxCoeff();
    *eigvec = (vmax > 0.0) ? Eigen::VectorXd(v / vmax)
                           : Eigen::VectorXd::Ones(n);
  }
  return 0.5 * (lo + hi);
}

}  // namespace posnet::linalg
