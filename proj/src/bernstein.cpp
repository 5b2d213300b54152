#include "posnet/bernstein.hpp"

#include <cmath>
#include <stdexcept>

#include "posnet/linalg.hpp"

namespace posnet::bernstein {

namespace {

void check_domain(double delta, double sigma, double a, double rho) {
  if (!(a > 0.0)) {
    throw std::domain_error("lemma1: a must be positive");
  }
  if (delta < 0.0 || sigma < 0.0 || rho < 0.0 || !std::isfinite(delta) ||
      !std::isfinite(sigma) || !std::isfinite(rho) || !std::isfinite(a)) {
    throw std::domain_error("lemma1: delta, sigma, rho must be finite and >= 0");
  }
}

}  // namespace

double kappa(const TailParams& tp, double a) {
  if (a < 0.0 || !std::isfinite(a)) {
    throw std::domain_error("kappa: a must be finite and >= 0");
  }
  if (tp.delta < 0.0 || tp.sigma2 < 0.0 || tp.dim < 1) {
    throw std::domain_error("kappa: invalid tail parameters");
  }
  if (a == 0.0) return static_cast<double>(tp.dim);
  const double denom = 2.0 * tp.sigma2 + 2.0 * tp.delta * a / 3.0;
  if (denom == 0.0) return 0.0;  // deterministic sum: limit value
  return static_cast<double>(tp.dim) * std::exp(-a * a / denom);
}

double rho_of_eps(double eps, int n, int N) {
  if (n < 1 || N < 1) {
    throw std::domain_error("rho_of_eps: n and N must be >= 1");
  }
  if (!(eps > 0.0) || eps > 1.0) {
    throw std::domain_error("rho_of_eps: eps must lie in (0, 1]");
  }
  return std::log(static_cast<double>(n) * static_cast<double>(N) / eps);
}

bool lemma1_scalar(double delta, double sigma, double a, double rho) {
  check_domain(delta, sigma, a, rho);
  return 2.0 * rho * delta / a + 6.0 * rho * sigma * sigma / (a * a) < 3.0;
}

bool lemma1_lmi(double delta, double sigma, double a, double rho) {
  check_domain(delta, sigma, a, rho);
  const double d = a - rho * delta / 3.0;
  const double s = std::sqrt(2.0 * rho) * sigma;
  const double e = rho * delta / 3.0;
  Eigen::Matrix3d m;
  m << d, s, e,
       s, d, 0.0,
       e, 0.0, d;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> es(m, Eigen::EigenvaluesOnly);
  return es.eigenvalues().minCoeff() > 0.0;
}

}  // namespace posnet::bernstein
