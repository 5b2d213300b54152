#pragma once

// Probabilistic core: the matrix-Bernstein tail function kappa, the
// unreliability <-> rho conversion, and the three equivalent forms of the
// scalar/LMI feasibility test.

namespace posnet::bernstein {

// Parameters of the tail bound for a sum of independent symmetric random
// matrices: delta bounds each summand's deviation almost surely, sigma2
// bounds the total variance, dim is the matrix order (the leading factor).
struct TailParams {
  double delta = 0.0;
  double sigma2 = 0.0;
  int dim = 1;
};

// kappa(a) = dim * exp(-a^2 / (2 sigma2 + 2 delta a / 3)). At a = 0 returns
// dim; for a deterministic sum (delta = sigma2 = 0) the 0/0 limit is 0.
// Negative a throws std::domain_error.
double kappa(const TailParams& tp, double a);

// rho = log(n N / eps) for eps in (0, 1]; strictly decreasing in eps.
double rho_of_eps(double eps, int n, int N);

// Scalar form: 2 rho delta / a + 6 rho sigma^2 / a^2 < 3 (strict).
bool lemma1_scalar(double delta, double sigma, double a, double rho);

// LMI form: positive definiteness (lambda_min > 0, via eigensolve) of
//   [ a - rho delta/3   sqrt(2 rho) sigma   rho delta/3 ]
//   [      .            a - rho delta/3         0       ]
//   [      .                 .             a - rho delta/3 ].
// Equivalent to lemma1_scalar; computed by an independent numerical route.
bool lemma1_lmi(double delta, double sigma, double a, double rho);

}  // namespace posnet::bernstein
