#include "posnet/gpsolve.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>

#include "posnet/policy.hpp"

namespace posnet::gpsolve {

namespace {

bool finite(double v) { return std::isfinite(v); }

std::string join(const std::vector<std::string>& parts, const char* sep) {
  std::ostringstream os;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) os << sep;
    os << parts[i];
  }
  return os.str();
}

// ---------------------------------------------------------------------------
// Log-sum-exp evaluation and derivative accumulation
// ---------------------------------------------------------------------------

// Evaluates G(y) = log sum_k exp(b_k + a_k . y) and optionally accumulates
//   g += s_g * grad G
//   H += c_rank * sum_k w_k a_k a_k^T + c_outer * (grad G)(grad G)^T
// where w is the softmax weight vector.  Returns G(y).
double lse_accumulate(const ConvexConstraint& c, const Eigen::VectorXd& y,
                      double s_g, double c_rank, double c_outer,
                      Eigen::VectorXd* g, Eigen::MatrixXd* H) {
  const std::size_t k = c.terms.size();
  if (k == 0) throw std::logic_error("empty log-sum-exp constraint");
  std::vector<double> z(k);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < k; ++t) {
    double v = c.terms[t].b;
    for (const auto& [idx, coef] : c.terms[t].a) v += coef * y(idx);
    z[t] = v;
    zmax = std::max(zmax, v);
  }
  double s = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    z[t] = std::exp(z[t] - zmax);  // reuse z as unnormalized weights
    s += z[t];
  }
  const double value = zmax + std::log(s);
  if (!g && !H) return value;
  for (std::size_t t = 0; t < k; ++t) z[t] /= s;

  // Local sparse gradient over the constraint's variable support.
  std::map<int, double> grad;
  for (std::size_t t = 0; t < k; ++t)
    for (const auto& [idx, coef] : c.terms[t].a) grad[idx] += z[t] * coef;

  if (g)
    for (const auto& [idx, v] : grad) (*g)(idx) += s_g * v;
  if (H) {
    if (c_rank != 0.0)
      for (std::size_t t = 0; t < k; ++t)
        for (const auto& [i1, v1] : c.terms[t].a)
          for (const auto& [i2, v2] : c.terms[t].a)
            (*H)(i1, i2) += c_rank * z[t] * v1 * v2;
    if (c_outer != 0.0)
      for (const auto& [i1, v1] : grad)
        for (const auto& [i2, v2] : grad) (*H)(i1, i2) += c_outer * v1 * v2;
  }
  return value;
}

// ---------------------------------------------------------------------------
// Barrier Newton solver on a reduced (equality-free) convex GP
// ---------------------------------------------------------------------------

struct Reduced {
  int dim = 0;
  ConvexConstraint objective;
  std::vector<ConvexConstraint> ineqs;
};

enum class CenterOutcome { converged, budget, early_stop, unbounded };

// Newton direction with progressive diagonal damping.  The system is
// Jacobi-equilibrated and the solve refined once: interior-point Hessians
// are badly scaled near the boundary and a raw factorization loses the
// digits the terminal KKT polish needs.  Returns an empty vector when no
// reliable direction exists (numerically flat system).
Eigen::VectorXd newton_direction(const Eigen::MatrixXd& H,
                                 const Eigen::VectorXd& g,
                                 bool require_descent) {
  double reg = 0.0;
  const double scale = H.diagonal().cwiseAbs().maxCoeff() + 1.0;
  for (int attempt = 0; attempt < 25; ++attempt) {
    Eigen::MatrixXd hr = H;
    if (reg > 0.0) hr.diagonal().array() += reg;
    const Eigen::VectorXd ds =
        hr.diagonal().cwiseAbs().cwiseMax(1e-300).cwiseSqrt().cwiseInverse();
    const Eigen::MatrixXd hs = ds.asDiagonal() * hr * ds.asDiagonal();
    const Eigen::VectorXd gs = ds.asDiagonal() * g;
    Eigen::LDLT<Eigen::MatrixXd> ldlt(hs);
    if (ldlt.info() == Eigen::Success) {
      Eigen::VectorXd z = ldlt.solve(-gs);
      z += ldlt.solve(-(hs * z + gs));
      Eigen::VectorXd cand = ds.asDiagonal() * z;
      // A rank-deficient factorization can return an inconsistent
      // "solution"; only accept directions that actually solve the system.
      if (cand.allFinite() && (!require_descent || g.dot(cand) < 0.0) &&
          (hr * cand + g).norm() <= 1e-8 * (g.norm() + 1.0)) {
        return cand;
      }
    }
    reg = (reg == 0.0) ? 1e-12 * scale : reg * 10.0;
  }
  return Eigen::VectorXd();
}

// Damped-Newton centering of t*F(y) + phi(y) at fixed barrier parameter t.
// Iterates stay strictly feasible.  A stalled line search counts as
// converged (numerical floor reached).  When kkt_stop > 0 the loop also
// finishes once the scaled stationarity residual ||g||_inf / t falls below
// it (the terminal-stage criterion).
CenterOutcome center(const Reduced& pr, double t, Eigen::VectorXd& y,
                     int& budget, int early_var, double early_thresh,
                     bool detect_unbounded, double obj_floor,
                     double dec_tol, double kkt_stop) {
  const int d = pr.dim;
  Eigen::VectorXd g(d);
  Eigen::MatrixXd H(d, d);
  double phi_prev = std::numeric_limits<double>::infinity();
  double best_ginf = std::numeric_limits<double>::infinity();
  int no_improve = 0;
  while (budget > 0) {
    g.setZero();
    H.setZero();
    double phi = t * lse_accumulate(pr.objective, y, t, t, -t, &g, &H);
    for (const auto& c : pr.ineqs) {
      const double gval = lse_value(c, y);
      if (!(gval < 0.0))
        throw std::logic_error("barrier iterate left the feasible region");
      phi += -std::log(-gval);
      lse_accumulate(c, y, 1.0 / (-gval), 1.0 / (-gval),
                     1.0 / (gval * gval) - 1.0 / (-gval), &g, &H);
    }
    if (kkt_stop > 0.0) {
      // Terminal polish: run until the scaled stationarity residual meets
      // the target or stops improving (Newton zeroes the gradient under the
      // quadratic model, so progress is measured on ||g||, not on phi).
      const double ginf = g.cwiseAbs().maxCoeff();
      if (ginf / t <= kkt_stop) return CenterOutcome::converged;
      if (ginf < 0.99 * best_ginf) {
        best_ginf = ginf;
        no_improve = 0;
      } else if (++no_improve >= 3) {
        return CenterOutcome::converged;
      }
    }

    Eigen::VectorXd dy = newton_direction(H, g, /*require_descent=*/true);
    if (dy.size() == 0) return CenterOutcome::converged;  // numerically flat
    if (-g.dot(dy) / 2.0 <= dec_tol) return CenterOutcome::converged;
    if (kkt_stop == 0.0) {  // path stages: phi-progress plateau exit
      if (phi_prev - phi <= 1e-12 * (1.0 + std::abs(phi)) &&
          phi_prev != std::numeric_limits<double>::infinity())
        return CenterOutcome::converged;
      phi_prev = phi;
    }
    // Trust-region style cap: at most 10 log-units per step keeps damped
    // near-singular directions from catapulting the iterate.
    const double dmax = dy.cwiseAbs().maxCoeff();
    if (dmax > 10.0) dy *= 10.0 / dmax;
    const double gtd = g.dot(dy);

    // Backtracking line search (feasibility + Armijo with slope 0.25).
    double step = 1.0;
    bool moved = false;
    for (int bt = 0; bt < 60; ++bt) {
      const Eigen::VectorXd yc = y + step * dy;
      double phic = t * lse_value(pr.objective, yc);
      bool ok = finite(phic);
      if (ok)
        for (const auto& c : pr.ineqs) {
          const double gval = lse_value(c, yc);
          if (!(gval < 0.0)) {
            ok = false;
            break;
          }
          phic += -std::log(-gval);
        }
      if (ok && phic <= phi + 0.25 * step * gtd) {
        y = yc;
        moved = true;
        break;
      }
      step *= 0.5;
    }
    --budget;
    if (!moved) return CenterOutcome::converged;  // line-search floor
    if (detect_unbounded &&
        lse_value(pr.objective, y) < obj_floor - policy::kGpUnboundedDrop)
      return CenterOutcome::unbounded;
    if (early_var >= 0 && y(early_var) <= early_thresh)
      return CenterOutcome::early_stop;
  }
  return CenterOutcome::budget;
}

// Value and sparse gradient of one log-sum-exp constraint.
double lse_value_grad(const ConvexConstraint& c, const Eigen::VectorXd& y,
                      std::vector<std::pair<int, double>>& grad_out) {
  const std::size_t k = c.terms.size();
  std::vector<double> z(k);
  double zmax = -std::numeric_limits<double>::infinity();
  for (std::size_t t = 0; t < k; ++t) {
    double v = c.terms[t].b;
    for (const auto& [idx, coef] : c.terms[t].a) v += coef * y(idx);
    z[t] = v;
    zmax = std::max(zmax, v);
  }
  double s = 0.0;
  for (std::size_t t = 0; t < k; ++t) {
    z[t] = std::exp(z[t] - zmax);
    s += z[t];
  }
  std::map<int, double> grad;
  for (std::size_t t = 0; t < k; ++t)
    for (const auto& [idx, coef] : c.terms[t].a)
      grad[idx] += (z[t] / s) * coef;
  grad_out.assign(grad.begin(), grad.end());
  return zmax + std::log(s);
}

struct PdOutcome {
  GpStatus status = GpStatus::optimal;
  bool early = false;
  double gap = 0.0;              // final surrogate duality gap
  Eigen::VectorXd lambda;        // final inequality multipliers
};

// Primal-dual interior-point loop: damped Newton on the perturbed KKT
// system, with the barrier parameter re-chosen from the surrogate duality
// gap at every step (t = mu * m / eta) and a joint backtracking line search
// that keeps G < 0 and lambda > 0 while shrinking the KKT residual norm.
// Unlike staged path following, the step count does not grow with the
// number of simultaneously active constraints -- the network design
// programs solved here keep one decay row per node active at the optimum,
// and recentering after each staged barrier increase costs a Newton step
// per active row, which overruns any fixed step budget as the network
// grows.
PdOutcome pd_solve(const Reduced& pr, Eigen::VectorXd& y, double tol,
                   int& budget, int early_var, double early_thresh,
                   bool detect_unbounded) {
  constexpr double kMu = 2.0;         // gap reduction aggressiveness
  constexpr double kFeasTol = 1e-8;   // dual residual target (max-norm)
  constexpr double kAlpha = 0.01;     // Armijo slope on the residual norm
  const int d = pr.dim;
  const int m = static_cast<int>(pr.ineqs.size());
  const double f0 = lse_value(pr.objective, y);

  PdOutcome out;
  std::vector<double> gval(m);
  std::vector<std::vector<std::pair<int, double>>> grows(m);
  const auto eval_ineqs = [&](const Eigen::VectorXd& yc) {
    for (int i = 0; i < m; ++i) {
      gval[i] = lse_value_grad(pr.ineqs[i], yc, grows[i]);
      if (!(gval[i] < 0.0)) return false;
    }
    return true;
  };
  if (!eval_ineqs(y))
    throw std::logic_error("interior-point start is not strictly feasible");

  Eigen::VectorXd lam(m);
  for (int i = 0; i < m; ++i)
    lam(i) = std::clamp(1.0 / (-gval[i]), 1e-10, 1e10);

  // KKT residual pieces at the current (y, lambda); r_dual is reused for
  // both the stopping test and the line-search merit norm.
  Eigen::VectorXd gobj(d);
  const auto residual_norm = [&](const Eigen::VectorXd& lamc, double t,
                                 Eigen::VectorXd* r_dual) {
    gobj.setZero();
    lse_accumulate(pr.objective, y, 1.0, 0.0, 0.0, &gobj, nullptr);
    Eigen::VectorXd rd = gobj;
    double cent2 = 0.0;
    for (int i = 0; i < m; ++i) {
      for (const auto& [idx, v] : grows[i]) rd(idx) += lamc(i) * v;
      const double rc = -lamc(i) * gval[i] - 1.0 / t;
      cent2 += rc * rc;
    }
    if (r_dual) *r_dual = rd;
    return std::sqrt(rd.squaredNorm() + cent2);
  };

  // Degenerate geometries -- affine constraint rows spanning fewer
  // dimensions than the variable count, as in the slack-minimization
  // pre-stage of LP-like programs -- make the reduced KKT system
  // inconsistent: no primal-dual step can shrink the dual residual, which
  // freezes the loop far from the solution.  Recovery is one damped-Newton
  // centering step on the classic barrier merit t*F + phi at the current t
  // (which only needs a descent direction, not a consistent system),
  // after which the multipliers are re-centered at lambda_i = 1/(t*s_i) so
  // the surrogate gap keeps driving t upward stage by stage.
  const auto centering_step = [&](double t) {
    --budget;
    Eigen::MatrixXd hb = Eigen::MatrixXd::Zero(d, d);
    Eigen::VectorXd gb = Eigen::VectorXd::Zero(d);
    double phi = t * lse_accumulate(pr.objective, y, t, t, -t, &gb, &hb);
    for (int i = 0; i < m; ++i) {
      const double s = -gval[i];
      phi += -std::log(s);
      lse_accumulate(pr.ineqs[i], y, 1.0 / s, 1.0 / s,
                     1.0 / (s * s) - 1.0 / s, &gb, &hb);
    }
    Eigen::VectorXd db = newton_direction(hb, gb, /*require_descent=*/true);
    if (db.size() != 0) {
      const double dbmax = db.cwiseAbs().maxCoeff();
      if (dbmax > 10.0) db *= 10.0 / dbmax;
      const double slope = gb.dot(db);
      const Eigen::VectorXd y0 = y;
      double a = 1.0;
      bool ok = false;
      for (int bt = 0; bt < 60 && !ok; ++bt) {
        y = y0 + a * db;
        if (eval_ineqs(y)) {
          double phic = t * lse_value(pr.objective, y);
          for (int i = 0; i < m; ++i) phic += -std::log(-gval[i]);
          ok = finite(phic) && phic <= phi + 0.25 * a * slope;
        }
        if (!ok) a *= 0.5;
      }
      if (!ok) {
        y = y0;
        eval_ineqs(y);
      }
    }
    for (int i = 0; i < m; ++i)
      lam(i) = std::clamp(1.0 / (t * (-gval[i])), 1e-10, 1e10);
  };

  const bool trace = std::getenv("POSNET_GP_TRACE") != nullptr;
  int it = 0;
  Eigen::MatrixXd H(d, d);
  Eigen::VectorXd rhs(d);
  while (budget > 0) {
    double eta = 0.0;
    for (int i = 0; i < m; ++i) eta += lam(i) * (-gval[i]);
    const double t = std::min(kMu * static_cast<double>(m) / eta, 1e30);

    Eigen::VectorXd r_dual;
    const double rnorm = residual_norm(lam, t, &r_dual);
    if (trace) {
      std::fprintf(stderr, "[pd] it=%d eta=%.3e rnorm=%.3e rdinf=%.3e f=%.8e%s\n",
                   ++it, eta, rnorm, r_dual.cwiseAbs().maxCoeff(),
                   lse_value(pr.objective, y),
                   early_var >= 0
                       ? (" u=" + std::to_string(y(early_var))).c_str()
                       : "");
    }
    if (eta <= tol && r_dual.cwiseAbs().maxCoeff() <= kFeasTol) {
      out.gap = eta;
      out.lambda = lam;
      return out;
    }

    // Schur complement in y of the perturbed KKT system: eliminating
    // d_lambda leaves H + sum_i (lambda_i / -G_i) grad_i grad_i^T and the
    // plain barrier gradient as right-hand side.
    H.setZero();
    rhs.setZero();
    lse_accumulate(pr.objective, y, 1.0, 1.0, -1.0, &rhs, &H);
    for (int i = 0; i < m; ++i) {
      lse_accumulate(pr.ineqs[i], y, 1.0 / (t * (-gval[i])), lam(i),
                     -lam(i) * (1.0 + 1.0 / gval[i]), &rhs, &H);
    }
    Eigen::VectorXd dy = newton_direction(H, rhs, /*require_descent=*/false);

    bool moved = false;
    double step = 0.0, smax = 1.0, dmax = 0.0;
    if (dy.size() != 0) {
      Eigen::VectorXd dlam(m);
      for (int i = 0; i < m; ++i) {
        double dot = 0.0;
        for (const auto& [idx, v] : grows[i]) dot += v * dy(idx);
        dlam(i) = -lam(i) * dot / gval[i] - lam(i) - 1.0 / (t * gval[i]);
      }
      // Trust-region style cap: at most 10 log-units of primal motion per
      // step keeps damped near-singular directions from catapulting the
      // iterate; the dual step scales with it to stay on the Newton ray.
      dmax = dy.cwiseAbs().maxCoeff();
      if (dmax > 10.0) {
        dy *= 10.0 / dmax;
        dlam *= 10.0 / dmax;
      }

      for (int i = 0; i < m; ++i)
        if (dlam(i) < 0.0) smax = std::min(smax, -lam(i) / dlam(i));
      step = 0.99 * smax;
      const Eigen::VectorXd y_old = y;
      for (int bt = 0; bt < 60; ++bt) {
        y = y_old + step * dy;
        const Eigen::VectorXd lamc = lam + step * dlam;
        if (eval_ineqs(y) &&
            residual_norm(lamc, t, nullptr) <= (1.0 - kAlpha * step) * rnorm) {
          lam = lamc;
          moved = true;
          break;
        }
        step *= 0.5;
      }
      if (!moved) {
        y = y_old;
        eval_ineqs(y);
      }
    }
    --budget;
    const bool fallback = !moved || step < 1e-9;
    if (fallback && budget > 0) centering_step(t);
    if (trace) {
      std::fprintf(stderr, "[pd]   smax=%.3e step=%.3e dmax=%.3e%s\n", smax,
                   step, dmax, fallback ? " FALLBACK" : "");
    }
    if (detect_unbounded &&
        lse_value(pr.objective, y) < f0 - policy::kGpUnboundedDrop) {
      out.status = GpStatus::unbounded;
      return out;
    }
    if (early_var >= 0 && y(early_var) <= early_thresh) {
      out.early = true;
      return out;
    }
  }
  double eta = 0.0;
  for (int i = 0; i < m; ++i) eta += lam(i) * (-gval[i]);
  out.gap = eta;
  out.lambda = lam;
  out.status = eta <= tol ? GpStatus::optimal : GpStatus::max_iterations;
  return out;
}

// ---------------------------------------------------------------------------
// Affine equality elimination:  y = M z + q  with z the free variables
// ---------------------------------------------------------------------------

struct AffineMap {
  Eigen::MatrixXd m;  // n x f
  Eigen::VectorXd q;  // n
};

bool eliminate_equalities(
    const std::vector<std::pair<std::vector<std::pair<int, double>>, double>>&
        eqs,
    int n, AffineMap& out) {
  const int r = static_cast<int>(eqs.size());
  Eigen::MatrixXd e = Eigen::MatrixXd::Zero(r, n);
  Eigen::VectorXd d = Eigen::VectorXd::Zero(r);
  for (int i = 0; i < r; ++i) {
    for (const auto& [idx, coef] : eqs[i].first) e(i, idx) += coef;
    d(i) = eqs[i].second;
  }
  std::vector<int> pivot_col(r, -1);
  std::vector<bool> is_pivot(n, false);
  int prow = 0;
  while (prow < r) {
    // Largest remaining coefficient as pivot.
    int bi = -1, bj = -1;
    double best = 1e-12;
    for (int i = prow; i < r; ++i)
      for (int j = 0; j < n; ++j)
        if (!is_pivot[j] && std::abs(e(i, j)) > best) {
          best = std::abs(e(i, j));
          bi = i;
          bj = j;
        }
    if (bi < 0) break;
    e.row(prow).swap(e.row(bi));
    std::swap(d(prow), d(bi));
    const double piv = e(prow, bj);
    e.row(prow) /= piv;
    d(prow) /= piv;
    for (int i = 0; i < r; ++i) {
      if (i == prow) continue;
      const double f = e(i, bj);
      if (f != 0.0) {
        e.row(i) -= f * e.row(prow);
        d(i) -= f * d(prow);
      }
    }
    pivot_col[prow] = bj;
    is_pivot[bj] = true;
    ++prow;
  }
  for (int i = prow; i < r; ++i)
    if (std::abs(d(i)) > 1e-9) return false;  // inconsistent system

  std::vector<int> free_cols;
  for (int j = 0; j < n; ++j)
    if (!is_pivot[j]) free_cols.push_back(j);
  const int f = static_cast<int>(free_cols.size());
  out.m = Eigen::MatrixXd::Zero(n, f);
  out.q = Eigen::VectorXd::Zero(n);
  for (int fj = 0; fj < f; ++fj) out.m(free_cols[fj], fj) = 1.0;
  for (int i = 0; i < prow; ++i) {
    const int pc = pivot_col[i];
    out.q(pc) = d(i);
    for (int fj = 0; fj < f; ++fj) out.m(pc, fj) = -e(i, free_cols[fj]);
  }
  return true;
}

ConvexConstraint transform(const ConvexConstraint& c, const AffineMap& map) {
  const int f = static_cast<int>(map.m.cols());
  ConvexConstraint out;
  out.terms.reserve(c.terms.size());
  for (const auto& term : c.terms) {
    ConvexTerm nt;
    nt.b = term.b;
    Eigen::VectorXd acc = Eigen::VectorXd::Zero(f);
    for (const auto& [idx, coef] : term.a) {
      nt.b += coef * map.q(idx);
      acc += coef * map.m.row(idx).transpose();
    }
    for (int j = 0; j < f; ++j)
      if (acc(j) != 0.0) nt.a.emplace_back(j, acc(j));
    out.terms.push_back(std::move(nt));
  }
  return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// Posynomial algebra
// ---------------------------------------------------------------------------

Posynomial Posynomial::constant(double c) {
  Posynomial p;
  p.terms.push_back(Monomial{c, {}});
  return p;
}

Posynomial Posynomial::from(Monomial m) {
  Posynomial p;
  p.terms.push_back(std::move(m));
  return p;
}

Monomial simplify(const Monomial& m) {
  Monomial out;
  out.coeff = m.coeff;
  for (const auto& [name, e] : m.exponents)
    if (e != 0.0) out.exponents.emplace(name, e);
  return out;
}

Posynomial simplify(const Posynomial& p) {
  Posynomial out;
  for (const auto& t : p.terms)
    if (t.coeff != 0.0) out.terms.push_back(simplify(t));
  return out;
}

Posynomial operator+(const Posynomial& a, const Posynomial& b) {
  Posynomial out = a;
  out.terms.insert(out.terms.end(), b.terms.begin(), b.terms.end());
  return out;
}

Monomial operator*(const Monomial& a, const Monomial& b) {
  Monomial out;
  out.coeff = a.coeff * b.coeff;
  out.exponents = a.exponents;
  for (const auto& [name, e] : b.exponents) out.exponents[name] += e;
  return out;
}

Posynomial operator*(const Monomial& a, const Posynomial& b) {
  Posynomial out;
  out.terms.reserve(b.terms.size());
  for (const auto& t : b.terms) out.terms.push_back(a * t);
  return out;
}

Posynomial scale(const Posynomial& p, double c) {
  Posynomial out = p;
  for (auto& t : out.terms) t.coeff *= c;
  return out;
}

std::string to_string(GpStatus s) {
  switch (s) {
    case GpStatus::optimal: return "optimal";
    case GpStatus::infeasible: return "infeasible";
    case GpStatus::max_iterations: return "max-iterations";
    case GpStatus::unbounded: return "unbounded";
  }
  return "unknown";
}

double evaluate(const Monomial& m, const std::map<std::string, double>& x) {
  double v = m.coeff;
  for (const auto& [name, e] : m.exponents) {
    const auto it = x.find(name);
    if (it == x.end())
      throw std::invalid_argument("evaluate: missing value for variable '" +
                                  name + "'");
    v *= std::pow(it->second, e);
  }
  return v;
}

double evaluate(const Posynomial& p, const std::map<std::string, double>& x) {
  double v = 0.0;
  for (const auto& t : p.terms) v += evaluate(t, x);
  return v;
}

// ---------------------------------------------------------------------------
// Validation
// ---------------------------------------------------------------------------

std::vector<std::string> gp_validate(const GeometricProgram& program) {
  std::vector<std::string> out;
  std::set<std::string> declared;
  for (const auto& v : program.variables) {
    if (!declared.insert(v.name).second)
      out.push_back("duplicate variable '" + v.name + "'");
    if (v.lower && !(*v.lower > 0.0))
      out.push_back("nonpositive lower bound for '" + v.name + "'");
    if (v.upper && !(*v.upper > 0.0))
      out.push_back("nonpositive upper bound for '" + v.name + "'");
    if (v.lower && v.upper && *v.lower > *v.upper)
      out.push_back("inverted bounds for '" + v.name + "'");
  }
  std::set<std::string> undeclared;
  const auto scan_mono = [&](const Monomial& m, const std::string& where,
                             bool equality) {
    if (!finite(m.coeff)) out.push_back("non-finite coefficient in " + where);
    if (m.coeff < 0.0) out.push_back("negative coefficient in " + where);
    if (equality && m.coeff == 0.0)
      out.push_back("nonpositive coefficient in " + where);
    for (const auto& [name, e] : m.exponents) {
      if (!finite(e)) out.push_back("non-finite exponent in " + where);
      if (e != 0.0 && !declared.count(name)) undeclared.insert(name);
    }
  };
  const auto scan_posy = [&](const Posynomial& p, const std::string& where) {
    if (p.terms.empty()) out.push_back("empty posynomial in " + where);
    for (const auto& t : p.terms) scan_mono(t, where, false);
  };
  scan_posy(program.objective, "objective");
  for (std::size_t i = 0; i < program.ineqs.size(); ++i)
    scan_posy(program.ineqs[i], "inequality " + std::to_string(i));
  for (std::size_t i = 0; i < program.eqs.size(); ++i) {
    const auto& eq = program.eqs[i];
    if (eq.terms.size() != 1) {
      out.push_back("equality not monomial (equality " + std::to_string(i) +
                    ")");
      for (const auto& t : eq.terms) scan_mono(t, "equality " + std::to_string(i), false);
    } else {
      scan_mono(eq.terms[0], "equality " + std::to_string(i), true);
    }
  }
  for (const auto& name : undeclared)
    out.push_back("undeclared variable '" + name + "'");
  return out;
}

// ---------------------------------------------------------------------------
// Convex transform
// ---------------------------------------------------------------------------

double lse_value(const ConvexConstraint& c, const Eigen::VectorXd& y) {
  return lse_accumulate(c, y, 0.0, 0.0, 0.0, nullptr, nullptr);
}

ConvexGp gp_to_convex(const GeometricProgram& program) {
  const auto viol = gp_validate(program);
  if (!viol.empty())
    throw std::invalid_argument("invalid geometric program: " +
                                join(viol, "; "));
  ConvexGp out;
  std::map<std::string, int> index;
  for (const auto& v : program.variables) {
    index.emplace(v.name, static_cast<int>(out.var_names.size()));
    out.var_names.push_back(v.name);
  }
  const auto conv_posy = [&](const Posynomial& p) {
    ConvexConstraint c;
    for (const auto& t : simplify(p).terms) {
      ConvexTerm ct;
      ct.b = std::log(t.coeff);
      for (const auto& [name, e] : t.exponents)
        ct.a.emplace_back(index.at(name), e);
      c.terms.push_back(std::move(ct));
    }
    return c;
  };
  out.objective = conv_posy(program.objective);
  for (const auto& p : program.ineqs) out.ineqs.push_back(conv_posy(p));
  for (const auto& eq : program.eqs) {
    const Monomial m = simplify(eq.terms[0]);
    std::vector<std::pair<int, double>> row;
    for (const auto& [name, e] : m.exponents) row.emplace_back(index.at(name), e);
    out.eqs.emplace_back(std::move(row), -std::log(m.coeff));
  }
  for (const auto& v : program.variables) {
    const int idx = index.at(v.name);
    if (v.lower) {  // lo / x <= 1
      ConvexConstraint c;
      c.terms.push_back(ConvexTerm{std::log(*v.lower), {{idx, -1.0}}});
      out.ineqs.push_back(std::move(c));
    }
    if (v.upper) {  // x / hi <= 1
      ConvexConstraint c;
      c.terms.push_back(ConvexTerm{-std::log(*v.upper), {{idx, 1.0}}});
      out.ineqs.push_back(std::move(c));
    }
  }
  return out;
}

// ---------------------------------------------------------------------------
// Solve
// ---------------------------------------------------------------------------

GpSolution gp_solve(const GeometricProgram& program, double tol) {
  const auto viol = gp_validate(program);
  if (!viol.empty())
    throw std::invalid_argument("invalid geometric program: " +
                                join(viol, "; "));

  // Canonical copy: zero terms and zero exponents dropped.
  GeometricProgram prog;
  prog.objective = simplify(program.objective);
  for (const auto& p : program.ineqs) prog.ineqs.push_back(simplify(p));
  for (const auto& p : program.eqs) prog.eqs.push_back(simplify(p));

  // Fix variables that no constraint or objective references at the unit
  // point clamped into their box; they are degrees of freedom the problem
  // does not see.
  std::set<std::string> referenced;
  const auto scan = [&](const Posynomial& p) {
    for (const auto& t : p.terms)
      for (const auto& [name, e] : t.exponents)
        if (e != 0.0) referenced.insert(name);
  };
  scan(prog.objective);
  for (const auto& p : prog.ineqs) scan(p);
  for (const auto& p : prog.eqs) scan(p);

  GpSolution sol;
  for (const auto& v : program.variables) {
    if (referenced.count(v.name)) {
      prog.variables.push_back(v);
    } else {
      double val = 1.0;
      if (v.lower) val = std::max(val, *v.lower);
      if (v.upper) val = std::min(val, *v.upper);
      sol.values[v.name] = val;
    }
  }

  const ConvexGp cvx = gp_to_convex(prog);
  const int n = static_cast<int>(cvx.var_names.size());

  AffineMap map;
  if (!eliminate_equalities(cvx.eqs, n, map)) {
    sol.status = GpStatus::infeasible;
    return sol;  // equality system has no solution at all
  }

  // Transform into the free-variable space; constant constraints are decided
  // immediately.
  Reduced pr;
  pr.objective = transform(cvx.objective, map);
  for (const auto& c : cvx.ineqs) {
    ConvexConstraint tc = transform(c, map);
    bool constant = true;
    for (const auto& t : tc.terms)
      if (!t.a.empty()) constant = false;
    if (constant) {
      Eigen::VectorXd dummy(0);
      if (lse_value(tc, dummy) > policy::kGpFeasTol) {
        sol.status = GpStatus::infeasible;
        return sol;
      }
      continue;  // always satisfied
    }
    pr.ineqs.push_back(std::move(tc));
  }

  // Drop free variables that cancelled out of every term (pinned to log 1).
  const int f = static_cast<int>(map.m.cols());
  std::vector<bool> used(f, false);
  const auto mark = [&](const ConvexConstraint& c) {
    for (const auto& t : c.terms)
      for (const auto& [idx, coef] : t.a)
        if (coef != 0.0) used[idx] = true;
  };
  mark(pr.objective);
  for (const auto& c : pr.ineqs) mark(c);
  std::vector<int> remap(f, -1);
  int dim = 0;
  for (int j = 0; j < f; ++j)
    if (used[j]) remap[j] = dim++;
  if (dim != f) {
    const auto compress = [&](ConvexConstraint& c) {
      for (auto& t : c.terms) {
        std::vector<std::pair<int, double>> na;
        for (const auto& [idx, coef] : t.a)
          if (remap[idx] >= 0) na.emplace_back(remap[idx], coef);
        t.a = std::move(na);
      }
    };
    compress(pr.objective);
    for (auto& c : pr.ineqs) compress(c);
  }
  pr.dim = dim;

  const auto fill_values = [&](const Eigen::VectorXd& z) {
    Eigen::VectorXd zf = Eigen::VectorXd::Zero(f);
    for (int j = 0; j < f; ++j)
      if (remap[j] >= 0) zf(j) = z(remap[j]);
    const Eigen::VectorXd y = map.m * zf + map.q;
    for (int i = 0; i < n; ++i) sol.values[cvx.var_names[i]] = std::exp(y(i));
  };

  const auto posterior_ok = [&]() {
    for (const auto& p : prog.ineqs)
      if (evaluate(p, sol.values) > 1.0 + policy::kGpFeasTol) return false;
    for (const auto& p : prog.eqs)
      if (std::abs(evaluate(p, sol.values) - 1.0) > policy::kGpFeasTol)
        return false;
    return true;
  };

  if (dim == 0) {
    fill_values(Eigen::VectorXd(0));
    sol.objective_value = evaluate(prog.objective, sol.values);
    sol.status = posterior_ok() ? GpStatus::optimal : GpStatus::infeasible;
    return sol;
  }

  // Phase I: minimize the shared slack u = log s with every constraint
  // relaxed to G_i(y) - u <= 0, starting from the always-feasible
  // (y, u) = (0, max_i G_i(0) + 1).
  Eigen::VectorXd y = Eigen::VectorXd::Zero(dim);
  if (!pr.ineqs.empty()) {
    Reduced p1;
    p1.dim = dim + 1;
    p1.objective.terms.push_back(ConvexTerm{0.0, {{dim, 1.0}}});
    for (const auto& c : pr.ineqs) {
      ConvexConstraint rc = c;
      for (auto& t : rc.terms) t.a.emplace_back(dim, -1.0);
      p1.ineqs.push_back(std::move(rc));
    }
    double u0 = -std::numeric_limits<double>::infinity();
    for (const auto& c : pr.ineqs) u0 = std::max(u0, lse_value(c, y));
    Eigen::VectorXd y1(dim + 1);
    y1.head(dim) = y;
    y1(dim) = u0 + 1.0;

    int budget = policy::kGpMaxNewton;
    const PdOutcome r1 =
        pd_solve(p1, y1, tol, budget, dim, -1e-4, /*detect_unbounded=*/false);
    sol.newton_iterations += policy::kGpMaxNewton - budget;
    const double u = y1(dim);
    if (!(u < 0.0)) {
      fill_values(y1.head(dim));
      sol.objective_value = evaluate(prog.objective, sol.values);
      if (r1.status == GpStatus::max_iterations) {
        sol.status = GpStatus::max_iterations;
      } else {
        // Certified optimum within gap: infeasible iff s* > 1 + 1e-9.
        sol.status = (u - r1.gap > std::log1p(1e-9))
                         ? GpStatus::infeasible
                         : GpStatus::max_iterations;
      }
      return sol;
    }
    y = y1.head(dim);
  }

  // Phase II: primal-dual interior point on the true objective.  With no
  // inequalities left the KKT system degenerates to plain Newton, handled
  // by the centering routine with a terminal stationarity polish.
  int budget = policy::kGpMaxNewton;
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(0);
  if (pr.ineqs.empty()) {
    const double floor0 = lse_value(pr.objective, y);
    const CenterOutcome c = center(pr, 1.0, y, budget, -1, 0.0,
                                   /*detect_unbounded=*/true, floor0, 1e-30,
                                   1e-7);
    if (c == CenterOutcome::unbounded) {
      sol.status = GpStatus::unbounded;
    } else {
      sol.status = c == CenterOutcome::budget ? GpStatus::max_iterations
                                              : GpStatus::optimal;
    }
  } else {
    const PdOutcome r2 =
        pd_solve(pr, y, tol, budget, -1, 0.0, /*detect_unbounded=*/true);
    sol.status = r2.status;
    lam = r2.lambda;
  }
  sol.newton_iterations += policy::kGpMaxNewton - budget;

  fill_values(y);
  sol.objective_value = evaluate(prog.objective, sol.values);

  // Log-domain KKT stationarity. The solver's multipliers for inactive
  // constraints are accurate, but active ones (G_i ~ 0) carry relative
  // noise that swamps the measurement even when the iterate itself is
  // converged. The active duals are therefore refit by nonnegative least
  // squares over the active gradient columns; both dual vectors are valid
  // certificates, so the smaller residual is reported.
  Eigen::VectorXd base = Eigen::VectorXd::Zero(dim);
  lse_accumulate(pr.objective, y, 1.0, 0.0, 0.0, &base, nullptr);
  Eigen::VectorXd solver_res = base;
  std::vector<Eigen::VectorXd> active_cols;
  for (int i = 0; i < static_cast<int>(pr.ineqs.size()); ++i) {
    const double gval = lse_value(pr.ineqs[i], y);
    Eigen::VectorXd gi = Eigen::VectorXd::Zero(dim);
    lse_accumulate(pr.ineqs[i], y, 1.0, 0.0, 0.0, &gi, nullptr);
    const double mult = i < lam.size() ? lam(i) : 0.0;
    solver_res += mult * gi;
    if (-gval < 1e-3) {
      active_cols.push_back(std::move(gi));
    } else {
      base += mult * gi;  // accurate contribution, kept fixed in the refit
    }
  }
  sol.kkt_residual = solver_res.cwiseAbs().maxCoeff();
  std::vector<int> support(active_cols.size());
  std::iota(support.begin(), support.end(), 0);
  while (true) {
    if (support.empty()) {
      sol.kkt_residual =
          std::min(sol.kkt_residual, base.cwiseAbs().maxCoeff());
      break;
    }
    Eigen::MatrixXd a(dim, static_cast<int>(support.size()));
    for (size_t k = 0; k < support.size(); ++k) a.col(k) = active_cols[support[k]];
    const Eigen::VectorXd mults = a.colPivHouseholderQr().solve(-base);
    int drop = -1;
    double worst = -1e-12 * (1.0 + mults.cwiseAbs().maxCoeff());
    for (int k = 0; k < mults.size(); ++k) {
      if (mults[k] < worst) {
        worst = mults[k];
        drop = k;
      }
    }
    if (drop < 0) {
      const double refit =
          (base + a * mults.cwiseMax(0.0)).cwiseAbs().maxCoeff();
      sol.kkt_residual = std::min(sol.kkt_residual, refit);
      break;
    }
    support.erase(support.begin() + drop);
  }

  if (sol.status == GpStatus::optimal &&
      (!posterior_ok() || sol.kkt_residual > 1e-6))
    sol.status = GpStatus::max_iterations;
  return sol;
}

// ---------------------------------------------------------------------------
// JSON interchange
// ---------------------------------------------------------------------------

namespace {

nlohmann::ordered_json term_to_json(const Monomial& m) {
  nlohmann::ordered_json t;
  t["c"] = m.coeff;
  t["e"] = nlohmann::ordered_json::object();
  for (const auto& [name, e] : m.exponents) t["e"][name] = e;
  return t;
}

Monomial term_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("c"))
    throw std::runtime_error("gp json: term must be an object with 'c'");
  Monomial m;
  m.coeff = j.at("c").get<double>();
  if (j.contains("e")) {
    if (!j.at("e").is_object())
      throw std::runtime_error("gp json: term 'e' must be an object");
    for (const auto& [name, e] : j.at("e").items())
      m.exponents[name] = e.get<double>();
  }
  return m;
}

}  // namespace

nlohmann::ordered_json gp_to_json(const GeometricProgram& program) {
  nlohmann::ordered_json j;
  j["vars"] = nlohmann::ordered_json::array();
  for (const auto& v : program.variables) {
    nlohmann::ordered_json jv;
    jv["name"] = v.name;
    if (v.lower) jv["lo"] = *v.lower;
    if (v.upper) jv["hi"] = *v.upper;
    j["vars"].push_back(jv);
  }
  j["objective"] = nlohmann::ordered_json::array();
  for (const auto& t : program.objective.terms)
    j["objective"].push_back(term_to_json(t));
  j["ineqs"] = nlohmann::ordered_json::array();
  for (const auto& p : program.ineqs) {
    nlohmann::ordered_json jp = nlohmann::ordered_json::array();
    for (const auto& t : p.terms) jp.push_back(term_to_json(t));
    j["ineqs"].push_back(jp);
  }
  j["eqs"] = nlohmann::ordered_json::array();
  for (const auto& p : program.eqs) {
    if (p.terms.size() == 1) {
      j["eqs"].push_back(term_to_json(p.terms[0]));
    } else {
      nlohmann::ordered_json jp = nlohmann::ordered_json::array();
      for (const auto& t : p.terms) jp.push_back(term_to_json(t));
      j["eqs"].push_back(jp);
    }
  }
  return j;
}

GeometricProgram gp_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw std::runtime_error("gp json: root must be object");
  GeometricProgram p;
  if (j.contains("vars")) {
    for (const auto& jv : j.at("vars")) {
      VarDecl v;
      if (jv.is_string()) {
        v.name = jv.get<std::string>();
      } else if (jv.is_object() && jv.contains("name")) {
        v.name = jv.at("name").get<std::string>();
        if (jv.contains("lo")) v.lower = jv.at("lo").get<double>();
        if (jv.contains("hi")) v.upper = jv.at("hi").get<double>();
      } else {
        throw std::runtime_error("gp json: var must be a name or object");
      }
      p.variables.push_back(std::move(v));
    }
  }
  if (!j.contains("objective"))
    throw std::runtime_error("gp json: missing objective");
  for (const auto& jt : j.at("objective"))
    p.objective.terms.push_back(term_from_json(jt));
  if (j.contains("ineqs")) {
    for (const auto& jp : j.at("ineqs")) {
      if (!jp.is_array())
        throw std::runtime_error("gp json: inequality must be a term array");
      Posynomial posy;
      for (const auto& jt : jp) posy.terms.push_back(term_from_json(jt));
      p.ineqs.push_back(std::move(posy));
    }
  }
  if (j.contains("eqs")) {
    for (const auto& jp : j.at("eqs")) {
      Posynomial posy;
      if (jp.is_array()) {
        for (const auto& jt : jp) posy.terms.push_back(term_from_json(jt));
      } else {
        posy.terms.push_back(term_from_json(jp));
      }
      p.eqs.push_back(std::move(posy));
    }
  }
  return p;
}

}  // namespace posnet::gpsolve
