#include "posnet/design.hpp"

#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

namespace posnet::design {

using gpsolve::GeometricProgram;
using gpsolve::Monomial;
using gpsolve::Posynomial;
using gpsolve::VarDecl;

void PosyMatrix::set(int r, int c, const Posynomial& p) {
  const Posynomial s = gpsolve::simplify(p);
  if (s.is_zero()) {
    entries.erase({r, c});
  } else {
    entries[{r, c}] = s;
  }
}

const Posynomial* PosyMatrix::find(int r, int c) const {
  auto it = entries.find({r, c});
  return it == entries.end() ? nullptr : &it->second;
}

namespace {

std::string pname(int i) { return "p" + std::to_string(i + 1); }
std::string rname(int j) { return "r" + std::to_string(j + 1); }
std::string vname(int k) { return "v" + std::to_string(k + 1); }
std::string w_node_name(int i, int k) {
  return "w" + std::to_string(i + 1) + "_" + std::to_string(k + 1);
}
std::string w_shared_name(int k) { return "w" + std::to_string(k + 1); }

Monomial var_mono(const std::string& name, double e = 1.0, double c = 1.0) {
  Monomial m;
  m.coeff = c;
  m.exponents[name] = e;
  return m;
}

Monomial inverse(const Monomial& m) {
  Monomial inv;
  inv.coeff = 1.0 / m.coeff;
  for (const auto& [name, e] : m.exponents) inv.exponents[name] = -e;
  return inv;
}

[[noreturn]] void fail(const std::string& msg) {
  throw std::invalid_argument("design family: " + msg);
}

// Posynomial sanity for family entries: positive finite coefficients and
// only the permitted variable names.
void check_posy(const Posynomial& p, const std::string& where,
                const std::set<std::string>& allowed) {
  if (p.terms.empty()) fail(where + " is an empty posynomial");
  for (const auto& t : p.terms) {
    if (!(t.coeff > 0.0) || !std::isfinite(t.coeff)) {
      fail(where + " has a nonpositive or nonfinite coefficient");
    }
    for (const auto& [name, e] : t.exponents) {
      if (!std::isfinite(e)) fail(where + " has a nonfinite exponent");
      if (!allowed.count(name)) {
        fail(where + " references unknown variable '" + name + "'");
      }
    }
  }
}

struct FamilyShape {
  std::set<std::string> r_vars;     // r1..rm
  std::set<std::string> r_rho;      // + rho
  std::set<std::string> user_vars;  // + lambda (fixed-lambda pinning)
  bool has_eta = false;
  bool has_var = false;
};

FamilyShape validate_family(const DesignFamily& f) {
  if (f.N < 1) fail("N must be >= 1");
  if (f.n < 1) fail("n must be >= 1");
  if (f.m_params < 0) fail("m_params must be >= 0");
  const int nN = f.N * f.n;

  FamilyShape shape;
  for (int j = 0; j < f.m_params; ++j) shape.r_vars.insert(rname(j));
  shape.r_rho = shape.r_vars;
  shape.r_rho.insert("rho");
  shape.user_vars = shape.r_rho;
  shape.user_vars.insert("lambda");

  auto in_range = [&](int k) { return k >= 0 && k < nN; };
  auto entry_name = [](const std::string& what, int r, int c) {
    return what + "(" + std::to_string(r + 1) + "," + std::to_string(c + 1) +
           ")";
  };

  for (const auto& [key, p] : f.mean_plus.entries) {
    if (!in_range(key.first) || !in_range(key.second)) {
      fail(entry_name("mean_plus", key.first, key.second) + " out of range");
    }
    check_posy(p, entry_name("mean_plus", key.first, key.second),
               shape.r_vars);
  }
  for (int k = 0; k < nN; ++k) {
    auto it = f.mean_minus.find(k);
    if (it == f.mean_minus.end()) {
      fail("mean_minus[" + std::to_string(k + 1) +
           "] missing: every diagonal entry of E[A-] must be a strictly "
           "positive monomial (the decay constraint divides by it)");
    }
    const Monomial& m = it->second;
    if (!(m.coeff > 0.0) || !std::isfinite(m.coeff)) {
      fail("mean_minus[" + std::to_string(k + 1) +
           "] must have a strictly positive coefficient");
    }
    for (const auto& [name, e] : m.exponents) {
      if (!std::isfinite(e)) {
        fail("mean_minus[" + std::to_string(k + 1) +
             "] has a nonfinite exponent");
      }
      if (!shape.r_vars.count(name)) {
        fail("mean_minus[" + std::to_string(k + 1) +
             "] references unknown variable '" + name + "'");
      }
    }
  }

  auto check_node = [&](int i, const std::string& where) {
    if (i < 0 || i >= f.N) fail(where + " node index out of range");
  };

  if (f.mode == IndependenceMode::a1) {
    if (!f.eta_i.empty() || !f.phi_i.empty()) {
      fail("a1 family must not set the a2 fields eta_i/phi_i");
    }
    for (const auto& [key, p] : f.eta) {
      check_node(key.first, "eta");
      check_node(key.second, "eta");
      check_posy(p,
                 entry_name("eta", key.first, key.second), shape.r_vars);
      shape.has_eta = true;
    }
    auto check_block = [&](const char* what,
                           const std::map<std::pair<int, int>, PosyMatrix>&
                               blocks) {
      for (const auto& [key, mat] : blocks) {
        check_node(key.first, what);
        check_node(key.second, what);
        for (const auto& [kl, p] : mat.entries) {
          if (kl.first < 0 || kl.first >= f.n || kl.second < 0 ||
              kl.second >= f.n) {
            fail(entry_name(what, key.first, key.second) + " entry out of "
                 "range");
          }
          check_posy(p,
                     entry_name(what, key.first, key.second) + " entry " +
                         entry_name("", kl.first, kl.second),
                     shape.r_vars);
          shape.has_var = true;
        }
      }
    };
    check_block("phi", f.phi);
    check_block("psi", f.psi);
  } else {
    if (!f.eta.empty() || !f.phi.empty() || !f.psi.empty()) {
      fail("a2 family must not set the a1 fields eta/phi/psi");
    }
    if (!f.eta_i.empty() && static_cast<int>(f.eta_i.size()) != f.N) {
      fail("eta_i must be empty or have one entry per node");
    }
    for (int i = 0; i < static_cast<int>(f.eta_i.size()); ++i) {
      if (f.eta_i[i].is_zero()) continue;
      check_posy(f.eta_i[i], "eta_i[" + std::to_string(i + 1) + "]",
                 shape.r_vars);
      shape.has_eta = true;
    }
    if (!f.phi_i.empty() && static_cast<int>(f.phi_i.size()) != f.N) {
      fail("phi_i must be empty or have one entry per node");
    }
    for (int i = 0; i < static_cast<int>(f.phi_i.size()); ++i) {
      for (const auto& [kl, p] : f.phi_i[i].entries) {
        if (!in_range(kl.first) || !in_range(kl.second)) {
          fail("phi_i[" + std::to_string(i + 1) + "] entry out of range");
        }
        check_posy(p,
                   "phi_i[" + std::to_string(i + 1) + "] entry " +
                       entry_name("", kl.first, kl.second),
                   shape.r_vars);
        shape.has_var = true;
      }
    }
  }

  if (!f.cost.is_zero()) {
    check_posy(f.cost, "cost", shape.r_rho);
    if (!(f.cost_bound > 0.0) || !std::isfinite(f.cost_bound)) {
      fail("cost_bound must be positive when a cost is set");
    }
  }
  for (size_t k = 0; k < f.ineq_constraints.size(); ++k) {
    check_posy(f.ineq_constraints[k],
               "ineq_constraints[" + std::to_string(k + 1) + "]",
               shape.user_vars);
  }
  for (size_t k = 0; k < f.eq_constraints.size(); ++k) {
    const std::string where =
        "eq_constraints[" + std::to_string(k + 1) + "]";
    check_posy(f.eq_constraints[k], where, shape.user_vars);
    if (f.eq_constraints[k].terms.size() != 1) fail(where + " is not a monomial");
  }

  if (f.r_lo.size() != 0 && f.r_lo.size() != f.m_params) {
    fail("r_lo must be empty or size m_params");
  }
  if (f.r_hi.size() != 0 && f.r_hi.size() != f.m_params) {
    fail("r_hi must be empty or size m_params");
  }
  for (int j = 0; j < f.m_params; ++j) {
    const double lo = f.r_lo.size() ? f.r_lo[j] : policy::kDesignRLo;
    const double hi = f.r_hi.size() ? f.r_hi[j] : policy::kDesignRHi;
    if (!(lo > 0.0) || !(hi >= lo)) {
      fail("r bounds for " + rname(j) + " must satisfy 0 < lo <= hi");
    }
  }
  return shape;
}

// Shared builder. The A1/A2 difference is confined to the deviation and
// variance constraint groups and the w-variable layout.
GeometricProgram build_design_gp(const DesignFamily& f, EpsMode mode,
                                 double eps) {
  const FamilyShape shape = validate_family(f);
  const int nN = f.N * f.n;
  const bool a2 = f.mode == IndependenceMode::a2;
  if (mode == EpsMode::fixed_eps &&
      (!(eps > 0.0) || eps > 1.0 || !std::isfinite(eps))) {
    fail("fixed eps must lie in (0, 1]");
  }

  GeometricProgram gp;
  const double lo = policy::kDesignAuxLo;
  const double hi = policy::kDesignAuxHi;
  auto aux = [&](const std::string& name) {
    gp.variables.push_back({name, lo, hi});
  };
  // rho >= log(nN) keeps eps* = nN e^{-rho} inside (0, 1]; the floor guards
  // the nN = 1 case where log(nN) = 0 is not a valid positive bound, and a
  // pinned rho is allowed to sit on the bound.
  double rho0 = 0.0;
  if (mode == EpsMode::fixed_eps) {
    rho0 = std::log(static_cast<double>(nN) / eps);
    if (!(rho0 > 0.0)) fail("fixed eps must satisfy log(nN/eps) > 0");
  }
  double rho_lo = std::max(std::log(static_cast<double>(nN)), lo);
  if (mode == EpsMode::fixed_eps) rho_lo = std::min(rho_lo, rho0);
  aux("a");
  aux("Delta");
  aux("sigma");
  gp.variables.push_back({"rho", rho_lo, hi});
  aux("lambda");
  for (int i = 0; i < f.N; ++i) aux(pname(i));
  for (int j = 0; j < f.m_params; ++j) {
    const double rlo = f.r_lo.size() ? f.r_lo[j] : policy::kDesignRLo;
    const double rhi = f.r_hi.size() ? f.r_hi[j] : policy::kDesignRHi;
    gp.variables.push_back({rname(j), rlo, rhi});
  }
  for (int k = 0; k < nN; ++k) aux(vname(k));
  if (a2) {
    for (int k = 0; k < nN; ++k) aux(w_shared_name(k));
  } else {
    for (int i = 0; i < f.N; ++i) {
      for (int k = 0; k < f.n; ++k) aux(w_node_name(i, k));
    }
  }

  // Objective 1/lambda: minimizing it maximizes the certified decay rate.
  gp.objective = Posynomial::from(var_mono("lambda", -1.0));

  // Gauges: the certificate system is invariant under joint scaling of p
  // (with a, Delta, sigma) and under separate scalings of v and each w.
  auto pin = [&](const std::string& name) {
    gp.eqs.push_back(Posynomial::from(var_mono(name)));
  };
  pin(pname(0));
  pin(vname(0));
  if (a2) {
    pin(w_shared_name(0));
  } else {
    for (int i = 0; i < f.N; ++i) pin(w_node_name(i, 0));
  }

  // Decay rows: (E[A+]^T P + P E[A+] + a I + lambda P) v <= 2 P E[A-] v,
  // componentwise; the right side is a monomial per component, so division
  // rewrites each row into posynomial <= 1 form.
  std::vector<std::vector<std::pair<int, const Posynomial*>>> by_col(nN),
      by_row(nN);
  for (const auto& [key, p] : f.mean_plus.entries) {
    by_col[key.second].push_back({key.first, &p});
    by_row[key.first].push_back({key.second, &p});
  }
  for (int k = 0; k < nN; ++k) {
    const int node_k = k / f.n;
    Posynomial lhs;
    for (const auto& [l, p] : by_col[k]) {
      lhs = lhs + var_mono(pname(l / f.n)) * (var_mono(vname(l)) * *p);
    }
    for (const auto& [l, p] : by_row[k]) {
      lhs = lhs + var_mono(pname(node_k)) * (var_mono(vname(l)) * *p);
    }
    Monomial av = var_mono("a");
    av.exponents[vname(k)] += 1.0;
    lhs.terms.push_back(av);
    Monomial lpv = var_mono("lambda");
    lpv.exponents[pname(node_k)] += 1.0;
    lpv.exponents[vname(k)] += 1.0;
    lhs.terms.push_back(lpv);

    Monomial rhs = f.mean_minus.at(k);  // validated present and positive
    rhs.coeff *= 2.0;
    rhs.exponents[pname(node_k)] += 1.0;
    rhs.exponents[vname(k)] += 1.0;
    gp.ineqs.push_back(gpsolve::simplify(inverse(rhs) * lhs));
  }

  // Scalar tail test (2 rho Delta / a + 6 rho sigma^2 / a^2) / 3 <= 1-1e-9,
  // only when the family carries uncertainty at all.
  if (shape.has_eta || shape.has_var) {
    const double strict = 1.0 - 1e-9;
    Monomial t1;
    t1.coeff = 2.0 / (3.0 * strict);
    t1.exponents = {{"rho", 1.0}, {"Delta", 1.0}, {"a", -1.0}};
    Monomial t2;
    t2.coeff = 2.0 / strict;
    t2.exponents = {{"rho", 1.0}, {"sigma", 2.0}, {"a", -2.0}};
    gp.ineqs.push_back(Posynomial{{t1, t2}});
  }

  // Deviation bounds: p_i eta_ij / Delta <= 1 (blocks) or
  // 2 p_i eta_i / Delta <= 1 (block-rows).
  if (a2) {
    for (int i = 0; i < static_cast<int>(f.eta_i.size()); ++i) {
      if (f.eta_i[i].is_zero()) continue;
      Monomial m = var_mono(pname(i), 1.0, 2.0);
      m.exponents["Delta"] = -1.0;
      gp.ineqs.push_back(gpsolve::simplify(m * f.eta_i[i]));
    }
  } else {
    for (const auto& [key, etap] : f.eta) {
      Monomial m = var_mono(pname(key.first));
      m.exponents["Delta"] = -1.0;
      gp.ineqs.push_back(gpsolve::simplify(m * etap));
    }
  }

  // Variance rows: (p_i^2 sum_j Psi_ij + sum_j p_j^2 Phi_ji) w_i <=
  // sigma^2 w_i per node (blocks), or (sum_i p_i^2 Phi_i) w <= sigma^2 w
  // with the shared w (block-rows). Division by the monomial right side
  // again yields posynomial <= 1 rows.
  auto push_variance_rows =
      [&](const std::map<std::pair<int, int>, Posynomial>& m, int dim,
          auto&& wvar) {
        std::vector<std::vector<std::pair<int, const Posynomial*>>> rows(dim);
        for (const auto& [kl, p] : m) rows[kl.first].push_back(
            {kl.second, &p});
        for (int k = 0; k < dim; ++k) {
          if (rows[k].empty()) continue;
          Posynomial lhs;
          for (const auto& [l, p] : rows[k]) {
            lhs = lhs + var_mono(wvar(l)) * *p;
          }
          Monomial div;
          div.exponents = {{"sigma", -2.0}, {wvar(k), -1.0}};
          gp.ineqs.push_back(gpsolve::simplify(div * lhs));
        }
      };
  auto accumulate = [](std::map<std::pair<int, int>, Posynomial>& acc,
                       const PosyMatrix& mat, const Monomial& factor) {
    for (const auto& [kl, p] : mat.entries) {
      Posynomial& slot = acc[kl];
      slot = slot + factor * p;
    }
  };
  if (a2) {
    std::map<std::pair<int, int>, Posynomial> total;
    for (int i = 0; i < static_cast<int>(f.phi_i.size()); ++i) {
      accumulate(total, f.phi_i[i], var_mono(pname(i), 2.0));
    }
    push_variance_rows(total, nN, w_shared_name);
  } else {
    for (int i = 0; i < f.N; ++i) {
      std::map<std::pair<int, int>, Posynomial> node;
      for (const auto& [key, mat] : f.psi) {
        if (key.first == i) accumulate(node, mat, var_mono(pname(i), 2.0));
      }
      for (const auto& [key, mat] : f.phi) {
        if (key.second == i) {
          accumulate(node, mat, var_mono(pname(key.first), 2.0));
        }
      }
      push_variance_rows(node, f.n,
                         [&](int k) { return w_node_name(i, k); });
    }
  }

  // Budget and user constraints.
  if (!f.cost.is_zero()) {
    gp.ineqs.push_back(gpsolve::scale(f.cost, 1.0 / f.cost_bound));
  }
  for (const auto& p : f.ineq_constraints) gp.ineqs.push_back(p);
  for (const auto& p : f.eq_constraints) gp.eqs.push_back(p);

  if (mode == EpsMode::fixed_eps) {
    gp.eqs.push_back(Posynomial::from(var_mono("rho", 1.0, 1.0 / rho0)));
  }
  return gp;
}

}  // namespace

GeometricProgram build_design_gp_a1(const DesignFamily& family, EpsMode mode,
                                    double eps) {
  if (family.mode != IndependenceMode::a1) {
    fail("build_design_gp_a1 requires an a1 family");
  }
  return build_design_gp(family, mode, eps);
}

GeometricProgram build_design_gp_a2(const DesignFamily& family, EpsMode mode,
                                    double eps) {
  if (family.mode != IndependenceMode::a2) {
    fail("build_design_gp_a2 requires an a2 family");
  }
  return build_design_gp(family, mode, eps);
}

DesignResult solve_design(const DesignFamily& family, EpsMode mode,
                          double eps, double tol) {
  if (!family.realize) {
    fail("realize hook required: solve_design must re-certify the concrete "
         "model at r*");
  }
  const GeometricProgram gp = build_design_gp(family, mode, eps);
  const gpsolve::GpSolution sol = gpsolve::gp_solve(gp, tol);
  if (sol.status == gpsolve::GpStatus::infeasible) {
    throw std::runtime_error("no design meets cost/constraints at any rate");
  }
  if (sol.status != gpsolve::GpStatus::optimal) {
    throw std::runtime_error("design solve did not converge (" +
                             gpsolve::to_string(sol.status) + ")");
  }

  const int nN = family.N * family.n;
  const bool a2 = family.mode == IndependenceMode::a2;
  const FamilyShape shape = validate_family(family);

  DesignResult res;
  res.gp_status = sol.status;
  res.r_star.resize(family.m_params);
  for (int j = 0; j < family.m_params; ++j) {
    res.r_star[j] = sol.values.at(rname(j));
  }
  res.lambda_star = sol.values.at("lambda");
  res.rho_star = sol.values.at("rho");
  res.eps_star = std::max(static_cast<double>(nN) * std::exp(-res.rho_star),
                          policy::kEpsFloor);
  res.p_star.resize(family.N);
  for (int i = 0; i < family.N; ++i) res.p_star[i] = sol.values.at(pname(i));
  res.a = sol.values.at("a");
  // The GP fills unreferenced Delta/sigma with a clamped unit value; the
  // true surrogate for an absent uncertainty group is zero.
  res.delta = shape.has_eta ? sol.values.at("Delta") : 0.0;
  res.sigma = shape.has_var ? sol.values.at("sigma") : 0.0;
  res.v.resize(nN);
  for (int k = 0; k < nN; ++k) res.v[k] = sol.values.at(vname(k));
  if (a2) {
    res.w.resize(nN, 1);
    for (int k = 0; k < nN; ++k) res.w(k, 0) = sol.values.at(w_shared_name(k));
  } else {
    res.w.resize(family.n, family.N);
    for (int i = 0; i < family.N; ++i) {
      for (int k = 0; k < family.n; ++k) {
        res.w(k, i) = sol.values.at(w_node_name(i, k));
      }
    }
  }

  res.certificate = certify::make_certificate(
      res.p_star, res.a, res.delta, res.sigma, res.lambda_star, res.eps_star,
      family.mode, family.n, family.N);

  NetworkModel concrete = family.realize(res.r_star);
  if (concrete.mode() != family.mode) {
    if (a2 && concrete.mode() == IndependenceMode::a1) {
      concrete = model::to_a2(concrete);
    } else {
      fail("realize returned a model in the wrong independence mode");
    }
  }
  res.verification = certify::check_certificate(concrete, res.certificate);
  if (!res.verification.feasible) {
    throw std::runtime_error("surrogate bounds violated at r*");
  }
  return res;
}

// ---------------------------------------------------------------------------
// JSON loading
// ---------------------------------------------------------------------------

namespace {

Monomial term_from_json(const nlohmann::json& j) {
  if (!j.is_object() || !j.contains("c")) {
    throw std::invalid_argument("design family JSON: term must be an object "
                                "with \"c\" and optional \"e\"");
  }
  Monomial m;
  m.coeff = j.at("c").get<double>();
  if (j.contains("e")) {
    for (const auto& [name, e] : j.at("e").items()) {
      m.exponents[name] = e.get<double>();
    }
  }
  return m;
}

Posynomial posy_from_json(const nlohmann::json& j) {
  Posynomial p;
  if (!j.is_array()) {
    throw std::invalid_argument(
        "design family JSON: posynomial must be an array of terms");
  }
  for (const auto& t : j) p.terms.push_back(term_from_json(t));
  return p;
}

Eigen::MatrixXd matrix_from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.empty()) {
    throw std::invalid_argument("design family JSON: matrix must be a "
                                "nonempty array of rows");
  }
  const int rows = static_cast<int>(j.size());
  const int cols = static_cast<int>(j.at(0).size());
  Eigen::MatrixXd m(rows, cols);
  for (int r = 0; r < rows; ++r) {
    if (static_cast<int>(j.at(r).size()) != cols) {
      throw std::invalid_argument("design family JSON: ragged matrix");
    }
    for (int c = 0; c < cols; ++c) m(r, c) = j.at(r).at(c).get<double>();
  }
  return m;
}

struct RealizeBlock {
  int i = 0, j = 0;
  bool two_point = false;
  int param = 0;  // 0-based r index for the high-point probability
  Eigen::MatrixXd hi, lo;  // `hi` doubles as the deterministic matrix
};

}  // namespace

DesignFamily family_from_json(const nlohmann::json& j) {
  DesignFamily f;
  f.N = j.at("N").get<int>();
  f.n = j.value("n", 1);
  f.m_params = j.value("m", 0);
  const std::string mode = j.value("mode", std::string("a1"));
  if (mode == "a1") {
    f.mode = IndependenceMode::a1;
  } else if (mode == "a2") {
    f.mode = IndependenceMode::a2;
  } else {
    throw std::invalid_argument("design family JSON: mode must be a1 or a2");
  }
  const int nN = f.N * f.n;
  f.mean_plus = PosyMatrix(nN, nN);

  for (const auto& e : j.value("mean_plus", nlohmann::json::array())) {
    f.mean_plus.set(e.at("row").get<int>() - 1, e.at("col").get<int>() - 1,
                    posy_from_json(e.at("terms")));
  }
  for (const auto& e : j.value("mean_minus", nlohmann::json::array())) {
    f.mean_minus[e.at("k").get<int>() - 1] = term_from_json(e.at("term"));
  }
  if (f.mode == IndependenceMode::a1) {
    for (const auto& e : j.value("eta", nlohmann::json::array())) {
      f.eta[{e.at("i").get<int>() - 1, e.at("j").get<int>() - 1}] =
          posy_from_json(e.at("terms"));
    }
    auto load_blocks = [&](const char* key,
                           std::map<std::pair<int, int>, PosyMatrix>& out) {
      for (const auto& e : j.value(key, nlohmann::json::array())) {
        PosyMatrix& mat =
            out.try_emplace({e.at("i").get<int>() - 1,
                             e.at("j").get<int>() - 1},
                            f.n, f.n)
                .first->second;
        mat.set(e.at("row").get<int>() - 1, e.at("col").get<int>() - 1,
                posy_from_json(e.at("terms")));
      }
    };
    load_blocks("phi", f.phi);
    load_blocks("psi", f.psi);
  } else {
    f.eta_i.assign(f.N, Posynomial::zero());
    for (const auto& e : j.value("eta", nlohmann::json::array())) {
      f.eta_i[e.at("i").get<int>() - 1] = posy_from_json(e.at("terms"));
    }
    f.phi_i.assign(f.N, PosyMatrix(nN, nN));
    for (const auto& e : j.value("phi", nlohmann::json::array())) {
      f.phi_i[e.at("i").get<int>() - 1].set(e.at("row").get<int>() - 1,
                                            e.at("col").get<int>() - 1,
                                            posy_from_json(e.at("terms")));
    }
  }

  if (j.contains("cost")) f.cost = posy_from_json(j.at("cost"));
  f.cost_bound = j.value("cost_bound", 0.0);
  for (const auto& e : j.value("ineqs", nlohmann::json::array())) {
    f.ineq_constraints.push_back(posy_from_json(e));
  }
  for (const auto& e : j.value("eqs", nlohmann::json::array())) {
    f.eq_constraints.push_back(e.is_array()
                                   ? posy_from_json(e)
                                   : Posynomial::from(term_from_json(e)));
  }

  auto load_bound = [&](const char* key, double fallback) {
    Eigen::VectorXd out = Eigen::VectorXd::Constant(f.m_params, fallback);
    if (j.contains(key)) {
      const auto& b = j.at(key);
      if (b.is_number()) {
        out.setConstant(b.get<double>());
      } else {
        if (static_cast<int>(b.size()) != f.m_params) {
          throw std::invalid_argument(
              std::string("design family JSON: ") + key +
              " must be a scalar or one value per parameter");
        }
        for (int k = 0; k < f.m_params; ++k) out[k] = b.at(k).get<double>();
      }
    }
    return out;
  };
  f.r_lo = load_bound("r_lo", policy::kDesignRLo);
  f.r_hi = load_bound("r_hi", policy::kDesignRHi);

  if (j.contains("realize")) {
    std::vector<RealizeBlock> blocks;
    for (const auto& e : j.at("realize").at("blocks")) {
      RealizeBlock b;
      b.i = e.at("i").get<int>() - 1;
      b.j = e.at("j").get<int>() - 1;
      const std::string kind = e.at("kind").get<std::string>();
      if (kind == "two_point") {
        b.two_point = true;
        b.param = e.at("param").get<int>() - 1;
        if (b.param < 0 || b.param >= f.m_params) {
          throw std::invalid_argument(
              "design family JSON: realize block param out of range");
        }
        b.hi = matrix_from_json(e.at("hi"));
        b.lo = matrix_from_json(e.at("lo"));
      } else if (kind == "deterministic") {
        b.hi = matrix_from_json(e.at("m"));
      } else {
        throw std::invalid_argument(
            "design family JSON: realize block kind must be two_point or "
            "deterministic");
      }
      blocks.push_back(std::move(b));
    }
    const int N = f.N;
    const int n = f.n;
    f.realize = [blocks, N, n](const Eigen::VectorXd& r) {
      NetworkModel::BlockMap map;
      for (const auto& b : blocks) {
        if (b.two_point) {
          map.emplace(std::make_pair(b.i, b.j),
                      model::FiniteMatrixDistribution::two_point(
                          r[b.param], b.hi, b.lo));
        } else {
          map.emplace(std::make_pair(b.i, b.j),
                      model::FiniteMatrixDistribution::deterministic(b.hi));
        }
      }
      return NetworkModel::a1(N, n, std::move(map));
    };
  }
  return f;
}

DesignFamily load_family(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open family file: " + path);
  std::stringstream buf;
  buf << in.rdbuf();
  return family_from_json(nlohmann::json::parse(buf.str()));
}

}  // namespace posnet::design
