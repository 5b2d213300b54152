#pragma once

// Self-contained geometric-program modeling and solving: monomials and
// posynomials over named positive variables, structural validation, the
// log-domain convex transform, and a log-barrier Newton solver.
//
// A geometric program here is
//     minimize    f_0(x)
//     subject to  f_i(x) <= 1,   g_j(x) = 1,   x > 0 (optional box bounds),
// with f posynomials and g monomials.  Affine (monomial) equalities are
// eliminated by substitution before solving; a phase-I problem (minimize a
// shared slack s with f_i <= s) produces a strictly feasible start or a
// certificate of infeasibility.

#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace posnet::gpsolve {

// ---------------------------------------------------------------------------
// Domain types
// ---------------------------------------------------------------------------

struct Monomial {
  double coeff = 1.0;
  std::map<std::string, double> exponents;  // variable name -> real exponent
};

struct Posynomial {
  std::vector<Monomial> terms;

  static Posynomial zero() { return Posynomial{}; }
  static Posynomial constant(double c);
  static Posynomial from(Monomial m);
  bool is_zero() const { return terms.empty(); }
};

// Drops zero-coefficient terms and zero exponents (the canonical form used by
// builders; validation still sees whatever the caller stored).
Monomial simplify(const Monomial& m);
Posynomial simplify(const Posynomial& p);

// Pointwise sum / product helpers used by program builders.
Posynomial operator+(const Posynomial& a, const Posynomial& b);
Posynomial operator*(const Monomial& a, const Posynomial& b);
Monomial operator*(const Monomial& a, const Monomial& b);
Posynomial scale(const Posynomial& p, double c);

// Variable declaration with optional positive box bounds.
struct VarDecl {
  std::string name;
  std::optional<double> lower;
  std::optional<double> upper;
};

struct GeometricProgram {
  Posynomial objective;
  std::vector<Posynomial> ineqs;  // f_i(x) <= 1
  // Equalities g_j(x) = 1.  Must be monomial (exactly one positive term);
  // stored as posynomials so that gp_validate can report violations instead
  // of the type system silently forbidding them.
  std::vector<Posynomial> eqs;
  std::vector<VarDecl> variables;
};

enum class GpStatus { optimal, infeasible, max_iterations, unbounded };

std::string to_string(GpStatus s);

struct GpSolution {
  GpStatus status = GpStatus::max_iterations;
  std::map<std::string, double> values;  // variable -> positive scalar
  double objective_value = 0.0;
  double kkt_residual = 0.0;    // log-domain stationarity residual (inf norm)
  int newton_iterations = 0;    // total Newton steps across both phases
};

// ---------------------------------------------------------------------------
// Operations
// ---------------------------------------------------------------------------

double evaluate(const Monomial& m, const std::map<std::string, double>& x);
double evaluate(const Posynomial& p, const std::map<std::string, double>& x);

// Structural check only; returns human-readable violations (empty iff
// well-formed): negative coefficients, equality not monomial, undeclared or
// duplicate variables, empty posynomials, nonpositive or inverted bounds.
std::vector<std::string> gp_validate(const GeometricProgram& program);

// Convex (log-domain) form: variables y = log x, each posynomial constraint
// f <= 1 becomes log-sum-exp(b_k + a_k . y) <= 0, monomial equalities become
// affine equalities a . y = d.
struct ConvexTerm {
  double b = 0.0;
  std::vector<std::pair<int, double>> a;  // sparse (variable index, exponent)
};

struct ConvexConstraint {
  std::vector<ConvexTerm> terms;  // log sum_k exp(b_k + a_k . y)  (<= 0)
};

struct ConvexGp {
  std::vector<std::string> var_names;  // index -> name (declaration order)
  ConvexConstraint objective;
  std::vector<ConvexConstraint> ineqs;  // includes box bounds, in order
  std::vector<std::pair<std::vector<std::pair<int, double>>, double>>
      eqs;  // sum_j a_j y_j = d
};

// Value of log-sum-exp at y (numerically stable).
double lse_value(const ConvexConstraint& c, const Eigen::VectorXd& y);

ConvexGp gp_to_convex(const GeometricProgram& program);

// Solves the program to the given duality-gap surrogate tolerance.
// Throws std::invalid_argument when gp_validate reports violations.
GpSolution gp_solve(const GeometricProgram& program, double tol = 1e-7);

// ---------------------------------------------------------------------------
// JSON interchange
//   {"vars":[{"name":..,"lo":..,"hi":..}|"name", ...],
//    "objective":[term, ...], "ineqs":[[term, ...], ...], "eqs":[term, ...]}
// with term = {"c": float, "e": {var: float, ...}}.
// ---------------------------------------------------------------------------

nlohmann::ordered_json gp_to_json(const GeometricProgram& program);
GeometricProgram gp_from_json(const nlohmann::json& j);

}  // namespace posnet::gpsolve
