#pragma once

#include <Eigen/Core>
#include <utility>
#include <vector>

namespace uavrelay::cvx {

// Convex atoms a constraint may contain. Every atom carries analytic
// gradient and Hessian; solver correctness therefore reduces to these
// formulas, which the tests pin against finite differences.
enum class TermKind {
  // -c0_is_unused; vars (a, p): -a log2(1 + c0 p / a), c0 = gamma > 0
  NegPerspectiveLog,
  // vars (a): -a log2(1 + c0 / a), c0 > 0
  NegLogFixedArg,
  // vars (X, Y): +c0 log2(1 + c1 (c2 + c3 / Y) / X^(c4/2)); X, Y > 0.
  // Convex: log(1+e^t) composed with the convex t = log of the SNR term.
  SurrogateRate,
  // vars (D): +c0 log2(1 + c1 / D), D > 0
  RecipRate,
  // vars (v): c0 exp(c1 + c2 v), c0 > 0
  ExpAffine,
  // vars (x...): c0 sqrt(c1 + sum (x_i - u_i)^2), c0 > 0, c1 >= 0
  SqrtQuad,
  // vars (x, y): c0 (x + c1)^2 / y, y > 0, c0 > 0
  QuadOverLin,
  // vars (y): c0 / y, y > 0, c0 > 0
  Reciprocal,
  // vars (x...): c0 sum (x_i - u_i)^2, c0 > 0
  SquareDist,
  // vars (x, y): c0 (x - y)^2, c0 > 0
  SquareDiff,
};

struct Term {
  TermKind kind;
  int var[3] = {-1, -1, -1};
  int nvar = 0;
  double c0 = 0, c1 = 0, c2 = 0, c3 = 0, c4 = 0;
  double u[3] = {0, 0, 0}; // centers for SqrtQuad / SquareDist

  double value(const double* x) const;
  // Value plus local gradient (nvar) and Hessian (nvar x nvar, row-major).
  double eval(const double* x, double* grad, double* hess) const;
};

struct LinTerm {
  int var;
  double coef;
};

// One inequality: constant + lin.x + sum(terms) <= 0.
struct Constraint {
  std::vector<Term> terms;
  std::vector<LinTerm> lin;
  double constant = 0;

  double value(const Eigen::VectorXd& x) const;
  Constraint& add(Term t) { terms.push_back(t); return *this; }
  Constraint& add_lin(int var, double coef) { lin.push_back({var, coef}); return *this; }
};

// maximize objective . x  s.t.  ineq_i(x) <= 0, Ax = b, lb <= x <= ub.
// Bounds must keep every atom argument inside its convexity domain.
struct Program {
  int n = 0;
  Eigen::VectorXd objective;
  Eigen::VectorXd lb, ub;
  std::vector<Constraint> ineq;
  std::vector<std::vector<LinTerm>> eq_rows;
  std::vector<double> eq_rhs;

  int add_var(double lo, double hi);
  Constraint& add_ineq() { return ineq.emplace_back(); }
};

enum class SolveStatus { Optimal, MaxIters, Infeasible };

struct Solution {
  Eigen::VectorXd x;
  double objective = 0;
  double feas_residual = 0; // max constraint violation at x
  double stat_residual = 0; // scaled dual residual from the final center
  SolveStatus status = SolveStatus::MaxIters;
  int newton_iters = 0;
  int phase1_iters = 0; // Newton steps spent restoring strict feasibility
};

struct SolveOptions {
  double tol_feas = 1e-7;
  double tol_opt = 1e-6;
  double barrier_t0 = 1.0;     // initial barrier weight; raise for warm starts
  double barrier_mult = 30.0;  // stage multiplier
  double gap_target = 1e-8;    // stop once (#constraints)/t <= gap_target
  int max_newton = 800;        // total Newton step budget including phase-I
  double stage_tol = 1e-10;    // Newton decrement^2/2 threshold, final stage
  double stage_tol_path = 1e-6; // same threshold on intermediate stages
};

// Log-barrier interior-point method with damped Newton centering and an
// infeasible-start phase-I (minimize s s.t. f_i(x) <= s). `warm`, when given,
// seeds the first center.
Solution solve(const Program& p, const Eigen::VectorXd* warm = nullptr,
               const SolveOptions& opt = {});

// Independent optimality check at x: (max primal violation, scaled dual
// residual). The dual residual fits nonnegative multipliers on near-active
// constraints by NNLS, so it does not reuse any solver state.
std::pair<double, double> kkt_residual(const Program& p, const Eigen::VectorXd& x);

}  // namespace uavrelay::cvx
