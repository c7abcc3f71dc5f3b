#include "uavrelay/cvx.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <limits>

namespace uavrelay::cvx {

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();
constexpr double kLn2 = 0.69314718055994530941723212145818;

double log1p_safe(double s) { return std::log1p(s); }

}  // namespace

int Program::add_var(double lo, double hi) {
  const int idx = n++;
  objective.conservativeResize(n);
  lb.conservativeResize(n);
  ub.conservativeResize(n);
  objective[idx] = 0;
  lb[idx] = lo;
  ub[idx] = hi;
  return idx;
}

double Term::value(const double* x) const {
  switch (kind) {
    case TermKind::NegPerspectiveLog: {
      const double a = x[var[0]], p = x[var[1]];
      return -a / kLn2 * log1p_safe(c0 * p / a);
    }
    case TermKind::NegLogFixedArg: {
      const double a = x[var[0]];
      return -a / kLn2 * log1p_safe(c0 / a);
    }
    case TermKind::SurrogateRate: {
      const double X = x[var[0]], Y = x[var[1]];
      const double S = c1 * (c2 + c3 / Y) * std::pow(X, -0.5 * c4);
      return c0 / kLn2 * log1p_safe(S);
    }
    case TermKind::RecipRate: {
      const double D = x[var[0]];
      return c0 / kLn2 * log1p_safe(c1 / D);
    }
    case TermKind::ExpAffine:
      return c0 * std::exp(c1 + c2 * x[var[0]]);
    case TermKind::SqrtQuad: {
      double q = c1;
      for (int i = 0; i < nvar; ++i) {
        const double d = x[var[i]] - u[i];
        q += d * d;
      }
      return c0 * std::sqrt(q);
    }
    case TermKind::QuadOverLin: {
      const double t = x[var[0]] + c1;
      return c0 * t * t / x[var[1]];
    }
    case TermKind::Reciprocal:
      return c0 / x[var[0]];
    case TermKind::SquareDist: {
      double q = 0;
      for (int i = 0; i < nvar; ++i) {
        const double d = x[var[i]] - u[i];
        q += d * d;
      }
      return c0 * q;
    }
    case TermKind::SquareDiff: {
      const double d = x[var[0]] - x[var[1]];
      return c0 * d * d;
    }
  }
  return 0;
}

double Term::eval(const double* x, double* g, double* h) const {
  auto H = [&](int i, int j) -> double& { return h[i * nvar + j]; };
  switch (kind) {
    case TermKind::NegPerspectiveLog: {
      const double a = x[var[0]], p = x[var[1]];
      const double r = c0 * p / a;
      const double L = log1p_safe(r);
      const double ir = 1.0 / (1.0 + r);
      g[0] = -(L - r * ir) / kLn2;
      g[1] = -c0 * ir / kLn2;
      const double w = 1.0 / (a * kLn2 * (1.0 + r) * (1.0 + r));
      H(0, 0) = w * r * r;
      H(0, 1) = H(1, 0) = -w * c0 * r;
      H(1, 1) = w * c0 * c0;
      return -a / kLn2 * L;
    }
    case TermKind::NegLogFixedArg: {
      const double a = x[var[0]];
      const double r = c0 / a;
      const double L = log1p_safe(r);
      const double ir = 1.0 / (1.0 + r);
      g[0] = -(L - r * ir) / kLn2;
      H(0, 0) = r * r / (a * kLn2 * (1.0 + r) * (1.0 + r));
      return -a / kLn2 * L;
    }
    case TermKind::SurrogateRate: {
      const double X = x[var[0]], Y = x[var[1]];
      const double Xe = std::pow(X, -0.5 * c4);
      const double P = c2 + c3 / Y;
      const double S = c1 * P * Xe;
      const double Sx = -0.5 * c4 * S / X;
      const double Sy = -c1 * c3 * Xe / (Y * Y);
      const double Sxx = 0.5 * c4 * (0.5 * c4 + 1.0) * S / (X * X);
      const double Syy = 2.0 * c1 * c3 * Xe / (Y * Y * Y);
      const double Sxy = 0.5 * c4 * c1 * c3 * Xe / (X * Y * Y);
      const double is = 1.0 / (1.0 + S);
      const double w = c0 / kLn2;
      g[0] = w * Sx * is;
      g[1] = w * Sy * is;
      H(0, 0) = w * (Sxx * is - Sx * Sx * is * is);
      H(1, 1) = w * (Syy * is - Sy * Sy * is * is);
      H(0, 1) = H(1, 0) = w * (Sxy * is - Sx * Sy * is * is);
      return w * log1p_safe(S);
    }
    case TermKind::RecipRate: {
      const double D = x[var[0]];
      const double S = c1 / D;
      const double is = 1.0 / (1.0 + S);
      const double w = c0 / kLn2;
      g[0] = -w * S * is / D;
      H(0, 0) = w * S * (2.0 + S) * is * is / (D * D);
      return w * log1p_safe(S);
    }
    case TermKind::ExpAffine: {
      const double e = c0 * std::exp(c1 + c2 * x[var[0]]);
      g[0] = c2 * e;
      H(0, 0) = c2 * c2 * e;
      return e;
    }
    case TermKind::SqrtQuad: {
      double q = c1;
      double d[3];
      for (int i = 0; i < nvar; ++i) {
        d[i] = x[var[i]] - u[i];
        q += d[i] * d[i];
      }
      const double f = std::max(std::sqrt(q), 1e-150);
      for (int i = 0; i < nvar; ++i) g[i] = c0 * d[i] / f;
      for (int i = 0; i < nvar; ++i)
        for (int j = 0; j < nvar; ++j)
          H(i, j) = c0 * ((i == j ? 1.0 : 0.0) - d[i] * d[j] / q) / f;
      return c0 * f;
    }
    case TermKind::QuadOverLin: {
      const double t = x[var[0]] + c1, y = x[var[1]];
      g[0] = 2.0 * c0 * t / y;
      g[1] = -c0 * t * t / (y * y);
      H(0, 0) = 2.0 * c0 / y;
      H(0, 1) = H(1, 0) = -2.0 * c0 * t / (y * y);
      H(1, 1) = 2.0 * c0 * t * t / (y * y * y);
      return c0 * t * t / y;
    }
    case TermKind::Reciprocal: {
      const double y = x[var[0]];
      g[0] = -c0 / (y * y);
      H(0, 0) = 2.0 * c0 / (y * y * y);
      return c0 / y;
    }
    case TermKind::SquareDist: {
      double q = 0;
      for (int i = 0; i < nvar; ++i) {
        const double d = x[var[i]] - u[i];
        q += d * d;
        g[i] = 2.0 * c0 * d;
        for (int j = 0; j < nvar; ++j) H(i, j) = (i == j) ? 2.0 * c0 : 0.0;
      }
      return c0 * q;
    }
    case TermKind::SquareDiff: {
      const double d = x[var[0]] - x[var[1]];
      g[0] = 2.0 * c0 * d;
      g[1] = -2.0 * c0 * d;
      H(0, 0) = H(1, 1) = 2.0 * c0;
      H(0, 1) = H(1, 0) = -2.0 * c0;
      return c0 * d * d;
    }
  }
  return 0;
}

double Constraint::value(const Eigen::VectorXd& x) const {
  double v = constant;
  for (const auto& lt : lin) v += lt.coef * x[lt.var];
  for (const auto& t : terms) v += t.value(x.data());
  return v;
}

namespace {

void constraint_gradient(const Constraint& c, const Eigen::VectorXd& x,
                         Eigen::VectorXd& out) {
  out.setZero();
  for (const auto& lt : c.lin) out[lt.var] += lt.coef;
  double g[3], h[9];
  for (const auto& t : c.terms) {
    t.eval(x.data(), g, h);
    for (int i = 0; i < t.nvar; ++i) out[t.var[i]] += g[i];
  }
}

struct BarrierEval {
  const Program* p;
  int n;
  int m_count = 0; // inequality + finite box constraint count

  explicit BarrierEval(const Program& prog) : p(&prog), n(prog.n) {
    m_count = static_cast<int>(prog.ineq.size());
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(prog.lb[j])) ++m_count;
      if (std::isfinite(prog.ub[j])) ++m_count;
    }
  }

  bool strictly_feasible(const Eigen::VectorXd& x) const {
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(p->lb[j]) && x[j] <= p->lb[j]) return false;
      if (std::isfinite(p->ub[j]) && x[j] >= p->ub[j]) return false;
    }
    for (const auto& c : p->ineq)
      if (c.value(x) >= 0) return false;
    return true;
  }

  // Barrier objective; +inf outside the domain.
  double phi(const Eigen::VectorXd& x, double t) const {
    double val = -t * p->objective.dot(x);
    for (const auto& c : p->ineq) {
      const double f = c.value(x);
      if (f >= 0) return kInf;
      val -= std::log(-f);
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(p->lb[j])) {
        const double s = x[j] - p->lb[j];
        if (s <= 0) return kInf;
        val -= std::log(s);
      }
      if (std::isfinite(p->ub[j])) {
        const double s = p->ub[j] - x[j];
        if (s <= 0) return kInf;
        val -= std::log(s);
      }
    }
    return val;
  }

  // phi with gradient and Hessian; assumes x strictly feasible.
  double phi_grad_hess(const Eigen::VectorXd& x, double t, Eigen::VectorXd& g,
                       Eigen::MatrixXd& H, Eigen::VectorXd& scratch) const {
    double val = -t * p->objective.dot(x);
    g = -t * p->objective;
    H.setZero();
    double tg[3];
    // Each constraint touches a handful of variables; its rank-1 Hessian
    // update runs over that index set only, never the full matrix.
    scratch.setZero();
    std::vector<int> touched;
    touched.reserve(64);
    std::vector<char> mark(n, 0);
    auto accum = [&](int var, double v) {
      if (!mark[var]) {
        mark[var] = 1;
        touched.push_back(var);
      }
      scratch[var] += v;
    };
    for (const auto& c : p->ineq) {
      double f = c.constant;
      for (const auto& lt : c.lin) {
        f += lt.coef * x[lt.var];
        accum(lt.var, lt.coef);
      }
      // Terms: accumulate value, gradient and (scaled later) Hessian blocks.
      // Hessian blocks need 1/(-f), so stash raw blocks per term first.
      struct Block { const Term* t; double h[9]; };
      // Small fixed stack buffer; constraints hold few terms except the flow
      // rows, so fall back to heap only when needed.
      Block stackblocks[12];
      std::vector<Block> heapblocks;
      Block* blocks = stackblocks;
      size_t nb = c.terms.size();
      if (nb > 12) {
        heapblocks.resize(nb);
        blocks = heapblocks.data();
      }
      for (size_t ti = 0; ti < nb; ++ti) {
        const Term& tm = c.terms[ti];
        f += tm.eval(x.data(), tg, blocks[ti].h);
        blocks[ti].t = &tm;
        for (int i = 0; i < tm.nvar; ++i) accum(tm.var[i], tg[i]);
      }
      val -= std::log(-f);
      const double inv = 1.0 / (-f);
      const double inv2 = inv * inv;
      for (size_t ii = 0; ii < touched.size(); ++ii) {
        const int a = touched[ii];
        const double sa = scratch[a];
        g[a] += inv * sa;
        H(a, a) += inv2 * sa * sa;
        for (size_t jj = 0; jj < ii; ++jj) {
          const int b = touched[jj];
          const double v = inv2 * sa * scratch[b];
          (a >= b ? H(a, b) : H(b, a)) += v;
        }
      }
      for (int a : touched) {
        scratch[a] = 0.0;
        mark[a] = 0;
      }
      touched.clear();
      for (size_t ti = 0; ti < nb; ++ti) {
        const Term& tm = *blocks[ti].t;
        for (int i = 0; i < tm.nvar; ++i)
          for (int j = 0; j < tm.nvar; ++j)
            if (tm.var[i] >= tm.var[j])
              H(tm.var[i], tm.var[j]) += inv * blocks[ti].h[i * tm.nvar + j];
      }
    }
    for (int j = 0; j < n; ++j) {
      if (std::isfinite(p->lb[j])) {
        const double s = x[j] - p->lb[j];
        val -= std::log(s);
        g[j] -= 1.0 / s;
        H(j, j) += 1.0 / (s * s);
      }
      if (std::isfinite(p->ub[j])) {
        const double s = p->ub[j] - x[j];
        val -= std::log(s);
        g[j] += 1.0 / s;
        H(j, j) += 1.0 / (s * s);
      }
    }
    H.triangularView<Eigen::StrictlyUpper>() =
        H.triangularView<Eigen::StrictlyLower>().transpose();
    return val;
  }
};

// Clip x strictly inside the box. The margin must stay below the interior
// slack warm-start providers reserve (~1e-8), or clipping would push tiny
// deliberately-floored coordinates into tight rows and break feasibility.
void clip_into_box(const Program& p, Eigen::VectorXd& x) {
  for (int j = 0; j < p.n; ++j) {
    const bool flo = std::isfinite(p.lb[j]), fhi = std::isfinite(p.ub[j]);
    if (flo && fhi) {
      const double w = p.ub[j] - p.lb[j];
      const double m = std::min(0.25 * w, 1e-9 + 1e-9 * std::abs(p.lb[j]));
      x[j] = std::clamp(x[j], p.lb[j] + m, p.ub[j] - m);
    } else if (flo) {
      x[j] = std::max(x[j], p.lb[j] + 1e-9 + 1e-9 * std::abs(p.lb[j]));
    } else if (fhi) {
      x[j] = std::min(x[j], p.ub[j] - 1e-9 - 1e-9 * std::abs(p.ub[j]));
    }
  }
}

Eigen::VectorXd default_start(const Program& p) {
  Eigen::VectorXd x(p.n);
  for (int j = 0; j < p.n; ++j) {
    const bool flo = std::isfinite(p.lb[j]), fhi = std::isfinite(p.ub[j]);
    if (flo && fhi)
      x[j] = 0.5 * (p.lb[j] + p.ub[j]);
    else if (flo)
      x[j] = p.lb[j] + 1.0;
    else if (fhi)
      x[j] = p.ub[j] - 1.0;
    else
      x[j] = 0.0;
  }
  return x;
}

struct NewtonCtl {
  int budget;
  int used = 0;
};

// Centers x for fixed t. Returns false if the step budget ran out or no
// progress was possible. early_stop, when set, is polled after every
// accepted step (used by phase-I).
bool newton_center(const BarrierEval& ev, Eigen::VectorXd& x, double t,
                   double stage_tol, NewtonCtl& ctl,
                   const std::function<bool(const Eigen::VectorXd&)>& early_stop) {
  const int n = ev.n;
  Eigen::VectorXd g(n), scratch(n), d(n);
  Eigen::MatrixXd H(n, n);
  const auto& eq_rows = ev.p->eq_rows;
  const int me = static_cast<int>(eq_rows.size());
  Eigen::MatrixXd A;
  Eigen::VectorXd beq;
  if (me > 0) {
    A.setZero(me, n);
    beq.resize(me);
    for (int i = 0; i < me; ++i) {
      for (const auto& lt : eq_rows[i]) A(i, lt.var) += lt.coef;
      beq[i] = ev.p->eq_rhs[i];
    }
  }

  for (int step = 0; step < 120; ++step) {
    if (ctl.used >= ctl.budget) return false;
    ++ctl.used;
    const double phi0 = ev.phi_grad_hess(x, t, g, H, scratch);
    double ridge = 0.0;
    for (int attempt = 0;; ++attempt) {
      if (me == 0) {
        Eigen::LDLT<Eigen::MatrixXd> ldlt(H);
        if (ldlt.info() == Eigen::Success) {
          d = ldlt.solve(-g);
          if (-g.dot(d) > 0) break;
        }
      } else {
        Eigen::MatrixXd K(n + me, n + me);
        K.setZero();
        K.topLeftCorner(n, n) = H;
        K.topRightCorner(n, me) = A.transpose();
        K.bottomLeftCorner(me, n) = A;
        Eigen::VectorXd rhs(n + me);
        rhs.head(n) = -g;
        rhs.tail(me) = beq - A * x;
        Eigen::VectorXd sol = K.fullPivLu().solve(rhs);
        d = sol.head(n);
        if (-g.dot(d) > -1e-18) break;
      }
      if (attempt >= 8) return false;
      ridge = (ridge == 0.0) ? 1e-10 * (1.0 + H.diagonal().cwiseAbs().mean()) : ridge * 100.0;
      H.diagonal().array() += ridge;
    }
    const double lambda2 = std::max(-g.dot(d), 0.0);
    if (0.5 * lambda2 <= stage_tol) return true;
    double alpha = 1.0;
    Eigen::VectorXd xn;
    bool accepted = false;
    while (alpha > 1e-16) {
      xn = x + alpha * d;
      const double phin = ev.phi(xn, t);
      if (phin <= phi0 - 0.25 * alpha * lambda2) {
        accepted = true;
        break;
      }
      alpha *= 0.5;
    }
    if (!accepted) return true; // numerically stuck at the center
    x = xn;
    // Steps this short no longer move the iterate; the decrement estimate is
    // dominated by factorization noise and will not reach a tighter tol.
    if (alpha <= 1e-8) return true;
    if (early_stop && early_stop(x)) return true;
  }
  return true;
}

// Interior feasible point via phase-I (maximize -s s.t. f_i(x) <= s).
// Returns true on success and overwrites x.
bool phase_one(const Program& p, Eigen::VectorXd& x, const SolveOptions& opt,
               NewtonCtl& ctl) {
  Program ext = p;
  // Drop the objective; phase-I only cares about feasibility.
  ext.objective.setZero();
  double fmax = -kInf;
  for (const auto& c : p.ineq) fmax = std::max(fmax, c.value(x));
  if (p.ineq.empty()) return true;
  const int sv = ext.add_var(-1.0, kInf);
  ext.objective[sv] = -1.0;
  for (auto& c : ext.ineq) c.add_lin(sv, -1.0);

  Eigen::VectorXd xe(ext.n);
  xe.head(p.n) = x;
  xe[sv] = std::max(fmax + 1.0 + 0.1 * std::abs(fmax), -0.5);

  BarrierEval ev(ext);
  if (!ev.strictly_feasible(xe)) return false; // box start failed (should not happen)
  double t = 1.0;
  auto done = [&](const Eigen::VectorXd& xc) { return xc[sv] < -1e-7; };
  while (true) {
    if (!newton_center(ev, xe, t, opt.stage_tol, ctl, done)) break;
    if (done(xe)) break;
    if (ev.m_count / t <= opt.gap_target) break;
    t *= opt.barrier_mult;
  }
  if (xe[sv] >= -1e-12) return false;
  x = xe.head(p.n);
  return true;
}

}  // namespace

Solution solve(const Program& p, const Eigen::VectorXd* warm, const SolveOptions& opt) {
  Solution sol;
  Eigen::VectorXd x = (warm && warm->size() == p.n) ? *warm : default_start(p);
  clip_into_box(p, x);

  BarrierEval ev(p);
  NewtonCtl ctl{opt.max_newton};

  if (!ev.strictly_feasible(x)) {
    if (std::getenv("UAVRELAY_CVX_DEBUG")) {
      double worst = -kInf;
      int wi = -1;
      for (size_t i = 0; i < p.ineq.size(); ++i) {
        const double f = p.ineq[i].value(x);
        if (f > worst) { worst = f; wi = static_cast<int>(i); }
      }
      double bworst = 0;
      int bj = -1;
      for (int j = 0; j < p.n; ++j) {
        if (std::isfinite(p.lb[j]) && p.lb[j] - x[j] >= bworst) { bworst = p.lb[j] - x[j]; bj = j; }
        if (std::isfinite(p.ub[j]) && x[j] - p.ub[j] >= bworst) { bworst = x[j] - p.ub[j]; bj = j; }
      }
      std::fprintf(stderr, "  warm infeasible: row %d f=%.3g, box var %d viol=%.3g\n",
                   wi, worst, bj, bworst);
    }
    Eigen::VectorXd fresh = default_start(p);
    clip_into_box(p, fresh);
    bool ok = phase_one(p, x, opt, ctl);
    if (!ok && warm) {
      x = fresh;
      ok = ev.strictly_feasible(x) || phase_one(p, x, opt, ctl);
    }
    sol.phase1_iters = ctl.used;
    if (std::getenv("UAVRELAY_CVX_DEBUG"))
      std::fprintf(stderr, "  phase1 newton=%d ok=%d\n", ctl.used, (int)ok);
    if (!ok) {
      sol.x = x;
      sol.status = SolveStatus::Infeasible;
      sol.objective = p.objective.dot(x);
      double viol = 0;
      for (const auto& c : p.ineq) viol = std::max(viol, c.value(x));
      sol.feas_residual = std::max(viol, 0.0);
      sol.newton_iters = ctl.used;
      return sol;
    }
  }

  double t = opt.barrier_t0;
  bool budget_ok = true;
  const bool dbg = std::getenv("UAVRELAY_CVX_DEBUG") != nullptr;
  while (true) {
    // Only the final stage's center is the answer; path stages just need to
    // stay in the next stage's Newton basin, so they center loosely.
    const bool final_stage = ev.m_count / t <= opt.gap_target;
    const int pre = ctl.used;
    if (!newton_center(ev, x, t, final_stage ? opt.stage_tol : opt.stage_tol_path,
                       ctl, nullptr)) {
      budget_ok = false;
      break;
    }
    if (dbg)
      std::fprintf(stderr, "  stage t=%.3g newton=%d%s\n", t, ctl.used - pre,
                   final_stage ? " (final)" : "");
    if (final_stage) break;
    t *= opt.barrier_mult;
  }

  sol.x = x;
  sol.objective = p.objective.dot(x);
  sol.newton_iters = ctl.used;

  double viol = 0;
  for (const auto& c : p.ineq) viol = std::max(viol, c.value(x));
  for (size_t i = 0; i < p.eq_rows.size(); ++i) {
    double v = -p.eq_rhs[i];
    for (const auto& lt : p.eq_rows[i]) v += lt.coef * x[lt.var];
    viol = std::max(viol, std::abs(v));
  }
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.lb[j])) viol = std::max(viol, p.lb[j] - x[j]);
    if (std::isfinite(p.ub[j])) viol = std::max(viol, x[j] - p.ub[j]);
  }
  sol.feas_residual = std::max(viol, 0.0);

  // Dual residual of the final center: grad phi / t is the KKT stationarity
  // residual with the implicit barrier multipliers 1/(t * slack).
  {
    Eigen::VectorXd g(p.n), scratch(p.n);
    Eigen::MatrixXd H(p.n, p.n);
    ev.phi_grad_hess(x, t, g, H, scratch);
    const double scale = std::max(1.0, p.objective.cwiseAbs().maxCoeff());
    sol.stat_residual = g.cwiseAbs().maxCoeff() / (t * scale);
  }

  const bool gap_ok = ev.m_count / t <= opt.gap_target * (1.0 + 1e-12);
  sol.status = (budget_ok && gap_ok && sol.feas_residual <= opt.tol_feas)
                   ? SolveStatus::Optimal
                   : SolveStatus::MaxIters;
  return sol;
}

std::pair<double, double> kkt_residual(const Program& p, const Eigen::VectorXd& x) {
  double viol = 0;
  std::vector<Eigen::VectorXd> cols;
  Eigen::VectorXd grad(p.n);
  const double act_tol = 1e-5;

  for (const auto& c : p.ineq) {
    const double f = c.value(x);
    viol = std::max(viol, f);
    if (f >= -act_tol) {
      constraint_gradient(c, x, grad);
      cols.push_back(grad);
    }
  }
  for (size_t i = 0; i < p.eq_rows.size(); ++i) {
    double v = -p.eq_rhs[i];
    grad.setZero();
    for (const auto& lt : p.eq_rows[i]) {
      v += lt.coef * x[lt.var];
      grad[lt.var] += lt.coef;
    }
    viol = std::max(viol, std::abs(v));
    cols.push_back(grad);
    cols.push_back(-grad); // equality multipliers are sign-free
  }
  for (int j = 0; j < p.n; ++j) {
    if (std::isfinite(p.lb[j])) {
      viol = std::max(viol, p.lb[j] - x[j]);
      if (x[j] - p.lb[j] <= act_tol) {
        grad.setZero();
        grad[j] = -1.0;
        cols.push_back(grad);
      }
    }
    if (std::isfinite(p.ub[j])) {
      viol = std::max(viol, x[j] - p.ub[j]);
      if (p.ub[j] - x[j] <= act_tol) {
        grad.setZero();
        grad[j] = 1.0;
        cols.push_back(grad);
      }
    }
  }
  viol = std::max(viol, 0.0);

  const double scale = std::max(1.0, p.objective.cwiseAbs().maxCoeff());
  if (cols.empty())
    return {viol, p.objective.cwiseAbs().maxCoeff() / scale};

  // NNLS (Lawson-Hanson) fit of nonnegative multipliers: min || G l - c ||.
  const int nc = static_cast<int>(cols.size());
  Eigen::MatrixXd G(p.n, nc);
  for (int j = 0; j < nc; ++j) G.col(j) = cols[j];
  Eigen::VectorXd lam = Eigen::VectorXd::Zero(nc);
  std::vector<int> passive;
  Eigen::VectorXd resid = p.objective;
  for (int outer = 0; outer < 4 * nc + 8; ++outer) {
    Eigen::VectorXd w = G.transpose() * resid;
    int best = -1;
    double bw = 1e-10 * scale;
    for (int j = 0; j < nc; ++j) {
      if (std::find(passive.begin(), passive.end(), j) != passive.end()) continue;
      if (w[j] > bw) {
        bw = w[j];
        best = j;
      }
    }
    if (best < 0) break;
    passive.push_back(best);
    for (int inner = 0; inner < 2 * nc + 8; ++inner) {
      Eigen::MatrixXd Gp(p.n, passive.size());
      for (size_t j = 0; j < passive.size(); ++j) Gp.col(j) = G.col(passive[j]);
      Eigen::VectorXd z = Gp.colPivHouseholderQr().solve(p.objective);
      if ((z.array() > 0).all()) {
        lam.setZero();
        for (size_t j = 0; j < passive.size(); ++j) lam[passive[j]] = z[j];
        break;
      }
      double a = 1.0;
      for (size_t j = 0; j < passive.size(); ++j)
        if (z[j] <= 0) a = std::min(a, lam[passive[j]] / (lam[passive[j]] - z[j]));
      for (size_t j = 0; j < passive.size(); ++j)
        lam[passive[j]] += a * (z[j] - lam[passive[j]]);
      std::vector<int> keep;
      for (int j : passive)
        if (lam[j] > 1e-14) keep.push_back(j);
      passive = keep;
      if (passive.empty()) break;
    }
    resid = p.objective - G * lam;
  }
  const double stat = (p.objective - G * lam).cwiseAbs().maxCoeff() / scale;
  return {viol, stat};
}

}  // namespace uavrelay::cvx
