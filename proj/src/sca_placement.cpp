#include <algorithm>
#include <cmath>
#include <limits>
#include <utility>
#include <vector>

#include "sca_internal.hpp"
#include "uavrelay/channel.hpp"
#include "uavrelay/cvx.hpp"
#include "uavrelay/sca.hpp"

namespace uavrelay::sca {

using namespace detail;

namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;

struct AliveFlags {
  std::vector<char> s, d, u;
};

AliveFlags alive_flags(const Allocation& al) {
  AliveFlags f;
  auto mark = [](const Eigen::VectorXd& a, const Eigen::VectorXd& p) {
    std::vector<char> out(a.size());
    for (int i = 0; i < a.size(); ++i) out[i] = a[i] > 0 && p[i] > 0;
    return out;
  };
  f.s = mark(al.a_s, al.p_s);
  f.d = mark(al.a_d, al.p_d);
  f.u = mark(al.a_u, al.p_u);
  return f;
}

// -R_lb folded into a constraint constant; the caller adds the variable terms.
double neg_bound_constant(const AffineBound& b) {
  return -(b.base - b.coeff.dot(b.expansion));
}

// A move that stacks two relay-linked UAVs on one point would make their link
// distance degenerate; such steps are rejected outright.
bool makes_alive_u_coincident(const Scenario& s, const AliveFlags& fl,
                              const Eigen::Matrix2Xd& q, const Eigen::VectorXd& z) {
  const LinkLayout L = layout_of(s);
  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m) continue;
      bool any = false;
      for (int k = 0; k < L.K && !any; ++k) any = fl.u[L.u(m, n, k)];
      if (!any) continue;
      const double dz = z[m] - z[n];
      if ((q.col(m) - q.col(n)).squaredNorm() + dz * dz <= kCoincident) return true;
    }
  return false;
}

}  // namespace

BcdState solve_horizontal(const Scenario& s, const BcdState& st, const AlgoConfig& cfg,
                          SolveDiag* diag) {
  const LinkLayout L = layout_of(s);
  const auto& cp = s.channel;
  const Eigen::VectorXd& z = st.placement.z;
  SolveDiag dg;

  Eigen::Matrix2Xd qcur = st.placement.q;
  Allocation acur = st.alloc;
  double eta_cur;
  if (max_flow_violation(s, st.placement, acur) <= 1e-7 * std::max(1.0, std::abs(st.eta))) {
    // Near-feasible input, the usual BCD handoff: a margin-level repair
    // establishes the strict flow slack every warm start below relies on.
    eta_cur = repair_flow(s, st.placement, acur);
  } else {
    // Materially violated input: shrinking shares here would pose the wrong
    // subproblem, since a shrink sized by the current placement caps every
    // later iterate. Keep the shares; the warm start is then infeasible and
    // phase-1 moves the positions into the feasible set instead.
    Allocation probe = acur;
    eta_cur = repair_flow(s, st.placement, probe);
  }

  const double diag_sq_s = (s.region.hi - s.region.lo).squaredNorm() / kScale2;
  const double ylb = 1.0 + 0.9 * std::exp(-(cp.b1 + cp.b2));
  const double yub = 1.0 + 1.1 * std::exp(-cp.b1);
  const double a2s = std::pow(kScale2, 0.5 * cp.alpha); // scaled-unit gain divisor

  for (int sca_it = 0; sca_it < kScaCap; ++sca_it) {
    // Repairs may have closed links since the previous iterate.
    const AliveFlags fl = alive_flags(acur);
    const Placement wc{qcur, z};
    const HorizontalBounds hb = build_lower_bounds_horizontal(s, wc, acur);

    // eta cannot exceed any stream's rate sum even at the distance box floor.
    double eta_ub = std::numeric_limits<double>::infinity();
    for (int k = 0; k < L.K; ++k) {
      double sum = 0;
      for (int m = 0; m < L.M; ++m) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double zs2 = z[m] * z[m] / kScale2;
        const double c1 = acur.p_d[id] * cp.gamma0 / (acur.a_d[id] * a2s);
        sum += acur.a_d[id] / kLn2 *
               std::log1p(c1 * (cp.c1 + cp.c2 / ylb) * std::pow(0.999 * zs2, -0.5 * cp.alpha));
      }
      eta_ub = std::min(eta_ub, sum);
    }
    eta_ub += 1.0;

    cvx::Program pr;
    std::vector<int> vqx(L.M), vqy(L.M);
    for (int m = 0; m < L.M; ++m) {
      vqx[m] = pr.add_var(s.region.lo.x() / kScale, s.region.hi.x() / kScale);
      vqy[m] = pr.add_var(s.region.lo.y() / kScale, s.region.hi.y() / kScale);
    }
    std::vector<int> vvd(L.n_d(), -1), vX(L.n_d(), -1), vY(L.n_d(), -1);
    std::vector<int> vvs(L.n_s(), -1), vXu(L.n_u(), -1);
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double zs2 = z[m] * z[m] / kScale2;
        vvd[id] = pr.add_var(kBwFloor, 1.0);
        vX[id] = pr.add_var(0.999 * zs2, (zs2 + diag_sq_s) * 1.1 + 0.01);
        vY[id] = pr.add_var(ylb, yub);
      }
    for (int i = 0; i < L.n_s(); ++i)
      if (fl.s[i]) vvs[i] = pr.add_var(kBwFloor, 1.0);
    for (int m = 0; m < L.M; ++m)
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        const double dzs2 = (z[m] - z[n]) * (z[m] - z[n]) / kScale2;
        for (int k = 0; k < L.K; ++k) {
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          vXu[iu] = pr.add_var(std::max(kBwFloor, 0.999 * dzs2),
                               (dzs2 + diag_sq_s) * 1.1 + 0.01);
        }
      }
    const int veta = pr.add_var(-1.0, eta_ub);
    pr.objective[veta] = 1.0;

    // Objective link: eta below each stream's tangent rate sum.
    for (int k = 0; k < L.K; ++k) {
      cvx::Constraint& c = pr.add_ineq();
      c.add_lin(veta, 1.0);
      for (int m = 0; m < L.M; ++m) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const AffineBound& b = hb.r_d[id];
        c.add_lin(vX[id], -b.coeff[0] * kScale2);
        c.add_lin(vY[id], -b.coeff[1]);
        c.constant -= b.base - b.coeff.dot(b.expansion);
      }
    }

    // Flow: surrogate outflow at or below tangent-bounded inflow.
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        bool any_out = fl.d[id];
        for (int n = 0; n < L.M && !any_out; ++n)
          if (n != m) any_out = fl.u[L.u(m, n, k)];
        if (!any_out) continue;
        cvx::Constraint& c = pr.add_ineq();
        if (fl.d[id]) {
          cvx::Term t;
          t.kind = cvx::TermKind::SurrogateRate;
          t.var[0] = vX[id];
          t.var[1] = vY[id];
          t.nvar = 2;
          t.c0 = acur.a_d[id];
          t.c1 = acur.p_d[id] * cp.gamma0 / (acur.a_d[id] * a2s);
          t.c2 = cp.c1;
          t.c3 = cp.c2;
          t.c4 = cp.alpha;
          c.add(t);
        }
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          cvx::Term t;
          t.kind = cvx::TermKind::RecipRate;
          t.var[0] = vXu[iu];
          t.nvar = 1;
          t.c0 = acur.a_u[iu];
          t.c1 = acur.p_u[iu] * cp.gamma0 / (acur.a_u[iu] * kScale2);
          c.add(t);
        }
        const int is = L.s(k, m);
        if (fl.s[is]) {
          const AffineBound& b = hb.rate_s[is];
          c.constant += neg_bound_constant(b);
          if (-b.coeff[0] > 0) {
            cvx::Term t;
            t.kind = cvx::TermKind::ExpAffine;
            t.var[0] = vvs[is];
            t.nvar = 1;
            t.c0 = -b.coeff[0];
            t.c1 = -cp.b1;
            t.c2 = -cp.b2;
            c.add(t);
          }
          if (-b.coeff[1] > 0) {
            cvx::Term t;
            t.kind = cvx::TermKind::SquareDist;
            t.var[0] = vqx[m];
            t.var[1] = vqy[m];
            t.nvar = 2;
            t.c0 = -b.coeff[1] * kScale2;
            t.u[0] = s.pairs[k].src.x() / kScale;
            t.u[1] = s.pairs[k].src.y() / kScale;
            c.add(t);
          }
        }
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(n, m, k);
          if (!fl.u[iu]) continue;
          const AffineBound& b = hb.rate_u[iu];
          c.constant += neg_bound_constant(b);
          if (-b.coeff[0] > 0) {
            for (int axis = 0; axis < 2; ++axis) {
              cvx::Term t;
              t.kind = cvx::TermKind::SquareDiff;
              t.var[0] = axis == 0 ? vqx[n] : vqy[n];
              t.var[1] = axis == 0 ? vqx[m] : vqy[m];
              t.nvar = 2;
              t.c0 = -b.coeff[0] * kScale2;
              c.add(t);
            }
          }
        }
      }

    // Relay surrogate distances capped by the tangent of the true separation.
    for (int m = 0; m < L.M; ++m)
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        for (int k = 0; k < L.K; ++k) {
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          const AffineBound& b = hb.ell_u[iu];
          cvx::Constraint& c = pr.add_ineq();
          c.add_lin(vXu[iu], 1.0);
          c.add_lin(vqx[m], -b.coeff[0] / kScale);
          c.add_lin(vqx[n], b.coeff[0] / kScale);
          c.add_lin(vqy[m], -b.coeff[1] / kScale);
          c.add_lin(vqy[n], b.coeff[1] / kScale);
          c.constant = (-b.base + b.coeff.dot(b.expansion)) / kScale2;
        }
      }

    // Angle feasibility v <= z/d via the slant identity, tangent on the right.
    auto add_angle_row = [&](int vv, int m, const Eigen::Vector2d& node, double vhat) {
      const double zs = z[m] / kScale;
      const SlantTangent t2 = slant_tangent(zs, vhat);
      cvx::Constraint& c = pr.add_ineq();
      cvx::Term tq;
      tq.kind = cvx::TermKind::SqrtQuad;
      tq.var[0] = vqx[m];
      tq.var[1] = vqy[m];
      tq.nvar = 2;
      tq.c0 = 1.0;
      tq.c1 = zs * zs;
      tq.u[0] = node.x() / kScale;
      tq.u[1] = node.y() / kScale;
      c.add(tq);
      const double rc = (zs - 1.0) * (zs - 1.0) / 4.0;
      if (rc > 0) {
        cvx::Term tr;
        tr.kind = cvx::TermKind::Reciprocal;
        tr.var[0] = vv;
        tr.nvar = 1;
        tr.c0 = rc;
        c.add(tr);
      }
      c.add_lin(vv, -t2.dv);
      c.constant = -(t2.base - t2.dv * vhat);
    };
    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m), id = L.d(m, k);
        if (fl.s[is])
          add_angle_row(vvs[is], m, s.pairs[k].src, ground_geom(wc, m, s.pairs[k].src).v);
        if (fl.d[id])
          add_angle_row(vvd[id], m, s.pairs[k].dst, ground_geom(wc, m, s.pairs[k].dst).v);
      }

    // Surrogate distance and logistic-denominator definitions.
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        {
          cvx::Constraint& c = pr.add_ineq();
          cvx::Term t;
          t.kind = cvx::TermKind::SquareDist;
          t.var[0] = vqx[m];
          t.var[1] = vqy[m];
          t.nvar = 2;
          t.c0 = 1.0;
          t.u[0] = s.pairs[k].dst.x() / kScale;
          t.u[1] = s.pairs[k].dst.y() / kScale;
          c.add(t);
          c.add_lin(vX[id], -1.0);
          c.constant = z[m] * z[m] / kScale2;
        }
        {
          cvx::Constraint& c = pr.add_ineq();
          cvx::Term t;
          t.kind = cvx::TermKind::ExpAffine;
          t.var[0] = vvd[id];
          t.nvar = 1;
          t.c0 = 1.0;
          t.c1 = -cp.b1;
          t.c2 = -cp.b2;
          c.add(t);
          c.add_lin(vY[id], -1.0);
          c.constant = 1.0;
        }
      }

    // Strictly interior start: true geometry with distances inflated and
    // angles pulled slightly inside their feasible cones.
    Eigen::VectorXd warm(pr.n);
    for (int m = 0; m < L.M; ++m) {
      warm[vqx[m]] = qcur(0, m) / kScale;
      warm[vqy[m]] = qcur(1, m) / kScale;
    }
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const GroundGeom ge = ground_geom(wc, m, s.pairs[k].dst);
        const double v0 = std::max(ge.v * (1.0 - 2e-9), 2e-9);
        warm[vvd[id]] = v0;
        warm[vX[id]] = ge.d3sq / kScale2 * (1.0 + 2e-5);
        warm[vY[id]] = (1.0 + std::exp(-(cp.b1 + cp.b2 * v0))) * (1.0 + 1e-6);
      }
    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m);
        if (!fl.s[is]) continue;
        warm[vvs[is]] = std::max(ground_geom(wc, m, s.pairs[k].src).v * (1.0 - 2e-9), 2e-9);
      }
    for (int i = 0; i < L.n_u(); ++i)
      if (fl.u[i]) warm[vXu[i]] = hb.ell_u[i].base / kScale2 * (1.0 - 1e-9);
    {
      double eta0 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < L.K; ++k) {
        double sum = 0;
        for (int m = 0; m < L.M; ++m) {
          const int id = L.d(m, k);
          if (!fl.d[id]) continue;
          const AffineBound& b = hb.r_d[id];
          sum += b.base + b.coeff[0] * (warm[vX[id]] * kScale2 - b.expansion[0]) +
                 b.coeff[1] * (warm[vY[id]] - b.expansion[1]);
        }
        eta0 = std::min(eta0, sum);
      }
      warm[veta] = std::max(eta0 - 1e-6 * std::max(1.0, std::abs(eta0)), -0.9);
    }

    cvx::SolveOptions so;
    so.barrier_t0 = sca_it == 0 ? 1.0 : 20.0;
    const cvx::Solution sol = cvx::solve(pr, &warm, so);
    dg.newton_iters += sol.newton_iters;
    const bool ok = sol.status == cvx::SolveStatus::Optimal ||
                    (sol.status == cvx::SolveStatus::MaxIters && sol.feas_residual <= 1e-6);
    if (!ok) {
      dg.solver_ok = false;
      break;
    }
    if (sol.objective < eta_cur - 1e-9 * std::max(1.0, std::abs(eta_cur))) break;

    Eigen::Matrix2Xd qnew(2, L.M);
    for (int m = 0; m < L.M; ++m)
      qnew.col(m) << sol.x[vqx[m]] * kScale, sol.x[vqy[m]] * kScale;
    if (makes_alive_u_coincident(s, fl, qnew, z)) break;

    // Accept only if the step holds up in truth: restore flow feasibility at
    // the moved positions and require the exact objective not to decrease.
    // Each repair starts from the pristine input shares, not the carried
    // ones, so shrinks made to fit an earlier placement never compound; as
    // the placement improves, the shares it can support grow back.
    const Placement wnew{qnew, z};
    Allocation anew = st.alloc;
    const double eta_rep = repair_flow(s, wnew, anew);
    if (eta_rep < eta_cur - 1e-12) break;

    double gap = 0;
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double xs = sol.x[vX[id]];
        const double true_xs =
            (z[m] * z[m] + (qnew.col(m) - s.pairs[k].dst).squaredNorm()) / kScale2;
        gap = std::max(gap, std::abs(xs - true_xs) / std::max(1.0, xs));
        const double vd = sol.x[vvd[id]];
        const double true_y = 1.0 + std::exp(-(cp.b1 + cp.b2 * vd));
        gap = std::max(gap, std::abs(sol.x[vY[id]] - true_y) / true_y);
      }
    dg.max_surrogate_gap = gap;

    qcur = std::move(qnew);
    acur = std::move(anew);
    dg.sca_iters = sca_it + 1;
    const bool stalled =
        std::abs(eta_rep - eta_cur) <= cfg.sca_tol * std::max(std::abs(eta_rep), 1e-12);
    eta_cur = std::max(eta_cur, eta_rep);
    if (stalled) break;
  }

  if (diag) *diag = dg;
  BcdState out = st;
  if (eta_cur > st.eta) {
    out.placement.q = std::move(qcur);
    out.alloc = std::move(acur);
    out.eta = eta_cur;
  }
  return out;
}

BcdState solve_vertical(const Scenario& s, const BcdState& st, const AlgoConfig& cfg,
                        SolveDiag* diag) {
  const LinkLayout L = layout_of(s);
  const auto& cp = s.channel;
  const Eigen::Matrix2Xd& q = st.placement.q;
  SolveDiag dg;

  Eigen::VectorXd zcur = st.placement.z;
  Allocation acur = st.alloc;
  double eta_cur;
  if (max_flow_violation(s, st.placement, acur) <= 1e-7 * std::max(1.0, std::abs(st.eta))) {
    eta_cur = repair_flow(s, st.placement, acur);
  } else {
    // See solve_horizontal: keep the shares, let phase-1 move the altitudes.
    Allocation probe = acur;
    eta_cur = repair_flow(s, st.placement, probe);
  }

  const double zlo = s.alt_min_m / kScale, zhi = s.alt_max_m / kScale;
  const double dzmax_sq = (zhi - zlo) * (zhi - zlo);
  const double ylb = 1.0 + 0.9 * std::exp(-(cp.b1 + cp.b2));
  const double yub = 1.0 + 1.1 * std::exp(-cp.b1);
  const double a2s = std::pow(kScale2, 0.5 * cp.alpha);

  for (int sca_it = 0; sca_it < kScaCap; ++sca_it) {
    // Repairs may have closed links since the previous iterate.
    const AliveFlags fl = alive_flags(acur);
    const Placement wc{q, zcur};
    const VerticalBounds vb = build_lower_bounds_vertical(s, wc, acur);

    double eta_ub = std::numeric_limits<double>::infinity();
    for (int k = 0; k < L.K; ++k) {
      double sum = 0;
      for (int m = 0; m < L.M; ++m) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double hs = (q.col(m) - s.pairs[k].dst).squaredNorm() / kScale2;
        const double xlb = 0.999 * (zlo * zlo + hs);
        const double c1 = acur.p_d[id] * cp.gamma0 / (acur.a_d[id] * a2s);
        sum += acur.a_d[id] / kLn2 *
               std::log1p(c1 * (cp.c1 + cp.c2 / ylb) * std::pow(xlb, -0.5 * cp.alpha));
      }
      eta_ub = std::min(eta_ub, sum);
    }
    eta_ub += 1.0;

    cvx::Program pr;
    std::vector<int> vz(L.M);
    for (int m = 0; m < L.M; ++m) vz[m] = pr.add_var(zlo, zhi);
    std::vector<int> vvd(L.n_d(), -1), vX(L.n_d(), -1), vY(L.n_d(), -1);
    std::vector<int> vvs(L.n_s(), -1), vXu(L.n_u(), -1);
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double hs = (q.col(m) - s.pairs[k].dst).squaredNorm() / kScale2;
        vvd[id] = pr.add_var(kBwFloor, 1.0);
        vX[id] = pr.add_var(0.999 * (zlo * zlo + hs), (zhi * zhi + hs) * 1.1 + 0.01);
        vY[id] = pr.add_var(ylb, yub);
      }
    for (int i = 0; i < L.n_s(); ++i)
      if (fl.s[i]) vvs[i] = pr.add_var(kBwFloor, 1.0);
    for (int m = 0; m < L.M; ++m)
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        const double hs = (q.col(m) - q.col(n)).squaredNorm() / kScale2;
        for (int k = 0; k < L.K; ++k) {
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          vXu[iu] = pr.add_var(std::max(kBwFloor, 0.999 * hs),
                               (hs + dzmax_sq) * 1.1 + 0.01);
        }
      }
    const int veta = pr.add_var(-1.0, eta_ub);
    pr.objective[veta] = 1.0;

    for (int k = 0; k < L.K; ++k) {
      cvx::Constraint& c = pr.add_ineq();
      c.add_lin(veta, 1.0);
      for (int m = 0; m < L.M; ++m) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const AffineBound& b = vb.r_d[id];
        c.add_lin(vX[id], -b.coeff[0] * kScale2);
        c.add_lin(vY[id], -b.coeff[1]);
        c.constant -= b.base - b.coeff.dot(b.expansion);
      }
    }

    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        bool any_out = fl.d[id];
        for (int n = 0; n < L.M && !any_out; ++n)
          if (n != m) any_out = fl.u[L.u(m, n, k)];
        if (!any_out) continue;
        cvx::Constraint& c = pr.add_ineq();
        if (fl.d[id]) {
          cvx::Term t;
          t.kind = cvx::TermKind::SurrogateRate;
          t.var[0] = vX[id];
          t.var[1] = vY[id];
          t.nvar = 2;
          t.c0 = acur.a_d[id];
          t.c1 = acur.p_d[id] * cp.gamma0 / (acur.a_d[id] * a2s);
          t.c2 = cp.c1;
          t.c3 = cp.c2;
          t.c4 = cp.alpha;
          c.add(t);
        }
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          cvx::Term t;
          t.kind = cvx::TermKind::RecipRate;
          t.var[0] = vXu[iu];
          t.nvar = 1;
          t.c0 = acur.a_u[iu];
          t.c1 = acur.p_u[iu] * cp.gamma0 / (acur.a_u[iu] * kScale2);
          c.add(t);
        }
        const int is = L.s(k, m);
        if (fl.s[is]) {
          const AffineBound& b = vb.rate_s[is];
          c.constant += neg_bound_constant(b);
          if (-b.coeff[0] > 0) {
            cvx::Term t;
            t.kind = cvx::TermKind::ExpAffine;
            t.var[0] = vvs[is];
            t.nvar = 1;
            t.c0 = -b.coeff[0];
            t.c1 = -cp.b1;
            t.c2 = -cp.b2;
            c.add(t);
          }
          if (-b.coeff[1] > 0) {
            cvx::Term t;
            t.kind = cvx::TermKind::SquareDist;
            t.var[0] = vz[m];
            t.nvar = 1;
            t.c0 = -b.coeff[1] * kScale2;
            t.u[0] = 0.0;
            c.add(t);
          }
        }
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(n, m, k);
          if (!fl.u[iu]) continue;
          const AffineBound& b = vb.rate_u[iu];
          c.constant += neg_bound_constant(b);
          if (-b.coeff[0] > 0) {
            cvx::Term t;
            t.kind = cvx::TermKind::SquareDiff;
            t.var[0] = vz[n];
            t.var[1] = vz[m];
            t.nvar = 2;
            t.c0 = -b.coeff[0] * kScale2;
            c.add(t);
          }
        }
      }

    for (int m = 0; m < L.M; ++m)
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        for (int k = 0; k < L.K; ++k) {
          const int iu = L.u(m, n, k);
          if (!fl.u[iu]) continue;
          const AffineBound& b = vb.ell_u[iu];
          cvx::Constraint& c = pr.add_ineq();
          c.add_lin(vXu[iu], 1.0);
          c.add_lin(vz[m], -b.coeff[0] / kScale);
          c.add_lin(vz[n], b.coeff[0] / kScale);
          c.constant = (-b.base + b.coeff.dot(b.expansion)) / kScale2;
        }
      }

    // Angle rows: altitude is a variable, the horizontal offset is fixed.
    auto add_angle_row = [&](int vv, int m, double hs_fixed, double zhat_s, double vhat) {
      const SlantTangent t2 = slant_tangent(zhat_s, vhat);
      cvx::Constraint& c = pr.add_ineq();
      cvx::Term tq;
      tq.kind = cvx::TermKind::SqrtQuad;
      tq.var[0] = vz[m];
      tq.nvar = 1;
      tq.c0 = 1.0;
      tq.c1 = hs_fixed;
      tq.u[0] = 0.0;
      c.add(tq);
      cvx::Term tr;
      tr.kind = cvx::TermKind::QuadOverLin;
      tr.var[0] = vz[m];
      tr.var[1] = vv;
      tr.nvar = 2;
      tr.c0 = 0.25;
      tr.c1 = -1.0;
      c.add(tr);
      c.add_lin(vz[m], -t2.dz);
      c.add_lin(vv, -t2.dv);
      c.constant = -(t2.base - t2.dz * zhat_s - t2.dv * vhat);
    };
    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m), id = L.d(m, k);
        if (fl.s[is]) {
          const GroundGeom ge = ground_geom(wc, m, s.pairs[k].src);
          add_angle_row(vvs[is], m, ge.hsq / kScale2, zcur[m] / kScale, ge.v);
        }
        if (fl.d[id]) {
          const GroundGeom ge = ground_geom(wc, m, s.pairs[k].dst);
          add_angle_row(vvd[id], m, ge.hsq / kScale2, zcur[m] / kScale, ge.v);
        }
      }

    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        {
          cvx::Constraint& c = pr.add_ineq();
          cvx::Term t;
          t.kind = cvx::TermKind::SquareDist;
          t.var[0] = vz[m];
          t.nvar = 1;
          t.c0 = 1.0;
          t.u[0] = 0.0;
          c.add(t);
          c.add_lin(vX[id], -1.0);
          c.constant = (q.col(m) - s.pairs[k].dst).squaredNorm() / kScale2;
        }
        {
          cvx::Constraint& c = pr.add_ineq();
          cvx::Term t;
          t.kind = cvx::TermKind::ExpAffine;
          t.var[0] = vvd[id];
          t.nvar = 1;
          t.c0 = 1.0;
          t.c1 = -cp.b1;
          t.c2 = -cp.b2;
          c.add(t);
          c.add_lin(vY[id], -1.0);
          c.constant = 1.0;
        }
      }

    Eigen::VectorXd warm(pr.n);
    for (int m = 0; m < L.M; ++m) warm[vz[m]] = zcur[m] / kScale;
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const GroundGeom ge = ground_geom(wc, m, s.pairs[k].dst);
        const double v0 = std::max(ge.v * (1.0 - 2e-9), 2e-9);
        warm[vvd[id]] = v0;
        warm[vX[id]] = ge.d3sq / kScale2 * (1.0 + 2e-5);
        warm[vY[id]] = (1.0 + std::exp(-(cp.b1 + cp.b2 * v0))) * (1.0 + 1e-6);
      }
    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m);
        if (!fl.s[is]) continue;
        warm[vvs[is]] = std::max(ground_geom(wc, m, s.pairs[k].src).v * (1.0 - 2e-9), 2e-9);
      }
    for (int i = 0; i < L.n_u(); ++i)
      if (fl.u[i]) warm[vXu[i]] = vb.ell_u[i].base / kScale2 * (1.0 - 1e-9);
    {
      double eta0 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < L.K; ++k) {
        double sum = 0;
        for (int m = 0; m < L.M; ++m) {
          const int id = L.d(m, k);
          if (!fl.d[id]) continue;
          const AffineBound& b = vb.r_d[id];
          sum += b.base + b.coeff[0] * (warm[vX[id]] * kScale2 - b.expansion[0]) +
                 b.coeff[1] * (warm[vY[id]] - b.expansion[1]);
        }
        eta0 = std::min(eta0, sum);
      }
      warm[veta] = std::max(eta0 - 1e-6 * std::max(1.0, std::abs(eta0)), -0.9);
    }

    cvx::SolveOptions so;
    so.barrier_t0 = sca_it == 0 ? 1.0 : 20.0;
    const cvx::Solution sol = cvx::solve(pr, &warm, so);
    dg.newton_iters += sol.newton_iters;
    const bool ok = sol.status == cvx::SolveStatus::Optimal ||
                    (sol.status == cvx::SolveStatus::MaxIters && sol.feas_residual <= 1e-6);
    if (!ok) {
      dg.solver_ok = false;
      break;
    }
    if (sol.objective < eta_cur - 1e-9 * std::max(1.0, std::abs(eta_cur))) break;

    Eigen::VectorXd znew(L.M);
    for (int m = 0; m < L.M; ++m) znew[m] = sol.x[vz[m]] * kScale;
    if (makes_alive_u_coincident(s, fl, q, znew)) break;

    const Placement wnew{q, znew};
    // Anchor at the pristine input shares so earlier shrinks never compound.
    Allocation anew = st.alloc;
    const double eta_rep = repair_flow(s, wnew, anew);
    if (eta_rep < eta_cur - 1e-12) break;

    double gap = 0;
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int id = L.d(m, k);
        if (!fl.d[id]) continue;
        const double xs = sol.x[vX[id]];
        const double true_xs =
            (znew[m] * znew[m] + (q.col(m) - s.pairs[k].dst).squaredNorm()) / kScale2;
        gap = std::max(gap, std::abs(xs - true_xs) / std::max(1.0, xs));
        const double vd = sol.x[vvd[id]];
        const double true_y = 1.0 + std::exp(-(cp.b1 + cp.b2 * vd));
        gap = std::max(gap, std::abs(sol.x[vY[id]] - true_y) / true_y);
      }
    dg.max_surrogate_gap = gap;

    zcur = std::move(znew);
    acur = std::move(anew);
    dg.sca_iters = sca_it + 1;
    const bool stalled =
        std::abs(eta_rep - eta_cur) <= cfg.sca_tol * std::max(std::abs(eta_rep), 1e-12);
    eta_cur = std::max(eta_cur, eta_rep);
    if (stalled) break;
  }

  if (diag) *diag = dg;
  BcdState out = st;
  if (eta_cur > st.eta) {
    out.placement.z = std::move(zcur);
    out.alloc = std::move(acur);
    out.eta = eta_cur;
  }
  return out;
}

}  // namespace uavrelay::sca
