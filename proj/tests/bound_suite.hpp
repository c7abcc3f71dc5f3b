#pragma once

// Shared property checks for the tangent-bound families used by the SCA
// subproblems: tangency at the expansion point, domination over sampled
// in-domain points and agreement of the stored coefficients with central
// finite differences. The unit tests and the acceptance runner both drive
// this with different sample counts.

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Core>

#include "uavrelay/channel.hpp"
#include "uavrelay/rng.hpp"
#include "uavrelay/sca.hpp"

namespace boundsuite {

struct Totals {
  double tangency = 0;  // max |bound(expansion) - f(expansion)|
  double slack = std::numeric_limits<double>::infinity();  // min signed slack
  double coeff = 0;     // max relative coefficient-vs-finite-difference gap
  long points = 0;
};

using Fn = std::function<double(const Eigen::VectorXd&)>;

// Signed slack of the bound's claim at x: f - bound for lower bounds,
// bound - f for upper bounds. Nonnegative when the claim holds.
inline double signed_slack(const uavrelay::sca::AffineBound& b, const Fn& f,
                           const Eigen::VectorXd& x) {
  const double s = f(x) - b.eval(x);
  return b.sense == uavrelay::sca::AffineBound::Sense::Lower ? s : -s;
}

inline void check_expansion(const uavrelay::sca::AffineBound& b, const Fn& f, Totals& t) {
  t.tangency = std::max(t.tangency, std::abs(b.base - f(b.expansion)));
  for (int i = 0; i < b.expansion.size(); ++i) {
    const double h = 1e-6 * std::max(1.0, std::abs(b.expansion[i]));
    Eigen::VectorXd xp = b.expansion, xm = b.expansion;
    xp[i] += h;
    xm[i] -= h;
    const double fd = (f(xp) - f(xm)) / (2.0 * h);
    t.coeff = std::max(t.coeff, std::abs(b.coeff[i] - fd) /
                                    std::max({1e-12, std::abs(b.coeff[i]), std::abs(fd)}));
  }
}

inline void check_point(const uavrelay::sca::AffineBound& b, const Fn& f,
                        const Eigen::VectorXd& x, Totals& t) {
  t.slack = std::min(t.slack, signed_slack(b, f, x));
  ++t.points;
}

struct FamilyReport {
  std::string name;
  Totals totals;
};

namespace detail {

struct Geom {
  double hsq, d3sq, v;
};

inline Geom geom_of(const uavrelay::sca::Placement& w, int m, const Eigen::Vector2d& node) {
  Geom g;
  g.hsq = (w.q.col(m) - node).squaredNorm();
  g.d3sq = g.hsq + w.z[m] * w.z[m];
  g.v = w.z[m] / std::sqrt(g.d3sq);
  return g;
}

inline Eigen::VectorXd vec1(double a) { return Eigen::VectorXd::Constant(1, a); }

inline Eigen::VectorXd vec2(double a, double b) {
  Eigen::VectorXd x(2);
  x << a, b;
  return x;
}

}  // namespace detail

// Runs the suite on `s`: for each of `expansions` random expansion states,
// builds every bound family at a random placement with a jiggled equal-split
// allocation, verifies tangency and coefficients, then checks domination at
// `npoints` freshly sampled placements (horizontal families keep the
// expansion altitudes, vertical families the expansion horizontal positions,
// so every sampled point is in the family's domain by construction).
inline std::vector<FamilyReport> run_bound_suite(const uavrelay::Scenario& s,
                                                 int expansions, int npoints,
                                                 uavrelay::Rng& rng) {
  using namespace uavrelay;
  namespace sc = uavrelay::sca;
  using detail::Geom;
  using detail::geom_of;
  using detail::vec1;
  using detail::vec2;
  const auto& cp = s.channel;
  const sc::LinkLayout L{s.num_pairs(), s.num_uavs};

  enum Fam {
    kUpperD, kUpperU,
    kHorRateD, kHorRateS, kHorRateU, kHorDistU, kHorSlantS, kHorSlantD,
    kVerRateD, kVerRateS, kVerRateU, kVerDistU, kVerSlantS, kVerSlantD,
    kFamCount
  };
  const char* names[kFamCount] = {
      "upper rate (dest links)",       "upper rate (relay links)",
      "horizontal dest rate",          "horizontal source rate",
      "horizontal relay rate",         "horizontal relay distance",
      "horizontal slant (source)",     "horizontal slant (dest)",
      "vertical dest rate",            "vertical source rate",
      "vertical relay rate",           "vertical relay distance",
      "vertical slant (source)",       "vertical slant (dest)"};
  std::vector<FamilyReport> rep(kFamCount);
  for (int i = 0; i < kFamCount; ++i) rep[i].name = names[i];

  auto rand_q = [&](Rng& r) {
    Eigen::Matrix2Xd q(2, L.M);
    for (int m = 0; m < L.M; ++m) {
      q(0, m) = s.region.lo.x() + (s.region.hi.x() - s.region.lo.x()) * r.next_double();
      q(1, m) = s.region.lo.y() + (s.region.hi.y() - s.region.lo.y()) * r.next_double();
    }
    return q;
  };
  auto rand_z = [&](Rng& r) {
    Eigen::VectorXd z(L.M);
    for (int m = 0; m < L.M; ++m)
      z[m] = s.alt_min_m + (s.alt_max_m - s.alt_min_m) * r.next_double();
    return z;
  };
  auto logistic_w = [&](double v) { return std::exp(-(cp.b1 + cp.b2 * v)); };

  for (int e = 0; e < expansions; ++e) {
    const sc::Placement w{rand_q(rng), rand_z(rng)};
    sc::Allocation al = sc::Allocation::equal_split(s);
    auto jiggle = [&](Eigen::VectorXd& v) {
      for (int i = 0; i < v.size(); ++i) v[i] *= 0.5 + rng.next_double();
    };
    jiggle(al.a_s);
    jiggle(al.a_d);
    jiggle(al.a_u);
    jiggle(al.p_s);
    jiggle(al.p_d);
    jiggle(al.p_u);

    const sc::UpperBounds ub = sc::build_upper_bounds(s, w, al);
    const sc::HorizontalBounds hb = sc::build_lower_bounds_horizontal(s, w, al);
    const sc::VerticalBounds vb = sc::build_lower_bounds_vertical(s, w, al);

    // Per-link true functions in each family's linearization variables.
    std::vector<Fn> f_ud(L.n_d()), f_hd(L.n_d()), f_vd(L.n_d());
    std::vector<Fn> f_hsl_d(L.n_d());
    std::vector<Fn> f_hs(L.n_s()), f_vs(L.n_s()), f_hsl_s(L.n_s());
    std::vector<Fn> f_uu(L.n_u()), f_hu(L.n_u()), f_vu(L.n_u());
    std::vector<Fn> f_hlu(L.n_u()), f_vlu(L.n_u());

    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m), id = L.d(m, k);
        const Geom gd = geom_of(w, m, s.pairs[k].dst);
        const Geom gs = geom_of(w, m, s.pairs[k].src);
        const double dist_d = std::sqrt(gd.d3sq);
        const double ad = al.a_d[id], pd = al.p_d[id];
        const double as = al.a_s[is], ps = al.p_s[is];
        const double zm = w.z[m];
        f_ud[id] = [dist_d, gd, &cp](const Eigen::VectorXd& x) {
          return channel::rate_from_distance_angle(x[0], x[1], dist_d, gd.v, cp);
        };
        f_hd[id] = f_vd[id] = [ad, pd, &cp](const Eigen::VectorXd& x) {
          return sc::expr::rate_d_surrogate(ad, pd, cp, x[0], x[1]);
        };
        f_hs[is] = [as, ps, zm, &cp](const Eigen::VectorXd& x) {
          return sc::expr::rate_s_surrogate(as, ps, cp, zm * zm, x[0], x[1]);
        };
        f_vs[is] = [as, ps, gs, &cp](const Eigen::VectorXd& x) {
          return sc::expr::rate_s_surrogate(as, ps, cp, gs.hsq, x[0], x[1]);
        };
        f_hsl_s[is] = [zm](const Eigen::VectorXd& x) {
          return sc::expr::ell_slant(zm, x[0]);
        };
        f_hsl_d[id] = f_hsl_s[is];
      }
    Fn slant2 = [](const Eigen::VectorXd& x) { return sc::expr::ell_slant(x[0], x[1]); };

    for (int m = 0; m < L.M; ++m)
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        const double hsq = (w.q.col(m) - w.q.col(n)).squaredNorm();
        const double dz = w.z[m] - w.z[n];
        const double dzsq = dz * dz;
        for (int k = 0; k < L.K; ++k) {
          const int iu = L.u(m, n, k);
          const double au = al.a_u[iu], pu = al.p_u[iu];
          f_uu[iu] = [hsq, dzsq, &cp](const Eigen::VectorXd& x) {
            channel::LinkGeometry g;
            g.horizontal_offset = {std::sqrt(hsq), 0.0};
            g.alt_a = std::sqrt(dzsq);
            g.alt_b = 0.0;
            return channel::rate_uav_uav(x[0], x[1], g, cp);
          };
          f_hu[iu] = [au, pu, dzsq, &cp](const Eigen::VectorXd& x) {
            return sc::expr::rate_u_surrogate(au, pu, cp, x[0], dzsq);
          };
          f_vu[iu] = [au, pu, hsq, &cp](const Eigen::VectorXd& x) {
            return sc::expr::rate_u_surrogate(au, pu, cp, hsq, x[0]);
          };
          f_hlu[iu] = [dzsq](const Eigen::VectorXd& x) {
            return x.squaredNorm() + dzsq;
          };
          f_vlu[iu] = [hsq](const Eigen::VectorXd& x) { return hsq + x[0] * x[0]; };
        }
      }

    // Tangency and finite-difference checks at every expansion.
    for (int k = 0; k < L.K; ++k)
      for (int m = 0; m < L.M; ++m) {
        const int is = L.s(k, m), id = L.d(m, k);
        check_expansion(ub.r_d[id], f_ud[id], rep[kUpperD].totals);
        check_expansion(hb.r_d[id], f_hd[id], rep[kHorRateD].totals);
        check_expansion(vb.r_d[id], f_vd[id], rep[kVerRateD].totals);
        check_expansion(hb.rate_s[is], f_hs[is], rep[kHorRateS].totals);
        check_expansion(vb.rate_s[is], f_vs[is], rep[kVerRateS].totals);
        check_expansion(hb.ell_s[is], f_hsl_s[is], rep[kHorSlantS].totals);
        check_expansion(hb.ell_d[id], f_hsl_d[id], rep[kHorSlantD].totals);
        check_expansion(vb.ell_s[is], slant2, rep[kVerSlantS].totals);
        check_expansion(vb.ell_d[id], slant2, rep[kVerSlantD].totals);
      }
    for (int i = 0; i < L.n_u(); ++i) {
      check_expansion(ub.r_u[i], f_uu[i], rep[kUpperU].totals);
      check_expansion(hb.rate_u[i], f_hu[i], rep[kHorRateU].totals);
      check_expansion(vb.rate_u[i], f_vu[i], rep[kVerRateU].totals);
      check_expansion(hb.ell_u[i], f_hlu[i], rep[kHorDistU].totals);
      check_expansion(vb.ell_u[i], f_vlu[i], rep[kVerDistU].totals);
    }

    // Domination at sampled placements and allocations.
    for (int t = 0; t < npoints; ++t) {
      const sc::Placement wh{rand_q(rng), w.z};        // horizontal sample
      const sc::Placement wv{w.q, rand_z(rng)};        // vertical sample
      for (int k = 0; k < L.K; ++k)
        for (int m = 0; m < L.M; ++m) {
          const int is = L.s(k, m), id = L.d(m, k);
          const double ar = std::exp(std::log(1e-3) * rng.next_double());
          const double pr = 1e-6 + (s.uav_power_w - 1e-6) * rng.next_double();
          check_point(ub.r_d[id], f_ud[id], vec2(ar, pr), rep[kUpperD].totals);

          const Geom ghd = geom_of(wh, m, s.pairs[k].dst);
          const Geom ghs = geom_of(wh, m, s.pairs[k].src);
          check_point(hb.r_d[id], f_hd[id],
                      vec2(ghd.d3sq, 1.0 + logistic_w(ghd.v)), rep[kHorRateD].totals);
          check_point(hb.rate_s[is], f_hs[is], vec2(logistic_w(ghs.v), ghs.hsq),
                      rep[kHorRateS].totals);
          check_point(hb.ell_s[is], f_hsl_s[is], vec1(ghs.v), rep[kHorSlantS].totals);
          check_point(hb.ell_d[id], f_hsl_d[id], vec1(ghd.v), rep[kHorSlantD].totals);

          const Geom gvd = geom_of(wv, m, s.pairs[k].dst);
          const Geom gvs = geom_of(wv, m, s.pairs[k].src);
          check_point(vb.r_d[id], f_vd[id],
                      vec2(gvd.d3sq, 1.0 + logistic_w(gvd.v)), rep[kVerRateD].totals);
          check_point(vb.rate_s[is], f_vs[is],
                      vec2(logistic_w(gvs.v), wv.z[m] * wv.z[m]), rep[kVerRateS].totals);
          check_point(vb.ell_s[is], slant2, vec2(wv.z[m], gvs.v), rep[kVerSlantS].totals);
          check_point(vb.ell_d[id], slant2, vec2(wv.z[m], gvd.v), rep[kVerSlantD].totals);
        }
      for (int m = 0; m < L.M; ++m)
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const Eigen::Vector2d dq = wh.q.col(m) - wh.q.col(n);
          const double dzv = wv.z[m] - wv.z[n];
          for (int k = 0; k < L.K; ++k) {
            const int iu = L.u(m, n, k);
            const double ar = std::exp(std::log(1e-3) * rng.next_double());
            const double pr = 1e-6 + (s.uav_power_w - 1e-6) * rng.next_double();
            check_point(ub.r_u[iu], f_uu[iu], vec2(ar, pr), rep[kUpperU].totals);
            check_point(hb.rate_u[iu], f_hu[iu], vec1(dq.squaredNorm()),
                        rep[kHorRateU].totals);
            check_point(hb.ell_u[iu], f_hlu[iu], dq, rep[kHorDistU].totals);
            check_point(vb.rate_u[iu], f_vu[iu], vec1(dzv * dzv), rep[kVerRateU].totals);
            check_point(vb.ell_u[iu], f_vlu[iu], vec1(dzv), rep[kVerDistU].totals);
          }
        }
    }
  }
  return rep;
}

}  // namespace boundsuite
