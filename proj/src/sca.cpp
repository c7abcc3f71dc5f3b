#include "uavrelay/sca.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <limits>
#include <utility>
#include <vector>

#include "sca_internal.hpp"
#include "uavrelay/channel.hpp"
#include "uavrelay/cvx.hpp"

namespace uavrelay::sca {

using namespace detail;

namespace {

constexpr double kLn2 = 0.69314718055994530941723212145818;

// a log2(1 + g p / a); the shared scalar rate expression with a precomputed
// link gain g = gamma0 f(v) / d^alpha (ground) or gamma0 / d^2 (relay).
double rate_of_gain(double a, double p, double g) {
  if (a <= 0 || p <= 0) return 0.0;
  return a / kLn2 * std::log1p(g * p / a);
}

double ground_gain(const Scenario& s, const GroundGeom& ge) {
  const auto& cp = s.channel;
  return cp.gamma0 * channel::phi_logistic(ge.v, cp) /
         std::pow(std::sqrt(ge.d3sq), cp.alpha);
}

double relay_gain(const Scenario& s, double d3sq) {
  return s.channel.gamma0 / d3sq;
}

// Per-link gains at a fixed placement; relay entries are -1 for coincident
// UAV pairs (those links are excluded from optimization and carry no rate).
struct GainTable {
  Eigen::VectorXd g_s, g_d;       // per (k,m) / (m,k)
  Eigen::MatrixXd g_u;            // per (m,n), k-independent
};

GainTable gain_table(const Scenario& s, const Placement& w) {
  const LinkLayout L = layout_of(s);
  GainTable t;
  t.g_s.resize(L.n_s());
  t.g_d.resize(L.n_d());
  t.g_u.setConstant(L.M, L.M, -1.0);
  for (int k = 0; k < L.K; ++k)
    for (int m = 0; m < L.M; ++m) {
      t.g_s[L.s(k, m)] = ground_gain(s, ground_geom(w, m, s.pairs[k].src));
      t.g_d[L.d(m, k)] = ground_gain(s, ground_geom(w, m, s.pairs[k].dst));
    }
  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m) continue;
      const double dz = w.z[m] - w.z[n];
      const double d3sq = (w.q.col(m) - w.q.col(n)).squaredNorm() + dz * dz;
      if (d3sq > kCoincident) t.g_u(m, n) = relay_gain(s, d3sq);
    }
  return t;
}

AffineBound zero_bound(AffineBound::Sense sense, int nvar) {
  AffineBound b;
  b.sense = sense;
  b.coeff = Eigen::VectorXd::Zero(nvar);
  b.expansion = Eigen::VectorXd::Zero(nvar);
  return b;
}

// Tangent of the concave a log2(1 + g p / a) at (ah, ph), global upper bound
// over a, p > 0 (and, by continuity, a or p = 0).
AffineBound tangent_upper_rate(double ah, double ph, double g) {
  AffineBound b;
  b.sense = AffineBound::Sense::Upper;
  ah = std::max(ah, kAllocFloor);
  ph = std::max(ph, kPowFloor);
  const double r = g * ph / ah;
  const double ir = 1.0 / (1.0 + r);
  b.base = ah / kLn2 * std::log1p(r);
  b.coeff.resize(2);
  b.coeff[0] = (std::log1p(r) - r * ir) / kLn2;
  b.coeff[1] = g * ir / kLn2;
  b.expansion.resize(2);
  b.expansion << ah, ph;
  return b;
}

}  // namespace

Allocation Allocation::equal_split(const Scenario& s) {
  const LinkLayout L = layout_of(s);
  Allocation al;
  const double total = static_cast<double>(L.n_s() + L.n_d() + L.n_u());
  al.a_s = Eigen::VectorXd::Constant(L.n_s(), 1.0 / total);
  al.a_d = Eigen::VectorXd::Constant(L.n_d(), 1.0 / total);
  al.a_u = Eigen::VectorXd::Constant(L.n_u(), 1.0 / total);
  al.p_s = Eigen::VectorXd::Constant(L.n_s(), s.source_power_w / L.M);
  // Each UAV splits its budget over its K destination and (M-1)K relay links.
  const double p_each = s.uav_power_w / (L.M * L.K);
  al.p_d = Eigen::VectorXd::Constant(L.n_d(), p_each);
  al.p_u = Eigen::VectorXd::Constant(L.n_u(), p_each);
  return al;
}

void Allocation::zero_below(double cutoff) {
  auto wipe = [cutoff](Eigen::VectorXd& a, Eigen::VectorXd& p) {
    for (int i = 0; i < a.size(); ++i)
      if (a[i] < cutoff) {
        a[i] = 0;
        p[i] = 0;
      }
  };
  wipe(a_s, p_s);
  wipe(a_d, p_d);
  wipe(a_u, p_u);
}

LinkRates compute_rates(const Scenario& s, const Placement& w, const Allocation& al) {
  const LinkLayout L = layout_of(s);
  const auto& cp = s.channel;
  LinkRates r;
  r.r_s = Eigen::VectorXd::Zero(L.n_s());
  r.r_d = Eigen::VectorXd::Zero(L.n_d());
  r.r_u = Eigen::VectorXd::Zero(L.n_u());
  for (int k = 0; k < L.K; ++k)
    for (int m = 0; m < L.M; ++m) {
      const int is = L.s(k, m), id = L.d(m, k);
      if (al.a_s[is] > 0 && al.p_s[is] > 0) {
        channel::RateInputs in{al.a_s[is], al.p_s[is],
                               {w.q.col(m) - s.pairs[k].src, w.z[m], 0.0}};
        r.r_s[is] = channel::rate_ground_uav(in, cp);
      }
      if (al.a_d[id] > 0 && al.p_d[id] > 0) {
        channel::RateInputs in{al.a_d[id], al.p_d[id],
                               {w.q.col(m) - s.pairs[k].dst, w.z[m], 0.0}};
        r.r_d[id] = channel::rate_ground_uav(in, cp);
      }
    }
  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m) continue;
      const channel::LinkGeometry ge{w.q.col(m) - w.q.col(n), w.z[m], w.z[n]};
      for (int k = 0; k < L.K; ++k) {
        const int iu = L.u(m, n, k);
        if (al.a_u[iu] > 0 && al.p_u[iu] > 0)
          r.r_u[iu] = channel::rate_uav_uav(al.a_u[iu], al.p_u[iu], ge, cp);
      }
    }
  return r;
}

double min_pair_rate(const Scenario& s, const LinkRates& r) {
  const LinkLayout L = layout_of(s);
  double best = std::numeric_limits<double>::infinity();
  for (int k = 0; k < L.K; ++k) {
    double sum = 0;
    for (int m = 0; m < L.M; ++m) sum += r.r_d[L.d(m, k)];
    best = std::min(best, sum);
  }
  return best;
}

Eigen::MatrixXd flow_residuals(const Scenario& s, const LinkRates& r) {
  const LinkLayout L = layout_of(s);
  Eigen::MatrixXd res(L.M, L.K);
  for (int m = 0; m < L.M; ++m)
    for (int k = 0; k < L.K; ++k) {
      double in = r.r_s[L.s(k, m)];
      double out = r.r_d[L.d(m, k)];
      for (int n = 0; n < L.M; ++n) {
        if (n == m) continue;
        in += r.r_u[L.u(n, m, k)];
        out += r.r_u[L.u(m, n, k)];
      }
      res(m, k) = in - out;
    }
  return res;
}

namespace expr {

double rate_d_surrogate(double a, double p, const ChannelParams& cp, double X, double Y) {
  if (a <= 0 || p <= 0) return 0.0;
  const double S = (p * cp.gamma0 / a) * (cp.c1 + cp.c2 / Y) * std::pow(X, -0.5 * cp.alpha);
  return a / kLn2 * std::log1p(S);
}

double rate_s_surrogate(double a, double p, const ChannelParams& cp, double zsq,
                        double w, double hsq) {
  if (a <= 0 || p <= 0) return 0.0;
  const double S = (p * cp.gamma0 / a) * (cp.c1 + cp.c2 / (1.0 + w)) *
                   std::pow(zsq + hsq, -0.5 * cp.alpha);
  return a / kLn2 * std::log1p(S);
}

double rate_u_surrogate(double a, double p, const ChannelParams& cp, double hsq,
                        double dzsq) {
  if (a <= 0 || p <= 0) return 0.0;
  return a / kLn2 * std::log1p(p * cp.gamma0 / (a * (hsq + dzsq)));
}

double ell_slant(double z, double v) { return (z + 1.0) * (z + 1.0) / (4.0 * v); }

}  // namespace expr

UpperBounds build_upper_bounds(const Scenario& s, const Placement& w,
                               const Allocation& hat) {
  const LinkLayout L = layout_of(s);
  const GainTable gt = gain_table(s, w);
  UpperBounds ub;
  ub.r_d.reserve(L.n_d());
  for (int m = 0; m < L.M; ++m)
    for (int k = 0; k < L.K; ++k) {
      const int id = L.d(m, k);
      ub.r_d.push_back(tangent_upper_rate(hat.a_d[id], hat.p_d[id], gt.g_d[id]));
    }
  ub.r_u.assign(L.n_u(), zero_bound(AffineBound::Sense::Upper, 2));
  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m || gt.g_u(m, n) < 0) continue;
      for (int k = 0; k < L.K; ++k) {
        const int iu = L.u(m, n, k);
        ub.r_u[iu] = tangent_upper_rate(hat.a_u[iu], hat.p_u[iu], gt.g_u(m, n));
      }
    }
  return ub;
}

namespace {

// Tangent of the destination rate in (X, Y) = (squared 3D distance, logistic
// denominator 1 + e^{-(B1+B2 v)}). Convex in (X, Y), so the tangent is a
// global lower bound on the rate surrogate.
AffineBound tangent_rate_d(double a, double p, const ChannelParams& cp,
                           double Xh, double Yh) {
  if (a <= 0 || p <= 0) return zero_bound(AffineBound::Sense::Lower, 2);
  AffineBound b;
  b.sense = AffineBound::Sense::Lower;
  const double c = p * cp.gamma0 / a;
  const double Xe = std::pow(Xh, -0.5 * cp.alpha);
  const double S = c * (cp.c1 + cp.c2 / Yh) * Xe;
  const double is = 1.0 / (1.0 + S);
  const double w = a / kLn2;
  b.base = w * std::log1p(S);
  b.coeff.resize(2);
  b.coeff[0] = w * is * (-0.5 * cp.alpha * S / Xh);
  b.coeff[1] = w * is * (-c * cp.c2 * Xe / (Yh * Yh));
  b.expansion.resize(2);
  b.expansion << Xh, Yh;
  return b;
}

// Tangent of the source rate in (w, h) = (e^{-(B1+B2 v)}, squared horizontal
// distance) at fixed altitude, or in (w, t) = (same, z^2) at fixed horizontal
// offset. Both compositions are convex, so tangents lower-bound the rate.
AffineBound tangent_rate_s(double a, double p, const ChannelParams& cp,
                           double fixed_sq, double wh, double var_sq) {
  if (a <= 0 || p <= 0) return zero_bound(AffineBound::Sense::Lower, 2);
  AffineBound b;
  b.sense = AffineBound::Sense::Lower;
  const double c = p * cp.gamma0 / a;
  const double dsq = fixed_sq + var_sq;
  const double g3 = std::pow(dsq, -0.5 * cp.alpha);
  const double S = c * (cp.c1 + cp.c2 / (1.0 + wh)) * g3;
  const double is = 1.0 / (1.0 + S);
  const double wt = a / kLn2;
  b.base = wt * std::log1p(S);
  b.coeff.resize(2);
  b.coeff[0] = wt * is * (-c * cp.c2 * g3 / ((1.0 + wh) * (1.0 + wh)));
  b.coeff[1] = wt * is * (-0.5 * cp.alpha * S / dsq);
  b.expansion.resize(2);
  b.expansion << wh, var_sq;
  return b;
}

// Tangent of the relay rate in one squared-offset coordinate (horizontal or
// vertical), the other held fixed.
AffineBound tangent_rate_u(double a, double p, const ChannelParams& cp,
                           double fixed_sq, double var_sq) {
  if (a <= 0 || p <= 0) return zero_bound(AffineBound::Sense::Lower, 1);
  AffineBound b;
  b.sense = AffineBound::Sense::Lower;
  const double c = p * cp.gamma0 / a;
  const double denom = fixed_sq + var_sq;
  b.base = a / kLn2 * std::log1p(c / denom);
  b.coeff.resize(1);
  b.coeff[0] = -(a / kLn2) * c / (denom * (denom + c));
  b.expansion.resize(1);
  b.expansion << var_sq;
  return b;
}

}  // namespace

HorizontalBounds build_lower_bounds_horizontal(const Scenario& s, const Placement& w,
                                               const Allocation& al) {
  const LinkLayout L = layout_of(s);
  const auto& cp = s.channel;
  HorizontalBounds hb;
  hb.r_d.resize(L.n_d());
  hb.rate_s.resize(L.n_s());
  hb.ell_s.resize(L.n_s());
  hb.ell_d.resize(L.n_d());
  hb.rate_u.assign(L.n_u(), zero_bound(AffineBound::Sense::Lower, 1));
  hb.ell_u.assign(L.n_u(), zero_bound(AffineBound::Sense::Lower, 2));

  for (int k = 0; k < L.K; ++k)
    for (int m = 0; m < L.M; ++m) {
      const int is = L.s(k, m), id = L.d(m, k);
      const GroundGeom gs = ground_geom(w, m, s.pairs[k].src);
      const GroundGeom gd = ground_geom(w, m, s.pairs[k].dst);
      const double z = w.z[m];
      hb.r_d[id] = tangent_rate_d(al.a_d[id], al.p_d[id], cp, gd.d3sq,
                                  1.0 + std::exp(-(cp.b1 + cp.b2 * gd.v)));
      hb.rate_s[is] = tangent_rate_s(al.a_s[is], al.p_s[is], cp, z * z,
                                     std::exp(-(cp.b1 + cp.b2 * gs.v)), gs.hsq);
      const SlantTangent ts = slant_tangent(z, gs.v);
      hb.ell_s[is].sense = AffineBound::Sense::Lower;
      hb.ell_s[is].base = ts.base;
      hb.ell_s[is].coeff = Eigen::VectorXd::Constant(1, ts.dv);
      hb.ell_s[is].expansion = Eigen::VectorXd::Constant(1, gs.v);
      const SlantTangent td = slant_tangent(z, gd.v);
      hb.ell_d[id].sense = AffineBound::Sense::Lower;
      hb.ell_d[id].base = td.base;
      hb.ell_d[id].coeff = Eigen::VectorXd::Constant(1, td.dv);
      hb.ell_d[id].expansion = Eigen::VectorXd::Constant(1, gd.v);
    }

  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m) continue;
      const Eigen::Vector2d dq = w.q.col(m) - w.q.col(n);
      const double hsq = dq.squaredNorm();
      const double dz = w.z[m] - w.z[n];
      const double d3sq = hsq + dz * dz;
      if (d3sq <= kCoincident) continue;
      for (int k = 0; k < L.K; ++k) {
        const int iu = L.u(m, n, k);
        hb.rate_u[iu] = tangent_rate_u(al.a_u[iu], al.p_u[iu], cp, dz * dz, hsq);
        AffineBound& e = hb.ell_u[iu];
        e.base = d3sq;
        e.coeff = 2.0 * dq;
        e.expansion = dq;
      }
    }
  return hb;
}

VerticalBounds build_lower_bounds_vertical(const Scenario& s, const Placement& w,
                                           const Allocation& al) {
  const LinkLayout L = layout_of(s);
  const auto& cp = s.channel;
  VerticalBounds vb;
  vb.r_d.resize(L.n_d());
  vb.rate_s.resize(L.n_s());
  vb.ell_s.resize(L.n_s());
  vb.ell_d.resize(L.n_d());
  vb.rate_u.assign(L.n_u(), zero_bound(AffineBound::Sense::Lower, 1));
  vb.ell_u.assign(L.n_u(), zero_bound(AffineBound::Sense::Lower, 1));

  for (int k = 0; k < L.K; ++k)
    for (int m = 0; m < L.M; ++m) {
      const int is = L.s(k, m), id = L.d(m, k);
      const GroundGeom gs = ground_geom(w, m, s.pairs[k].src);
      const GroundGeom gd = ground_geom(w, m, s.pairs[k].dst);
      const double z = w.z[m];
      vb.r_d[id] = tangent_rate_d(al.a_d[id], al.p_d[id], cp, gd.d3sq,
                                  1.0 + std::exp(-(cp.b1 + cp.b2 * gd.v)));
      vb.rate_s[is] = tangent_rate_s(al.a_s[is], al.p_s[is], cp, gs.hsq,
                                     std::exp(-(cp.b1 + cp.b2 * gs.v)), z * z);
      const SlantTangent ts = slant_tangent(z, gs.v);
      vb.ell_s[is].sense = AffineBound::Sense::Lower;
      vb.ell_s[is].base = ts.base;
      vb.ell_s[is].coeff.resize(2);
      vb.ell_s[is].coeff << ts.dz, ts.dv;
      vb.ell_s[is].expansion.resize(2);
      vb.ell_s[is].expansion << z, gs.v;
      const SlantTangent td = slant_tangent(z, gd.v);
      vb.ell_d[id].sense = AffineBound::Sense::Lower;
      vb.ell_d[id].base = td.base;
      vb.ell_d[id].coeff.resize(2);
      vb.ell_d[id].coeff << td.dz, td.dv;
      vb.ell_d[id].expansion.resize(2);
      vb.ell_d[id].expansion << z, gd.v;
    }

  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m) continue;
      const double hsq = (w.q.col(m) - w.q.col(n)).squaredNorm();
      const double dz = w.z[m] - w.z[n];
      const double d3sq = hsq + dz * dz;
      if (d3sq <= kCoincident) continue;
      for (int k = 0; k < L.K; ++k) {
        const int iu = L.u(m, n, k);
        vb.rate_u[iu] = tangent_rate_u(al.a_u[iu], al.p_u[iu], cp, hsq, dz * dz);
        AffineBound& e = vb.ell_u[iu];
        e.base = d3sq;
        e.coeff = Eigen::VectorXd::Constant(1, 2.0 * dz);
        e.expansion = Eigen::VectorXd::Constant(1, dz);
      }
    }
  return vb;
}

namespace {

// Per-link variable ids for the resource-allocation program; -1 marks links
// excluded from optimization (coincident UAV pairs).
struct AllocVars {
  std::vector<int> a_s, p_s, a_d, p_d, a_u, p_u;
  int eta = -1;
};

double eval_true_eta(const Scenario& s, const Placement& w, const Allocation& al) {
  return min_pair_rate(s, compute_rates(s, w, al));
}

}  // namespace

namespace detail {

double max_flow_violation(const Scenario& s, const Placement& w, const Allocation& al) {
  const Eigen::MatrixXd res = flow_residuals(s, compute_rates(s, w, al));
  return std::max(0.0, -res.minCoeff());
}

double repair_flow(const Scenario& s, const Placement& w, Allocation& al,
                   double margin) {
  const LinkLayout L = layout_of(s);
  const GainTable gt = gain_table(s, w);
  const double safety = 1.0 - margin;
  // Shares shrunk below the allocation floor are closed outright (share and
  // power zeroed). A kept sub-floor share would sit below the tangent
  // expansion floor of the resource program, whose rate line then overstates
  // the link at the warm point and re-breaks the stream this repair fixed.
  // Closing also guarantees every stream can be made feasible: a stream whose
  // inflow supports no outflow at all simply loses its outflow links. The
  // resource step re-floors every link on entry, so closed links reopen
  // whenever the inflow recovers.
  auto scaled = [](double a, double f) {
    if (f >= 1.0) return a;  // untouched streams keep sub-floor shares as-is
    const double v = f * a;
    return v >= kAllocFloor ? v : 0.0;
  };
  // Shrinking one UAV's relay outflow lowers another's inflow, so sweep until
  // no stream is violated; every step only shrinks, hence the sweeps settle.
  for (int sweep = 0; sweep < 8; ++sweep) {
    bool any = false;
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        const int is = L.s(k, m), id = L.d(m, k);
        double in = rate_of_gain(al.a_s[is], al.p_s[is], gt.g_s[is]);
        for (int n = 0; n < L.M; ++n)
          if (n != m && gt.g_u(n, m) > 0)
            in += rate_of_gain(al.a_u[L.u(n, m, k)], al.p_u[L.u(n, m, k)], gt.g_u(n, m));
        auto out_at = [&](double f) {
          double o = rate_of_gain(scaled(al.a_d[id], f), al.p_d[id], gt.g_d[id]);
          for (int n = 0; n < L.M; ++n)
            if (n != m && gt.g_u(m, n) > 0)
              o += rate_of_gain(scaled(al.a_u[L.u(m, n, k)], f), al.p_u[L.u(m, n, k)],
                                gt.g_u(m, n));
          return o;
        };
        const double target = safety * in - kFlowAbs;
        if (target <= 0.0) {
          // Inflow too small to carry anything: close the whole outflow side.
          bool had = false;
          auto close = [&](double& a, double& p) {
            had = had || a > 0;
            a = 0.0;
            p = 0.0;
          };
          close(al.a_d[id], al.p_d[id]);
          for (int n = 0; n < L.M; ++n)
            if (n != m) close(al.a_u[L.u(m, n, k)], al.p_u[L.u(m, n, k)]);
          any = any || had;
          continue;
        }
        if (out_at(1.0) <= target) continue;
        any = true;
        double lo = 0.0, hi = 1.0;  // out_at(0) == 0 <= target always holds
        for (int it = 0; it < 60; ++it) {
          const double mid = 0.5 * (lo + hi);
          (out_at(mid) <= target ? lo : hi) = mid;
        }
        auto apply = [&](double& a, double& p) {
          a = scaled(a, lo);
          if (a == 0.0) p = 0.0;
        };
        apply(al.a_d[id], al.p_d[id]);
        for (int n = 0; n < L.M; ++n)
          if (n != m) apply(al.a_u[L.u(m, n, k)], al.p_u[L.u(m, n, k)]);
      }
    if (!any) break;
  }
  return min_pair_rate(s, compute_rates(s, w, al));
}

}  // namespace detail

std::pair<Allocation, double> solve_resource_allocation(const Scenario& s,
                                                        const Placement& w,
                                                        const Allocation& start,
                                                        const AlgoConfig& cfg,
                                                        SolveDiag* diag) {
  const LinkLayout L = layout_of(s);
  const GainTable gt = gain_table(s, w);
  SolveDiag dg;

  // Clip the start strictly inside boxes and budgets; excluded relay links
  // are pinned to zero.
  Allocation cur = start;
  // Power floor sits above the solver's box-clip margin so clipping never
  // moves a floored power and silently re-violates a tight row; repair_flow
  // below absorbs whatever rate the floors add.
  auto floor_links = [](Eigen::VectorXd& a, Eigen::VectorXd& p) {
    for (int i = 0; i < a.size(); ++i) {
      a[i] = std::max(a[i], kAllocFloor);
      p[i] = std::max(p[i], 2e-9);
    }
  };
  floor_links(cur.a_s, cur.p_s);
  floor_links(cur.a_d, cur.p_d);
  floor_links(cur.a_u, cur.p_u);
  for (int m = 0; m < L.M; ++m)
    for (int n = 0; n < L.M; ++n) {
      if (n == m || gt.g_u(m, n) > 0) continue;
      for (int k = 0; k < L.K; ++k) {
        cur.a_u[L.u(m, n, k)] = 0;
        cur.p_u[L.u(m, n, k)] = 0;
      }
    }
  {
    const double shrink = 1.0 - 1e-7;
    const double sum_a = cur.a_s.sum() + cur.a_d.sum() + cur.a_u.sum();
    if (sum_a > shrink) {
      const double f = shrink / sum_a;
      cur.a_s *= f;
      cur.a_d *= f;
      cur.a_u *= f;
    }
    for (int k = 0; k < L.K; ++k) {
      double sum = 0;
      for (int m = 0; m < L.M; ++m) sum += cur.p_s[L.s(k, m)];
      if (sum > shrink * s.source_power_w) {
        const double f = shrink * s.source_power_w / sum;
        for (int m = 0; m < L.M; ++m) cur.p_s[L.s(k, m)] *= f;
      }
    }
    for (int m = 0; m < L.M; ++m) {
      double sum = 0;
      for (int k = 0; k < L.K; ++k) sum += cur.p_d[L.d(m, k)];
      for (int n = 0; n < L.M; ++n)
        if (n != m)
          for (int k = 0; k < L.K; ++k) sum += cur.p_u[L.u(m, n, k)];
      if (sum > shrink * s.uav_power_w) {
        const double f = shrink * s.uav_power_w / sum;
        for (int k = 0; k < L.K; ++k) cur.p_d[L.d(m, k)] *= f;
        for (int n = 0; n < L.M; ++n)
          if (n != m)
            for (int k = 0; k < L.K; ++k) cur.p_u[L.u(m, n, k)] *= f;
      }
    }
  }
  repair_flow(s, w, cur);

  // eta never exceeds the best stream's sum of full-bandwidth rates.
  double eta_ub = 0;
  for (int k = 0; k < L.K; ++k) {
    double sum = 0;
    for (int m = 0; m < L.M; ++m)
      sum += std::log2(1.0 + gt.g_d[L.d(m, k)] * s.uav_power_w);
    eta_ub = std::max(eta_ub, sum);
  }
  eta_ub += 1.0;

  double eta_prev = eval_true_eta(s, w, cur);
  double eta_true = eta_prev;
  Eigen::VectorXd warm;
  bool have_solution = false;

  for (int it = 0; it < kScaCap; ++it) {
    const UpperBounds ub = build_upper_bounds(s, w, cur);

    cvx::Program pr;
    AllocVars v;
    auto add_links = [&pr](std::vector<int>& ids, const Eigen::VectorXd& a_ref,
                           double lo, double hi) {
      ids.resize(a_ref.size());
      for (int i = 0; i < a_ref.size(); ++i)
        ids[i] = (a_ref[i] > 0) ? pr.add_var(lo, hi) : -1;
    };
    add_links(v.a_s, cur.a_s, kBwFloor, 1.0);
    add_links(v.p_s, cur.a_s, 0.0, s.source_power_w);
    add_links(v.a_d, cur.a_d, kBwFloor, 1.0);
    add_links(v.p_d, cur.a_d, 0.0, s.uav_power_w);
    add_links(v.a_u, cur.a_u, kBwFloor, 1.0);
    add_links(v.p_u, cur.a_u, 0.0, s.uav_power_w);
    v.eta = pr.add_var(-1.0, eta_ub);
    pr.objective[v.eta] = 1.0;

    // eta <= sum of destination rates, per stream.
    for (int k = 0; k < L.K; ++k) {
      cvx::Constraint& c = pr.add_ineq();
      c.add_lin(v.eta, 1.0);
      for (int m = 0; m < L.M; ++m) {
        const int id = L.d(m, k);
        if (v.a_d[id] < 0) continue; // closed by the flow repair
        cvx::Term t;
        t.kind = cvx::TermKind::NegPerspectiveLog;
        t.var[0] = v.a_d[id];
        t.var[1] = v.p_d[id];
        t.nvar = 2;
        t.c0 = gt.g_d[id];
        c.add(t);
      }
    }
    // Source and UAV power budgets, total bandwidth.
    for (int k = 0; k < L.K; ++k) {
      cvx::Constraint& c = pr.add_ineq();
      for (int m = 0; m < L.M; ++m) c.add_lin(v.p_s[L.s(k, m)], 1.0);
      c.constant = -s.source_power_w;
    }
    for (int m = 0; m < L.M; ++m) {
      cvx::Constraint& c = pr.add_ineq();
      for (int k = 0; k < L.K; ++k)
        if (v.p_d[L.d(m, k)] >= 0) c.add_lin(v.p_d[L.d(m, k)], 1.0);
      for (int n = 0; n < L.M; ++n)
        if (n != m)
          for (int k = 0; k < L.K; ++k)
            if (v.p_u[L.u(m, n, k)] >= 0) c.add_lin(v.p_u[L.u(m, n, k)], 1.0);
      c.constant = -s.uav_power_w;
    }
    {
      cvx::Constraint& c = pr.add_ineq();
      for (int i : v.a_s) c.add_lin(i, 1.0); // source links are never closed
      for (int i : v.a_d)
        if (i >= 0) c.add_lin(i, 1.0);
      for (int i : v.a_u)
        if (i >= 0) c.add_lin(i, 1.0);
      c.constant = -1.0;
    }
    // Flow: tangent upper bounds on outflow vs exact concave inflow.
    auto add_ub_lin = [](cvx::Constraint& c, const AffineBound& b, int va, int vp) {
      c.add_lin(va, b.coeff[0]);
      c.add_lin(vp, b.coeff[1]);
      c.constant += b.base - b.coeff.dot(b.expansion);
    };
    for (int m = 0; m < L.M; ++m)
      for (int k = 0; k < L.K; ++k) {
        cvx::Constraint& c = pr.add_ineq();
        const int id = L.d(m, k);
        if (v.a_d[id] >= 0) add_ub_lin(c, ub.r_d[id], v.a_d[id], v.p_d[id]);
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(m, n, k);
          if (v.a_u[iu] >= 0) add_ub_lin(c, ub.r_u[iu], v.a_u[iu], v.p_u[iu]);
        }
        const int is = L.s(k, m);
        cvx::Term ts;
        ts.kind = cvx::TermKind::NegPerspectiveLog;
        ts.var[0] = v.a_s[is];
        ts.var[1] = v.p_s[is];
        ts.nvar = 2;
        ts.c0 = gt.g_s[is];
        c.add(ts);
        for (int n = 0; n < L.M; ++n) {
          if (n == m) continue;
          const int iu = L.u(n, m, k);
          if (v.a_u[iu] < 0) continue;
          cvx::Term tu;
          tu.kind = cvx::TermKind::NegPerspectiveLog;
          tu.var[0] = v.a_u[iu];
          tu.var[1] = v.p_u[iu];
          tu.nvar = 2;
          tu.c0 = gt.g_u(n, m);
          c.add(tu);
        }
      }

    warm.resize(pr.n);
    auto pack = [&warm](const std::vector<int>& ids, const Eigen::VectorXd& vals) {
      for (int i = 0; i < vals.size(); ++i)
        if (ids[i] >= 0) warm[ids[i]] = vals[i];
    };
    pack(v.a_s, cur.a_s);
    pack(v.p_s, cur.p_s);
    pack(v.a_d, cur.a_d);
    pack(v.p_d, cur.p_d);
    pack(v.a_u, cur.a_u);
    pack(v.p_u, cur.p_u);
    {
      double eta0 = std::numeric_limits<double>::infinity();
      for (int k = 0; k < L.K; ++k) {
        double sum = 0;
        for (int m = 0; m < L.M; ++m) {
          const int id = L.d(m, k);
          sum += rate_of_gain(cur.a_d[id], cur.p_d[id], gt.g_d[id]);
        }
        eta0 = std::min(eta0, sum);
      }
      warm[v.eta] = eta0 > 0 ? 0.9 * eta0 : -0.5;
    }

    cvx::SolveOptions so;
    so.barrier_t0 = (it == 0 && !have_solution) ? 1.0 : 50.0;
    if (const char* e = std::getenv("XT0")) so.barrier_t0 = (it == 0 && !have_solution) ? 1.0 : atof(e);
    if (const char* e = std::getenv("XMULT")) so.barrier_mult = atof(e);
    if (const char* e = std::getenv("XPATH")) so.stage_tol_path = atof(e);
    if (const char* e = std::getenv("XFINAL")) so.stage_tol = atof(e);
    const cvx::Solution sol = cvx::solve(pr, &warm, so);
    dg.newton_iters += sol.newton_iters;
    if (sol.status == cvx::SolveStatus::Infeasible ||
        (sol.status == cvx::SolveStatus::MaxIters && sol.feas_residual > 1e-6)) {
      dg.solver_ok = false;
      break;
    }
    auto unpack = [&sol](const std::vector<int>& ids, Eigen::VectorXd& vals) {
      for (int i = 0; i < vals.size(); ++i)
        vals[i] = (ids[i] >= 0) ? sol.x[ids[i]] : 0.0;
    };
    unpack(v.a_s, cur.a_s);
    unpack(v.p_s, cur.p_s);
    unpack(v.a_d, cur.a_d);
    unpack(v.p_d, cur.p_d);
    unpack(v.a_u, cur.a_u);
    unpack(v.p_u, cur.p_u);
    have_solution = true;

    eta_true = eval_true_eta(s, w, cur);
    dg.sca_iters = it + 1;
    const bool stalled =
        std::abs(eta_true - eta_prev) <= cfg.sca_tol * std::max(std::abs(eta_true), 1e-12);
    const bool flow_ok =
        max_flow_violation(s, w, cur) <= 1e-6 * std::max(1.0, eta_true);
    eta_prev = eta_true;
    if (it >= 1 && stalled && flow_ok) break;
  }

  dg.max_flow_gap = max_flow_violation(s, w, cur);
  if (diag) *diag = dg;
  return {cur, eta_true};
}

BcdState bcd_phase(const Scenario& s, const Placement& start, const AlgoConfig& cfg,
                   std::vector<BcdTraceRow>* trace) {
  BcdState st;
  st.placement = start;
  auto [al0, eta0] = solve_resource_allocation(s, start, Allocation::equal_split(s), cfg);
  st.alloc = std::move(al0);
  st.eta = eta0;
  if (trace) trace->push_back({0, "alloc", st.eta});

  double eta_round = st.eta;
  for (int round = 1; round <= cfg.max_bcd_iters; ++round) {
    st = solve_horizontal(s, st, cfg);
    if (trace) trace->push_back({round, "horiz", st.eta});

    st = solve_vertical(s, st, cfg);
    if (trace) trace->push_back({round, "vert", st.eta});

    auto [al, ea] = solve_resource_allocation(s, st.placement, st.alloc, cfg);
    st.alloc = std::move(al);
    st.eta = ea;
    st.iterations = round;
    if (trace) trace->push_back({round, "alloc", ea});

    if (std::abs(ea - eta_round) <= cfg.sca_tol * std::max(std::abs(ea), 1e-12)) break;
    eta_round = ea;
  }

  st.alloc.zero_below(kZeroCutoff);
  st.eta = eval_true_eta(s, st.placement, st.alloc);
  return st;
}

}  // namespace uavrelay::sca
