#pragma once

#include <Eigen/Core>
#include <string>
#include <vector>

#include "uavrelay/channel.hpp"
#include "uavrelay/scenario.hpp"

namespace uavrelay::sca {

// Relay positions: q column m is the horizontal position of UAV m, z[m] its
// altitude.
struct Placement {
  Eigen::Matrix2Xd q;
  Eigen::VectorXd z;
  int count() const { return static_cast<int>(q.cols()); }
};

// Index maps for the three link families. Source links are indexed (k, m)
// (source k to UAV m), destination links (m, k), relay links (m, n, k) over
// ordered pairs m != n.
struct LinkLayout {
  int K = 0, M = 0;
  int n_s() const { return K * M; }
  int n_d() const { return M * K; }
  int n_u() const { return M * (M - 1) * K; }
  int s(int k, int m) const { return k * M + m; }
  int d(int m, int k) const { return m * K + k; }
  int u(int m, int n, int k) const {
    const int pair = m * (M - 1) + (n < m ? n : n - 1);
    return pair * K + k;
  }
};

// Bandwidth fractions and transmit powers per link, in the LinkLayout order.
struct Allocation {
  Eigen::VectorXd a_s, p_s;
  Eigen::VectorXd a_d, p_d;
  Eigen::VectorXd a_u, p_u;

  // Uniform bandwidth over all links; powers uniform within each budget.
  static Allocation equal_split(const Scenario& s);
  // Sets links with bandwidth below `cutoff` exactly to zero (both a and p).
  void zero_below(double cutoff);
};

struct LinkRates {
  Eigen::VectorXd r_s, r_d, r_u;
};

LinkRates compute_rates(const Scenario& s, const Placement& w, const Allocation& al);

// Objective: min over pairs of the summed destination-link rates.
double min_pair_rate(const Scenario& s, const LinkRates& r);

// inflow - outflow per (m, k); nonnegative entries mean slack inflow.
Eigen::MatrixXd flow_residuals(const Scenario& s, const LinkRates& r);

// First-order bound of a nonlinear link-rate or distance expression around an
// expansion point, in the listed surrogate variables.
struct AffineBound {
  enum class Sense { Upper, Lower };
  Sense sense = Sense::Lower;
  double base = 0;              // exact function value at the expansion
  Eigen::VectorXd coeff;        // partial derivatives at the expansion
  Eigen::VectorXd expansion;

  double eval(const Eigen::VectorXd& vals) const {
    return base + coeff.dot(vals - expansion);
  }
};

// Tangent upper bounds of the concave rate functions in (a, p), used by the
// resource-allocation subproblem's flow constraints.
struct UpperBounds {
  std::vector<AffineBound> r_d; // per (m, k)
  std::vector<AffineBound> r_u; // per (m, n, k)
};
UpperBounds build_upper_bounds(const Scenario& s, const Placement& w, const Allocation& hat);

// Tangent lower bounds used by the horizontal-placement subproblem. Each
// family linearizes a link expression in the variables that make it convex:
//   r_d:    destination rate in (squared distance, logistic denominator)
//   rate_s: source rate in (exp(-(B1+B2 v)), squared horizontal distance)
//   rate_u: relay rate in squared horizontal distance
//   ell_u:  squared 3D relay separation in (qm - qn)
//   ell_s/ell_d: slant expression (z+1)^2/(4v) in v
struct HorizontalBounds {
  std::vector<AffineBound> r_d;    // per (m, k), vars (dsq, dv)
  std::vector<AffineBound> rate_s; // per (k, m), vars (w, hsq)
  std::vector<AffineBound> rate_u; // per (m, n, k), vars (hsq_mn)
  std::vector<AffineBound> ell_u;  // per (m, n, k), vars (dqx, dqy)
  std::vector<AffineBound> ell_s;  // per (k, m), vars (v)
  std::vector<AffineBound> ell_d;  // per (m, k), vars (v)
};
HorizontalBounds build_lower_bounds_horizontal(const Scenario& s, const Placement& w,
                                               const Allocation& al);

// Vertical counterparts: the same expressions linearized in the altitude
// variables (z^2, (zm - zn)^2, or jointly (z, v)).
struct VerticalBounds {
  std::vector<AffineBound> r_d;    // per (m, k), vars (dsq, dv)
  std::vector<AffineBound> rate_s; // per (k, m), vars (w, zsq)
  std::vector<AffineBound> rate_u; // per (m, n, k), vars (dzsq)
  std::vector<AffineBound> ell_u;  // per (m, n, k), vars (dz)
  std::vector<AffineBound> ell_s;  // per (k, m), vars (z, v)
  std::vector<AffineBound> ell_d;  // per (m, k), vars (z, v)
};
VerticalBounds build_lower_bounds_vertical(const Scenario& s, const Placement& w,
                                           const Allocation& al);

// Exact expressions the bounds linearize; shared by the solvers and the
// bound-domination tests.
namespace expr {
// a log2(1 + (p gamma0 / a) (C1 + C2/Y) / X^(alpha/2))
double rate_d_surrogate(double a, double p, const ChannelParams& cp, double X, double Y);
// a log2(1 + (p gamma0 / a) (C1 + C2/(1+w)) / (zsq + hsq)^(alpha/2))
double rate_s_surrogate(double a, double p, const ChannelParams& cp, double zsq,
                        double w, double hsq);
// a log2(1 + p gamma0 / (a (hsq + dzsq)))
double rate_u_surrogate(double a, double p, const ChannelParams& cp, double hsq,
                        double dzsq);
// (z + 1)^2 / (4 v)
double ell_slant(double z, double v);
}  // namespace expr

struct BcdState {
  Placement placement;
  Allocation alloc;
  double eta = 0;
  int iterations = 0;
};

struct SolveDiag {
  bool solver_ok = true;
  int sca_iters = 0;
  int newton_iters = 0;          // summed over all inner solves
  double max_flow_gap = 0;       // max |inflow - outflow| at the result
  double max_surrogate_gap = 0;  // placement solves: relative surrogate slack
};

// Bandwidth/power allocation at fixed placement, SCA over tangent
// upper bounds of the flow constraint. Returns the allocation and the
// recomputed true objective.
std::pair<Allocation, double> solve_resource_allocation(const Scenario& s,
                                                        const Placement& w,
                                                        const Allocation& start,
                                                        const AlgoConfig& cfg,
                                                        SolveDiag* diag = nullptr);

// Horizontal positions at fixed altitudes, SCA over the tangent bounds in
// scaled position variables. A solver step is accepted only if, after a
// minimal outflow-share shrink restoring true flow feasibility at the moved
// positions, the true objective does not decrease; the returned state carries
// the moved positions, that adjusted allocation and the true objective, so
// the across-substep objective sequence is non-decreasing by construction.
BcdState solve_horizontal(const Scenario& s, const BcdState& st, const AlgoConfig& cfg,
                          SolveDiag* diag = nullptr);

// Altitudes at fixed horizontal positions, same contract as solve_horizontal.
BcdState solve_vertical(const Scenario& s, const BcdState& st, const AlgoConfig& cfg,
                        SolveDiag* diag = nullptr);

struct BcdTraceRow {
  int round;
  std::string substep; // "alloc" | "horiz" | "vert"
  double eta;
};

// Block-coordinate descent: allocation, horizontal, vertical, repeated until
// the objective stalls (relative change <= cfg.sca_tol) or cfg.max_bcd_iters
// rounds. Ends with an allocation solve so flow conservation is tight; the
// returned allocation has sub-threshold links zeroed.
BcdState bcd_phase(const Scenario& s, const Placement& start, const AlgoConfig& cfg,
                   std::vector<BcdTraceRow>* trace = nullptr);

}  // namespace uavrelay::sca
