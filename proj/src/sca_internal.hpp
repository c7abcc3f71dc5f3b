#pragma once

#include <cmath>

#include "uavrelay/scenario.hpp"
#include "uavrelay/sca.hpp"

// Shared pieces of the SCA subproblem builders. Placement programs are posed
// in units of kScale meters: squared distances near 1e4 m^2 otherwise mix
// with O(1) bandwidth terms and wreck the Newton system's conditioning.
namespace uavrelay::sca::detail {

constexpr double kScale = 100.0;    // meters per scaled position unit
constexpr double kScale2 = kScale * kScale;
constexpr double kBwFloor = 1e-9;   // lower box bound on bandwidth shares
constexpr double kAllocFloor = 1e-8;  // expansion-point floor for a
constexpr double kPowFloor = 1e-10;   // expansion-point floor for p
constexpr double kZeroCutoff = 1e-8;  // final zeroing threshold on a
constexpr int kScaCap = 30;           // inner SCA iteration cap
constexpr double kCoincident = 1e-12; // squared distance treated as zero

// Flow slack repair_flow enforces: out <= in * (1 - kFlowMargin) - kFlowAbs.
// The relative part must dominate the inflow-bound loss the placement
// solvers' warm starts incur from their angle-variable shrink (<= ~2.5x the
// shrink), or the warm point lands outside the surrogate feasible set and
// phase-I has to run on a program whose interior is only margin-wide. The
// absolute part keeps the warm slack of every surviving flow row off the
// denormal range the barrier cannot condition, and makes streams with
// near-zero inflow lose their outflow links outright.
constexpr double kFlowMargin = 2e-8;
constexpr double kFlowAbs = 1e-9;

inline LinkLayout layout_of(const Scenario& s) {
  return LinkLayout{s.num_pairs(), s.num_uavs};
}

// Tangent of (z+1)^2/(4v) at (zh, vh), a joint lower bound by convexity on
// v > 0 (and z > -1, which altitudes always satisfy). Valid for any consistent
// unit of z since the identity behind it is unit-free.
struct SlantTangent {
  double base;    // (zh+1)^2 / (4 vh)
  double dz;      // (zh+1) / (2 vh)
  double dv;      // -(zh+1)^2 / (4 vh^2)
};

inline SlantTangent slant_tangent(double zh, double vh) {
  const double zp = zh + 1.0;
  return {zp * zp / (4.0 * vh), zp / (2.0 * vh), -zp * zp / (4.0 * vh * vh)};
}

// Ground-link geometry snapshot: squared horizontal offset, squared 3D
// distance and the angle indicator v = z/d.
struct GroundGeom {
  double hsq;
  double d3sq;
  double v;
};

inline GroundGeom ground_geom(const Placement& w, int m, const Eigen::Vector2d& node) {
  GroundGeom g;
  g.hsq = (w.q.col(m) - node).squaredNorm();
  const double z = w.z[m];
  g.d3sq = g.hsq + z * z;
  g.v = z / std::sqrt(g.d3sq);
  return g;
}

// Restores per-stream flow feasibility at placement `w` by shrinking only the
// outflow bandwidth shares (never powers, never the source side), the minimal
// intervention after a placement move. Shares that would shrink below the
// allocation floor are closed (share and power zeroed). Leaves every stream a
// slack of `margin` relative plus kFlowAbs absolute. Returns the resulting
// min-pair rate.
double repair_flow(const Scenario& s, const Placement& w, Allocation& al,
                   double margin = kFlowMargin);

// Largest positive outflow excess over all streams (0 when flow-feasible).
double max_flow_violation(const Scenario& s, const Placement& w, const Allocation& al);

}  // namespace uavrelay::sca::detail
