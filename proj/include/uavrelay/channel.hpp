#pragma once

#include <Eigen/Core>

#include "uavrelay/rng.hpp"
#include "uavrelay/scenario.hpp"

namespace uavrelay::channel {

// Geometry of one link. For ground-UAV links alt_b is 0 and alt_a is the UAV
// altitude; horizontal_offset is the horizontal displacement between the two
// endpoints.
struct LinkGeometry {
  Eigen::Vector2d horizontal_offset{0, 0};
  double alt_a = 0;
  double alt_b = 0;

  double distance_sq() const {
    const double dz = alt_a - alt_b;
    return horizontal_offset.squaredNorm() + dz * dz;
  }
  double distance() const;
};

// v = z/d = sin(elevation) for a ground-UAV link (alt_b must be 0).
// Throws ValidationError on zero-length links.
double angle_indicator(const LinkGeometry& g);

// Elevation-dependent Rician factor kappa(theta) = A1 * exp(A2 * theta),
// theta in radians.
double rician_factor(double theta_rad, const ChannelParams& cp);

// First-order Marcum Q function Q_1(a, b). Absolute error <= 1e-10 on
// a, b in [0, 30]; saturates smoothly via a Gaussian asymptotic outside the
// series' comfortable range.
double marcum_q1(double a, double b);

// CDF of the normalized fading power |g|^2 (unit mean) at threshold u:
// F(u) = 1 - Q_1(sqrt(2 kappa), sqrt(2 (kappa+1) u)).
double outage_cdf(double u, double kappa);

// The eps0-quantile of |g|^2: the largest SNR back-off factor phi such that
// P(|g|^2 < phi) <= eps0. Satisfies |outage_cdf(phi, kappa) - eps0| <= 1e-10.
double phi_exact(double kappa, double eps0);

// Logistic surrogate f(v) = C1 + C2 / (1 + exp(-(B1 + B2 v))) approximating
// phi_exact(kappa(arcsin v), eps0) as a function of the angle indicator.
double phi_logistic(double v, const ChannelParams& cp);

struct RateInputs {
  double bandwidth_fraction = 0; // a
  double power_w = 0;            // p
  LinkGeometry geometry;
};

// Outage-aware spectral efficiency of a ground-UAV link, bps/Hz normalized by
// the total bandwidth:
//   R = a log2(1 + p gamma0 f(v) / (d^alpha a)),  0 when a = 0 or p = 0.
double rate_ground_uav(const RateInputs& in, const ChannelParams& cp);

// Same formula with distance and angle supplied directly (d > 0 required).
double rate_from_distance_angle(double a, double p_w, double dist, double v,
                                const ChannelParams& cp);

// LoS UAV-UAV link rate: R = a log2(1 + p gamma0 / (a d^2)) with the full 3D
// distance. Throws ValidationError for coincident endpoints.
double rate_uav_uav(double a, double p_w, const LinkGeometry& g, const ChannelParams& cp);

// Empirical outage probability of transmitting at spectral efficiency `rate`
// over a Rician fading link with factor kappa and mean channel power gain
// `mean_gain` (= beta0 / d^alpha). noise_bw_gap = N0 * B * snr_gap. Draws
// `samples` fading realizations from rng.
double simulate_outage(double rate, double kappa, double mean_gain, double a,
                       double p_w, double noise_bw_gap, int samples, Rng& rng);

}  // namespace uavrelay::channel
