#include "uavrelay/channel.hpp"

#include <cmath>

namespace uavrelay::channel {

double LinkGeometry::distance() const { return std::sqrt(distance_sq()); }

double angle_indicator(const LinkGeometry& g) {
  if (g.alt_b != 0.0)
    throw ValidationError("angle indicator is defined for ground-UAV links only");
  const double d = g.distance();
  if (d <= 0.0) throw ValidationError("zero-length link has no elevation angle");
  return g.alt_a / d;
}

double rician_factor(double theta_rad, const ChannelParams& cp) {
  return cp.a1 * std::exp(cp.a2 * theta_rad);
}

double marcum_q1(double a, double b) {
  if (b <= 0.0) return 1.0;
  if (a <= 0.0) return std::exp(-0.5 * b * b);
  const double s = 0.5 * a * a; // Poisson mean of the LoS mixture index
  const double y = 0.5 * b * b; // gamma-tail argument
  if (s > 600.0 || y > 600.0) {
    // Gaussian asymptotic; only reached far outside the accuracy domain.
    return 0.5 * std::erfc((b - a) / std::sqrt(2.0));
  }
  // Q1(a,b) = sum_j Pois(j; s) * P(Gamma(j+1) > y), with the gamma tail
  // accumulated incrementally: P(Gamma(j+1) > y) = e^{-y} sum_{i<=j} y^i/i!.
  // Truncation error is bounded by the remaining Poisson mass (tail <= 1).
  double q = 0.0, cum = 0.0;
  double pois = std::exp(-s);
  double gterm = std::exp(-y);
  double gsum = gterm;
  for (int j = 0; j < 100000; ++j) {
    q += pois * gsum;
    cum += pois;
    if (1.0 - cum < 1e-15) break;
    pois *= s / (j + 1);
    gterm *= y / (j + 1);
    gsum += gterm;
  }
  return q < 1.0 ? q : 1.0;
}

double outage_cdf(double u, double kappa) {
  if (u <= 0.0) return 0.0;
  return 1.0 - marcum_q1(std::sqrt(2.0 * kappa), std::sqrt(2.0 * (kappa + 1.0) * u));
}

double phi_exact(double kappa, double eps0) {
  if (eps0 <= 0.0 || eps0 >= 1.0)
    throw ValidationError("outage target must lie strictly in (0, 1)");
  double lo = 0.0, hi = 1.0;
  while (outage_cdf(hi, kappa) < eps0) {
    hi *= 2.0;
    if (hi > 1e12) return hi; // unreachable for valid kappa
  }
  for (int it = 0; it < 200; ++it) {
    const double mid = 0.5 * (lo + hi);
    if (outage_cdf(mid, kappa) < eps0)
      lo = mid;
    else
      hi = mid;
    if (hi - lo <= 1e-15 * (1.0 + hi)) break;
  }
  return 0.5 * (lo + hi);
}

double phi_logistic(double v, const ChannelParams& cp) {
  return cp.c1 + cp.c2 / (1.0 + std::exp(-(cp.b1 + cp.b2 * v)));
}

double rate_from_distance_angle(double a, double p_w, double dist, double v,
                                const ChannelParams& cp) {
  if (a <= 0.0 || p_w <= 0.0) return 0.0;
  if (dist <= 0.0) throw ValidationError("zero-length link has no path loss");
  const double snr = p_w * cp.gamma0 * phi_logistic(v, cp) / (std::pow(dist, cp.alpha) * a);
  return a * std::log2(1.0 + snr);
}

double rate_ground_uav(const RateInputs& in, const ChannelParams& cp) {
  if (in.bandwidth_fraction <= 0.0 || in.power_w <= 0.0) return 0.0;
  return rate_from_distance_angle(in.bandwidth_fraction, in.power_w,
                                  in.geometry.distance(), angle_indicator(in.geometry), cp);
}

double rate_uav_uav(double a, double p_w, const LinkGeometry& g, const ChannelParams& cp) {
  if (a <= 0.0 || p_w <= 0.0) return 0.0;
  const double d2 = g.distance_sq();
  if (d2 <= 0.0) throw ValidationError("coincident UAV positions have no channel");
  return a * std::log2(1.0 + p_w * cp.gamma0 / (a * d2));
}

double simulate_outage(double rate, double kappa, double mean_gain, double a,
                       double p_w, double noise_bw_gap, int samples, Rng& rng) {
  if (rate <= 0.0) return 0.0;
  if (a <= 0.0 || p_w <= 0.0) return 1.0;
  // Outage <=> |g|^2 below the threshold that makes capacity equal `rate`.
  const double thresh =
      (std::exp2(rate / a) - 1.0) * a * noise_bw_gap / (mean_gain * p_w);
  const double mu = std::sqrt(kappa / (kappa + 1.0));      // LoS amplitude
  const double sigma = std::sqrt(0.5 / (kappa + 1.0));      // per-component scatter
  int outages = 0;
  for (int i = 0; i < samples; ++i) {
    const double re = mu + sigma * rng.next_gaussian();
    const double im = sigma * rng.next_gaussian();
    if (re * re + im * im < thresh) ++outages;
  }
  return static_cast<double>(outages) / samples;
}

}  // namespace uavrelay::channel
