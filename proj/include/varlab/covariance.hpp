#pragma once

#include <cmath>
#include <stdexcept>

#include "varlab/grid.hpp"

namespace varlab {

/// Covariance R(s,t) = (s^{2H} + t^{2H} - |t-s|^{2H}) / 2 of fractional
/// Brownian motion on [0,1], evaluated per component.
inline double fbm_covariance(double s, double t, double hurst) {
  if (!(s >= 0.0 && s <= 1.0 && t >= 0.0 && t <= 1.0))
    throw std::domain_error("fbm_covariance: times must lie in [0,1]");
  if (!(hurst > 0.25 && hurst < 1.0))
    throw std::domain_error("fbm_covariance: H must lie in (1/4,1)");
  const double two_h = 2.0 * hurst;
  return 0.5 * (std::pow(s, two_h) + std::pow(t, two_h) -
                std::pow(std::fabs(t - s), two_h));
}

/// Rectangular increment E[(B_t - B_s)(B_v - B_u)] =
/// R(t,v) - R(t,u) - R(s,v) + R(s,u), for s <= t and u <= v.
inline double rect_increment(double s, double t, double u, double v,
                             double hurst) {
  if (!(s <= t) || !(u <= v))
    throw std::domain_error("rect_increment: endpoints out of order");
  return fbm_covariance(t, v, hurst) - fbm_covariance(t, u, hurst) -
         fbm_covariance(s, v, hurst) + fbm_covariance(s, u, hurst);
}

/// Autocovariance of the stationary increment sequence (fractional
/// Gaussian noise) on a uniform grid with step dt: E[dB_1 dB_{1+k}].
inline double fgn_autocovariance(int lag, double dt, double hurst) {
  const double two_h = 2.0 * hurst;
  const double k = static_cast<double>(std::abs(lag));
  return 0.5 * std::pow(dt, two_h) *
         (std::pow(k + 1.0, two_h) + std::pow(std::fabs(k - 1.0), two_h) -
          2.0 * std::pow(k, two_h));
}

}  // namespace varlab
