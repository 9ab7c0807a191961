#pragma once

#include <stdexcept>
#include <string>

namespace varlab {

// Hurst exponents are kept away from the endpoints of (1/4, 1);
// covariance matrices become numerically degenerate at the edges.
inline constexpr double kHurstMin = 0.25 + 1e-6;
inline constexpr double kHurstMax = 1.0 - 1e-6;

/// Uniform grid t_j = j/m on [0,1] carrying the Hurst exponent and the
/// driver dimension. Everything downstream (Gram forms, ensembles,
/// drives) is built on one of these.
struct GridSpec {
  int m = 2;        // number of steps; nodes are j/m, j = 0..m
  double hurst = 0.5;
  int d = 1;        // driver dimension

  GridSpec() = default;
  GridSpec(int m_, double hurst_, int d_) : m(m_), hurst(hurst_), d(d_) {
    validate();
  }

  void validate() const {
    if (m < 2) throw std::domain_error("GridSpec: m must be >= 2");
    if (d < 1) throw std::domain_error("GridSpec: d must be >= 1");
    if (hurst < kHurstMin || hurst > kHurstMax)
      throw std::domain_error("GridSpec: Hurst exponent outside (" +
                              std::to_string(kHurstMin) + ", " +
                              std::to_string(kHurstMax) + ")");
  }

  double t(int j) const { return static_cast<double>(j) / m; }
  double dt() const { return 1.0 / m; }
  int nodes() const { return m + 1; }

  bool operator==(const GridSpec& o) const {
    return m == o.m && hurst == o.hurst && d == o.d;
  }
};

}  // namespace varlab
