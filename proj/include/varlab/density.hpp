#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <vector>

#include "varlab/ensemble.hpp"
#include "varlab/fields.hpp"
#include "varlab/rate.hpp"

namespace varlab {

struct EndpointOptions {
  int grid_m = 64;
  int substeps = 1;
  SampleMethod method = SampleMethod::cholesky;
  int workers = 1;
  double blowup_norm = 1e8;
};

struct EndpointSamples {
  double eps = 1.0;
  Eigen::MatrixXd samples;     // n x N, blown-up paths hold NaN columns
  std::int64_t n_valid = 0;
  std::int64_t blowups = 0;
};

/// i.i.d. terminal states of the small-noise flow, deterministic under
/// (seed, N) for any worker count. Aborts if more than 0.1% of the paths
/// blow up.
EndpointSamples simulate_endpoints(const VectorFieldSystem& sys,
                                   const Eigen::VectorXd& x0, double hurst,
                                   double eps, std::int64_t n_samples,
                                   std::uint64_t seed,
                                   const EndpointOptions& opts = {});

struct KdeResult {
  double p_hat = 0.0;
  double stderr_est = 0.0;     // batch means, 20 batches
  Eigen::VectorXd bandwidth;
  double p_half_bw = 0.0;      // estimate at 0.5x bandwidth
  double p_1p5_bw = 0.0;       // estimate at 1.5x bandwidth
  bool tail_unreliable = false;  // p_hat below 10 standard errors
  bool degenerate = false;       // vanishing sample spread
};

/// Product-Gaussian kernel density estimate at y. Bandwidths follow
/// Silverman's rule on the per-component sample spread (which carries the
/// eps scaling of the ensemble).
KdeResult kde(const EndpointSamples& samples, const Eigen::VectorXd& y,
              double bandwidth_scale = 1.0);

struct VaradhanRow {
  double eps = 0.0;
  double p_hat = 0.0;
  double stderr_est = 0.0;
  double v_hat = 0.0;   // eps^2 log p_hat
  double v_ci = 0.0;    // 95% half-width via the delta method
  double p_half_bw = 0.0;
  double p_1p5_bw = 0.0;
  std::int64_t blowups = 0;
  bool tail_unreliable = false;
  bool used_in_fit = false;
  double corollary_stat = 0.0;  // log p_hat + d2R/eps^2 + n log eps
};

struct DensityReport {
  Eigen::VectorXd y;
  std::vector<VaradhanRow> rows;
  double d2 = 0.0;
  double d2_restricted = 0.0;
  /// Extrapolation v(eps) = v0 + c eps^2 log(1/eps) + c2 eps^2 with the
  /// prefactor slope pinned to c = n (the eps^{-n} density prefactor).
  double v0 = 0.0;
  double v0_ci = 0.0;       // 95% half-width from the weighted fit
  double c2 = 0.0;
  /// Secondary diagnostic: the same fit with c free.
  double free_v0 = 0.0;
  double free_c = 0.0;
  int fit_points = 0;
  bool no_limit = false;    // not enough reliable points to extrapolate
  double tol = 0.0;         // 0.15 max(1, d2R)
  bool upper_ok = false;    // v0 <= -d2 + tol
  bool lower_ok = false;    // v0 >= -d2R - tol
  double corollary_margin = 0.0;  // min over grid minus value at largest eps
  bool corollary_bounded = false;
};

struct VaradhanOptions {
  EndpointOptions endpoint;
  std::int64_t n_samples = 200000;
  double tol_factor = 0.15;
};

/// Monte Carlo check of the small-noise density asymptotics at y against
/// the rate results. Tail-unreliable eps values are excluded from the
/// extrapolation fit.
DensityReport varadhan_report(const VectorFieldSystem& sys,
                              const Eigen::VectorXd& x0, double hurst,
                              const Eigen::VectorXd& y,
                              const std::vector<double>& eps_grid,
                              std::uint64_t seed, const RateResult& plain,
                              const RateResult& restricted,
                              const VaradhanOptions& opts = {});

}  // namespace varlab
