#include "varlab/density.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "varlab/common.hpp"
#include "varlab/flow.hpp"
#include "varlab/rng.hpp"

namespace varlab {

EndpointSamples simulate_endpoints(const VectorFieldSystem& sys,
                                   const Eigen::VectorXd& x0, double hurst,
                                   double eps, std::int64_t n_samples,
                                   std::uint64_t seed,
                                   const EndpointOptions& opts) {
  if (n_samples < 1000)
    throw std::invalid_argument("simulate_endpoints: need N >= 1000");
  const GridSpec spec(opts.grid_m, hurst, sys.driver_dim());
  const FbmSampler sampler(spec, opts.method);
  const int n = sys.state_dim();

  EndpointSamples out;
  out.eps = eps;
  out.samples.resize(n, n_samples);

  std::vector<char> blew(static_cast<std::size_t>(n_samples), 0);
  FlowOptions fopts;
  fopts.substeps = opts.substeps;
  fopts.with_jacobian = false;
  fopts.blowup_norm = opts.blowup_norm;

  parallel_for(static_cast<std::size_t>(n_samples), opts.workers,
               [&](std::size_t i) {
    Drive drive;
    drive.spec = spec;
    drive.scale = eps;
    drive.values.resize(spec.d, spec.m + 1);
    for (int c = 0; c < spec.d; ++c) {
      std::vector<double> path(static_cast<std::size_t>(spec.m + 1));
      sampler.sample_path(seed, static_cast<std::int64_t>(i), c,
                          std::span<double>(path));
      for (int j = 0; j <= spec.m; ++j)
        drive.values(c, j) = path[static_cast<std::size_t>(j)];
    }
    try {
      out.samples.col(static_cast<Eigen::Index>(i)) =
          solve_flow(drive, sys, x0, fopts).terminal();
    } catch (const NumericalError&) {
      out.samples.col(static_cast<Eigen::Index>(i)).setConstant(
          std::numeric_limits<double>::quiet_NaN());
      blew[i] = 1;
    }
  });

  for (char b : blew) out.blowups += b;
  out.n_valid = n_samples - out.blowups;
  if (out.blowups * 1000 > n_samples)
    throw NumericalError("simulate_endpoints: " + std::to_string(out.blowups) +
                         " of " + std::to_string(n_samples) +
                         " paths blew up");
  return out;
}

namespace {

double product_kernel(const Eigen::MatrixXd& samples,
                      const Eigen::VectorXd& y, const Eigen::VectorXd& h,
                      Eigen::Index lo, Eigen::Index hi, std::int64_t* used) {
  const auto n = samples.rows();
  const double norm =
      std::pow(2.0 * std::numbers::pi, -0.5 * static_cast<double>(n)) /
      h.prod();
  double acc = 0.0;
  std::int64_t count = 0;
  for (Eigen::Index i = lo; i < hi; ++i) {
    if (std::isnan(samples(0, i))) continue;
    double expo = 0.0;
    for (Eigen::Index k = 0; k < n; ++k) {
      const double z = (y(k) - samples(k, i)) / h(k);
      expo += z * z;
    }
    acc += std::exp(-0.5 * expo);
    ++count;
  }
  if (used) *used = count;
  return count > 0 ? norm * acc / static_cast<double>(count) : 0.0;
}

}  // namespace

KdeResult kde(const EndpointSamples& samples, const Eigen::VectorXd& y,
              double bandwidth_scale) {
  const auto n = samples.samples.rows();
  const auto total = samples.samples.cols();
  if (samples.n_valid < 1000)
    throw std::invalid_argument("kde: need at least 1000 valid samples");
  if (!(bandwidth_scale > 0.0))
    throw std::invalid_argument("kde: bandwidth scale must be positive");

  KdeResult out;
  // Per-component spread; the eps scaling of the ensemble rides along.
  Eigen::VectorXd mean = Eigen::VectorXd::Zero(n);
  Eigen::VectorXd sq = Eigen::VectorXd::Zero(n);
  for (Eigen::Index i = 0; i < total; ++i) {
    if (std::isnan(samples.samples(0, i))) continue;
    mean += samples.samples.col(i);
    sq += samples.samples.col(i).cwiseProduct(samples.samples.col(i));
  }
  const double nv = static_cast<double>(samples.n_valid);
  mean /= nv;
  Eigen::VectorXd sigma =
      ((sq / nv) - mean.cwiseProduct(mean)).cwiseMax(0.0).cwiseSqrt();

  if (sigma.minCoeff() < 1e-13) {
    out.degenerate = true;
    sigma = sigma.cwiseMax(1e-13);
  }
  const double silverman =
      std::pow(4.0 / ((static_cast<double>(n) + 2.0) * nv),
               1.0 / (static_cast<double>(n) + 4.0));
  out.bandwidth = bandwidth_scale * silverman * sigma;

  out.p_hat = product_kernel(samples.samples, y, out.bandwidth, 0, total,
                             nullptr);
  out.p_half_bw =
      product_kernel(samples.samples, y, (0.5 * out.bandwidth).eval(), 0,
                     total, nullptr);
  out.p_1p5_bw =
      product_kernel(samples.samples, y, (1.5 * out.bandwidth).eval(), 0,
                     total, nullptr);

  // Batch-means standard error over 20 contiguous slices.
  constexpr int kBatches = 20;
  const Eigen::Index batch = total / kBatches;
  double bm = 0.0, bs = 0.0;
  int used_batches = 0;
  for (int b = 0; b < kBatches; ++b) {
    std::int64_t used = 0;
    const double pb =
        product_kernel(samples.samples, y, out.bandwidth, b * batch,
                       b == kBatches - 1 ? total : (b + 1) * batch, &used);
    if (used == 0) continue;
    bm += pb;
    bs += pb * pb;
    ++used_batches;
  }
  if (used_batches > 1) {
    bm /= used_batches;
    const double var =
        std::max(0.0, bs / used_batches - bm * bm) / (used_batches - 1);
    out.stderr_est = std::sqrt(var);
  }
  out.tail_unreliable = out.p_hat < 10.0 * out.stderr_est || out.p_hat <= 0.0;
  return out;
}

DensityReport varadhan_report(const VectorFieldSystem& sys,
                              const Eigen::VectorXd& x0, double hurst,
                              const Eigen::VectorXd& y,
                              const std::vector<double>& eps_grid,
                              std::uint64_t seed, const RateResult& plain,
                              const RateResult& restricted,
                              const VaradhanOptions& opts) {
  for (std::size_t i = 0; i + 1 < eps_grid.size(); ++i)
    if (!(eps_grid[i] > eps_grid[i + 1]))
      throw std::invalid_argument(
          "varadhan_report: eps grid must be strictly decreasing");

  DensityReport report;
  report.y = y;
  report.d2 = plain.d2;
  report.d2_restricted = restricted.d2;
  report.tol =
      opts.tol_factor * std::max(1.0, std::isfinite(restricted.d2)
                                          ? restricted.d2
                                          : 1.0);

  const double n_dim = static_cast<double>(sys.state_dim());
  for (std::size_t e = 0; e < eps_grid.size(); ++e) {
    const double eps = eps_grid[e];
    const std::uint64_t eps_seed =
        detail::mix64(seed ^ (0x64656e73ULL + 0x9e3779b97f4a7c15ULL * e));
    const auto samples = simulate_endpoints(sys, x0, hurst, eps,
                                            opts.n_samples, eps_seed,
                                            opts.endpoint);
    const auto est = kde(samples, y);

    VaradhanRow row;
    row.eps = eps;
    row.p_hat = est.p_hat;
    row.stderr_est = est.stderr_est;
    row.blowups = samples.blowups;
    row.tail_unreliable = est.tail_unreliable || est.degenerate;
    row.p_half_bw = est.p_half_bw;
    row.p_1p5_bw = est.p_1p5_bw;
    if (est.p_hat > 0.0) {
      row.v_hat = eps * eps * std::log(est.p_hat);
      row.v_ci = 1.96 * eps * eps * est.stderr_est / est.p_hat;
      if (std::isfinite(restricted.d2))
        row.corollary_stat = std::log(est.p_hat) +
                             restricted.d2 / (eps * eps) +
                             n_dim * std::log(eps);
    }
    report.rows.push_back(row);
  }

  // Weighted least squares on the reliable rows. The prefactor slope of
  // eps^2 log(1/eps) is pinned to the state dimension (the density
  // carries an eps^{-n} prefactor); the free-slope fit is kept as a
  // diagnostic, since it is barely determined on narrow eps windows.
  std::vector<std::size_t> fit_rows;
  for (std::size_t i = 0; i < report.rows.size(); ++i)
    if (!report.rows[i].tail_unreliable) fit_rows.push_back(i);
  report.fit_points = static_cast<int>(fit_rows.size());

  if (fit_rows.size() < 2) {
    report.no_limit = true;
    if (fit_rows.size() == 1) report.v0 = report.rows[fit_rows[0]].v_hat;
  } else {
    const auto n_fit = static_cast<Eigen::Index>(fit_rows.size());
    Eigen::VectorXd prefactor(n_fit), sq(n_fit), target(n_fit), weight(n_fit);
    for (Eigen::Index r = 0; r < n_fit; ++r) {
      auto& row = report.rows[fit_rows[static_cast<std::size_t>(r)]];
      row.used_in_fit = true;
      prefactor(r) = row.eps * row.eps * std::log(1.0 / row.eps);
      sq(r) = row.eps * row.eps;
      target(r) = row.v_hat;
      const double sd = std::max(row.v_ci / 1.96, 1e-12);
      weight(r) = 1.0 / (sd * sd);
    }

    auto weighted_fit = [&](const Eigen::MatrixXd& design,
                            const Eigen::VectorXd& rhs_target,
                            Eigen::VectorXd& coef, double& v0_ci) {
      const Eigen::MatrixXd normal =
          design.transpose() * weight.asDiagonal() * design;
      const Eigen::VectorXd rhs =
          design.transpose() * (weight.asDiagonal() * rhs_target);
      const Eigen::LDLT<Eigen::MatrixXd> ldlt(normal);
      coef = ldlt.solve(rhs);
      const Eigen::MatrixXd cov = ldlt.solve(Eigen::MatrixXd::Identity(
          design.cols(), design.cols()));
      v0_ci = 1.96 * std::sqrt(std::max(0.0, cov(0, 0)));
    };

    // Pinned model: v - n eps^2 log(1/eps) = v0 + c2 eps^2.
    Eigen::MatrixXd design(n_fit, 2);
    design.col(0).setOnes();
    design.col(1) = sq;
    Eigen::VectorXd coef;
    weighted_fit(design, (target - n_dim * prefactor).eval(), coef,
                 report.v0_ci);
    report.v0 = coef(0);
    report.c2 = coef(1);

    // Free-slope diagnostic (needs 3 points).
    if (n_fit >= 3) {
      Eigen::MatrixXd design3(n_fit, 3);
      design3.col(0).setOnes();
      design3.col(1) = prefactor;
      design3.col(2) = sq;
      Eigen::VectorXd coef3;
      double unused_ci = 0.0;
      weighted_fit(design3, target, coef3, unused_ci);
      report.free_v0 = coef3(0);
      report.free_c = coef3(1);
    }
  }

  if (!report.no_limit) {
    report.upper_ok = report.v0 <= -report.d2 + report.tol;
    report.lower_ok =
        !std::isfinite(report.d2_restricted) ||
        report.v0 >= -report.d2_restricted - report.tol;
  }

  // Corollary probe: the compensated log-density should not collapse as
  // eps decreases.
  double c_first = 0.0, c_min = 0.0;
  bool have = false;
  for (const auto& row : report.rows) {
    if (row.tail_unreliable || row.p_hat <= 0.0) continue;
    if (!have) {
      c_first = row.corollary_stat;
      c_min = row.corollary_stat;
      have = true;
    }
    c_min = std::min(c_min, row.corollary_stat);
  }
  if (have) {
    report.corollary_margin = c_min - c_first;
    report.corollary_bounded = report.corollary_margin > -10.0;
  }
  return report;
}

}  // namespace varlab
