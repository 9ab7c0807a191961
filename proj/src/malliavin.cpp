#include "varlab/malliavin.hpp"

#include <Eigen/Eigenvalues>
#include <Eigen/SVD>

#include <algorithm>
#include <cmath>

#include "varlab/common.hpp"
#include "varlab/covariance.hpp"

namespace varlab {

MalliavinRows malliavin_rows(const Trajectory& traj,
                             const VectorFieldSystem& sys, double eps) {
  if (!traj.with_jacobian)
    throw std::invalid_argument("malliavin_rows: trajectory lacks Jacobians");
  const int n = sys.state_dim();
  const int d = sys.driver_dim();
  const int m = traj.spec.m;

  MalliavinRows out;
  out.spec = traj.spec;
  out.eps = eps;
  out.rows.assign(static_cast<std::size_t>(d), Eigen::MatrixXd(n, m + 1));
  const Eigen::MatrixXd& j_end = traj.jac.back();
  for (int j = 0; j <= m; ++j) {
    const int node = traj.node_of_coarse(j);
    const Eigen::MatrixXd j1_jinv = j_end * traj.jac_inv[static_cast<std::size_t>(node)];
    for (int k = 0; k < d; ++k)
      out.rows[static_cast<std::size_t>(k)].col(j) =
          eps * j1_jinv * sys.field(k, traj.states.col(node));
  }
  return out;
}

MalliavinMatrix malliavin_matrix(const MalliavinRows& rows,
                                 const GramForm& gram) {
  if (!(rows.spec == gram.spec))
    throw std::invalid_argument("malliavin_matrix: grid mismatch");
  const int n = static_cast<int>(rows.rows.front().rows());
  const int m = rows.spec.m;
  const int d = rows.spec.d;

  MalliavinMatrix out;
  out.eps = rows.eps;
  out.gamma = Eigen::MatrixXd::Zero(n, n);
  // Left-endpoint step coefficients: step j carries the value at t_{j-1}.
  for (int k = 0; k < d; ++k) {
    const Eigen::MatrixXd steps =
        rows.rows[static_cast<std::size_t>(k)].leftCols(m);  // n x m
    out.gamma += steps * gram.Q * steps.transpose();
  }
  out.gamma = 0.5 * (out.gamma + out.gamma.transpose()).eval();

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.gamma,
                                                     Eigen::EigenvaluesOnly);
  const double lam = eig.eigenvalues().minCoeff();
  if (lam < -1e-10)
    throw NumericalError("malliavin_matrix: eigenvalue " + std::to_string(lam) +
                         " below the PSD tolerance");
  out.min_eigenvalue = std::max(lam, 0.0);
  return out;
}

Eigen::VectorXd pointwise_eigen_series(const MalliavinRows& rows) {
  const int n = static_cast<int>(rows.rows.front().rows());
  const int m = rows.spec.m;
  Eigen::VectorXd series(m + 1);
  for (int j = 0; j <= m; ++j) {
    Eigen::MatrixXd acc = Eigen::MatrixXd::Zero(n, n);
    for (const auto& row : rows.rows)
      acc += row.col(j) * row.col(j).transpose();
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(acc,
                                                       Eigen::EigenvaluesOnly);
    series(j) = eig.eigenvalues().minCoeff();
  }
  return series;
}

Eigen::MatrixXd gamma_kernel_quadrature(const MalliavinRows& rows) {
  const double hurst = rows.spec.hurst;
  if (!(hurst > 0.5))
    throw std::domain_error(
        "gamma_kernel_quadrature: the kernel route needs H > 1/2");

  const int n = static_cast<int>(rows.rows.front().rows());
  const int m = rows.spec.m;
  const double dt = rows.spec.dt();
  const double two_h = 2.0 * hurst;

  // Mass over a cell pair with gap g: integrate the kernel through the
  // difference variable w = u - v, whose overlap density is triangular.
  // Twice-integrated kernel: F(w) = |w|^{2H} / 2 (so that F'' = kernel).
  const auto f2 = [&](double w) { return 0.5 * std::pow(std::fabs(w), two_h); };
  Eigen::MatrixXd mass(m, m);
  for (int a = 0; a < m; ++a)
    for (int b = 0; b <= a; ++b) {
      const double g = dt * (a - b);
      const double w =
          f2(g + dt) - 2.0 * f2(g) + f2(std::fabs(g - dt));
      mass(a, b) = w;
      mass(b, a) = w;
    }

  Eigen::MatrixXd gamma = Eigen::MatrixXd::Zero(n, n);
  for (const auto& row : rows.rows) {
    const Eigen::MatrixXd steps = row.leftCols(m);
    gamma += steps * mass * steps.transpose();
  }
  return 0.5 * (gamma + gamma.transpose());
}

ScalingReport inv_gamma_scaling(const VectorFieldSystem& sys,
                                const Eigen::VectorXd& x0, double hurst,
                                const std::vector<double>& eps_grid,
                                std::int64_t n_samples, std::uint64_t seed,
                                const ScalingOptions& opts) {
  if (n_samples < 100)
    throw std::invalid_argument("inv_gamma_scaling: need N >= 100");
  for (double e : eps_grid)
    if (!(e > 0.0 && e <= 1.0))
      throw std::domain_error("inv_gamma_scaling: eps must lie in (0,1]");

  const GridSpec spec(opts.grid_m, hurst, sys.driver_dim());
  const FbmSampler sampler(spec, opts.method);
  const GramForm gram = gram_matrix(spec);
  const std::size_t n_eps = eps_grid.size();

  std::vector<std::vector<double>> inv_lambda(
      n_eps, std::vector<double>(static_cast<std::size_t>(n_samples), 0.0));

  FlowOptions fopts;
  fopts.substeps = opts.substeps;

  parallel_for(static_cast<std::size_t>(n_samples), opts.workers,
               [&](std::size_t i) {
    Drive drive;
    drive.spec = spec;
    drive.values.resize(spec.d, spec.m + 1);
    for (int c = 0; c < spec.d; ++c) {
      std::vector<double> path(static_cast<std::size_t>(spec.m + 1));
      sampler.sample_path(seed, static_cast<std::int64_t>(i), c,
                          std::span<double>(path));
      for (int j = 0; j <= spec.m; ++j) drive.values(c, j) = path[static_cast<std::size_t>(j)];
    }
    // Common paths across the eps grid.
    for (std::size_t e = 0; e < n_eps; ++e) {
      drive.scale = eps_grid[e];
      const Trajectory traj = solve_flow(drive, sys, x0, fopts);
      const auto rows = malliavin_rows(traj, sys, eps_grid[e]);
      const auto gamma = malliavin_matrix(rows, gram);
      inv_lambda[e][i] = 1.0 / std::max(gamma.min_eigenvalue, 1e-300);
    }
  });

  ScalingReport report;
  report.eps_grid = eps_grid;
  auto quantile = [](std::vector<double>& v, double q) {
    const auto idx = static_cast<std::size_t>(
        q * static_cast<double>(v.size() - 1) + 0.5);
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(idx),
                     v.end());
    return v[idx];
  };
  for (std::size_t e = 0; e < n_eps; ++e) {
    for (double v : inv_lambda[e])
      if (v > 1e14) report.degenerate_warning = true;
    std::array<double, 3> qs{};
    qs[0] = quantile(inv_lambda[e], 0.5);
    qs[1] = quantile(inv_lambda[e], 0.9);
    qs[2] = quantile(inv_lambda[e], 0.99);
    report.quantiles.push_back(qs);
  }

  // Least-squares slope of log median against log eps.
  const auto n_pts = static_cast<double>(n_eps);
  double sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (std::size_t e = 0; e < n_eps; ++e) {
    const double x = std::log(eps_grid[e]);
    const double y = std::log(report.quantiles[e][0]);
    sx += x;
    sy += y;
    sxx += x * x;
    sxy += x * y;
  }
  const double denom = n_pts * sxx - sx * sx;
  report.slope = (n_pts * sxy - sx * sy) / denom;
  double ss_res = 0.0;
  const double intercept = (sy - report.slope * sx) / n_pts;
  for (std::size_t e = 0; e < n_eps; ++e) {
    const double x = std::log(eps_grid[e]);
    const double y = std::log(report.quantiles[e][0]);
    const double r = y - (intercept + report.slope * x);
    ss_res += r * r;
  }
  if (n_eps > 2)
    report.slope_stderr =
        std::sqrt(ss_res / (n_pts - 2.0) / (sxx - sx * sx / n_pts));
  return report;
}

BetaState beta_system(const Trajectory& traj, const BracketTable& table,
                      double eps, double omega_tol) {
  const int level = table.level();
  const int n_words = table.n_words();
  const int m = traj.spec.m;
  const int d = traj.spec.d;
  const double dt_coarse = traj.spec.dt();
  const double h = dt_coarse / traj.substeps;

  BetaState state;
  state.spec = traj.spec;
  state.eps = eps;
  state.level = level;
  state.words = table.words();
  state.beta.reserve(static_cast<std::size_t>(m + 1));

  Eigen::MatrixXd beta = Eigen::MatrixXd::Identity(n_words, n_words);
  state.beta.push_back(beta);

  Eigen::MatrixXd a(n_words, n_words);
  for (int j = 0; j < m; ++j) {
    const Eigen::VectorXd slope =
        (traj.drive.values.col(j + 1) - traj.drive.values.col(j)) / dt_coarse;
    for (int s = 0; s < traj.substeps; ++s) {
      const int node = j * traj.substeps + s;
      const Eigen::VectorXd x = traj.states.col(node);
      const OmegaWorkspace ws(table, x);

      // a(I,K) = -sum_j slope_j * eps^{|I*j|-|K|} omega^K_{I*j}(x).
      // Expansions are restricted to words no longer than the extension,
      // so every rescale power is >= 0 and the system stays bounded as
      // eps goes to zero.
      a.setZero();
      for (int wi = 0; wi < n_words; ++wi) {
        const Word& word = state.words[static_cast<std::size_t>(wi)];
        for (int drv = 0; drv < d; ++drv) {
          if (slope(drv) == 0.0) continue;
          const Word extended = word.append(drv);
          const int cap = std::min(extended.length(), level);
          double residual = 0.0;
          const Eigen::VectorXd omega =
              ws.solve_restricted(extended, cap, omega_tol, &residual);
          if (residual > omega_tol)
            throw NumericalError(
                "beta_system: omega residual " + std::to_string(residual) +
                " for word " + extended.str() + " at t=" +
                std::to_string(traj.times(node)));
          for (int k = 0; k < n_words; ++k) {
            if (omega(k) == 0.0) continue;
            const int power =
                extended.length() - state.words[static_cast<std::size_t>(k)].length();
            a(wi, k) -= slope(drv) * std::pow(eps, power) * omega(k);
          }
        }
      }

      // Frozen-coefficient 4th-order step: beta <- expm4(h a) beta.
      Eigen::MatrixXd term = h * (a * beta);
      Eigen::MatrixXd next = beta + term;
      for (int order = 2; order <= 4; ++order) {
        term = (h / order) * (a * term);
        next += term;
      }
      beta = std::move(next);
    }
    state.beta.push_back(beta);
  }
  return state;
}

double beta_identity_residual(const Trajectory& traj, const BetaState& beta,
                              const BracketTable& table, double eps) {
  const int n_words = table.n_words();
  const int m = traj.spec.m;
  const Eigen::VectorXd x0 = traj.states.col(0);

  // Frozen basis columns eps^{|J|} V_[J](x0).
  Eigen::MatrixXd basis0 = table.basis_matrix(x0);
  for (int k = 0; k < n_words; ++k)
    basis0.col(k) *= std::pow(eps, table.words()[static_cast<std::size_t>(k)].length());

  double worst = 0.0;
  for (int j = 0; j <= m; ++j) {
    const int node = traj.node_of_coarse(j);
    const Eigen::VectorXd xt = traj.states.col(node);
    const Eigen::MatrixXd& jinv = traj.jac_inv[static_cast<std::size_t>(node)];
    Eigen::MatrixXd basis_t = table.basis_matrix(xt);
    for (int k = 0; k < n_words; ++k)
      basis_t.col(k) *= std::pow(eps, table.words()[static_cast<std::size_t>(k)].length());
    for (int wi = 0; wi < n_words; ++wi) {
      const Eigen::VectorXd lhs = jinv * basis_t.col(wi);
      const Eigen::VectorXd rhs =
          basis0 * beta.beta[static_cast<std::size_t>(j)].row(wi).transpose();
      worst = std::max(worst, (lhs - rhs).norm());
    }
  }
  return worst;
}

MMatrixResult m_matrix(const BetaState& beta, const GramForm& gram) {
  if (!(beta.spec.m == gram.spec.m) ||
      beta.spec.hurst != gram.spec.hurst)
    throw std::invalid_argument("m_matrix: grid mismatch");
  const int n_words = static_cast<int>(beta.words.size());
  const int m = beta.spec.m;
  const int d = beta.spec.d;

  // The coefficient path of word I is R^d-valued: component i is the
  // single-letter row beta^I_{(i)}. This is the contraction under which
  // the Malliavin matrix expands exactly in the frozen bracket basis.
  // steps[i](I, j) = beta^I_{(i)} at the left endpoint of step j.
  std::vector<Eigen::MatrixXd> steps(static_cast<std::size_t>(d),
                                     Eigen::MatrixXd(n_words, m));
  std::vector<int> letter_row(static_cast<std::size_t>(d), 0);
  {
    int found = 0;
    for (int k = 0; k < n_words; ++k)
      if (beta.words[static_cast<std::size_t>(k)].length() == 1) {
        letter_row[static_cast<std::size_t>(
            beta.words[static_cast<std::size_t>(k)].letters[0])] = k;
        ++found;
      }
    if (found != d)
      throw std::logic_error("m_matrix: missing single-letter words");
  }
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < d; ++i)
      steps[static_cast<std::size_t>(i)].col(j) =
          beta.beta[static_cast<std::size_t>(j)]
              .row(letter_row[static_cast<std::size_t>(i)])
              .transpose();

  MMatrixResult out;
  out.M = Eigen::MatrixXd::Zero(n_words, n_words);
  for (int i = 0; i < d; ++i)
    out.M += steps[static_cast<std::size_t>(i)] * gram.Q *
             steps[static_cast<std::size_t>(i)].transpose();
  out.M = 0.5 * (out.M + out.M.transpose()).eval();
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(out.M,
                                                     Eigen::EigenvaluesOnly);
  out.min_eigenvalue = eig.eigenvalues().minCoeff();
  return out;
}

std::vector<int> active_words(const BracketTable& table,
                              const Eigen::VectorXd& x0, double tol) {
  std::vector<int> idx;
  for (int k = 0; k < table.n_words(); ++k)
    if (table.bracket_value(table.words()[static_cast<std::size_t>(k)], x0)
            .norm() > tol)
      idx.push_back(k);
  return idx;
}

double min_eigenvalue_on(const Eigen::MatrixXd& sym,
                         const std::vector<int>& index_set) {
  if (index_set.empty()) return 0.0;
  const auto k = static_cast<Eigen::Index>(index_set.size());
  Eigen::MatrixXd sub(k, k);
  for (Eigen::Index a = 0; a < k; ++a)
    for (Eigen::Index b = 0; b < k; ++b)
      sub(a, b) = sym(index_set[static_cast<std::size_t>(a)],
                      index_set[static_cast<std::size_t>(b)]);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(sub,
                                                     Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

double m_spectral_factor(const Eigen::MatrixXd& m_full,
                         const BracketTable& table, const Eigen::VectorXd& x0,
                         double eps) {
  const int n_words = table.n_words();
  Eigen::MatrixXd scaled = table.basis_matrix(x0);  // n x K
  for (int k = 0; k < n_words; ++k)
    scaled.col(k) *=
        std::pow(eps, table.words()[static_cast<std::size_t>(k)].length());

  // Orthonormal basis of the realizable coefficient subspace, the range
  // of scaled^T.
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(scaled.transpose(),
                                        Eigen::ComputeThinU);
  const double smax = svd.singularValues().maxCoeff();
  if (smax <= 0.0) return 0.0;
  int rank = 0;
  for (Eigen::Index i = 0; i < svd.singularValues().size(); ++i)
    if (svd.singularValues()(i) > 1e-12 * smax) ++rank;
  if (rank == 0) return 0.0;
  const Eigen::MatrixXd u = svd.matrixU().leftCols(rank);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(
      u.transpose() * m_full * u, Eigen::EigenvaluesOnly);
  return eig.eigenvalues().minCoeff();
}

HypoChainSample hypo_chain_sample(const Trajectory& traj,
                                  const VectorFieldSystem& sys,
                                  const BracketTable& table,
                                  const GramForm& gram, double eps,
                                  double omega_tol) {
  HypoChainSample out;

  const auto rows = malliavin_rows(traj, sys, eps);
  out.lam_gamma = malliavin_matrix(rows, gram).min_eigenvalue;

  out.lam_hat = std::numeric_limits<double>::infinity();
  for (int j = 0; j <= traj.spec.m; ++j)
    out.lam_hat = std::min(
        out.lam_hat,
        table.span_eigenvalue(traj.states.col(traj.node_of_coarse(j))));

  const BetaState beta = beta_system(traj, table, eps, omega_tol);
  out.lam_m =
      m_spectral_factor(m_matrix(beta, gram).M, table, traj.states.col(0), eps);

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(traj.jac.back());
  out.sigma_j1 = svd.singularValues().minCoeff();

  const double eps_pow = std::pow(eps, 2 * table.level());
  out.bound = out.lam_hat * eps_pow * std::max(out.lam_m, 0.0) *
              out.sigma_j1 * out.sigma_j1;
  out.holds = out.lam_gamma >= out.bound - 1e-8;
  return out;
}

}  // namespace varlab
