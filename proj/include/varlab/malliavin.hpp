#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <vector>

#include "varlab/brackets.hpp"
#include "varlab/ensemble.hpp"
#include "varlab/flow.hpp"
#include "varlab/hilbert.hpp"

namespace varlab {

/// Malliavin derivative rows of the terminal state, sampled at the coarse
/// grid nodes: rows[k].col(j) = eps * J_1 J_{t_j}^{-1} V_k(X_{t_j}).
struct MalliavinRows {
  GridSpec spec;
  double eps = 1.0;
  std::vector<Eigen::MatrixXd> rows;  // d matrices, each n x (m+1)
};

MalliavinRows malliavin_rows(const Trajectory& traj,
                             const VectorFieldSystem& sys, double eps);

struct MalliavinMatrix {
  Eigen::MatrixXd gamma;
  double eps = 1.0;
  double min_eigenvalue = 0.0;
};

/// Gram-form Malliavin matrix: rows become step coefficients by the
/// left-endpoint convention and are paired through Q. Eigenvalues below
/// -1e-10 are rejected; small negatives are clipped to zero.
MalliavinMatrix malliavin_matrix(const MalliavinRows& rows,
                                 const GramForm& gram);

/// Smallest eigenvalue of the pointwise matrix sum_k D^k_s X (D^k_s X)^T
/// at each coarse node; diagnostic series for the elliptic chain.
Eigen::VectorXd pointwise_eigen_series(const MalliavinRows& rows);

/// Cross-check route for H > 1/2: double integral of f(u) f(v)^T against
/// the kernel H(2H-1)|u-v|^{2H-2}. The rows keep the left-endpoint
/// discretization; the per-cell kernel masses come from the antiderivative
/// of the kernel, an algebraic route independent of the covariance
/// four-term assembly behind the Gram form.
Eigen::MatrixXd gamma_kernel_quadrature(const MalliavinRows& rows);

struct ScalingOptions {
  int grid_m = 32;
  int substeps = 2;
  SampleMethod method = SampleMethod::cholesky;
  int workers = 1;
};

struct ScalingReport {
  std::vector<double> eps_grid;
  /// Quantiles (0.5, 0.9, 0.99) of 1/lambda_min(gamma) per eps.
  std::vector<std::array<double, 3>> quantiles;
  double slope = 0.0;         // log median vs log eps
  double slope_stderr = 0.0;
  bool degenerate_warning = false;  // some lambda_min fell below 1e-14
};

/// Monte Carlo probe of the inverse-Malliavin-matrix scaling in eps.
/// Paths are shared across the eps grid (common random numbers).
ScalingReport inv_gamma_scaling(const VectorFieldSystem& sys,
                                const Eigen::VectorXd& x0, double hurst,
                                const std::vector<double>& eps_grid,
                                std::int64_t n_samples, std::uint64_t seed,
                                const ScalingOptions& opts = {});

/// Solution of the bracket-coefficient transport system along a
/// trajectory: beta[node](I, J) with beta(0) = Id over the word set.
/// Coefficients are refreshed once per substep (the omega expansion is
/// solved at the substep start and frozen), so the transport converges at
/// first order in the substep while each frozen step is integrated to
/// 4th order.
struct BetaState {
  GridSpec spec;
  double eps = 1.0;
  int level = 1;
  std::vector<Word> words;
  std::vector<Eigen::MatrixXd> beta;  // per coarse node
};

BetaState beta_system(const Trajectory& traj, const BracketTable& table,
                      double eps, double omega_tol = 1e-6);

/// Sup over coarse nodes and words of
/// || Jinv_t V^eps_[I](X_t) - sum_J beta^J_I(t) V^eps_[J](x_0) ||.
double beta_identity_residual(const Trajectory& traj, const BetaState& beta,
                              const BracketTable& table, double eps);

struct MMatrixResult {
  Eigen::MatrixXd M;
  double min_eigenvalue = 0.0;
};

/// Gram pairing of the beta coefficient paths at t = 1. The path of word
/// I is R^d-valued with components beta^I_{(i)} over the single-letter
/// rows, the contraction under which the Malliavin matrix expands exactly
/// in the frozen bracket basis:
/// M_{I,J} = sum_{i<=d} <step(beta^I_{(i)}), step(beta^J_{(i)})>_H.
MMatrixResult m_matrix(const BetaState& beta, const GramForm& gram);

/// Indices of words whose bracket does not vanish at x0. Words outside
/// this set have exactly zero coefficient in the frozen-basis expansion.
std::vector<int> active_words(const BracketTable& table,
                              const Eigen::VectorXd& x0, double tol = 1e-12);

/// Smallest eigenvalue of the principal submatrix on `index_set`.
double min_eigenvalue_on(const Eigen::MatrixXd& sym,
                         const std::vector<int>& index_set);

/// Spectral factor of the lower-bound chain: smallest eigenvalue of M
/// restricted to coefficient vectors realizable as
/// (eps^{|I|} <V_[I](x0), w>)_I, w in R^n. Linear dependencies among the
/// brackets (mirrored words) make the full matrix structurally singular;
/// this is the non-vacuous reading of its smallest eigenvalue.
double m_spectral_factor(const Eigen::MatrixXd& m_full,
                         const BracketTable& table, const Eigen::VectorXd& x0,
                         double eps);

struct HypoChainSample {
  double lam_gamma = 0.0;   // lambda_min of the Malliavin matrix
  double lam_hat = 0.0;     // bracket-span eigenvalue along the trajectory
  double lam_m = 0.0;       // lambda_min of the M matrix
  double sigma_j1 = 0.0;    // smallest singular value of J_1
  double bound = 0.0;       // lam_hat * eps^{2l} * lam_m * sigma_j1^2
  bool holds = false;       // lam_gamma >= bound - 1e-8
};

/// Per-sample check of the hypoelliptic lower-bound chain.
HypoChainSample hypo_chain_sample(const Trajectory& traj,
                                  const VectorFieldSystem& sys,
                                  const BracketTable& table,
                                  const GramForm& gram, double eps,
                                  double omega_tol = 1e-6);

}  // namespace varlab
