#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <limits>
#include <vector>

#include "varlab/fields.hpp"
#include "varlab/flow.hpp"
#include "varlab/hilbert.hpp"

namespace varlab {

struct ObjectiveGradient {
  Eigen::VectorXd phi1;       // terminal state of the deterministic flow
  Eigen::MatrixXd dphi_dpsi;  // n x (d*m), column index c*m + j
};

/// Terminal state and its sensitivity to the step coefficients:
/// column (c,j) is int_0^1 J_1 J_s^{-1} V_c(Phi_s) d mu_j(s) with
/// mu_j(s) = R(s, t_{j+1}) - R(s, t_j), by trapezoidal quadrature on the
/// refined grid.
ObjectiveGradient objective_gradient(const StepCoeffs& psi,
                                     const VectorFieldSystem& sys,
                                     const Eigen::VectorXd& x0,
                                     int substeps = 8);

/// Deterministic Malliavin determinant of Phi_1(h): rows of the unit-scale
/// flow paired through the Gram form. The Gram grid fixes the flow
/// refinement: gram.spec.m must be a multiple of psi.spec.m.
double det_gamma_phi(const StepCoeffs& psi, const VectorFieldSystem& sys,
                     const Eigen::VectorXd& x0, const GramForm& gram);

struct RateOptions {
  int restarts = 8;
  std::uint64_t seed = 20240915;
  double tol_c = 1e-7;   // terminal constraint residual
  double tol_g = 1e-6;   // first-order stationarity
  int substeps = 8;      // flow refinement per coarse step
  int max_inner = 200;   // quasi-Newton iterations per outer stage
  int max_outer = 14;
  double rho0 = 10.0;
  int workers = 1;
  /// Coarse-to-fine grid schedule; empty means {m/4, m/2, m} clipped
  /// below at 8 steps.
  std::vector<int> grid_schedule;
  /// Gram matrices are cached here when nonempty.
  std::string cache_dir;
};

struct RateResult {
  Eigen::VectorXd y;
  double d2 = std::numeric_limits<double>::infinity();
  StepCoeffs psi_star;
  double constraint_residual = std::numeric_limits<double>::infinity();
  double grad_norm = std::numeric_limits<double>::infinity();
  double det_gamma = 0.0;  // deterministic Malliavin det at the minimizer
  int restarts_used = 0;
  bool feasible = false;
  double refinement_delta = 0.0;  // |d2 change| on the last grid refinement
  double delta_det = 0.0;         // active det floor (restricted runs)
};

/// Minimal Cameron-Martin energy steering the deterministic flow to y:
/// augmented-Lagrangian multistart over the step coefficients. Infeasible
/// targets return the +infinity sentinel with feasible = false.
RateResult minimize_energy(const Eigen::VectorXd& y,
                           const VectorFieldSystem& sys,
                           const Eigen::VectorXd& x0, const GridSpec& spec,
                           const RateOptions& opts = {});

/// Same minimization with the added constraint
/// det gamma_{Phi_1(h)} >= delta_det, handled by an augmented-Lagrangian
/// hinge term with finite-difference determinant sensitivities.
RateResult minimize_energy_restricted(const Eigen::VectorXd& y,
                                      const VectorFieldSystem& sys,
                                      const Eigen::VectorXd& x0,
                                      const GridSpec& spec, double delta_det,
                                      const RateOptions& opts = {});

}  // namespace varlab
