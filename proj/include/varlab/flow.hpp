#pragma once

#include <Eigen/Dense>
#include <memory>
#include <vector>

#include "varlab/ensemble.hpp"
#include "varlab/fields.hpp"
#include "varlab/grid.hpp"
#include "varlab/hilbert.hpp"

namespace varlab {

/// Piecewise-linear driving path on a uniform grid. The effective path is
/// scale * values; keeping the scale separate lets one ensemble drive a
/// whole family of noise intensities.
struct Drive {
  GridSpec spec;
  Eigen::MatrixXd values;  // d x (m+1), first column zero
  double scale = 1.0;

  Eigen::VectorXd at_node(int j) const { return scale * values.col(j); }
};

Drive zero_drive(const GridSpec& spec);
Drive drive_from_ensemble(const FbmEnsemble& ens, std::int64_t path_index,
                          double scale);
/// Cameron-Martin drive on a grid refined by `refine` relative to psi's
/// grid; node values are the exact embedded path.
Drive drive_from_cm(const StepCoeffs& psi, int refine = 1);

/// Nodewise translation b + h. The second argument is resampled onto b's
/// grid (exact for Cameron-Martin paths). The result has scale 1.
Drive translate_drive(const Drive& b, const StepCoeffs& h);
/// Same-grid overload for already-sampled paths.
Drive translate_drive(const Drive& b, const Eigen::MatrixXd& h_nodes);

/// Solution of the driven ODE together with its Jacobian and inverse
/// Jacobian, on the drive grid refined by `substeps`.
struct Trajectory {
  GridSpec spec;   // grid of the drive
  Drive drive;     // the driving path (kept for downstream transports)
  int substeps = 1;
  Eigen::VectorXd times;  // refined nodes, spec.m * substeps + 1 of them
  Eigen::MatrixXd states;                // n x (refined nodes)
  std::vector<Eigen::MatrixXd> jac;      // J_t, per refined node
  std::vector<Eigen::MatrixXd> jac_inv;  // J_t^{-1}, per refined node
  bool with_jacobian = true;
  /// Piecewise-linear drives converge slowly below H = 1/3.
  bool rough_drive_warning = false;

  int refined_nodes() const { return static_cast<int>(times.size()); }
  int node_of_coarse(int j) const { return j * substeps; }
  Eigen::VectorXd terminal() const { return states.col(states.cols() - 1); }
};

struct FlowOptions {
  int substeps = 1;
  bool with_jacobian = true;
  double blowup_norm = 1e8;
};

/// Integrates dX = scale * sum_i V_i(X) dw^i along the piecewise-linear
/// drive with a classical 4th-order step (the drive slope is constant on
/// each sub-interval, so this is a genuine smooth-ODE solve). The inverse
/// Jacobian is integrated from its own linear equation, not obtained by
/// matrix inversion.
Trajectory solve_flow(const Drive& drive, const VectorFieldSystem& sys,
                      const Eigen::VectorXd& x0, const FlowOptions& opts = {});

/// Deterministic flow driven by a Cameron-Martin element: the drive is
/// the embedded path evaluated exactly on the refined grid.
Trajectory phi_flow(const StepCoeffs& psi, const VectorFieldSystem& sys,
                    const Eigen::VectorXd& x0, int substeps = 1,
                    bool with_jacobian = true);

/// Directional derivative of the terminal state along h = embed(psi_dir):
/// eps * sum_i int_0^1 J_1 J_s^{-1} V_i(X_s) dh^i_s, by trapezoidal
/// quadrature on the refined grid with exact h increments.
Eigen::VectorXd directional_derivative(const Trajectory& traj,
                                       const VectorFieldSystem& sys,
                                       const StepCoeffs& psi_dir, double eps);

/// First Wiener-chaos limit direction: Z(h) = sum_i int J_1 J_s^{-1}
/// V_i(Phi_s(h)) dB^i_s, quadrature along the trajectory of Phi(h).
Eigen::VectorXd z_direction(const Trajectory& phi_traj,
                            const VectorFieldSystem& sys, const Drive& noise);

struct ZLimitRow {
  double eps = 0.0;
  double error = 0.0;  // ||(Phi_1(eps B + h) - Phi_1(h))/eps - Z(h)||
};

/// Difference-quotient convergence table for the limit direction.
std::vector<ZLimitRow> z_limit_check(const StepCoeffs& h,
                                     const Drive& noise,
                                     const VectorFieldSystem& sys,
                                     const Eigen::VectorXd& x0,
                                     const std::vector<double>& eps_seq,
                                     int substeps = 1);

}  // namespace varlab
