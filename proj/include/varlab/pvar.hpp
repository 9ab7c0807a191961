#pragma once

#include <Eigen/Dense>

namespace varlab {

/// Exact p-variation norm of a grid path over all subdivisions through
/// grid points, by O(M^2) dynamic programming. Columns of `path` are the
/// node values (any row dimension); increments are measured in the
/// Euclidean norm. Grids are capped at 2048 steps.
double pvar_norm(const Eigen::MatrixXd& path, double p);

/// Grid approximation of the 2-d rho-variation of the fBm covariance on
/// [0,1]^2: greedy partition refinement over the m-point grid. Lower
/// bound of the true 2-d variation.
double rho_var_2d(double hurst, int m, double rho);

}  // namespace varlab
