#pragma once

#include <Eigen/Dense>
#include <optional>
#include <string>

#include "varlab/grid.hpp"

namespace varlab {

/// Element of the step-function Hilbert space: psi(c, j) is the
/// coefficient of the indicator of (t_{j-1}, t_j] in component c.
struct StepCoeffs {
  GridSpec spec;
  Eigen::MatrixXd psi;  // d x m

  StepCoeffs() = default;
  StepCoeffs(const GridSpec& s, Eigen::MatrixXd coeffs);

  static StepCoeffs zero(const GridSpec& s) {
    return StepCoeffs(s, Eigen::MatrixXd::Zero(s.d, s.m));
  }
  static StepCoeffs ones(const GridSpec& s) {
    return StepCoeffs(s, Eigen::MatrixXd::Ones(s.d, s.m));
  }
};

/// Gram matrix of the interval indicators: Q(j,k) is the covariance of the
/// increments over (t_{j-1},t_j] and (t_{k-1},t_k]. Symmetric positive
/// definite for every admissible H; the smallest eigenvalue is estimated
/// at construction and must exceed 1e-12.
struct GramForm {
  GridSpec spec;
  Eigen::MatrixXd Q;       // m x m
  double min_eigenvalue = 0.0;
  Eigen::LLT<Eigen::MatrixXd> llt;  // cached factorization of Q
};

GramForm gram_matrix(const GridSpec& spec);

/// Inner product in the step-function space: sum over components of
/// psi_c^T Q phi_c.
double inner_h(const StepCoeffs& psi, const StepCoeffs& phi,
               const GramForm& gram);

double cm_norm_sq(const StepCoeffs& psi, const GramForm& gram);

/// Cameron-Martin path of a step element, sampled on the grid:
/// h_c(t) = sum_j psi(c,j) * (R(t, t_j) - R(t, t_{j-1})). Returns a
/// d x (m+1) matrix of node values; h(0) = 0 and the map is a linear
/// isometry onto its image.
Eigen::MatrixXd embed_cm(const StepCoeffs& psi);

/// Same path evaluated at an arbitrary time in [0,1].
Eigen::VectorXd embed_cm_at(const StepCoeffs& psi, double t);

/// Disk cache for Gram matrices, keyed by (m, H). Returns empty when the
/// file is absent or its checksum does not match.
std::optional<GramForm> gram_cache_load(const std::string& dir,
                                        const GridSpec& spec);
void gram_cache_store(const std::string& dir, const GramForm& gram);

/// Loads from cache when `dir` is nonempty, computing and storing on miss.
GramForm gram_matrix_cached(const GridSpec& spec, const std::string& dir);

}  // namespace varlab
