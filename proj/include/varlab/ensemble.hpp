#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "varlab/covariance.hpp"
#include "varlab/grid.hpp"

namespace varlab {

enum class SampleMethod { cholesky, circulant };

std::string to_string(SampleMethod m);
SampleMethod sample_method_from_string(const std::string& s);

/// Draws fractional Brownian paths on the grid with the exact joint law.
/// Increments are stationary fractional Gaussian noise, generated either
/// through a Cholesky factor of the Toeplitz increment covariance or by
/// circulant embedding, then cumulative-summed. Each (seed, path,
/// component) triple owns its own counter-based stream, so results do not
/// depend on evaluation order.
class FbmSampler {
 public:
  FbmSampler(const GridSpec& spec, SampleMethod method);

  const GridSpec& spec() const { return spec_; }
  SampleMethod method() const { return method_; }
  /// True when a requested circulant embedding had eigenvalues below
  /// -1e-10 and the sampler fell back to Cholesky.
  bool fell_back() const { return fell_back_; }

  /// Fills out[0..m] with one component path; out[0] = 0.
  void sample_path(std::uint64_t seed, std::int64_t path_index, int component,
                   std::span<double> out) const;

 private:
  GridSpec spec_;
  SampleMethod method_;
  bool fell_back_ = false;
  Eigen::MatrixXd chol_;               // lower factor of the fGn covariance
  std::vector<double> sqrt_lambda_;    // circulant eigenvalue weights
};

struct FbmEnsemble {
  GridSpec spec;
  std::int64_t n_paths = 0;
  std::uint64_t seed = 0;
  SampleMethod method = SampleMethod::cholesky;
  bool fell_back = false;
  /// Row-major path values: value(i, c, j) = paths[(i*d + c)*(m+1) + j].
  std::vector<double> paths;

  double value(std::int64_t path, int component, int node) const {
    return paths[static_cast<std::size_t>((path * spec.d + component)) *
                     static_cast<std::size_t>(spec.m + 1) +
                 static_cast<std::size_t>(node)];
  }
};

/// Materializes an ensemble of N paths. Identical (spec, N, seed, method)
/// yield byte-identical ensembles for any worker count.
FbmEnsemble sample_fbm(const GridSpec& spec, std::int64_t n_paths,
                       std::uint64_t seed, SampleMethod method,
                       int workers = 1);

struct CovarianceCheckRow {
  double s = 0.0;
  double t = 0.0;
  double empirical = 0.0;
  double exact = 0.0;
  double z = 0.0;
};

/// Compares empirical covariances against the exact values at the given
/// grid-node pairs. z-scores use the exact variance of the product
/// estimator for jointly Gaussian marginals,
/// Var(B_s B_t) = R(s,s) R(t,t) + R(s,t)^2.
std::vector<CovarianceCheckRow> empirical_covariance_report(
    const FbmEnsemble& ens, const std::vector<std::pair<double, double>>& pairs);

}  // namespace varlab
