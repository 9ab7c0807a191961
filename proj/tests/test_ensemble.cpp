#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <vector>

#include "varlab/ensemble.hpp"

using namespace varlab;

namespace {

double empirical_cov(const FbmEnsemble& ens, int node_a, int node_b) {
  double acc = 0.0;
  for (std::int64_t i = 0; i < ens.n_paths; ++i)
    for (int c = 0; c < ens.spec.d; ++c)
      acc += ens.value(i, c, node_a) * ens.value(i, c, node_b);
  return acc / double(ens.n_paths * ens.spec.d);
}

// Two-sample Kolmogorov-Smirnov statistic.
double ks_statistic(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  double ks = 0.0;
  std::size_t ia = 0, ib = 0;
  while (ia < a.size() && ib < b.size()) {
    if (a[ia] <= b[ib])
      ++ia;
    else
      ++ib;
    ks = std::max(ks, std::fabs(double(ia) / a.size() - double(ib) / b.size()));
  }
  return ks;
}

}  // namespace

TEST_CASE("Brownian terminal variance is 1 within MC error") {
  const GridSpec spec(64, 0.5, 1);
  const auto ens = sample_fbm(spec, 100000, 41, SampleMethod::cholesky);
  const double var = empirical_cov(ens, 64, 64);
  // Var of the estimator of E[B_1^2] is 2/N for a standard Gaussian.
  const double stderr_est = std::sqrt(2.0 / double(ens.n_paths));
  CHECK(std::fabs(var - 1.0) < 3.0 * stderr_est);
}

TEST_CASE("H=0.7 covariance of (B_0.5, B_1) matches the formula") {
  const GridSpec spec(64, 0.7, 1);
  const auto ens = sample_fbm(spec, 100000, 42, SampleMethod::cholesky);
  const double expect = fbm_covariance(0.5, 1.0, 0.7);
  const double var_product = fbm_covariance(0.5, 0.5, 0.7) * 1.0 + expect * expect;
  const double stderr_est = std::sqrt(var_product / double(ens.n_paths));
  CHECK(std::fabs(empirical_cov(ens, 32, 64) - expect) < 3.0 * stderr_est);
}

TEST_CASE("components are independent") {
  const GridSpec spec(16, 0.3, 2);
  const auto ens = sample_fbm(spec, 10000, 7, SampleMethod::circulant);
  double acc = 0.0;
  for (std::int64_t i = 0; i < ens.n_paths; ++i)
    acc += ens.value(i, 0, 16) * ens.value(i, 1, 16);
  acc /= double(ens.n_paths);
  const double stderr_est = std::sqrt(1.0 / double(ens.n_paths));
  CHECK(std::fabs(acc) < 3.0 * stderr_est);
}

TEST_CASE("every path starts at zero in every component") {
  const GridSpec spec(8, 0.4, 3);
  const auto ens = sample_fbm(spec, 100, 9, SampleMethod::circulant);
  for (std::int64_t i = 0; i < ens.n_paths; ++i)
    for (int c = 0; c < 3; ++c) CHECK(ens.value(i, c, 0) == 0.0);
}

TEST_CASE("seeding is deterministic and independent of worker count") {
  const GridSpec spec(32, 0.7, 2);
  const auto a = sample_fbm(spec, 64, 123, SampleMethod::cholesky, 1);
  const auto b = sample_fbm(spec, 64, 123, SampleMethod::cholesky, 4);
  CHECK(a.paths == b.paths);  // byte-identical
  const auto c = sample_fbm(spec, 64, 124, SampleMethod::cholesky, 1);
  CHECK(a.paths != c.paths);

  const auto d = sample_fbm(spec, 64, 123, SampleMethod::circulant, 3);
  const auto e = sample_fbm(spec, 64, 123, SampleMethod::circulant, 1);
  CHECK(d.paths == e.paths);
}

TEST_CASE("cholesky and circulant agree in distribution (KS at level 0.001)") {
  const GridSpec spec(64, 0.7, 1);
  const int n = 10000;
  const auto a = sample_fbm(spec, n, 5151, SampleMethod::cholesky);
  const auto b = sample_fbm(spec, n, 7272, SampleMethod::circulant);
  CHECK_FALSE(b.fell_back);
  std::vector<double> ta(n), tb(n);
  for (int i = 0; i < n; ++i) {
    ta[std::size_t(i)] = a.value(i, 0, 64);
    tb[std::size_t(i)] = b.value(i, 0, 64);
  }
  // c(0.001) = 1.9495 for the two-sample statistic.
  const double crit = 1.9495 * std::sqrt(2.0 / double(n));
  CHECK(ks_statistic(ta, tb) < crit);
}

TEST_CASE("covariance report flags a corrupted Hurst exponent") {
  GridSpec spec(64, 0.5, 1);
  const auto ens = sample_fbm(spec, 100000, 21, SampleMethod::cholesky);
  const std::vector<std::pair<double, double>> pairs = {
      {0.25, 0.25}, {0.5, 0.5}, {1.0, 1.0}, {0.25, 0.75}, {0.5, 1.0}, {0.25, 1.0}};

  auto rows = empirical_covariance_report(ens, pairs);
  double zmax = 0.0;
  for (const auto& r : rows) zmax = std::max(zmax, std::fabs(r.z));
  CHECK(zmax < 4.0);

  // Same draws re-interpreted as if H were 0.7: the report must reject.
  FbmEnsemble wrong = ens;
  wrong.spec.hurst = 0.7;
  rows = empirical_covariance_report(wrong, pairs);
  zmax = 0.0;
  for (const auto& r : rows) zmax = std::max(zmax, std::fabs(r.z));
  CHECK(zmax > 10.0);
}

TEST_CASE("covariance report on an empty pair list is empty") {
  const GridSpec spec(8, 0.5, 1);
  const auto ens = sample_fbm(spec, 10, 3, SampleMethod::cholesky);
  CHECK(empirical_covariance_report(ens, {}).empty());
}

TEST_CASE("covariance report rejects off-grid pairs") {
  const GridSpec spec(8, 0.5, 1);
  const auto ens = sample_fbm(spec, 10, 3, SampleMethod::cholesky);
  CHECK_THROWS_AS(
      (void)empirical_covariance_report(ens, {{0.3, 0.5}}),
      std::domain_error);
}

TEST_CASE("sample_fbm validates N") {
  const GridSpec spec(8, 0.5, 1);
  CHECK_THROWS_AS((void)sample_fbm(spec, 0, 1, SampleMethod::cholesky),
                  std::invalid_argument);
}
