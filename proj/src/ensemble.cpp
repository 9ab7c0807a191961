#include "varlab/ensemble.hpp"

#include <unsupported/Eigen/FFT>

#include <cmath>
#include <complex>
#include <stdexcept>

#include "varlab/common.hpp"
#include "varlab/rng.hpp"

namespace varlab {

std::string to_string(SampleMethod m) {
  return m == SampleMethod::cholesky ? "cholesky" : "circulant";
}

SampleMethod sample_method_from_string(const std::string& s) {
  if (s == "cholesky") return SampleMethod::cholesky;
  if (s == "circulant") return SampleMethod::circulant;
  throw std::invalid_argument("unknown sample method: " + s);
}

FbmSampler::FbmSampler(const GridSpec& spec, SampleMethod method)
    : spec_(spec), method_(method) {
  spec_.validate();
  const int m = spec_.m;
  const double dt = spec_.dt();

  if (method_ == SampleMethod::circulant) {
    // Even extension of the fGn autocovariance to a circulant of size 2m.
    const int n = 2 * m;
    std::vector<double> c(static_cast<std::size_t>(n), 0.0);
    for (int k = 0; k <= m; ++k) c[static_cast<std::size_t>(k)] = fgn_autocovariance(k, dt, spec_.hurst);
    for (int k = 1; k < m; ++k) c[static_cast<std::size_t>(n - k)] = c[static_cast<std::size_t>(k)];

    Eigen::FFT<double> fft;
    std::vector<std::complex<double>> freq(static_cast<std::size_t>(n));
    fft.fwd(freq, c);

    double min_ev = 0.0, max_ev = 0.0;
    for (const auto& f : freq) {
      min_ev = std::min(min_ev, f.real());
      max_ev = std::max(max_ev, f.real());
    }
    if (min_ev < -1e-10 * std::max(1.0, max_ev)) {
      // Embedding is indefinite for this (m, H); fall back.
      method_ = SampleMethod::cholesky;
      fell_back_ = true;
    } else {
      sqrt_lambda_.resize(static_cast<std::size_t>(n));
      for (int k = 0; k < n; ++k)
        sqrt_lambda_[static_cast<std::size_t>(k)] =
            std::sqrt(std::max(0.0, freq[static_cast<std::size_t>(k)].real()));
    }
  }

  if (method_ == SampleMethod::cholesky) {
    Eigen::MatrixXd cov(m, m);
    for (int i = 0; i < m; ++i)
      for (int j = 0; j <= i; ++j) {
        const double g = fgn_autocovariance(i - j, dt, spec_.hurst);
        cov(i, j) = g;
        cov(j, i) = g;
      }
    Eigen::LLT<Eigen::MatrixXd> llt(cov);
    if (llt.info() != Eigen::Success)
      throw NumericalError(
          "FbmSampler: increment covariance is not positive definite "
          "(m=" + std::to_string(m) + ", H=" + std::to_string(spec_.hurst) + ")");
    chol_ = llt.matrixL();
  }
}

void FbmSampler::sample_path(std::uint64_t seed, std::int64_t path_index,
                             int component, std::span<double> out) const {
  const int m = spec_.m;
  if (out.size() != static_cast<std::size_t>(m + 1))
    throw std::invalid_argument("sample_path: output span must have m+1 slots");
  CounterRng rng(seed, static_cast<std::uint64_t>(path_index),
                 static_cast<std::uint64_t>(component));

  if (method_ == SampleMethod::cholesky) {
    Eigen::VectorXd z(m);
    for (int i = 0; i < m; ++i) z(i) = rng.next_normal();
    Eigen::VectorXd incr = chol_.triangularView<Eigen::Lower>() * z;
    out[0] = 0.0;
    double acc = 0.0;
    for (int j = 0; j < m; ++j) {
      acc += incr(j);
      out[static_cast<std::size_t>(j + 1)] = acc;
    }
    return;
  }

  // Davies-Harte: Hermitian-symmetric complex normals weighted by the
  // circulant eigenvalues; one FFT gives 2m noise values of which the
  // first m have exactly the fGn law.
  const int n = 2 * m;
  const double inv_n = 1.0 / n;
  std::vector<std::complex<double>> w(static_cast<std::size_t>(n));
  w[0] = sqrt_lambda_[0] * std::sqrt(inv_n) * rng.next_normal();
  w[static_cast<std::size_t>(m)] =
      sqrt_lambda_[static_cast<std::size_t>(m)] * std::sqrt(inv_n) * rng.next_normal();
  for (int k = 1; k < m; ++k) {
    const double a = rng.next_normal();
    const double b = rng.next_normal();
    const double scale = sqrt_lambda_[static_cast<std::size_t>(k)] * std::sqrt(0.5 * inv_n);
    w[static_cast<std::size_t>(k)] = std::complex<double>(scale * a, scale * b);
    w[static_cast<std::size_t>(n - k)] = std::conj(w[static_cast<std::size_t>(k)]);
  }
  Eigen::FFT<double> fft;
  std::vector<std::complex<double>> increments(static_cast<std::size_t>(n));
  fft.fwd(increments, w);

  out[0] = 0.0;
  double acc = 0.0;
  for (int j = 0; j < m; ++j) {
    acc += increments[static_cast<std::size_t>(j)].real();
    out[static_cast<std::size_t>(j + 1)] = acc;
  }
}

FbmEnsemble sample_fbm(const GridSpec& spec, std::int64_t n_paths,
                       std::uint64_t seed, SampleMethod method, int workers) {
  if (n_paths < 1) throw std::invalid_argument("sample_fbm: N must be >= 1");
  FbmSampler sampler(spec, method);

  FbmEnsemble ens;
  ens.spec = spec;
  ens.n_paths = n_paths;
  ens.seed = seed;
  ens.method = sampler.method();
  ens.fell_back = sampler.fell_back();
  const std::size_t stride = static_cast<std::size_t>(spec.m + 1);
  ens.paths.resize(static_cast<std::size_t>(n_paths) *
                   static_cast<std::size_t>(spec.d) * stride);

  parallel_for(static_cast<std::size_t>(n_paths), workers, [&](std::size_t i) {
    for (int c = 0; c < spec.d; ++c) {
      double* dst =
          ens.paths.data() + (i * static_cast<std::size_t>(spec.d) +
                              static_cast<std::size_t>(c)) * stride;
      sampler.sample_path(seed, static_cast<std::int64_t>(i), c,
                          std::span<double>(dst, stride));
    }
  });
  return ens;
}

std::vector<CovarianceCheckRow> empirical_covariance_report(
    const FbmEnsemble& ens,
    const std::vector<std::pair<double, double>>& pairs) {
  std::vector<CovarianceCheckRow> rows;
  rows.reserve(pairs.size());
  const int m = ens.spec.m;
  for (const auto& [s, t] : pairs) {
    const double js_real = s * m;
    const double jt_real = t * m;
    const int js = static_cast<int>(std::lround(js_real));
    const int jt = static_cast<int>(std::lround(jt_real));
    if (std::fabs(js_real - js) > 1e-9 || std::fabs(jt_real - jt) > 1e-9 ||
        js < 0 || js > m || jt < 0 || jt > m)
      throw std::domain_error("empirical_covariance_report: pair not on grid");

    double acc = 0.0;
    const std::int64_t samples =
        ens.n_paths * static_cast<std::int64_t>(ens.spec.d);
    for (std::int64_t i = 0; i < ens.n_paths; ++i)
      for (int c = 0; c < ens.spec.d; ++c)
        acc += ens.value(i, c, js) * ens.value(i, c, jt);

    CovarianceCheckRow row;
    row.s = s;
    row.t = t;
    row.empirical = acc / static_cast<double>(samples);
    row.exact = fbm_covariance(s, t, ens.spec.hurst);
    const double var_product =
        fbm_covariance(s, s, ens.spec.hurst) * fbm_covariance(t, t, ens.spec.hurst) +
        row.exact * row.exact;
    const double stderr_est = std::sqrt(var_product / static_cast<double>(samples));
    row.z = stderr_est > 0.0 ? (row.empirical - row.exact) / stderr_est : 0.0;
    rows.push_back(row);
  }
  return rows;
}

}  // namespace varlab
