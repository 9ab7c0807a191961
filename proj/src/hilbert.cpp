#include "varlab/hilbert.hpp"

#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "varlab/common.hpp"
#include "varlab/covariance.hpp"

namespace varlab {

StepCoeffs::StepCoeffs(const GridSpec& s, Eigen::MatrixXd coeffs)
    : spec(s), psi(std::move(coeffs)) {
  spec.validate();
  if (psi.rows() != spec.d || psi.cols() != spec.m)
    throw std::invalid_argument("StepCoeffs: psi must be d x m");
  if (!psi.allFinite())
    throw std::invalid_argument("StepCoeffs: psi has non-finite entries");
}

GramForm gram_matrix(const GridSpec& spec) {
  spec.validate();
  const int m = spec.m;
  GramForm gram;
  gram.spec = spec;
  gram.Q.resize(m, m);
  for (int j = 0; j < m; ++j)
    for (int k = 0; k <= j; ++k) {
      const double q = rect_increment(spec.t(j), spec.t(j + 1), spec.t(k),
                                      spec.t(k + 1), spec.hurst);
      gram.Q(j, k) = q;
      gram.Q(k, j) = q;
    }

  gram.llt.compute(gram.Q);
  if (gram.llt.info() != Eigen::Success)
    throw NumericalError("gram_matrix: Q is not positive definite (m=" +
                         std::to_string(m) + ", H=" + std::to_string(spec.hurst) + ")");

  // Smallest eigenvalue via inverse power iteration on the cached factor.
  Eigen::VectorXd v = Eigen::VectorXd::Constant(m, 1.0 / std::sqrt(double(m)));
  double lambda = 0.0;
  for (int it = 0; it < 30; ++it) {
    Eigen::VectorXd w = gram.llt.solve(v);
    const double norm = w.norm();
    if (norm <= 0.0) break;
    v = w / norm;
    lambda = v.dot(gram.Q * v);
  }
  gram.min_eigenvalue = lambda;
  if (!(lambda > 1e-12))
    throw NumericalError("gram_matrix: smallest eigenvalue " +
                         std::to_string(lambda) + " below tolerance 1e-12");
  return gram;
}

static void check_same_spec(const GridSpec& a, const GridSpec& b,
                            const char* who) {
  if (!(a == b)) throw std::invalid_argument(std::string(who) + ": spec mismatch");
}

double inner_h(const StepCoeffs& psi, const StepCoeffs& phi,
               const GramForm& gram) {
  check_same_spec(psi.spec, gram.spec, "inner_h");
  check_same_spec(phi.spec, gram.spec, "inner_h");
  double acc = 0.0;
  for (int c = 0; c < psi.spec.d; ++c)
    acc += psi.psi.row(c) * gram.Q * phi.psi.row(c).transpose();
  return acc;
}

double cm_norm_sq(const StepCoeffs& psi, const GramForm& gram) {
  return inner_h(psi, psi, gram);
}

Eigen::MatrixXd embed_cm(const StepCoeffs& psi) {
  const GridSpec& spec = psi.spec;
  Eigen::MatrixXd h = Eigen::MatrixXd::Zero(spec.d, spec.m + 1);
  for (int i = 1; i <= spec.m; ++i) h.col(i) = embed_cm_at(psi, spec.t(i));
  return h;
}

Eigen::VectorXd embed_cm_at(const StepCoeffs& psi, double t) {
  const GridSpec& spec = psi.spec;
  Eigen::VectorXd h = Eigen::VectorXd::Zero(spec.d);
  if (t == 0.0) return h;
  double r_prev = fbm_covariance(t, 0.0, spec.hurst);  // = 0
  for (int j = 1; j <= spec.m; ++j) {
    const double r_next = fbm_covariance(t, spec.t(j), spec.hurst);
    h += psi.psi.col(j - 1) * (r_next - r_prev);
    r_prev = r_next;
  }
  return h;
}

// ---------------------------------------------------------------------------
// Disk cache

namespace {

std::uint64_t fnv1a(const unsigned char* data, std::size_t size) {
  std::uint64_t h = 1469598103934665603ULL;
  for (std::size_t i = 0; i < size; ++i) {
    h ^= data[i];
    h *= 1099511628211ULL;
  }
  return h;
}

std::string cache_file(const std::string& dir, const GridSpec& spec) {
  std::ostringstream name;
  name << dir << "/gram_m" << spec.m << "_H";
  name.precision(9);
  name << std::fixed << spec.hurst << ".bin";
  return name.str();
}

}  // namespace

void gram_cache_store(const std::string& dir, const GramForm& gram) {
  std::filesystem::create_directories(dir);
  const int m = gram.spec.m;
  std::ofstream out(cache_file(dir, gram.spec), std::ios::binary);
  if (!out) return;
  const auto* bytes = reinterpret_cast<const unsigned char*>(gram.Q.data());
  const std::size_t size = sizeof(double) * static_cast<std::size_t>(m) * m;
  const std::uint64_t checksum = fnv1a(bytes, size);
  out.write(reinterpret_cast<const char*>(&checksum), sizeof(checksum));
  out.write(reinterpret_cast<const char*>(&gram.min_eigenvalue),
            sizeof(double));
  out.write(reinterpret_cast<const char*>(bytes),
            static_cast<std::streamsize>(size));
}

std::optional<GramForm> gram_cache_load(const std::string& dir,
                                        const GridSpec& spec) {
  std::ifstream in(cache_file(dir, spec), std::ios::binary);
  if (!in) return std::nullopt;
  const int m = spec.m;
  std::uint64_t checksum = 0;
  GramForm gram;
  gram.spec = spec;
  gram.Q.resize(m, m);
  in.read(reinterpret_cast<char*>(&checksum), sizeof(checksum));
  in.read(reinterpret_cast<char*>(&gram.min_eigenvalue), sizeof(double));
  const std::size_t size = sizeof(double) * static_cast<std::size_t>(m) * m;
  in.read(reinterpret_cast<char*>(gram.Q.data()),
          static_cast<std::streamsize>(size));
  if (!in) return std::nullopt;
  const auto* bytes = reinterpret_cast<const unsigned char*>(gram.Q.data());
  if (fnv1a(bytes, size) != checksum) return std::nullopt;
  gram.llt.compute(gram.Q);
  if (gram.llt.info() != Eigen::Success) return std::nullopt;
  return gram;
}

GramForm gram_matrix_cached(const GridSpec& spec, const std::string& dir) {
  if (dir.empty()) return gram_matrix(spec);
  if (auto cached = gram_cache_load(dir, spec)) return std::move(*cached);
  GramForm gram = gram_matrix(spec);
  gram_cache_store(dir, gram);
  return gram;
}

}  // namespace varlab
