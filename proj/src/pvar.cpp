#include "varlab/pvar.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "varlab/covariance.hpp"

namespace varlab {

double pvar_norm(const Eigen::MatrixXd& path, double p) {
  if (p < 1.0) throw std::domain_error("pvar_norm: p must be >= 1");
  const int nodes = static_cast<int>(path.cols());
  if (nodes < 2) return 0.0;
  if (nodes > 2049) throw std::domain_error("pvar_norm: grid capped at 2048 steps");

  // best[j] = max over subdivisions of [t_0, t_j] of sum |increment|^p.
  std::vector<double> best(static_cast<std::size_t>(nodes), 0.0);
  for (int j = 1; j < nodes; ++j) {
    double b = 0.0;
    for (int i = 0; i < j; ++i) {
      const double step = (path.col(j) - path.col(i)).norm();
      b = std::max(b, best[static_cast<std::size_t>(i)] + std::pow(step, p));
    }
    best[static_cast<std::size_t>(j)] = b;
  }
  return std::pow(best[static_cast<std::size_t>(nodes - 1)], 1.0 / p);
}

namespace {

// Sum_{i,j} |rectangular increment|^rho over the partition pair (S, T).
double partition_sum(const Eigen::MatrixXd& R, const std::vector<int>& s,
                     const std::vector<int>& t, double rho) {
  double acc = 0.0;
  for (std::size_t i = 0; i + 1 < s.size(); ++i)
    for (std::size_t j = 0; j + 1 < t.size(); ++j) {
      const double rect = R(s[i + 1], t[j + 1]) - R(s[i + 1], t[j]) -
                          R(s[i], t[j + 1]) + R(s[i], t[j]);
      acc += std::pow(std::fabs(rect), rho);
    }
  return acc;
}

}  // namespace

double rho_var_2d(double hurst, int m, double rho) {
  if (rho < 1.0) throw std::domain_error("rho_var_2d: rho must be >= 1");
  if (m < 1 || m > 256) throw std::domain_error("rho_var_2d: m must be in [1,256]");

  Eigen::MatrixXd R(m + 1, m + 1);
  for (int i = 0; i <= m; ++i)
    for (int j = 0; j <= i; ++j) {
      const double r = fbm_covariance(double(i) / m, double(j) / m, hurst);
      R(i, j) = r;
      R(j, i) = r;
    }

  std::vector<int> s = {0, m};
  std::vector<int> t = {0, m};
  double current = partition_sum(R, s, t, rho);

  // The fully refined partition is often the larger one for rho near 1;
  // keep it as a floor for the greedy search below.
  std::vector<int> full(static_cast<std::size_t>(m) + 1);
  for (int i = 0; i <= m; ++i) full[static_cast<std::size_t>(i)] = i;
  const double full_sum = partition_sum(R, full, full, rho);

  // Greedy refinement: insert the grid point (into either axis) that
  // increases the sum the most, until no insertion helps.
  while (true) {
    double best_gain = 0.0;
    int best_point = -1;
    bool best_axis_s = true;
    for (int axis = 0; axis < 2; ++axis) {
      auto& part = axis == 0 ? s : t;
      for (int cand = 1; cand < m; ++cand) {
        if (std::binary_search(part.begin(), part.end(), cand)) continue;
        auto trial = part;
        trial.insert(std::upper_bound(trial.begin(), trial.end(), cand), cand);
        const double value = axis == 0 ? partition_sum(R, trial, t, rho)
                                       : partition_sum(R, s, trial, rho);
        if (value - current > best_gain) {
          best_gain = value - current;
          best_point = cand;
          best_axis_s = axis == 0;
        }
      }
    }
    if (best_point < 0 || best_gain <= 1e-15 * std::max(1.0, current)) break;
    auto& part = best_axis_s ? s : t;
    part.insert(std::upper_bound(part.begin(), part.end(), best_point),
                best_point);
    current += best_gain;
  }
  return std::pow(std::max(current, full_sum), 1.0 / rho);
}

}  // namespace varlab
