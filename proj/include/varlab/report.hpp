#pragma once

#include <json.hpp>

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "varlab/fields.hpp"
#include "varlab/io.hpp"

namespace varlab {

/// Resolved experiment configuration. Every field has an explicit default
/// and the resolved tree is echoed into every emitted report.
struct ExperimentConfig {
  std::string system = "elliptic-identity";
  int dim = 0;  // state dimension hint for elliptic-identity
  std::vector<std::vector<std::string>> fields;  // inline expressions
  double hurst = 0.5;
  std::vector<double> x0;  // empty: origin of the system's state space
  int grid_m = 64;
  int substeps = 2;
  std::uint64_t seed = 20240915;
  int workers = 0;  // 0 picks the hardware concurrency
  std::string method = "cholesky";
  std::string cache_dir;  // empty: VARLAB_CACHE_DIR env var if set

  struct FbmCheck {
    std::int64_t n_paths = 100000;
    double z_threshold = 5.0;
    std::vector<std::pair<double, double>> pairs = {
        {0.25, 0.25}, {0.5, 0.5}, {1.0, 1.0},
        {0.25, 0.75}, {0.5, 1.0}, {0.25, 1.0}};
  } fbm;

  struct Hypo {
    int level = 3;
    double box_lo = 0.0;
    double box_hi = 6.2832;
    int trials = 200;
    double lambda_min = 1e-6;
  } hypo;

  struct Rate {
    std::vector<double> y;
    std::vector<std::vector<double>> y_grid;  // batch mode
    int restarts = 8;
    double tol_c = 1e-7;
    double tol_g = 1e-6;
    int substeps = 8;
    bool restricted = false;
    double delta_det = 1e-6;
  } rate;

  struct Density {
    std::vector<double> y;
    std::vector<double> eps_grid = {0.5, 0.4, 0.3, 0.25, 0.2};
    std::int64_t n_samples = 200000;
    double tol_factor = 0.15;
    int grid_m = 64;
    int substeps = 1;
  } density;

  struct Scaling {
    std::vector<double> eps_grid = {1.0, 0.5, 0.25, 0.125};
    std::int64_t n_samples = 500;
    int grid_m = 32;
    int substeps = 2;
    bool chain = false;  // hypoelliptic chain probe alongside the slopes
    int level = 0;       // 0: use hypo.level
  } scaling;

  /// Strictly validated parse: unknown keys are rejected.
  static ExperimentConfig from_json(const json& j);
  json resolved() const;

  std::shared_ptr<const VectorFieldSystem> make_fields() const;
  Eigen::VectorXd start_point(const VectorFieldSystem& sys) const;
  int effective_workers() const;
  std::string effective_cache_dir() const;
};

std::string version_string();

struct CommandOutput {
  json report;
  int exit_code = 0;  // 0 pass, 1 verdict fail, 3 numerical failure
};

CommandOutput run_fbm_check(const ExperimentConfig& cfg);
CommandOutput run_hypo_check(const ExperimentConfig& cfg);
CommandOutput run_rate(const ExperimentConfig& cfg);
CommandOutput run_density(const ExperimentConfig& cfg);
CommandOutput run_scaling(const ExperimentConfig& cfg);
/// Merges the rate results and the density report into the final verdict
/// table; the exit code reflects the sandwich checks.
CommandOutput run_report(const ExperimentConfig& cfg);

}  // namespace varlab
