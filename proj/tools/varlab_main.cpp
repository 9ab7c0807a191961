// Command-line surface for the small-noise density laboratory: fBm
// sampling checks, hypoellipticity probes, rate-function optimization,
// Monte Carlo density reports and the combined verdict table.

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <optional>

#include "varlab/common.hpp"
#include "varlab/report.hpp"

namespace {

using varlab::ExperimentConfig;
using varlab::json;

ExperimentConfig load_config(const std::string& path) {
  if (path.empty()) return ExperimentConfig{};
  std::ifstream in(path);
  if (!in) throw std::invalid_argument("cannot open config file: " + path);
  json j = json::parse(in);
  return ExperimentConfig::from_json(j);
}

void emit(const json& report, const std::string& out_path) {
  const std::string text = report.dump(2) + "\n";
  if (out_path.empty()) {
    std::cout << text;
  } else {
    varlab::write_text_file(out_path, text);
  }
}

struct CommonFlags {
  std::string config_path;
  std::string out_path;
  std::optional<std::string> system;
  std::optional<int> dim;
  std::optional<double> hurst;
  std::optional<std::vector<double>> x0;
  std::optional<int> grid_m;
  std::optional<int> substeps;
  std::optional<std::uint64_t> seed;
  std::optional<int> workers;
  std::optional<std::string> method;
  std::optional<std::string> cache_dir;

  void attach(CLI::App* cmd) {
    cmd->add_option("--config", config_path, "JSON configuration file");
    cmd->add_option("--out", out_path, "write the JSON report here");
    cmd->add_option("--system", system,
                    "elliptic-identity | elliptic-perturbed | scalar-linear | "
                    "heisenberg-sin | inline");
    cmd->add_option("--dim", dim, "state dimension for elliptic-identity");
    cmd->add_option("--H,--hurst", hurst, "Hurst exponent in (1/4, 1)");
    cmd->add_option("--x0", x0, "start point")->delimiter(',');
    cmd->add_option("--m,--grid-m", grid_m, "time grid steps");
    cmd->add_option("--substeps", substeps, "solver substeps per grid step");
    cmd->add_option("--seed", seed, "master seed");
    cmd->add_option("--workers", workers, "worker cap (0: hardware)");
    cmd->add_option("--method", method, "cholesky | circulant");
    cmd->add_option("--cache-dir", cache_dir,
                    "Gram cache directory (default: VARLAB_CACHE_DIR)");
  }

  void apply(ExperimentConfig& cfg) const {
    if (system) cfg.system = *system;
    if (dim) cfg.dim = *dim;
    if (hurst) cfg.hurst = *hurst;
    if (x0) cfg.x0 = *x0;
    if (grid_m) cfg.grid_m = *grid_m;
    if (substeps) cfg.substeps = *substeps;
    if (seed) cfg.seed = *seed;
    if (workers) cfg.workers = *workers;
    if (method) cfg.method = *method;
    if (cache_dir) cfg.cache_dir = *cache_dir;
  }
};

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"varlab: fractional-Brownian flows, Malliavin spectra and "
               "small-noise density asymptotics"};
  app.require_subcommand(1);
  app.set_version_flag("--version", varlab::version_string());

  CommonFlags common;

  auto* fbm = app.add_subcommand("fbm-check",
                                 "empirical covariance z-score report");
  CommonFlags fbm_common = common;
  fbm_common.attach(fbm);
  std::optional<std::int64_t> fbm_n;
  std::optional<double> fbm_threshold;
  fbm->add_option("--N", fbm_n, "sample paths");
  fbm->add_option("--z-threshold", fbm_threshold, "verdict threshold");

  auto* hypo = app.add_subcommand("hypo-check",
                                  "bracket-span eigenvalue minimum");
  CommonFlags hypo_common = common;
  hypo_common.attach(hypo);
  std::optional<int> hypo_level, hypo_trials;
  std::optional<std::vector<double>> hypo_box;
  std::optional<double> hypo_lambda_min;
  hypo->add_option("--level,-l", hypo_level, "bracket level");
  hypo->add_option("--trials", hypo_trials, "sampled points");
  hypo->add_option("--box", hypo_box, "sampling box lo,hi")->delimiter(',');
  hypo->add_option("--lambda-min", hypo_lambda_min, "verdict threshold");

  auto* rate = app.add_subcommand("rate",
                                  "Cameron-Martin energy minimization");
  CommonFlags rate_common = common;
  rate_common.attach(rate);
  std::optional<std::vector<double>> rate_y;
  std::optional<int> rate_restarts;
  std::optional<double> rate_delta_det;
  bool rate_restricted = false;
  std::string rate_csv;
  rate->add_option("--y", rate_y, "target point")->delimiter(',');
  rate->add_option("--restarts", rate_restarts, "multistart count");
  rate->add_flag("--restricted", rate_restricted,
                 "enforce the determinant floor");
  rate->add_option("--delta-det", rate_delta_det, "determinant floor");
  rate->add_option("--csv", rate_csv, "CSV output for batch y grids");

  auto* density = app.add_subcommand("density",
                                     "Monte Carlo density report at y");
  CommonFlags density_common = common;
  density_common.attach(density);
  std::optional<std::vector<double>> density_y, density_eps;
  std::optional<std::int64_t> density_n;
  std::string density_csv, density_plot;
  density->add_option("--y", density_y, "evaluation point")->delimiter(',');
  density->add_option("--eps-grid", density_eps, "noise levels, decreasing")
      ->delimiter(',');
  density->add_option("--N", density_n, "samples per eps");
  density->add_option("--csv", density_csv, "per-eps CSV output");
  density->add_option("--plot", density_plot, "(eps^2, v_hat) data file");

  auto* scaling = app.add_subcommand(
      "scaling", "inverse Malliavin eigenvalue scaling in eps");
  CommonFlags scaling_common = common;
  scaling_common.attach(scaling);
  std::optional<std::vector<double>> scaling_eps;
  std::optional<std::int64_t> scaling_n;
  std::optional<int> scaling_level;
  bool scaling_chain = false;
  std::string scaling_csv;
  scaling->add_option("--eps-grid", scaling_eps, "noise levels")->delimiter(',');
  scaling->add_option("--N", scaling_n, "samples per eps");
  scaling->add_flag("--chain", scaling_chain, "hypoelliptic chain probe");
  scaling->add_option("--level,-l", scaling_level, "bracket level");
  scaling->add_option("--csv", scaling_csv, "CSV output");

  auto* report = app.add_subcommand("report",
                                    "combined rate + density verdict table");
  CommonFlags report_common = common;
  report_common.attach(report);
  std::optional<std::vector<double>> report_y, report_eps;
  std::optional<std::int64_t> report_n;
  report->add_option("--y", report_y, "target point")->delimiter(',');
  report->add_option("--eps-grid", report_eps, "noise levels, decreasing")
      ->delimiter(',');
  report->add_option("--N", report_n, "samples per eps");

  CLI11_PARSE(app, argc, argv);

  try {
    if (fbm->parsed()) {
      auto cfg = load_config(fbm_common.config_path);
      fbm_common.apply(cfg);
      if (fbm_n) cfg.fbm.n_paths = *fbm_n;
      if (fbm_threshold) cfg.fbm.z_threshold = *fbm_threshold;
      const auto out = varlab::run_fbm_check(cfg);
      emit(out.report, fbm_common.out_path);
      return out.exit_code;
    }
    if (hypo->parsed()) {
      auto cfg = load_config(hypo_common.config_path);
      hypo_common.apply(cfg);
      if (hypo_level) cfg.hypo.level = *hypo_level;
      if (hypo_trials) cfg.hypo.trials = *hypo_trials;
      if (hypo_lambda_min) cfg.hypo.lambda_min = *hypo_lambda_min;
      if (hypo_box) {
        if (hypo_box->size() != 2)
          throw std::invalid_argument("--box needs lo,hi");
        cfg.hypo.box_lo = (*hypo_box)[0];
        cfg.hypo.box_hi = (*hypo_box)[1];
      }
      const auto out = varlab::run_hypo_check(cfg);
      emit(out.report, hypo_common.out_path);
      return out.exit_code;
    }
    if (rate->parsed()) {
      auto cfg = load_config(rate_common.config_path);
      rate_common.apply(cfg);
      if (rate_y) cfg.rate.y = *rate_y;
      if (rate_restarts) cfg.rate.restarts = *rate_restarts;
      if (rate_restricted) cfg.rate.restricted = true;
      if (rate_delta_det) cfg.rate.delta_det = *rate_delta_det;
      const auto out = varlab::run_rate(cfg);
      emit(out.report, rate_common.out_path);
      if (!rate_csv.empty() && out.report.contains("results")) {
        std::string csv = "y,d2,feasible,constraint_residual,det_gamma\n";
        for (const auto& r : out.report.at("results")) {
          std::string ystr;
          for (const auto& v : r.at("y"))
            ystr += (ystr.empty() ? "" : ";") + v.dump();
          csv += ystr + "," + r.at("d2").dump() + "," +
                 r.at("feasible").dump() + "," +
                 r.at("constraint_residual").dump() + "," +
                 r.at("det_gamma").dump() + "\n";
        }
        varlab::write_text_file(rate_csv, csv);
      }
      return out.exit_code;
    }
    if (density->parsed()) {
      auto cfg = load_config(density_common.config_path);
      density_common.apply(cfg);
      if (density_y) cfg.density.y = *density_y;
      if (density_eps) cfg.density.eps_grid = *density_eps;
      if (density_n) cfg.density.n_samples = *density_n;
      const auto out = varlab::run_density(cfg);
      emit(out.report, density_common.out_path);
      const auto& rows = out.report.at("density").at("rows");
      if (!density_csv.empty()) {
        std::string csv =
            "eps,p_hat,stderr,v_hat,v_ci,tail_unreliable,used_in_fit,blowups\n";
        for (const auto& r : rows)
          csv += r.at("eps").dump() + "," + r.at("p_hat").dump() + "," +
                 r.at("stderr").dump() + "," + r.at("v_hat").dump() + "," +
                 r.at("v_ci").dump() + "," + r.at("tail_unreliable").dump() +
                 "," + r.at("used_in_fit").dump() + "," +
                 r.at("blowups").dump() + "\n";
        varlab::write_text_file(density_csv, csv);
      }
      if (!density_plot.empty()) {
        std::string plot = "# eps^2 v_hat\n";
        for (const auto& r : rows) {
          const double eps = r.at("eps").get<double>();
          if (r.at("p_hat").get<double>() > 0.0)
            plot += json(eps * eps).dump() + " " + r.at("v_hat").dump() + "\n";
        }
        varlab::write_text_file(density_plot, plot);
      }
      return out.exit_code;
    }
    if (scaling->parsed()) {
      auto cfg = load_config(scaling_common.config_path);
      scaling_common.apply(cfg);
      if (scaling_eps) cfg.scaling.eps_grid = *scaling_eps;
      if (scaling_n) cfg.scaling.n_samples = *scaling_n;
      if (scaling_chain) cfg.scaling.chain = true;
      if (scaling_level) cfg.scaling.level = *scaling_level;
      const auto out = varlab::run_scaling(cfg);
      emit(out.report, scaling_common.out_path);
      return out.exit_code;
    }
    if (report->parsed()) {
      auto cfg = load_config(report_common.config_path);
      report_common.apply(cfg);
      if (report_y) {
        cfg.rate.y = *report_y;
        cfg.density.y = *report_y;
      }
      if (report_eps) cfg.density.eps_grid = *report_eps;
      if (report_n) cfg.density.n_samples = *report_n;
      const auto out = varlab::run_report(cfg);
      emit(out.report, report_common.out_path);
      return out.exit_code;
    }
  } catch (const varlab::NumericalError& err) {
    std::cerr << "numerical failure: " << err.what() << "\n";
    return 3;
  } catch (const std::invalid_argument& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const std::domain_error& err) {
    std::cerr << "usage error: " << err.what() << "\n";
    return 2;
  } catch (const json::exception& err) {
    std::cerr << "config error: " << err.what() << "\n";
    return 2;
  }
  return 2;
}
