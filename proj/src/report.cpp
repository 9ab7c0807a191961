#include "varlab/report.hpp"

#include <cstdlib>
#include <set>

#include "varlab/brackets.hpp"
#include "varlab/common.hpp"
#include "varlab/expr.hpp"

#ifndef VARLAB_VERSION
#define VARLAB_VERSION "0.0.0-unknown"
#endif

namespace varlab {

std::string version_string() { return std::string("varlab ") + VARLAB_VERSION; }

namespace {

void reject_unknown(const json& j, const std::set<std::string>& known,
                    const std::string& where) {
  for (const auto& [key, value] : j.items())
    if (!known.contains(key))
      throw std::invalid_argument("config: unknown key '" + key + "' in " +
                                  where);
}

template <class T>
void maybe(const json& j, const char* key, T& slot) {
  if (j.contains(key)) slot = j.at(key).get<T>();
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  ExperimentConfig cfg;
  reject_unknown(j,
                 {"system", "dim", "fields", "hurst", "x0", "grid_m",
                  "substeps", "seed", "workers", "method", "cache_dir",
                  "fbm_check", "hypo", "rate", "density", "scaling"},
                 "top level");
  maybe(j, "system", cfg.system);
  maybe(j, "dim", cfg.dim);
  maybe(j, "fields", cfg.fields);
  maybe(j, "hurst", cfg.hurst);
  maybe(j, "x0", cfg.x0);
  maybe(j, "grid_m", cfg.grid_m);
  maybe(j, "substeps", cfg.substeps);
  maybe(j, "seed", cfg.seed);
  maybe(j, "workers", cfg.workers);
  maybe(j, "method", cfg.method);
  maybe(j, "cache_dir", cfg.cache_dir);

  if (j.contains("fbm_check")) {
    const auto& b = j.at("fbm_check");
    reject_unknown(b, {"n_paths", "z_threshold", "pairs"}, "fbm_check");
    maybe(b, "n_paths", cfg.fbm.n_paths);
    maybe(b, "z_threshold", cfg.fbm.z_threshold);
    if (b.contains("pairs")) {
      cfg.fbm.pairs.clear();
      for (const auto& p : b.at("pairs"))
        cfg.fbm.pairs.emplace_back(p.at(0).get<double>(),
                                   p.at(1).get<double>());
    }
  }
  if (j.contains("hypo")) {
    const auto& b = j.at("hypo");
    reject_unknown(b, {"level", "box", "trials", "lambda_min"}, "hypo");
    maybe(b, "level", cfg.hypo.level);
    maybe(b, "trials", cfg.hypo.trials);
    maybe(b, "lambda_min", cfg.hypo.lambda_min);
    if (b.contains("box")) {
      cfg.hypo.box_lo = b.at("box").at(0).get<double>();
      cfg.hypo.box_hi = b.at("box").at(1).get<double>();
    }
  }
  if (j.contains("rate")) {
    const auto& b = j.at("rate");
    reject_unknown(b,
                   {"y", "y_grid", "restarts", "tol_c", "tol_g", "substeps",
                    "restricted", "delta_det"},
                   "rate");
    maybe(b, "y", cfg.rate.y);
    maybe(b, "y_grid", cfg.rate.y_grid);
    maybe(b, "restarts", cfg.rate.restarts);
    maybe(b, "tol_c", cfg.rate.tol_c);
    maybe(b, "tol_g", cfg.rate.tol_g);
    maybe(b, "substeps", cfg.rate.substeps);
    maybe(b, "restricted", cfg.rate.restricted);
    maybe(b, "delta_det", cfg.rate.delta_det);
  }
  if (j.contains("density")) {
    const auto& b = j.at("density");
    reject_unknown(
        b, {"y", "eps_grid", "n_samples", "tol_factor", "grid_m", "substeps"},
        "density");
    maybe(b, "y", cfg.density.y);
    maybe(b, "eps_grid", cfg.density.eps_grid);
    maybe(b, "n_samples", cfg.density.n_samples);
    maybe(b, "tol_factor", cfg.density.tol_factor);
    maybe(b, "grid_m", cfg.density.grid_m);
    maybe(b, "substeps", cfg.density.substeps);
  }
  if (j.contains("scaling")) {
    const auto& b = j.at("scaling");
    reject_unknown(
        b, {"eps_grid", "n_samples", "grid_m", "substeps", "chain", "level"},
        "scaling");
    maybe(b, "eps_grid", cfg.scaling.eps_grid);
    maybe(b, "n_samples", cfg.scaling.n_samples);
    maybe(b, "grid_m", cfg.scaling.grid_m);
    maybe(b, "substeps", cfg.scaling.substeps);
    maybe(b, "chain", cfg.scaling.chain);
    maybe(b, "level", cfg.scaling.level);
  }
  return cfg;
}

json ExperimentConfig::resolved() const {
  json j;
  j["system"] = system;
  j["dim"] = dim;
  j["fields"] = fields;
  j["hurst"] = hurst;
  j["x0"] = x0;
  j["grid_m"] = grid_m;
  j["substeps"] = substeps;
  j["seed"] = seed;
  j["workers"] = workers;
  j["method"] = method;
  j["cache_dir"] = cache_dir;
  j["fbm_check"] = {{"n_paths", fbm.n_paths},
                    {"z_threshold", fbm.z_threshold},
                    {"pairs", fbm.pairs}};
  j["hypo"] = {{"level", hypo.level},
               {"box", {hypo.box_lo, hypo.box_hi}},
               {"trials", hypo.trials},
               {"lambda_min", hypo.lambda_min}};
  j["rate"] = {{"y", rate.y},
               {"y_grid", rate.y_grid},
               {"restarts", rate.restarts},
               {"tol_c", rate.tol_c},
               {"tol_g", rate.tol_g},
               {"substeps", rate.substeps},
               {"restricted", rate.restricted},
               {"delta_det", rate.delta_det}};
  j["density"] = {{"y", density.y},
                  {"eps_grid", density.eps_grid},
                  {"n_samples", density.n_samples},
                  {"tol_factor", density.tol_factor},
                  {"grid_m", density.grid_m},
                  {"substeps", density.substeps}};
  j["scaling"] = {{"eps_grid", scaling.eps_grid},
                  {"n_samples", scaling.n_samples},
                  {"grid_m", scaling.grid_m},
                  {"substeps", scaling.substeps},
                  {"chain", scaling.chain},
                  {"level", scaling.level}};
  return j;
}

std::shared_ptr<const VectorFieldSystem> ExperimentConfig::make_fields() const {
  if (system == "inline") {
    if (fields.empty())
      throw std::invalid_argument("config: inline system needs 'fields'");
    return make_expr_system(fields);
  }
  return make_system(system, dim);
}

Eigen::VectorXd ExperimentConfig::start_point(
    const VectorFieldSystem& sys) const {
  if (x0.empty()) return Eigen::VectorXd::Zero(sys.state_dim());
  if (static_cast<int>(x0.size()) != sys.state_dim())
    throw std::invalid_argument("config: x0 has the wrong dimension");
  return Eigen::Map<const Eigen::VectorXd>(x0.data(),
                                           static_cast<Eigen::Index>(x0.size()));
}

int ExperimentConfig::effective_workers() const {
  return workers > 0 ? workers : default_workers();
}

std::string ExperimentConfig::effective_cache_dir() const {
  if (!cache_dir.empty()) return cache_dir;
  const char* env = std::getenv("VARLAB_CACHE_DIR");
  return env ? env : "";
}

namespace {

json base_report(const ExperimentConfig& cfg) {
  json j;
  j["version"] = version_string();
  j["config"] = cfg.resolved();
  return j;
}

Eigen::VectorXd vector_from(const std::vector<double>& v, const char* what) {
  if (v.empty())
    throw std::invalid_argument(std::string("config: missing ") + what);
  return Eigen::Map<const Eigen::VectorXd>(v.data(),
                                           static_cast<Eigen::Index>(v.size()));
}

RateOptions rate_options(const ExperimentConfig& cfg) {
  RateOptions opts;
  opts.restarts = cfg.rate.restarts;
  opts.tol_c = cfg.rate.tol_c;
  opts.tol_g = cfg.rate.tol_g;
  opts.substeps = cfg.rate.substeps;
  opts.seed = cfg.seed;
  opts.workers = cfg.effective_workers();
  opts.cache_dir = cfg.effective_cache_dir();
  return opts;
}

}  // namespace

CommandOutput run_fbm_check(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const GridSpec spec(cfg.grid_m, cfg.hurst, 1);
  const auto ens = sample_fbm(spec, cfg.fbm.n_paths, cfg.seed,
                              sample_method_from_string(cfg.method),
                              cfg.effective_workers());
  const auto rows = empirical_covariance_report(ens, cfg.fbm.pairs);
  double zmax = 0.0;
  for (const auto& r : rows) zmax = std::max(zmax, std::fabs(r.z));
  out.report["rows"] = to_json(rows);
  out.report["max_abs_z"] = zmax;
  out.report["fell_back"] = ens.fell_back;
  out.report["pass"] = zmax <= cfg.fbm.z_threshold;
  out.exit_code = zmax <= cfg.fbm.z_threshold ? 0 : 1;
  return out;
}

CommandOutput run_hypo_check(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const auto sys = cfg.make_fields();
  const BracketTable table(sys, cfg.hypo.level);
  auto points = sample_box(sys->state_dim(), cfg.hypo.box_lo, cfg.hypo.box_hi,
                           cfg.hypo.trials, cfg.seed);
  points.push_back(cfg.start_point(*sys));
  const auto res =
      hypo_check_polished(table, points, cfg.hypo.box_lo, cfg.hypo.box_hi);
  out.report["lambda_hat"] = res.lambda_hat;
  out.report["argmin"] = std::vector<double>(
      res.argmin.data(), res.argmin.data() + res.argmin.size());
  out.report["sampled_only"] = res.sampled_only;
  out.report["words"] = table.n_words();
  out.report["pass"] = res.lambda_hat > cfg.hypo.lambda_min;
  out.exit_code = res.lambda_hat > cfg.hypo.lambda_min ? 0 : 1;
  return out;
}

CommandOutput run_rate(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const auto sys = cfg.make_fields();
  const Eigen::VectorXd x0 = cfg.start_point(*sys);
  const GridSpec spec(cfg.grid_m, cfg.hurst, sys->driver_dim());
  const auto opts = rate_options(cfg);

  auto solve_one = [&](const Eigen::VectorXd& y) {
    return cfg.rate.restricted
               ? minimize_energy_restricted(y, *sys, x0, spec,
                                            cfg.rate.delta_det, opts)
               : minimize_energy(y, *sys, x0, spec, opts);
  };

  if (!cfg.rate.y_grid.empty()) {
    json results = json::array();
    bool all_feasible = true;
    for (const auto& yv : cfg.rate.y_grid) {
      const auto res = solve_one(vector_from(yv, "rate.y_grid entry"));
      all_feasible = all_feasible && res.feasible;
      results.push_back(to_json(res));
    }
    out.report["results"] = std::move(results);
    out.exit_code = all_feasible ? 0 : 1;
    return out;
  }

  const auto res = solve_one(vector_from(cfg.rate.y, "rate.y"));
  out.report["result"] = to_json(res);
  out.exit_code = res.feasible ? 0 : 1;
  return out;
}

namespace {

VaradhanOptions varadhan_options(const ExperimentConfig& cfg) {
  VaradhanOptions vopts;
  vopts.n_samples = cfg.density.n_samples;
  vopts.tol_factor = cfg.density.tol_factor;
  vopts.endpoint.grid_m = cfg.density.grid_m;
  vopts.endpoint.substeps = cfg.density.substeps;
  vopts.endpoint.method = sample_method_from_string(cfg.method);
  vopts.endpoint.workers = cfg.effective_workers();
  return vopts;
}

}  // namespace

CommandOutput run_density(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const auto sys = cfg.make_fields();
  const Eigen::VectorXd x0 = cfg.start_point(*sys);
  const Eigen::VectorXd y = vector_from(
      cfg.density.y.empty() ? cfg.rate.y : cfg.density.y, "density.y");
  const GridSpec spec(cfg.grid_m, cfg.hurst, sys->driver_dim());
  const auto opts = rate_options(cfg);

  const auto plain = minimize_energy(y, *sys, x0, spec, opts);
  const auto restricted =
      minimize_energy_restricted(y, *sys, x0, spec, cfg.rate.delta_det, opts);
  const auto report = varadhan_report(*sys, x0, cfg.hurst, y,
                                      cfg.density.eps_grid, cfg.seed, plain,
                                      restricted, varadhan_options(cfg));
  out.report["rate"] = to_json(plain);
  out.report["rate_restricted"] = to_json(restricted);
  out.report["density"] = to_json(report);
  out.report["rough_drive_warning"] = cfg.hurst < 1.0 / 3.0;
  out.exit_code = (report.upper_ok && report.lower_ok) ? 0 : 1;
  return out;
}

CommandOutput run_scaling(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const auto sys = cfg.make_fields();
  const Eigen::VectorXd x0 = cfg.start_point(*sys);

  ScalingOptions sopts;
  sopts.grid_m = cfg.scaling.grid_m;
  sopts.substeps = cfg.scaling.substeps;
  sopts.method = sample_method_from_string(cfg.method);
  sopts.workers = cfg.effective_workers();
  const auto report = inv_gamma_scaling(*sys, x0, cfg.hurst,
                                        cfg.scaling.eps_grid,
                                        cfg.scaling.n_samples, cfg.seed, sopts);
  out.report["scaling"] = to_json(report);
  out.report["rough_drive_warning"] = cfg.hurst < 1.0 / 3.0;

  if (cfg.scaling.chain) {
    const int level = cfg.scaling.level > 0 ? cfg.scaling.level : cfg.hypo.level;
    const BracketTable table(sys, level);
    const GridSpec spec(cfg.scaling.grid_m, cfg.hurst, sys->driver_dim());
    const GramForm gram = gram_matrix(spec);
    const FbmSampler sampler(spec, sopts.method);

    json chain = json::array();
    for (double eps : cfg.scaling.eps_grid) {
      std::int64_t held = 0;
      std::vector<double> lam_m(static_cast<std::size_t>(cfg.scaling.n_samples));
      std::vector<char> ok(static_cast<std::size_t>(cfg.scaling.n_samples));
      parallel_for(static_cast<std::size_t>(cfg.scaling.n_samples),
                   sopts.workers, [&](std::size_t i) {
        Drive drive;
        drive.spec = spec;
        drive.scale = eps;
        drive.values.resize(spec.d, spec.m + 1);
        for (int c = 0; c < spec.d; ++c) {
          std::vector<double> path(static_cast<std::size_t>(spec.m + 1));
          sampler.sample_path(cfg.seed, static_cast<std::int64_t>(i), c,
                              std::span<double>(path));
          for (int jn = 0; jn <= spec.m; ++jn)
            drive.values(c, jn) = path[static_cast<std::size_t>(jn)];
        }
        FlowOptions fopts;
        fopts.substeps = cfg.scaling.substeps;
        const auto traj = solve_flow(drive, *sys, x0, fopts);
        const auto sample = hypo_chain_sample(traj, *sys, table, gram, eps);
        ok[i] = sample.holds ? 1 : 0;
        lam_m[i] = sample.lam_m;
      });
      for (char o : ok) held += o;
      std::sort(lam_m.begin(), lam_m.end());
      chain.push_back(
          json{{"eps", eps},
               {"holds_fraction",
                static_cast<double>(held) / static_cast<double>(cfg.scaling.n_samples)},
               {"lam_m_median", lam_m[lam_m.size() / 2]}});
    }
    out.report["chain"] = std::move(chain);
  }

  out.exit_code = 0;
  return out;
}

CommandOutput run_report(const ExperimentConfig& cfg) {
  CommandOutput out;
  out.report = base_report(cfg);
  const auto sys = cfg.make_fields();
  const Eigen::VectorXd x0 = cfg.start_point(*sys);
  const Eigen::VectorXd y = vector_from(
      cfg.density.y.empty() ? cfg.rate.y : cfg.density.y, "density.y");
  const GridSpec spec(cfg.grid_m, cfg.hurst, sys->driver_dim());
  const auto opts = rate_options(cfg);

  const auto plain = minimize_energy(y, *sys, x0, spec, opts);
  const auto restricted =
      minimize_energy_restricted(y, *sys, x0, spec, cfg.rate.delta_det, opts);
  const auto density = varadhan_report(*sys, x0, cfg.hurst, y,
                                       cfg.density.eps_grid, cfg.seed, plain,
                                       restricted, varadhan_options(cfg));

  out.report["rate"] = to_json(plain);
  out.report["rate_restricted"] = to_json(restricted);
  out.report["density"] = to_json(density);

  json verdicts;
  const bool inclusion =
      !plain.feasible || !restricted.feasible || plain.d2 <= restricted.d2 + 1e-9;
  verdicts["d2_le_d2_restricted"] = inclusion;
  if (!plain.feasible) {
    verdicts["unreachable_target"] = true;
    verdicts["note"] =
        "rate returned the infinity sentinel: density decays faster than "
        "any exp(-c/eps^2) scale tested";
    out.report["verdicts"] = std::move(verdicts);
    out.exit_code = 0;
    return out;
  }
  verdicts["unreachable_target"] = false;
  verdicts["upper_ok"] = density.upper_ok;
  verdicts["lower_ok"] = density.lower_ok;
  verdicts["v0"] = density.v0;
  verdicts["minus_d2"] = -plain.d2;
  verdicts["minus_d2_restricted"] = -restricted.d2;
  verdicts["tol"] = density.tol;
  verdicts["corollary_bounded"] = density.corollary_bounded;
  const bool pass = density.upper_ok && density.lower_ok && inclusion;
  verdicts["pass"] = pass;
  out.report["verdicts"] = std::move(verdicts);
  out.exit_code = pass ? 0 : 1;
  return out;
}

}  // namespace varlab
