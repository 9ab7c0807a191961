#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include "varlab/report.hpp"

using namespace varlab;

namespace {

int run_cli(const std::string& args) {
  const std::string cmd =
      std::string(VARLAB_CLI_PATH) + " " + args + " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WEXITSTATUS(status);
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream out;
  out << in.rdbuf();
  return out.str();
}

}  // namespace

TEST_CASE("config round-trips through resolved JSON") {
  ExperimentConfig cfg;
  cfg.system = "heisenberg-sin";
  cfg.hurst = 0.7;
  cfg.rate.y = {0.1, 0.2, 0.3};
  cfg.density.eps_grid = {0.5, 0.25};
  const json j = cfg.resolved();
  const auto back = ExperimentConfig::from_json(j);
  CHECK(back.resolved() == j);
}

TEST_CASE("config rejects unknown keys and bad shapes") {
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(json{{"sytem", "x"}}),
                  std::invalid_argument);
  CHECK_THROWS_AS((void)ExperimentConfig::from_json(
                      json{{"rate", {{"restartz", 3}}}}),
                  std::invalid_argument);
  const auto cfg = ExperimentConfig::from_json(
      json{{"system", "elliptic-identity"}, {"dim", 7}});
  CHECK(cfg.dim == 7);
}

TEST_CASE("inline expression systems come out of the config") {
  ExperimentConfig cfg;
  cfg.system = "inline";
  cfg.fields = {{"1", "0"}, {"0", "cos(x1)"}};
  const auto sys = cfg.make_fields();
  CHECK(sys->state_dim() == 2);
  CHECK(sys->driver_dim() == 2);
  Eigen::VectorXd x = Eigen::VectorXd::Zero(2);
  CHECK(sys->field(1, x)(1) == doctest::Approx(1.0));
}

TEST_CASE("fbm-check passes on defaults and flags corrupted thresholds") {
  ExperimentConfig cfg;
  cfg.grid_m = 32;
  cfg.fbm.n_paths = 20000;
  cfg.seed = 77;
  const auto ok = run_fbm_check(cfg);
  CHECK(ok.exit_code == 0);
  CHECK(ok.report.at("pass").get<bool>());
  CHECK(ok.report.at("version").get<std::string>().find("varlab") == 0);

  cfg.fbm.z_threshold = 1e-4;  // no finite sample clears this bar
  const auto bad = run_fbm_check(cfg);
  CHECK(bad.exit_code == 1);
}

TEST_CASE("hypo-check verdicts across levels") {
  ExperimentConfig cfg;
  cfg.system = "elliptic-identity";
  cfg.dim = 2;
  cfg.hypo.level = 1;
  cfg.hypo.trials = 20;
  const auto ok = run_hypo_check(cfg);
  CHECK(ok.exit_code == 0);
  CHECK(ok.report.at("lambda_hat").get<double>() ==
        doctest::Approx(1.0).epsilon(1e-10));

  cfg.system = "heisenberg-sin";
  cfg.dim = 0;
  cfg.hypo.level = 2;
  cfg.hypo.trials = 100;
  const auto fail = run_hypo_check(cfg);
  CHECK(fail.exit_code == 1);
  CHECK(fail.report.at("lambda_hat").get<double>() < 1e-3);

  cfg.hypo.level = 3;
  const auto pass3 = run_hypo_check(cfg);
  CHECK(pass3.exit_code == 0);
  CHECK(pass3.report.at("lambda_hat").get<double>() >= 0.15);
}

TEST_CASE("rate command reports the scalar-linear oracle") {
  ExperimentConfig cfg;
  cfg.system = "scalar-linear";
  cfg.x0 = {1.0};
  cfg.grid_m = 16;
  cfg.rate.y = {2.0};
  cfg.rate.restarts = 2;
  const auto out = run_rate(cfg);
  CHECK(out.exit_code == 0);
  const double d2 = out.report.at("result").at("d2").get<double>();
  CHECK(std::fabs(d2 - 0.5 * std::log(2.0) * std::log(2.0)) < 1e-3);
}

TEST_CASE("rate batch mode walks a target grid") {
  ExperimentConfig cfg;
  cfg.system = "elliptic-identity";
  cfg.dim = 1;
  cfg.grid_m = 8;
  cfg.rate.y_grid = {{0.5}, {1.0}, {2.0}};
  cfg.rate.restarts = 1;
  const auto out = run_rate(cfg);
  CHECK(out.exit_code == 0);
  REQUIRE(out.report.at("results").size() == 3);
  for (std::size_t i = 0; i < 3; ++i) {
    const double a = cfg.rate.y_grid[i][0];
    CHECK(std::fabs(out.report.at("results").at(i).at("d2").get<double>() -
                    0.5 * a * a) < 1e-3);
  }
}

TEST_CASE("trajectory and report writers produce parseable artifacts") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "varlab_writers";
  fs::create_directories(dir);

  const GridSpec spec(8, 0.5, 2);
  const auto sys = make_system("heisenberg-sin");
  const auto ens = sample_fbm(spec, 1, 5, SampleMethod::cholesky);
  FlowOptions fopts;
  fopts.substeps = 2;
  const auto traj = solve_flow(drive_from_ensemble(ens, 0, 0.5), *sys,
                               Eigen::VectorXd::Zero(3), fopts);

  const auto bin = (dir / "traj.bin").string();
  write_trajectory_binary(bin, traj);
  const auto [header, payload] = read_binary_payload(bin);
  CHECK(header.at("nodes").get<int>() == traj.refined_nodes());
  CHECK(payload.size() ==
        std::size_t(traj.refined_nodes()) * (1 + 3 + 9));
  CHECK(payload[0] == 0.0);  // first time stamp

  write_trajectory_csv((dir / "traj.csv").string(), traj, true);
  CHECK(fs::file_size(dir / "traj.csv") > 0);

  ScalingOptions sopts;
  sopts.grid_m = 16;
  const auto scaling = inv_gamma_scaling(*make_system("elliptic-identity", 1),
                                         Eigen::VectorXd::Zero(1), 0.5,
                                         {1.0, 0.5}, 100, 1, sopts);
  write_scaling_csv((dir / "scaling.csv").string(), scaling);
  CHECK(fs::file_size(dir / "scaling.csv") > 0);
  fs::remove_all(dir);
}

TEST_CASE("report runs are byte-identical under a fixed seed") {
  ExperimentConfig cfg;
  cfg.system = "scalar-linear";
  cfg.x0 = {1.0};
  cfg.grid_m = 16;
  cfg.seed = 31337;
  cfg.workers = 2;
  cfg.rate.y = {2.0};
  cfg.rate.restarts = 2;
  cfg.density.eps_grid = {0.5, 0.4};
  cfg.density.n_samples = 4000;
  cfg.density.grid_m = 16;

  const auto a = run_report(cfg);
  cfg.workers = 1;  // worker count must not leak into the bytes
  const auto b = run_report(cfg);
  json ra = a.report, rb = b.report;
  ra["config"].erase("workers");
  rb["config"].erase("workers");
  CHECK(ra.dump() == rb.dump());
  CHECK(a.report.at("verdicts").contains("d2_le_d2_restricted"));
}

TEST_CASE("report marks unreachable targets instead of failing") {
  ExperimentConfig cfg;
  cfg.system = "inline";
  cfg.fields = {{"1", "0"}};  // single constant field in the plane
  cfg.x0 = {0.0, 0.0};
  cfg.grid_m = 8;
  cfg.rate.y = {0.2, 0.5};
  cfg.rate.restarts = 1;
  cfg.density.eps_grid = {0.5, 0.4};
  cfg.density.n_samples = 2000;
  cfg.density.grid_m = 16;
  const auto out = run_report(cfg);
  CHECK(out.exit_code == 0);
  CHECK(out.report.at("verdicts").at("unreachable_target").get<bool>());
  CHECK(out.report.at("rate").at("d2").get<std::string>() == "infinity");
}

TEST_CASE("binary smoke: exit codes follow the pass/usage contract") {
  CHECK(run_cli("--version") == 0);
  CHECK(run_cli("fbm-check --m 16 --N 2000 --seed 5") == 0);
  CHECK(run_cli("fbm-check --m 16 --N 2000 --seed 5 --z-threshold 1e-6") == 1);
  CHECK(run_cli("fbm-check --m 16 --N 0") == 2);       // usage error
  CHECK(run_cli("fbm-check --H 1.7 --N 2000") == 2);   // bad Hurst
  CHECK(run_cli("definitely-not-a-command") != 0);
  CHECK(run_cli("hypo-check --system heisenberg-sin -l 3 --trials 20") == 0);
  CHECK(run_cli("hypo-check --system heisenberg-sin -l 2 --trials 50") == 1);
}

TEST_CASE("ensemble binary container round-trips") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "varlab_io_test";
  fs::create_directories(dir);
  const auto path = (dir / "ens.bin").string();

  const GridSpec spec(16, 0.65, 2);
  const auto ens = sample_fbm(spec, 32, 99, SampleMethod::circulant);
  write_ensemble_binary(path, ens);
  const auto back = read_ensemble_binary(path);
  CHECK(back.spec == ens.spec);
  CHECK(back.seed == ens.seed);
  CHECK(back.method == ens.method);
  CHECK(back.paths == ens.paths);  // bit-exact payload

  write_ensemble_csv((dir / "ens.csv").string(), ens);
  CHECK(fs::file_size(dir / "ens.csv") > 0);
  fs::remove_all(dir);
}

TEST_CASE("step coefficients round-trip through JSON") {
  const GridSpec spec(8, 0.45, 2);
  Eigen::MatrixXd psi(2, 8);
  for (int c = 0; c < 2; ++c)
    for (int j = 0; j < 8; ++j) psi(c, j) = 0.1 * c - 0.3 * j;
  const StepCoeffs coeffs(spec, psi);
  const auto back = step_coeffs_from_json(to_json(coeffs));
  CHECK(back.spec == spec);
  CHECK((back.psi - psi).norm() == 0.0);
}

TEST_CASE("gram cache honors the configured directory") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "varlab_cache_test";
  fs::remove_all(dir);

  ExperimentConfig cfg;
  cfg.system = "elliptic-identity";
  cfg.dim = 1;
  cfg.grid_m = 8;
  cfg.cache_dir = dir.string();
  cfg.rate.y = {0.5};
  cfg.rate.restarts = 1;
  const auto out = run_rate(cfg);
  CHECK(out.exit_code == 0);
  CHECK(fs::exists(dir));
  CHECK(!fs::is_empty(dir));
  fs::remove_all(dir);
}

TEST_CASE("binary smoke: config file plus CLI override, output to file") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "varlab_cli_test";
  fs::create_directories(dir);
  const auto cfg_path = dir / "config.json";
  const auto out_path = dir / "out.json";
  {
    std::ofstream cfg(cfg_path);
    cfg << R"({"system": "scalar-linear", "x0": [1.0], "grid_m": 16,
               "rate": {"y": [2.0], "restarts": 2}})";
  }
  const int code = run_cli("rate --config " + cfg_path.string() +
                           " --seed 99 --out " + out_path.string());
  CHECK(code == 0);
  const json report = json::parse(slurp(out_path));
  CHECK(report.at("config").at("seed").get<std::uint64_t>() == 99);
  CHECK(std::fabs(report.at("result").at("d2").get<double>() -
                  0.5 * std::log(2.0) * std::log(2.0)) < 1e-3);
  fs::remove_all(dir);
}

TEST_CASE("binary smoke: widespread blow-up exits with the numerical code") {
  namespace fs = std::filesystem;
  const auto dir = fs::temp_directory_path() / "varlab_cli_blowup";
  fs::create_directories(dir);
  const auto cfg_path = dir / "config.json";
  {
    // Quadratic growth explodes in finite time for a sizeable fraction
    // of unit-scale drives.
    std::ofstream cfg(cfg_path);
    cfg << R"({"system": "inline", "fields": [["x1^2"]], "x0": [1.0],
               "seed": 11,
               "rate": {"y": [1.1], "restarts": 1},
               "density": {"eps_grid": [1.0], "n_samples": 1000,
                           "grid_m": 16}})";
  }
  CHECK(run_cli("density --config " + cfg_path.string()) == 3);
  fs::remove_all(dir);
}
