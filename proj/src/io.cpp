#include "varlab/io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "varlab/common.hpp"

static_assert(std::endian::native == std::endian::little,
              "binary payloads are written as little-endian doubles");

namespace varlab {

json to_json(const GridSpec& spec) {
  return json{{"m", spec.m}, {"hurst", spec.hurst}, {"d", spec.d}};
}

GridSpec grid_spec_from_json(const json& j) {
  return GridSpec(j.at("m").get<int>(), j.at("hurst").get<double>(),
                  j.at("d").get<int>());
}

json to_json(const StepCoeffs& psi) {
  json rows = json::array();
  for (int c = 0; c < psi.spec.d; ++c) {
    json row = json::array();
    for (int k = 0; k < psi.spec.m; ++k) row.push_back(psi.psi(c, k));
    rows.push_back(std::move(row));
  }
  return json{{"spec", to_json(psi.spec)}, {"psi", std::move(rows)}};
}

StepCoeffs step_coeffs_from_json(const json& j) {
  const GridSpec spec = grid_spec_from_json(j.at("spec"));
  Eigen::MatrixXd psi(spec.d, spec.m);
  const auto& rows = j.at("psi");
  if (static_cast<int>(rows.size()) != spec.d)
    throw std::invalid_argument("step coeffs: wrong component count");
  for (int c = 0; c < spec.d; ++c) {
    const auto& row = rows.at(static_cast<std::size_t>(c));
    if (static_cast<int>(row.size()) != spec.m)
      throw std::invalid_argument("step coeffs: wrong step count");
    for (int k = 0; k < spec.m; ++k)
      psi(c, k) = row.at(static_cast<std::size_t>(k)).get<double>();
  }
  return StepCoeffs(spec, std::move(psi));
}

json to_json(const RateResult& r) {
  json out;
  out["y"] = std::vector<double>(r.y.data(), r.y.data() + r.y.size());
  out["d2"] = std::isfinite(r.d2) ? json(r.d2) : json("infinity");
  out["feasible"] = r.feasible;
  out["constraint_residual"] = r.constraint_residual;
  out["grad_norm"] = r.grad_norm;
  out["det_gamma"] = r.det_gamma;
  out["delta_det"] = r.delta_det;
  out["restarts_used"] = r.restarts_used;
  out["refinement_delta"] = r.refinement_delta;
  out["psi_star"] = to_json(r.psi_star);
  return out;
}

json to_json(const DensityReport& r) {
  json rows = json::array();
  for (const auto& row : r.rows) {
    rows.push_back(json{{"eps", row.eps},
                        {"p_hat", row.p_hat},
                        {"stderr", row.stderr_est},
                        {"v_hat", row.v_hat},
                        {"v_ci", row.v_ci},
                        {"p_half_bandwidth", row.p_half_bw},
                        {"p_1p5_bandwidth", row.p_1p5_bw},
                        {"blowups", row.blowups},
                        {"tail_unreliable", row.tail_unreliable},
                        {"used_in_fit", row.used_in_fit},
                        {"corollary_stat", row.corollary_stat}});
  }
  json out;
  out["y"] = std::vector<double>(r.y.data(), r.y.data() + r.y.size());
  out["rows"] = std::move(rows);
  out["d2"] = r.d2;
  out["d2_restricted"] = r.d2_restricted;
  out["v0"] = r.v0;
  out["v0_ci"] = r.v0_ci;
  out["c2"] = r.c2;
  out["free_v0"] = r.free_v0;
  out["free_c"] = r.free_c;
  out["fit_points"] = r.fit_points;
  out["no_limit"] = r.no_limit;
  out["tol"] = r.tol;
  out["upper_ok"] = r.upper_ok;
  out["lower_ok"] = r.lower_ok;
  out["corollary_margin"] = r.corollary_margin;
  out["corollary_bounded"] = r.corollary_bounded;
  return out;
}

json to_json(const ScalingReport& r) {
  json quantiles = json::array();
  for (std::size_t e = 0; e < r.eps_grid.size(); ++e)
    quantiles.push_back(json{{"eps", r.eps_grid[e]},
                             {"median", r.quantiles[e][0]},
                             {"q90", r.quantiles[e][1]},
                             {"q99", r.quantiles[e][2]}});
  return json{{"quantiles", std::move(quantiles)},
              {"slope", r.slope},
              {"slope_stderr", r.slope_stderr},
              {"degenerate_warning", r.degenerate_warning}};
}

json to_json(const std::vector<CovarianceCheckRow>& rows) {
  json out = json::array();
  for (const auto& row : rows)
    out.push_back(json{{"s", row.s},
                       {"t", row.t},
                       {"empirical", row.empirical},
                       {"exact", row.exact},
                       {"z", row.z}});
  return out;
}

namespace {
constexpr char kMagic[9] = "VLABBIN1";
}

void write_binary_payload(const std::string& path, const json& header,
                          std::span<const double> payload) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const std::string head = header.dump();
  const std::uint64_t head_len = head.size();
  out.write(kMagic, 8);
  out.write(reinterpret_cast<const char*>(&head_len), sizeof(head_len));
  out.write(head.data(), static_cast<std::streamsize>(head.size()));
  out.write(reinterpret_cast<const char*>(payload.data()),
            static_cast<std::streamsize>(payload.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write: " + path);
}

std::pair<json, std::vector<double>> read_binary_payload(
    const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot open: " + path);
  char magic[8];
  in.read(magic, 8);
  if (!in || std::memcmp(magic, kMagic, 8) != 0)
    throw std::runtime_error("bad magic in " + path);
  std::uint64_t head_len = 0;
  in.read(reinterpret_cast<char*>(&head_len), sizeof(head_len));
  std::string head(head_len, '\0');
  in.read(head.data(), static_cast<std::streamsize>(head_len));
  if (!in) throw std::runtime_error("truncated header in " + path);
  json header = json::parse(head);

  std::vector<double> payload;
  const auto pos = in.tellg();
  in.seekg(0, std::ios::end);
  const auto bytes = in.tellg() - pos;
  in.seekg(pos);
  payload.resize(static_cast<std::size_t>(bytes) / sizeof(double));
  in.read(reinterpret_cast<char*>(payload.data()),
          static_cast<std::streamsize>(payload.size() * sizeof(double)));
  return {std::move(header), std::move(payload)};
}

void write_ensemble_binary(const std::string& path, const FbmEnsemble& ens) {
  json header;
  header["spec"] = to_json(ens.spec);
  header["seed"] = ens.seed;
  header["method"] = to_string(ens.method);
  header["fell_back"] = ens.fell_back;
  header["n_paths"] = ens.n_paths;
  write_binary_payload(path, header, ens.paths);
}

FbmEnsemble read_ensemble_binary(const std::string& path) {
  auto [header, payload] = read_binary_payload(path);
  FbmEnsemble ens;
  ens.spec = grid_spec_from_json(header.at("spec"));
  ens.seed = header.at("seed").get<std::uint64_t>();
  ens.method = sample_method_from_string(header.at("method").get<std::string>());
  ens.fell_back = header.at("fell_back").get<bool>();
  ens.n_paths = header.at("n_paths").get<std::int64_t>();
  const std::size_t expect = static_cast<std::size_t>(ens.n_paths) *
                             static_cast<std::size_t>(ens.spec.d) *
                             static_cast<std::size_t>(ens.spec.m + 1);
  if (payload.size() != expect)
    throw std::runtime_error("ensemble payload size mismatch in " + path);
  ens.paths = std::move(payload);
  return ens;
}

namespace {

std::string format_double(double v) {
  std::ostringstream out;
  out.precision(17);
  out << v;
  return out.str();
}

}  // namespace

void write_ensemble_csv(const std::string& path, const FbmEnsemble& ens) {
  if (ens.n_paths > 10000)
    throw std::invalid_argument("write_ensemble_csv: ensemble too large, use binary");
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "path,component";
  for (int j = 0; j <= ens.spec.m; ++j) out << ",t" << j;
  out << "\n";
  for (std::int64_t i = 0; i < ens.n_paths; ++i)
    for (int c = 0; c < ens.spec.d; ++c) {
      out << i << "," << c;
      for (int j = 0; j <= ens.spec.m; ++j)
        out << "," << format_double(ens.value(i, c, j));
      out << "\n";
    }
}

void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          bool with_jacobian) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  const auto n = traj.states.rows();
  out << "t";
  for (Eigen::Index k = 0; k < n; ++k) out << ",x" << k + 1;
  if (with_jacobian && traj.with_jacobian)
    for (Eigen::Index a = 0; a < n; ++a)
      for (Eigen::Index b = 0; b < n; ++b) out << ",J" << a + 1 << b + 1;
  out << "\n";
  for (int node = 0; node < traj.refined_nodes(); ++node) {
    out << format_double(traj.times(node));
    for (Eigen::Index k = 0; k < n; ++k)
      out << "," << format_double(traj.states(k, node));
    if (with_jacobian && traj.with_jacobian)
      for (Eigen::Index a = 0; a < n; ++a)
        for (Eigen::Index b = 0; b < n; ++b)
          out << ","
              << format_double(traj.jac[static_cast<std::size_t>(node)](a, b));
    out << "\n";
  }
}

void write_trajectory_binary(const std::string& path, const Trajectory& traj) {
  const auto n = traj.states.rows();
  const int nodes = traj.refined_nodes();
  json header;
  header["spec"] = to_json(traj.spec);
  header["substeps"] = traj.substeps;
  header["state_dim"] = n;
  header["nodes"] = nodes;
  header["with_jacobian"] = traj.with_jacobian;
  std::vector<double> payload;
  payload.reserve(static_cast<std::size_t>(nodes) *
                  (1 + static_cast<std::size_t>(n) *
                           (traj.with_jacobian ? n + 1 : 1)));
  for (int k = 0; k < nodes; ++k) payload.push_back(traj.times(k));
  for (int k = 0; k < nodes; ++k)
    for (Eigen::Index i = 0; i < n; ++i) payload.push_back(traj.states(i, k));
  if (traj.with_jacobian)
    for (int k = 0; k < nodes; ++k) {
      const auto& jac = traj.jac[static_cast<std::size_t>(k)];
      payload.insert(payload.end(), jac.data(), jac.data() + jac.size());
    }
  write_binary_payload(path, header, payload);
}

void write_scaling_csv(const std::string& path, const ScalingReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "eps,median,q90,q99,slope,slope_stderr\n";
  for (std::size_t e = 0; e < report.eps_grid.size(); ++e)
    out << format_double(report.eps_grid[e]) << ","
        << format_double(report.quantiles[e][0]) << ","
        << format_double(report.quantiles[e][1]) << ","
        << format_double(report.quantiles[e][2]) << ","
        << format_double(report.slope) << ","
        << format_double(report.slope_stderr) << "\n";
}

void write_density_csv(const std::string& path, const DensityReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "eps,p_hat,stderr,v_hat,v_ci,tail_unreliable,used_in_fit,blowups\n";
  for (const auto& row : report.rows)
    out << format_double(row.eps) << "," << format_double(row.p_hat) << ","
        << format_double(row.stderr_est) << "," << format_double(row.v_hat)
        << "," << format_double(row.v_ci) << "," << row.tail_unreliable << ","
        << row.used_in_fit << "," << row.blowups << "\n";
}

void write_density_plot(const std::string& path, const DensityReport& report) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << "# eps^2 v_hat\n";
  for (const auto& row : report.rows)
    if (row.p_hat > 0.0)
      out << format_double(row.eps * row.eps) << " "
          << format_double(row.v_hat) << "\n";
}

void write_text_file(const std::string& path, const std::string& content) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot open for writing: " + path);
  out << content;
}

}  // namespace varlab
