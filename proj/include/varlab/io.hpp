#pragma once

#include <json.hpp>

#include <span>
#include <string>
#include <vector>

#include "varlab/density.hpp"
#include "varlab/ensemble.hpp"
#include "varlab/flow.hpp"
#include "varlab/hilbert.hpp"
#include "varlab/malliavin.hpp"
#include "varlab/rate.hpp"

namespace varlab {

using json = nlohmann::ordered_json;

json to_json(const GridSpec& spec);
GridSpec grid_spec_from_json(const json& j);

/// Step coefficients serialize as {"spec": ..., "psi": [[...], ...]}.
json to_json(const StepCoeffs& psi);
StepCoeffs step_coeffs_from_json(const json& j);

json to_json(const RateResult& r);
json to_json(const DensityReport& r);
json to_json(const ScalingReport& r);
json to_json(const std::vector<CovarianceCheckRow>& rows);

/// Flat binary container: magic "VLABBIN1", a little-endian u64 header
/// length, the JSON header bytes, then raw little-endian doubles.
void write_binary_payload(const std::string& path, const json& header,
                          std::span<const double> payload);
std::pair<json, std::vector<double>> read_binary_payload(
    const std::string& path);

/// Ensemble export: binary container with {spec, seed, method, N} header,
/// or CSV (path index, component, node values) for small ensembles.
void write_ensemble_binary(const std::string& path, const FbmEnsemble& ens);
FbmEnsemble read_ensemble_binary(const std::string& path);
void write_ensemble_csv(const std::string& path, const FbmEnsemble& ens);

/// Trajectory CSV: t, state components, optionally vec(J) row-major.
void write_trajectory_csv(const std::string& path, const Trajectory& traj,
                          bool with_jacobian = false);
/// Trajectory in the binary container: payload is times, then the states
/// column by column, then vec(J) per node when present.
void write_trajectory_binary(const std::string& path, const Trajectory& traj);

void write_scaling_csv(const std::string& path, const ScalingReport& report);
void write_density_csv(const std::string& path, const DensityReport& report);
/// Two columns (eps^2, v_hat) ready for plotting.
void write_density_plot(const std::string& path, const DensityReport& report);

void write_text_file(const std::string& path, const std::string& content);

}  // namespace varlab
