#include "varlab/flow.hpp"

#include <cmath>
#include <stdexcept>

#include "varlab/common.hpp"

namespace varlab {

Drive zero_drive(const GridSpec& spec) {
  Drive d;
  d.spec = spec;
  d.values = Eigen::MatrixXd::Zero(spec.d, spec.m + 1);
  d.scale = 1.0;
  return d;
}

Drive drive_from_ensemble(const FbmEnsemble& ens, std::int64_t path_index,
                          double scale) {
  if (path_index < 0 || path_index >= ens.n_paths)
    throw std::out_of_range("drive_from_ensemble: path index");
  Drive d;
  d.spec = ens.spec;
  d.scale = scale;
  d.values.resize(ens.spec.d, ens.spec.m + 1);
  for (int c = 0; c < ens.spec.d; ++c)
    for (int j = 0; j <= ens.spec.m; ++j)
      d.values(c, j) = ens.value(path_index, c, j);
  return d;
}

Drive drive_from_cm(const StepCoeffs& psi, int refine) {
  if (refine < 1) throw std::invalid_argument("drive_from_cm: refine >= 1");
  Drive d;
  d.spec = GridSpec(psi.spec.m * refine, psi.spec.hurst, psi.spec.d);
  d.scale = 1.0;
  d.values.resize(d.spec.d, d.spec.m + 1);
  d.values.col(0).setZero();
  for (int j = 1; j <= d.spec.m; ++j)
    d.values.col(j) = embed_cm_at(psi, d.spec.t(j));
  return d;
}

Drive translate_drive(const Drive& b, const StepCoeffs& h) {
  if (h.spec.d != b.spec.d)
    throw std::invalid_argument("translate_drive: driver dimension mismatch");
  Drive out;
  out.spec = b.spec;
  out.scale = 1.0;
  out.values.resize(b.spec.d, b.spec.m + 1);
  for (int j = 0; j <= b.spec.m; ++j)
    out.values.col(j) = b.at_node(j) + embed_cm_at(h, b.spec.t(j));
  return out;
}

Drive translate_drive(const Drive& b, const Eigen::MatrixXd& h_nodes) {
  if (h_nodes.rows() != b.values.rows() || h_nodes.cols() != b.values.cols())
    throw std::invalid_argument("translate_drive: incompatible node arrays");
  Drive out;
  out.spec = b.spec;
  out.scale = 1.0;
  out.values = b.scale * b.values + h_nodes;
  return out;
}

namespace {

// Drift of the coupled (X, J, Jinv) system for a frozen drive slope.
struct StageDeriv {
  Eigen::VectorXd dx;
  Eigen::MatrixXd dj;
  Eigen::MatrixXd djinv;
};

void eval_deriv(const VectorFieldSystem& sys, const Eigen::VectorXd& x,
                const Eigen::MatrixXd& jac, const Eigen::MatrixXd& jinv,
                const Eigen::VectorXd& slope, bool with_jacobian,
                StageDeriv& out) {
  const int n = sys.state_dim();
  const int d = sys.driver_dim();
  out.dx.setZero(n);
  if (with_jacobian) {
    if (out.dj.rows() != n) {
      out.dj.resize(n, n);
      out.djinv.resize(n, n);
    }
    out.dj.setZero();
    out.djinv.setZero();
  }
  Eigen::MatrixXd a;  // sum_i slope_i DV_i(x)
  if (with_jacobian) a = Eigen::MatrixXd::Zero(n, n);
  for (int i = 0; i < d; ++i) {
    if (slope(i) == 0.0) continue;
    out.dx += slope(i) * sys.field(i, x);
    if (with_jacobian) a += slope(i) * sys.jacobian(i, x);
  }
  if (with_jacobian) {
    out.dj = a * jac;
    out.djinv = -jinv * a;
  }
}

}  // namespace

Trajectory solve_flow(const Drive& drive, const VectorFieldSystem& sys,
                      const Eigen::VectorXd& x0, const FlowOptions& opts) {
  if (opts.substeps < 1)
    throw std::invalid_argument("solve_flow: substeps must be >= 1");
  if (x0.size() != sys.state_dim())
    throw std::invalid_argument("solve_flow: x0 dimension mismatch");
  if (drive.spec.d != sys.driver_dim())
    throw std::invalid_argument("solve_flow: driver dimension mismatch");

  const int n = sys.state_dim();
  const int m = drive.spec.m;
  const int nf = m * opts.substeps;  // refined intervals

  Trajectory traj;
  traj.spec = drive.spec;
  traj.drive = drive;
  traj.substeps = opts.substeps;
  traj.with_jacobian = opts.with_jacobian;
  traj.rough_drive_warning = drive.spec.hurst < 1.0 / 3.0;
  traj.times.resize(nf + 1);
  traj.states.resize(n, nf + 1);
  if (opts.with_jacobian) {
    traj.jac.assign(static_cast<std::size_t>(nf + 1),
                    Eigen::MatrixXd::Identity(n, n));
    traj.jac_inv.assign(static_cast<std::size_t>(nf + 1),
                        Eigen::MatrixXd::Identity(n, n));
  }

  Eigen::VectorXd x = x0;
  Eigen::MatrixXd jac = Eigen::MatrixXd::Identity(n, n);
  Eigen::MatrixXd jinv = Eigen::MatrixXd::Identity(n, n);
  traj.states.col(0) = x;
  traj.times(0) = 0.0;

  const double dt_coarse = drive.spec.dt();
  const double h = dt_coarse / opts.substeps;
  StageDeriv k1, k2, k3, k4;

  int node = 0;
  for (int j = 0; j < m; ++j) {
    // Slope of the effective (scaled) drive on this coarse interval.
    const Eigen::VectorXd slope =
        drive.scale * (drive.values.col(j + 1) - drive.values.col(j)) /
        dt_coarse;
    for (int s = 0; s < opts.substeps; ++s) {
      eval_deriv(sys, x, jac, jinv, slope, opts.with_jacobian, k1);
      eval_deriv(sys, x + 0.5 * h * k1.dx,
                 opts.with_jacobian ? (jac + 0.5 * h * k1.dj).eval() : jac,
                 opts.with_jacobian ? (jinv + 0.5 * h * k1.djinv).eval() : jinv,
                 slope, opts.with_jacobian, k2);
      eval_deriv(sys, x + 0.5 * h * k2.dx,
                 opts.with_jacobian ? (jac + 0.5 * h * k2.dj).eval() : jac,
                 opts.with_jacobian ? (jinv + 0.5 * h * k2.djinv).eval() : jinv,
                 slope, opts.with_jacobian, k3);
      eval_deriv(sys, x + h * k3.dx,
                 opts.with_jacobian ? (jac + h * k3.dj).eval() : jac,
                 opts.with_jacobian ? (jinv + h * k3.djinv).eval() : jinv,
                 slope, opts.with_jacobian, k4);

      x += (h / 6.0) * (k1.dx + 2.0 * k2.dx + 2.0 * k3.dx + k4.dx);
      if (opts.with_jacobian) {
        jac += (h / 6.0) * (k1.dj + 2.0 * k2.dj + 2.0 * k3.dj + k4.dj);
        jinv += (h / 6.0) * (k1.djinv + 2.0 * k2.djinv + 2.0 * k3.djinv + k4.djinv);
      }
      ++node;
      traj.times(node) = (static_cast<double>(j) +
                          static_cast<double>(s + 1) / opts.substeps) *
                         dt_coarse;
      traj.states.col(node) = x;
      if (opts.with_jacobian) {
        traj.jac[static_cast<std::size_t>(node)] = jac;
        traj.jac_inv[static_cast<std::size_t>(node)] = jinv;
      }
      if (!(x.norm() < opts.blowup_norm))
        throw NumericalError("solve_flow: state norm exceeded " +
                             std::to_string(opts.blowup_norm) + " at t=" +
                             std::to_string(traj.times(node)));
    }
  }
  return traj;
}

Trajectory phi_flow(const StepCoeffs& psi, const VectorFieldSystem& sys,
                    const Eigen::VectorXd& x0, int substeps,
                    bool with_jacobian) {
  const Drive drive = drive_from_cm(psi, substeps);
  FlowOptions opts;
  opts.substeps = 1;
  opts.with_jacobian = with_jacobian;
  return solve_flow(drive, sys, x0, opts);
}

Eigen::VectorXd directional_derivative(const Trajectory& traj,
                                       const VectorFieldSystem& sys,
                                       const StepCoeffs& psi_dir, double eps) {
  if (!traj.with_jacobian)
    throw std::invalid_argument(
        "directional_derivative: trajectory lacks Jacobian data");
  if (psi_dir.spec.d != sys.driver_dim())
    throw std::invalid_argument("directional_derivative: dimension mismatch");

  const int n = sys.state_dim();
  const int d = sys.driver_dim();
  const int nodes = traj.refined_nodes();
  const Eigen::MatrixXd& j_end = traj.jac.back();

  // g_i(s) = J_1 J_s^{-1} V_i(X_s) at every refined node.
  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd g_prev(n, d), g_next(n, d);
  Eigen::VectorXd h_prev = embed_cm_at(psi_dir, traj.times(0));
  for (int i = 0; i < d; ++i)
    g_prev.col(i) = j_end * traj.jac_inv.front() * sys.field(i, traj.states.col(0));

  for (int k = 1; k < nodes; ++k) {
    for (int i = 0; i < d; ++i)
      g_next.col(i) = j_end * traj.jac_inv[static_cast<std::size_t>(k)] *
                      sys.field(i, traj.states.col(k));
    const Eigen::VectorXd h_next = embed_cm_at(psi_dir, traj.times(k));
    acc += 0.5 * (g_prev + g_next) * (h_next - h_prev);
    g_prev = g_next;
    h_prev = h_next;
  }
  return eps * acc;
}

Eigen::VectorXd z_direction(const Trajectory& phi_traj,
                            const VectorFieldSystem& sys, const Drive& noise) {
  if (!phi_traj.with_jacobian)
    throw std::invalid_argument("z_direction: trajectory lacks Jacobian data");
  const int n = sys.state_dim();
  const int d = sys.driver_dim();
  const int nodes = phi_traj.refined_nodes();
  const Eigen::MatrixXd& j_end = phi_traj.jac.back();

  // Linear interpolation of the noise onto the refined nodes: consistent
  // with the piecewise-linear reading of sampled paths.
  const auto noise_at = [&](double t) -> Eigen::VectorXd {
    const double pos = t * noise.spec.m;
    int j = static_cast<int>(std::floor(pos));
    j = std::min(std::max(j, 0), noise.spec.m - 1);
    const double frac = pos - j;
    return noise.scale *
           ((1.0 - frac) * noise.values.col(j) + frac * noise.values.col(j + 1));
  };

  Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
  Eigen::MatrixXd g_prev(n, d), g_next(n, d);
  for (int i = 0; i < d; ++i)
    g_prev.col(i) =
        j_end * phi_traj.jac_inv.front() * sys.field(i, phi_traj.states.col(0));
  Eigen::VectorXd b_prev = noise_at(phi_traj.times(0));

  for (int k = 1; k < nodes; ++k) {
    for (int i = 0; i < d; ++i)
      g_next.col(i) = j_end * phi_traj.jac_inv[static_cast<std::size_t>(k)] *
                      sys.field(i, phi_traj.states.col(k));
    const Eigen::VectorXd b_next = noise_at(phi_traj.times(k));
    acc += 0.5 * (g_prev + g_next) * (b_next - b_prev);
    g_prev = g_next;
    b_prev = b_next;
  }
  return acc;
}

std::vector<ZLimitRow> z_limit_check(const StepCoeffs& h, const Drive& noise,
                                     const VectorFieldSystem& sys,
                                     const Eigen::VectorXd& x0,
                                     const std::vector<double>& eps_seq,
                                     int substeps) {
  FlowOptions opts;
  opts.substeps = substeps;

  // Phi(h) and the limit direction Z(h).
  Eigen::MatrixXd h_nodes(noise.spec.d, noise.spec.m + 1);
  for (int j = 0; j <= noise.spec.m; ++j)
    h_nodes.col(j) = embed_cm_at(h, noise.spec.t(j));
  Drive h_drive = zero_drive(noise.spec);
  h_drive.values = h_nodes;
  const Trajectory base = solve_flow(h_drive, sys, x0, opts);
  const Eigen::VectorXd z = z_direction(base, sys, noise);
  const Eigen::VectorXd phi_h = base.terminal();

  std::vector<ZLimitRow> rows;
  rows.reserve(eps_seq.size());
  FlowOptions opts_nj = opts;
  opts_nj.with_jacobian = false;
  for (double eps : eps_seq) {
    if (!(eps > 0.0 && eps <= 1.0))
      throw std::domain_error("z_limit_check: eps must lie in (0,1]");
    Drive shifted = noise;
    shifted.scale = eps;
    shifted = translate_drive(shifted, h_nodes);
    const Trajectory traj = solve_flow(shifted, sys, x0, opts_nj);
    ZLimitRow row;
    row.eps = eps;
    row.error = ((traj.terminal() - phi_h) / eps - z).norm();
    rows.push_back(row);
  }
  return rows;
}

}  // namespace varlab
