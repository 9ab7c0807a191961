#include "varlab/rate.hpp"

#include <Eigen/LU>

#include <algorithm>
#include <cmath>

#include "varlab/common.hpp"
#include "varlab/covariance.hpp"
#include "varlab/malliavin.hpp"
#include "varlab/rng.hpp"

namespace varlab {

ObjectiveGradient objective_gradient(const StepCoeffs& psi,
                                     const VectorFieldSystem& sys,
                                     const Eigen::VectorXd& x0, int substeps) {
  const GridSpec& spec = psi.spec;
  const int n = sys.state_dim();
  const int d = sys.driver_dim();
  const int m = spec.m;

  const Trajectory traj = phi_flow(psi, sys, x0, substeps);
  const int nodes = traj.refined_nodes();
  const Eigen::MatrixXd& j_end = traj.jac.back();

  // g_c(s) = J_1 J_s^{-1} V_c(Phi_s) at the refined nodes.
  std::vector<Eigen::MatrixXd> g(static_cast<std::size_t>(d),
                                 Eigen::MatrixXd(n, nodes));
  for (int k = 0; k < nodes; ++k) {
    const Eigen::MatrixXd j1_jinv =
        j_end * traj.jac_inv[static_cast<std::size_t>(k)];
    for (int c = 0; c < d; ++c)
      g[static_cast<std::size_t>(c)].col(k) =
          j1_jinv * sys.field(c, traj.states.col(k));
  }

  // rdiff(k, j) = R(s_k, t_{j+1}) - R(s_k, t_j).
  Eigen::MatrixXd rdiff(nodes, m);
  for (int k = 0; k < nodes; ++k) {
    const double s = traj.times(k);
    double r_prev = fbm_covariance(s, 0.0, spec.hurst);
    for (int j = 0; j < m; ++j) {
      const double r_next = fbm_covariance(s, spec.t(j + 1), spec.hurst);
      rdiff(k, j) = r_next - r_prev;
      r_prev = r_next;
    }
  }

  ObjectiveGradient out;
  out.phi1 = traj.terminal();
  out.dphi_dpsi = Eigen::MatrixXd::Zero(n, d * m);
  for (int c = 0; c < d; ++c)
    for (int j = 0; j < m; ++j) {
      Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
      for (int k = 0; k + 1 < nodes; ++k)
        acc += 0.5 *
               (g[static_cast<std::size_t>(c)].col(k) +
                g[static_cast<std::size_t>(c)].col(k + 1)) *
               (rdiff(k + 1, j) - rdiff(k, j));
      out.dphi_dpsi.col(c * m + j) = acc;
    }
  return out;
}

double det_gamma_phi(const StepCoeffs& psi, const VectorFieldSystem& sys,
                     const Eigen::VectorXd& x0, const GramForm& gram) {
  if (gram.spec.m % psi.spec.m != 0)
    throw std::invalid_argument(
        "det_gamma_phi: Gram grid must refine the coefficient grid");
  const int refine = gram.spec.m / psi.spec.m;
  const Trajectory traj = phi_flow(psi, sys, x0, refine);
  const auto rows = malliavin_rows(traj, sys, 1.0);
  const auto gamma = malliavin_matrix(rows, gram);
  return gamma.gamma.determinant();
}

namespace {

Eigen::VectorXd flatten(const Eigen::MatrixXd& psi) {
  Eigen::VectorXd v(psi.size());
  int idx = 0;
  for (int c = 0; c < psi.rows(); ++c)
    for (int j = 0; j < psi.cols(); ++j) v(idx++) = psi(c, j);
  return v;
}

Eigen::MatrixXd unflatten(const Eigen::VectorXd& v, int d, int m) {
  Eigen::MatrixXd psi(d, m);
  int idx = 0;
  for (int c = 0; c < d; ++c)
    for (int j = 0; j < m; ++j) psi(c, j) = v(idx++);
  return psi;
}

struct Objective {
  virtual ~Objective() = default;
  virtual double value(const Eigen::VectorXd& x) = 0;
  virtual double value_grad(const Eigen::VectorXd& x, Eigen::VectorXd& grad) = 0;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  Eigen::VectorXd grad;
  bool converged = false;
};

// Limited-memory quasi-Newton descent with Armijo backtracking.
LbfgsResult lbfgs_minimize(Objective& obj, Eigen::VectorXd x, int max_iters,
                           double gtol) {
  constexpr int kHistory = 10;
  const auto dim = x.size();
  std::vector<Eigen::VectorXd> s_hist, y_hist;
  std::vector<double> rho_hist;

  LbfgsResult res;
  Eigen::VectorXd grad(dim);
  double f = obj.value_grad(x, grad);

  for (int iter = 0; iter < max_iters; ++iter) {
    if (grad.norm() <= gtol) {
      res.converged = true;
      break;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = grad;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[static_cast<std::size_t>(i)] =
          rho_hist[static_cast<std::size_t>(i)] *
          s_hist[static_cast<std::size_t>(i)].dot(q);
      q -= alpha[static_cast<std::size_t>(i)] * y_hist[static_cast<std::size_t>(i)];
    }
    if (!s_hist.empty()) {
      const auto& s = s_hist.back();
      const auto& yv = y_hist.back();
      q *= s.dot(yv) / yv.squaredNorm();
    }
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = grad.dot(dir);
    if (slope >= 0.0) {  // fall back to steepest descent
      dir = -grad;
      slope = -grad.squaredNorm();
    }

    double step = 1.0;
    double f_new = 0.0;
    Eigen::VectorXd x_new;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = x + step * dir;
      f_new = obj.value(x_new);
      if (std::isfinite(f_new) && f_new <= f + 1e-4 * step * slope) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) break;

    Eigen::VectorXd grad_new(dim);
    f_new = obj.value_grad(x_new, grad_new);
    const Eigen::VectorXd s = x_new - x;
    const Eigen::VectorXd yv = grad_new - grad;
    const double sy = s.dot(yv);
    if (sy > 1e-12 * s.norm() * yv.norm()) {
      s_hist.push_back(s);
      y_hist.push_back(yv);
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > kHistory) {
        s_hist.erase(s_hist.begin());
        y_hist.erase(y_hist.begin());
        rho_hist.erase(rho_hist.begin());
      }
    }
    x = std::move(x_new);
    f = f_new;
    grad = std::move(grad_new);
  }
  res.x = std::move(x);
  res.f = f;
  res.grad = std::move(grad);
  return res;
}

// Augmented-Lagrangian objective for the energy minimization, optionally
// with the determinant floor.
class RateObjective final : public Objective {
 public:
  RateObjective(const VectorFieldSystem& sys, Eigen::VectorXd x0,
                Eigen::VectorXd y, GridSpec spec, const GramForm* gram_energy,
                const GramForm* gram_det, int substeps, double delta_det)
      : sys_(sys),
        x0_(std::move(x0)),
        y_(std::move(y)),
        spec_(spec),
        gram_energy_(gram_energy),
        gram_det_(gram_det),
        substeps_(substeps),
        delta_det_(delta_det) {
    lambda = Eigen::VectorXd::Zero(y_.size());
  }

  Eigen::VectorXd lambda;         // equality multipliers
  double rho = 10.0;              // equality penalty
  double lambda_det = 0.0;        // inequality multiplier
  double rho_det = 10.0;          // inequality penalty

  double energy(const Eigen::VectorXd& v) const {
    double acc = 0.0;
    const int m = spec_.m;
    for (int c = 0; c < spec_.d; ++c)
      acc += v.segment(c * m, m).dot(gram_energy_->Q * v.segment(c * m, m));
    return 0.5 * acc;
  }

  Eigen::VectorXd energy_grad(const Eigen::VectorXd& v) const {
    const int m = spec_.m;
    Eigen::VectorXd g(v.size());
    for (int c = 0; c < spec_.d; ++c)
      g.segment(c * m, m) = gram_energy_->Q * v.segment(c * m, m);
    return g;
  }

  Eigen::VectorXd constraint(const Eigen::VectorXd& v) const {
    const StepCoeffs psi(spec_, unflatten(v, spec_.d, spec_.m));
    const Drive drive = drive_from_cm(psi, substeps_);
    FlowOptions opts;
    opts.substeps = 1;
    opts.with_jacobian = false;
    return solve_flow(drive, sys_, x0_, opts).terminal() - y_;
  }

  double det_at(const Eigen::VectorXd& v) const {
    const StepCoeffs psi(spec_, unflatten(v, spec_.d, spec_.m));
    return det_gamma_phi(psi, sys_, x0_, *gram_det_);
  }

  // The determinant floor acts on the log scale: violations of
  // log(delta) - log(det) are O(1) even for tiny delta, and the hinge
  // turns into a barrier as det approaches zero.
  double log_violation(double det) const {
    if (det <= 0.0) return std::numeric_limits<double>::infinity();
    return std::log(delta_det_) - std::log(det);
  }

  double value(const Eigen::VectorXd& v) override {
    const Eigen::VectorXd c = constraint(v);
    double f = energy(v) + lambda.dot(c) + 0.5 * rho * c.squaredNorm();
    if (delta_det_ > 0.0) {
      const double g = log_violation(det_at(v));
      if (std::isinf(g)) return g;
      const double shifted = std::max(0.0, lambda_det / rho_det + g);
      f += 0.5 * rho_det * (shifted * shifted -
                            (lambda_det / rho_det) * (lambda_det / rho_det));
    }
    return f;
  }

  double value_grad(const Eigen::VectorXd& v, Eigen::VectorXd& grad) override {
    const StepCoeffs psi(spec_, unflatten(v, spec_.d, spec_.m));
    const auto og = objective_gradient(psi, sys_, x0_, substeps_);
    const Eigen::VectorXd c = og.phi1 - y_;
    double f = energy(v) + lambda.dot(c) + 0.5 * rho * c.squaredNorm();
    grad = energy_grad(v) + og.dphi_dpsi.transpose() * (lambda + rho * c);

    if (delta_det_ > 0.0) {
      const double det = det_at(v);
      const double g = log_violation(det);
      if (std::isinf(g)) return g;
      const double shifted = std::max(0.0, lambda_det / rho_det + g);
      f += 0.5 * rho_det * (shifted * shifted -
                            (lambda_det / rho_det) * (lambda_det / rho_det));
      if (shifted > 0.0) {
        // The hinge needs the determinant sensitivity; central
        // differences coordinate by coordinate.
        Eigen::VectorXd det_grad(v.size());
        for (Eigen::Index i = 0; i < v.size(); ++i) {
          const double h = 1e-5 * std::max(1.0, std::fabs(v(i)));
          Eigen::VectorXd vp = v, vm = v;
          vp(i) += h;
          vm(i) -= h;
          det_grad(i) = (det_at(vp) - det_at(vm)) / (2.0 * h);
        }
        grad += rho_det * shifted * (-det_grad / det);
      }
    }
    return f;
  }

  void update_multipliers(const Eigen::VectorXd& v) {
    const Eigen::VectorXd c = constraint(v);
    lambda += rho * c;
    if (delta_det_ > 0.0) {
      const double g = log_violation(det_at(v));
      if (std::isfinite(g))
        lambda_det = std::max(0.0, lambda_det + rho_det * g);
    }
  }

  double infeasibility(const Eigen::VectorXd& v) const {
    double err = constraint(v).norm();
    if (delta_det_ > 0.0)
      err = std::max(err, std::max(0.0, delta_det_ - det_at(v)));
    return err;
  }

 private:
  const VectorFieldSystem& sys_;
  Eigen::VectorXd x0_;
  Eigen::VectorXd y_;
  GridSpec spec_;
  const GramForm* gram_energy_;
  const GramForm* gram_det_;
  int substeps_;
  double delta_det_;
};

std::vector<int> grid_schedule_for(const GridSpec& spec,
                                   const RateOptions& opts) {
  if (!opts.grid_schedule.empty()) return opts.grid_schedule;
  std::vector<int> schedule;
  for (int m = spec.m; m >= 8; m /= 2) {
    schedule.push_back(m);
    if (m % 2 != 0) break;
  }
  std::reverse(schedule.begin(), schedule.end());
  if (schedule.empty() || schedule.back() != spec.m) schedule = {spec.m};
  return schedule;
}

Eigen::MatrixXd prolong(const Eigen::MatrixXd& psi, int factor) {
  Eigen::MatrixXd fine(psi.rows(), psi.cols() * factor);
  for (int j = 0; j < psi.cols(); ++j)
    for (int r = 0; r < factor; ++r) fine.col(j * factor + r) = psi.col(j);
  return fine;
}

RateResult run_minimization(const Eigen::VectorXd& y,
                            const VectorFieldSystem& sys,
                            const Eigen::VectorXd& x0, const GridSpec& spec,
                            double delta_det, const RateOptions& opts) {
  if (y.size() != sys.state_dim())
    throw std::invalid_argument("minimize_energy: y dimension mismatch");
  spec.validate();

  const auto schedule = grid_schedule_for(spec, opts);

  // Gram forms per grid in the schedule (energy) and for the refined
  // determinant grid on the final level.
  std::vector<GramForm> grams;
  grams.reserve(schedule.size());
  for (int m : schedule)
    grams.push_back(
        gram_matrix_cached(GridSpec(m, spec.hurst, spec.d), opts.cache_dir));
  std::vector<GramForm> det_grams;
  for (int m : schedule)
    det_grams.push_back(gram_matrix_cached(
        GridSpec(m * opts.substeps, spec.hurst, spec.d), opts.cache_dir));

  const int n_starts = opts.restarts + 1;  // index 0 starts from zero
  std::vector<RateResult> results(static_cast<std::size_t>(n_starts));

  parallel_for(static_cast<std::size_t>(n_starts), opts.workers,
               [&](std::size_t start) {
    // Seeded Gaussian start with unit energy norm on the coarsest grid.
    // Start 0 is the origin, except under a determinant floor, where the
    // origin may sit on the degenerate set.
    const GridSpec spec0(schedule.front(), spec.hurst, spec.d);
    Eigen::MatrixXd psi0 = Eigen::MatrixXd::Zero(spec.d, spec0.m);
    if (start > 0 || delta_det > 0.0) {
      CounterRng rng(opts.seed, start, 0x7261746575ULL);
      for (int c = 0; c < spec.d; ++c)
        for (int j = 0; j < spec0.m; ++j) psi0(c, j) = rng.next_normal();
      const double norm_sq =
          cm_norm_sq(StepCoeffs(spec0, psi0), grams.front());
      if (norm_sq > 0.0) psi0 /= std::sqrt(norm_sq);
    }

    Eigen::VectorXd v = flatten(psi0);
    double previous_d2 = 0.0;
    double final_d2 = std::numeric_limits<double>::infinity();
    double residual = std::numeric_limits<double>::infinity();
    double grad_norm = std::numeric_limits<double>::infinity();

    for (std::size_t lvl = 0; lvl < schedule.size(); ++lvl) {
      const GridSpec lvl_spec(schedule[lvl], spec.hurst, spec.d);
      if (lvl > 0) {
        const int factor = schedule[lvl] / schedule[lvl - 1];
        v = flatten(prolong(unflatten(v, spec.d, schedule[lvl - 1]), factor));
      }
      RateObjective obj(sys, x0, y, lvl_spec, &grams[lvl], &det_grams[lvl],
                        opts.substeps, delta_det);
      obj.rho = opts.rho0;
      obj.rho_det = opts.rho0;

      double best_err = std::numeric_limits<double>::infinity();
      for (int outer = 0; outer < opts.max_outer; ++outer) {
        const auto inner = lbfgs_minimize(obj, v, opts.max_inner, opts.tol_g);
        v = inner.x;
        grad_norm = inner.grad.norm();
        const double err = obj.infeasibility(v);
        if (err <= opts.tol_c && inner.converged) break;
        obj.update_multipliers(v);
        if (err > 0.25 * best_err) {
          obj.rho *= 2.0;
          obj.rho_det *= 2.0;
        }
        best_err = std::min(best_err, err);
      }
      previous_d2 = final_d2;
      final_d2 = obj.energy(v);
      residual = obj.constraint(v).norm();
      if (lvl + 1 == schedule.size() && delta_det > 0.0)
        residual = obj.infeasibility(v);
    }

    RateResult r;
    r.y = y;
    r.psi_star = StepCoeffs(spec, unflatten(v, spec.d, spec.m));
    r.d2 = final_d2;
    r.constraint_residual = residual;
    r.grad_norm = grad_norm;
    r.feasible = residual <= 10.0 * opts.tol_c;
    r.refinement_delta =
        std::isfinite(previous_d2) ? std::fabs(final_d2 - previous_d2) : 0.0;
    r.delta_det = delta_det;
    results[start] = std::move(r);
  });

  // Deterministic reduce: feasibility first, then energy, then index.
  int best = -1;
  for (int i = 0; i < n_starts; ++i) {
    if (!results[static_cast<std::size_t>(i)].feasible) continue;
    if (best < 0 || results[static_cast<std::size_t>(i)].d2 <
                        results[static_cast<std::size_t>(best)].d2)
      best = i;
  }

  RateResult out;
  if (best < 0) {
    // Infeasible: +infinity sentinel, best-effort diagnostics kept.
    out.y = y;
    out.psi_star = StepCoeffs::zero(spec);
    out.restarts_used = n_starts;
    out.delta_det = delta_det;
    double least = std::numeric_limits<double>::infinity();
    for (const auto& r : results)
      least = std::min(least, r.constraint_residual);
    out.constraint_residual = least;
    return out;
  }
  out = results[static_cast<std::size_t>(best)];
  out.restarts_used = n_starts;
  out.det_gamma = det_gamma_phi(out.psi_star, sys, x0, det_grams.back());
  return out;
}

}  // namespace

RateResult minimize_energy(const Eigen::VectorXd& y,
                           const VectorFieldSystem& sys,
                           const Eigen::VectorXd& x0, const GridSpec& spec,
                           const RateOptions& opts) {
  return run_minimization(y, sys, x0, spec, 0.0, opts);
}

RateResult minimize_energy_restricted(const Eigen::VectorXd& y,
                                      const VectorFieldSystem& sys,
                                      const Eigen::VectorXd& x0,
                                      const GridSpec& spec, double delta_det,
                                      const RateOptions& opts) {
  if (!(delta_det > 0.0))
    throw std::domain_error(
        "minimize_energy_restricted: delta_det must be positive");
  return run_minimization(y, sys, x0, spec, delta_det, opts);
}

}  // namespace varlab
