#pragma once

#include <Eigen/Dense>
#include <memory>
#include <span>
#include <string>
#include <utility>

#include "varlab/dual.hpp"

namespace varlab {

/// A family of driving vector fields V_1..V_d on R^n, evaluable at plain
/// doubles and at nested dual scalars up to depth kMaxDualDepth. All jets
/// downstream (Jacobians of the flow, Lie brackets, bracket derivatives)
/// are exact directional derivatives obtained through the dual overloads.
class VectorFieldSystem {
 public:
  VectorFieldSystem(std::string name, int n, int d, bool bounded)
      : name_(std::move(name)), n_(n), d_(d), bounded_(bounded) {}
  virtual ~VectorFieldSystem() = default;

  const std::string& name() const { return name_; }
  int state_dim() const { return n_; }
  int driver_dim() const { return d_; }
  /// False for test-only systems with unbounded fields or derivatives.
  bool bounded_fields() const { return bounded_; }

  virtual void eval(int i, std::span<const double> x,
                    std::span<double> out) const = 0;
  virtual void eval(int i, std::span<const DualD1> x,
                    std::span<DualD1> out) const = 0;
  virtual void eval(int i, std::span<const DualD2> x,
                    std::span<DualD2> out) const = 0;
  virtual void eval(int i, std::span<const DualD3> x,
                    std::span<DualD3> out) const = 0;
  virtual void eval(int i, std::span<const DualD4> x,
                    std::span<DualD4> out) const = 0;

  /// V_i(x) as an Eigen vector.
  Eigen::VectorXd field(int i, const Eigen::VectorXd& x) const;
  /// Jacobian matrix DV_i(x), columns are coordinate directional derivatives.
  Eigen::MatrixXd jacobian(int i, const Eigen::VectorXd& x) const;
  /// Directional derivative DV_i(x) u.
  Eigen::VectorXd dderiv(int i, const Eigen::VectorXd& x,
                         const Eigen::VectorXd& u) const;

 private:
  std::string name_;
  int n_;
  int d_;
  bool bounded_;
};

/// Adapts a functor with a scalar-templated operator()(i, x, out) to the
/// virtual interface.
template <class F>
class SystemModel final : public VectorFieldSystem {
 public:
  SystemModel(std::string name, int n, int d, bool bounded, F f)
      : VectorFieldSystem(std::move(name), n, d, bounded), f_(std::move(f)) {}

  void eval(int i, std::span<const double> x,
            std::span<double> out) const override {
    f_(i, x, out);
  }
  void eval(int i, std::span<const DualD1> x,
            std::span<DualD1> out) const override {
    f_(i, x, out);
  }
  void eval(int i, std::span<const DualD2> x,
            std::span<DualD2> out) const override {
    f_(i, x, out);
  }
  void eval(int i, std::span<const DualD3> x,
            std::span<DualD3> out) const override {
    f_(i, x, out);
  }
  void eval(int i, std::span<const DualD4> x,
            std::span<DualD4> out) const override {
    f_(i, x, out);
  }

 private:
  F f_;
};

template <class F>
std::shared_ptr<const VectorFieldSystem> make_system_model(std::string name,
                                                           int n, int d,
                                                           bool bounded, F f) {
  return std::make_shared<SystemModel<F>>(std::move(name), n, d, bounded,
                                          std::move(f));
}

/// Built-in systems: "elliptic-identity" (V_i = e_i, n = d, dim_hint
/// selects n), "elliptic-perturbed" (diagonal fields with trigonometric
/// modulation, n = d = 2), "scalar-linear" (V(x) = x, test-only),
/// "heisenberg-sin" (V_1 = e_1, V_2 = e_2 + sin(x_1) e_3).
std::shared_ptr<const VectorFieldSystem> make_system(const std::string& name,
                                                     int dim_hint = 0);

/// Constant fields given by the columns of an n x d matrix.
std::shared_ptr<const VectorFieldSystem> make_constant_system(
    const Eigen::MatrixXd& columns);

}  // namespace varlab
