#include "varlab/fields.hpp"

#include <stdexcept>
#include <vector>

namespace varlab {

Eigen::VectorXd VectorFieldSystem::field(int i, const Eigen::VectorXd& x) const {
  Eigen::VectorXd out(n_);
  eval(i, std::span<const double>(x.data(), static_cast<std::size_t>(n_)),
       std::span<double>(out.data(), static_cast<std::size_t>(n_)));
  return out;
}

Eigen::VectorXd VectorFieldSystem::dderiv(int i, const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& u) const {
  std::vector<DualD1> xd(static_cast<std::size_t>(n_));
  std::vector<DualD1> outd(static_cast<std::size_t>(n_));
  for (int k = 0; k < n_; ++k) xd[static_cast<std::size_t>(k)] = {x(k), u(k)};
  eval(i, std::span<const DualD1>(xd), std::span<DualD1>(outd));
  Eigen::VectorXd out(n_);
  for (int k = 0; k < n_; ++k) out(k) = outd[static_cast<std::size_t>(k)].d;
  return out;
}

Eigen::MatrixXd VectorFieldSystem::jacobian(int i,
                                            const Eigen::VectorXd& x) const {
  Eigen::MatrixXd jac(n_, n_);
  for (int c = 0; c < n_; ++c)
    jac.col(c) = dderiv(i, x, Eigen::VectorXd::Unit(n_, c));
  return jac;
}

namespace {

struct EllipticIdentity {
  template <class S>
  void operator()(int i, std::span<const S> x, std::span<S> out) const {
    for (auto& o : out) o = S(0.0);
    out[static_cast<std::size_t>(i)] = S(1.0);
    (void)x;
  }
};

// Diagonal fields with trigonometric modulation; uniformly elliptic with
// constant (1 - a)^2.
struct EllipticPerturbed {
  double a = 0.3;
  template <class S>
  void operator()(int i, std::span<const S> x, std::span<S> out) const {
    out[0] = S(0.0);
    out[1] = S(0.0);
    if (i == 0)
      out[0] = 1.0 + a * sin(x[1]);
    else
      out[1] = 1.0 + a * cos(x[0]);
  }
};

struct ScalarLinear {
  template <class S>
  void operator()(int, std::span<const S> x, std::span<S> out) const {
    out[0] = x[0];
  }
};

struct HeisenbergSin {
  template <class S>
  void operator()(int i, std::span<const S> x, std::span<S> out) const {
    out[0] = S(0.0);
    out[1] = S(0.0);
    out[2] = S(0.0);
    if (i == 0) {
      out[0] = S(1.0);
    } else {
      out[1] = S(1.0);
      out[2] = sin(x[0]);
    }
  }
};

struct ConstantFields {
  Eigen::MatrixXd columns;  // n x d
  template <class S>
  void operator()(int i, std::span<const S> x, std::span<S> out) const {
    (void)x;
    for (int k = 0; k < columns.rows(); ++k)
      out[static_cast<std::size_t>(k)] = S(columns(k, i));
  }
};

}  // namespace

std::shared_ptr<const VectorFieldSystem> make_system(const std::string& name,
                                                     int dim_hint) {
  if (name == "elliptic-identity") {
    const int n = dim_hint > 0 ? dim_hint : 2;
    return make_system_model("elliptic-identity", n, n, true,
                             EllipticIdentity{});
  }
  if (name == "elliptic-perturbed")
    return make_system_model("elliptic-perturbed", 2, 2, true,
                             EllipticPerturbed{});
  if (name == "scalar-linear")
    return make_system_model("scalar-linear", 1, 1, false, ScalarLinear{});
  if (name == "heisenberg-sin")
    return make_system_model("heisenberg-sin", 3, 2, true, HeisenbergSin{});
  throw std::invalid_argument("unknown system: " + name);
}

std::shared_ptr<const VectorFieldSystem> make_constant_system(
    const Eigen::MatrixXd& columns) {
  return make_system_model("constant", static_cast<int>(columns.rows()),
                           static_cast<int>(columns.cols()), true,
                           ConstantFields{columns});
}

}  // namespace varlab
