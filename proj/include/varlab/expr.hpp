#pragma once

#include <memory>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "varlab/dual.hpp"
#include "varlab/fields.hpp"

namespace varlab {

/// Closed-form scalar expression in variables x1..xn, evaluable at any
/// dual depth. Grammar: + - * / ^ (constant exponent), unary minus,
/// parentheses, functions sin cos exp log sqrt tanh, numeric literals.
class Expr {
 public:
  enum class Kind { constant, variable, add, sub, mul, div, neg, pow, call };
  enum class Fn { sin, cos, exp, log, sqrt, tanh };

  Kind kind = Kind::constant;
  double constant = 0.0;
  int variable = 0;
  double exponent = 1.0;
  Fn fn = Fn::sin;
  std::shared_ptr<const Expr> lhs;
  std::shared_ptr<const Expr> rhs;

  template <class S>
  S eval(std::span<const S> x) const {
    switch (kind) {
      case Kind::constant:
        return S(constant);
      case Kind::variable:
        return x[static_cast<std::size_t>(variable)];
      case Kind::add:
        return lhs->eval(x) + rhs->eval(x);
      case Kind::sub:
        return lhs->eval(x) - rhs->eval(x);
      case Kind::mul:
        return lhs->eval(x) * rhs->eval(x);
      case Kind::div:
        return lhs->eval(x) / rhs->eval(x);
      case Kind::neg:
        return -lhs->eval(x);
      case Kind::pow:
        return pow(lhs->eval(x), exponent);
      case Kind::call:
        switch (fn) {
          case Fn::sin: return sin(lhs->eval(x));
          case Fn::cos: return cos(lhs->eval(x));
          case Fn::exp: return exp(lhs->eval(x));
          case Fn::log: return log(lhs->eval(x));
          case Fn::sqrt: return sqrt(lhs->eval(x));
          case Fn::tanh: return tanh(lhs->eval(x));
        }
    }
    throw std::logic_error("Expr: corrupt node");
  }
};

/// Parses an expression over x1..xn ("x", "y", "z" alias x1..x3).
std::shared_ptr<const Expr> parse_expression(const std::string& text,
                                             int n_vars);

/// System whose field components are expression strings:
/// components[i][k] is the k-th component of V_{i+1}.
std::shared_ptr<const VectorFieldSystem> make_expr_system(
    const std::vector<std::vector<std::string>>& components,
    const std::string& name = "inline");

}  // namespace varlab
