#include "varlab/expr.hpp"

#include <cctype>
#include <cstdlib>

namespace varlab {

namespace {

using ExprPtr = std::shared_ptr<const Expr>;

ExprPtr make_node(Expr e) { return std::make_shared<const Expr>(std::move(e)); }

ExprPtr make_binary(Expr::Kind kind, ExprPtr a, ExprPtr b) {
  Expr e;
  e.kind = kind;
  e.lhs = std::move(a);
  e.rhs = std::move(b);
  return make_node(std::move(e));
}

class Parser {
 public:
  Parser(const std::string& text, int n_vars) : text_(text), n_vars_(n_vars) {}

  ExprPtr parse() {
    auto e = parse_sum();
    skip_ws();
    if (pos_ != text_.size()) fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void fail(const std::string& why) const {
    throw std::invalid_argument("expression parse error at offset " +
                                std::to_string(pos_) + ": " + why + " in \"" +
                                text_ + "\"");
  }

  void skip_ws() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_])))
      ++pos_;
  }

  bool consume(char c) {
    skip_ws();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  char peek() {
    skip_ws();
    return pos_ < text_.size() ? text_[pos_] : '\0';
  }

  ExprPtr parse_sum() {
    auto e = parse_product();
    while (true) {
      if (consume('+'))
        e = make_binary(Expr::Kind::add, e, parse_product());
      else if (consume('-'))
        e = make_binary(Expr::Kind::sub, e, parse_product());
      else
        return e;
    }
  }

  ExprPtr parse_product() {
    auto e = parse_unary();
    while (true) {
      if (consume('*'))
        e = make_binary(Expr::Kind::mul, e, parse_unary());
      else if (consume('/'))
        e = make_binary(Expr::Kind::div, e, parse_unary());
      else
        return e;
    }
  }

  ExprPtr parse_unary() {
    if (consume('-')) {
      Expr e;
      e.kind = Expr::Kind::neg;
      e.lhs = parse_unary();
      return make_node(std::move(e));
    }
    (void)consume('+');
    return parse_power();
  }

  ExprPtr parse_power() {
    auto base = parse_atom();
    if (consume('^')) {
      skip_ws();
      const bool negative = consume('-');
      const double exponent = parse_number_literal() * (negative ? -1.0 : 1.0);
      Expr e;
      e.kind = Expr::Kind::pow;
      e.exponent = exponent;
      e.lhs = std::move(base);
      return make_node(std::move(e));
    }
    return base;
  }

  double parse_number_literal() {
    skip_ws();
    const char* begin = text_.c_str() + pos_;
    char* end = nullptr;
    const double value = std::strtod(begin, &end);
    if (end == begin) fail("expected a number");
    pos_ += static_cast<std::size_t>(end - begin);
    return value;
  }

  ExprPtr parse_atom() {
    skip_ws();
    if (pos_ >= text_.size()) fail("unexpected end of input");
    const char c = text_[pos_];

    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      Expr e;
      e.kind = Expr::Kind::constant;
      e.constant = parse_number_literal();
      return make_node(std::move(e));
    }
    if (c == '(') {
      ++pos_;
      auto e = parse_sum();
      if (!consume(')')) fail("missing ')'");
      return e;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      std::string ident;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_'))
        ident += text_[pos_++];

      if (peek() == '(') return parse_call(ident);

      if (ident == "pi") {
        Expr e;
        e.kind = Expr::Kind::constant;
        e.constant = 3.14159265358979323846;
        return make_node(std::move(e));
      }
      int var = -1;
      if (ident == "x" || ident == "y" || ident == "z")
        var = ident[0] - 'x';
      else if (ident.size() >= 2 && ident[0] == 'x')
        var = std::atoi(ident.c_str() + 1) - 1;
      if (var < 0 || var >= n_vars_)
        fail("unknown identifier '" + ident + "'");
      Expr e;
      e.kind = Expr::Kind::variable;
      e.variable = var;
      return make_node(std::move(e));
    }
    fail(std::string("unexpected character '") + c + "'");
  }

  ExprPtr parse_call(const std::string& name) {
    Expr e;
    e.kind = Expr::Kind::call;
    if (name == "sin")
      e.fn = Expr::Fn::sin;
    else if (name == "cos")
      e.fn = Expr::Fn::cos;
    else if (name == "exp")
      e.fn = Expr::Fn::exp;
    else if (name == "log")
      e.fn = Expr::Fn::log;
    else if (name == "sqrt")
      e.fn = Expr::Fn::sqrt;
    else if (name == "tanh")
      e.fn = Expr::Fn::tanh;
    else
      fail("unknown function '" + name + "'");
    if (!consume('(')) fail("expected '(' after function name");
    e.lhs = parse_sum();
    if (!consume(')')) fail("missing ')' after function argument");
    return make_node(std::move(e));
  }

  const std::string& text_;
  int n_vars_;
  std::size_t pos_ = 0;
};

struct ExprFields {
  int n = 0;
  std::vector<std::vector<ExprPtr>> components;  // [i][k]

  template <class S>
  void operator()(int i, std::span<const S> x, std::span<S> out) const {
    const auto& field = components[static_cast<std::size_t>(i)];
    for (int k = 0; k < n; ++k)
      out[static_cast<std::size_t>(k)] =
          field[static_cast<std::size_t>(k)]->eval(x);
  }
};

}  // namespace

std::shared_ptr<const Expr> parse_expression(const std::string& text,
                                             int n_vars) {
  return Parser(text, n_vars).parse();
}

std::shared_ptr<const VectorFieldSystem> make_expr_system(
    const std::vector<std::vector<std::string>>& components,
    const std::string& name) {
  if (components.empty())
    throw std::invalid_argument("make_expr_system: no fields given");
  const int d = static_cast<int>(components.size());
  const int n = static_cast<int>(components.front().size());
  if (n < 1) throw std::invalid_argument("make_expr_system: empty field");

  ExprFields fields;
  fields.n = n;
  for (const auto& field : components) {
    if (static_cast<int>(field.size()) != n)
      throw std::invalid_argument(
          "make_expr_system: all fields must have the same dimension");
    std::vector<ExprPtr> parsed;
    parsed.reserve(field.size());
    for (const auto& text : field) parsed.push_back(parse_expression(text, n));
    fields.components.push_back(std::move(parsed));
  }
  // Boundedness of user expressions is not analyzed.
  return make_system_model(name, n, d, false, std::move(fields));
}

}  // namespace varlab
