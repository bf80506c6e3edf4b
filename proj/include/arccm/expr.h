#pragma once

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace arccm {

/// Immutable differentiable scalar expression over a state vector x (size n)
/// and a parameter vector θ (size p). Variable indices are validated against
/// the declared (n, p) when the expression is built, so evaluation never has
/// to range-check.
class Expression {
 public:
  enum class Kind {
    kConstant,
    kState,
    kParam,
    kSum,
    kProduct,
    kPower,
    kTanh,
    kSin,
    kCos,
    kExp,
  };

  /// Zero constant with dimensions (0, 0).
  Expression();

  static Expression Constant(double value);
  static Expression State(int index, int num_states, int num_params);
  static Expression Param(int index, int num_states, int num_params);
  static Expression Sum(std::vector<Expression> terms);
  static Expression Product(std::vector<Expression> factors);
  static Expression Power(Expression base, int exponent);
  static Expression Tanh(Expression arg);
  static Expression Sin(Expression arg);
  static Expression Cos(Expression arg);
  static Expression Exp(Expression arg);

  Kind kind() const;
  double constant_value() const;
  int variable_index() const;
  int exponent() const;
  std::span<const Expression> children() const;

  /// Declared dimensions. Constants declare (0, 0) and adopt whatever
  /// dimensions their parents require.
  int num_states() const;
  int num_params() const;

  /// True if any node references a parameter variable.
  bool DependsOnParams() const;
  /// True if the expression is the literal constant zero.
  bool IsZero() const;

  double Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                  const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  /// Value and exact first partials with respect to (x₁..xₙ, θ₁..θₚ), by
  /// forward-mode differentiation of the tree. `gradient` is resized to
  /// `num_vars` (which must be ≥ n + p of this expression).
  double EvaluateWithGradient(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              int num_states, Eigen::VectorXd* gradient) const;

  std::string ToString() const;

  Expression operator-() const;
  friend Expression operator+(const Expression& a, const Expression& b);
  friend Expression operator-(const Expression& a, const Expression& b);
  friend Expression operator*(const Expression& a, const Expression& b);

  struct Node;  // defined in expr.cc

 private:
  explicit Expression(std::shared_ptr<const Node> node);
  std::shared_ptr<const Node> node_;
};

/// Names recognised by the formula parser. State variables are `x1..xn`,
/// parameters `th1..thp`; an optional second block of state variables named
/// `xd1..xdn` maps to state indices n..2n-1 (used for Lyapunov candidates
/// over (x, x_d, θ)).
struct VariableTable {
  int num_states = 0;
  int num_params = 0;
  bool with_reference_states = false;
};

class ParseError : public std::runtime_error {
 public:
  ParseError(const std::string& message, std::size_t column)
      : std::runtime_error(message), column_(column) {}
  std::size_t column() const { return column_; }

 private:
  std::size_t column_;
};

/// Parses infix formulas: + - * / (constant denominators only), ^ with
/// integer exponents, parentheses, numeric literals, and the functions
/// tanh, sin, cos, exp. Unknown identifiers are rejected.
Expression ParseExpression(std::string_view text, const VariableTable& table);

}  // namespace arccm
