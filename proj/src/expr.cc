#include "arccm/expr.h"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <sstream>
#include <stdexcept>

namespace arccm {

struct Expression::Node {
  Kind kind = Kind::kConstant;
  double value = 0.0;
  int index = 0;
  int exponent = 0;
  int num_states = 0;
  int num_params = 0;
  bool has_params = false;
  std::vector<Expression> children;
};

namespace {

std::shared_ptr<Expression::Node> MakeNode(Expression::Kind kind) {
  auto node = std::make_shared<Expression::Node>();
  node->kind = kind;
  return node;
}

}  // namespace

Expression::Expression() : Expression(Constant(0.0)) {}

Expression::Expression(std::shared_ptr<const Node> node)
    : node_(std::move(node)) {}

Expression Expression::Constant(double value) {
  auto node = MakeNode(Kind::kConstant);
  node->value = value;
  return Expression(std::move(node));
}

Expression Expression::State(int index, int num_states, int num_params) {
  if (index < 0 || index >= num_states) {
    throw std::out_of_range("state variable index " + std::to_string(index) +
                            " outside [0, " + std::to_string(num_states) +
                            ")");
  }
  auto node = MakeNode(Kind::kState);
  node->index = index;
  node->num_states = num_states;
  node->num_params = num_params;
  return Expression(std::move(node));
}

Expression Expression::Param(int index, int num_states, int num_params) {
  if (index < 0 || index >= num_params) {
    throw std::out_of_range("parameter index " + std::to_string(index) +
                            " outside [0, " + std::to_string(num_params) +
                            ")");
  }
  auto node = MakeNode(Kind::kParam);
  node->index = index;
  node->num_states = num_states;
  node->num_params = num_params;
  node->has_params = true;
  return Expression(std::move(node));
}

namespace {

std::shared_ptr<Expression::Node> MakeCompound(
    Expression::Kind kind, std::vector<Expression> children) {
  auto node = MakeNode(kind);
  for (const auto& c : children) {
    node->num_states = std::max(node->num_states, c.num_states());
    node->num_params = std::max(node->num_params, c.num_params());
    node->has_params = node->has_params || c.DependsOnParams();
  }
  node->children = std::move(children);
  return node;
}

}  // namespace

Expression Expression::Sum(std::vector<Expression> terms) {
  if (terms.empty()) return Constant(0.0);
  if (terms.size() == 1) return terms.front();
  return Expression(MakeCompound(Kind::kSum, std::move(terms)));
}

Expression Expression::Product(std::vector<Expression> factors) {
  if (factors.empty()) return Constant(1.0);
  if (factors.size() == 1) return factors.front();
  return Expression(MakeCompound(Kind::kProduct, std::move(factors)));
}

Expression Expression::Power(Expression base, int exponent) {
  auto node = MakeCompound(Kind::kPower, {std::move(base)});
  node->exponent = exponent;
  return Expression(std::move(node));
}

Expression Expression::Tanh(Expression arg) {
  return Expression(MakeCompound(Kind::kTanh, {std::move(arg)}));
}
Expression Expression::Sin(Expression arg) {
  return Expression(MakeCompound(Kind::kSin, {std::move(arg)}));
}
Expression Expression::Cos(Expression arg) {
  return Expression(MakeCompound(Kind::kCos, {std::move(arg)}));
}
Expression Expression::Exp(Expression arg) {
  return Expression(MakeCompound(Kind::kExp, {std::move(arg)}));
}

Expression::Kind Expression::kind() const { return node_->kind; }
double Expression::constant_value() const { return node_->value; }
int Expression::variable_index() const { return node_->index; }
int Expression::exponent() const { return node_->exponent; }
std::span<const Expression> Expression::children() const {
  return node_->children;
}
int Expression::num_states() const { return node_->num_states; }
int Expression::num_params() const { return node_->num_params; }
bool Expression::DependsOnParams() const { return node_->has_params; }
bool Expression::IsZero() const {
  return node_->kind == Kind::kConstant && node_->value == 0.0;
}

double Expression::Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                            const Eigen::Ref<const Eigen::VectorXd>& theta)
    const {
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::kConstant:
      return n.value;
    case Kind::kState:
      return x[n.index];
    case Kind::kParam:
      return theta[n.index];
    case Kind::kSum: {
      double s = 0.0;
      for (const auto& c : n.children) s += c.Evaluate(x, theta);
      return s;
    }
    case Kind::kProduct: {
      double p = 1.0;
      for (const auto& c : n.children) p *= c.Evaluate(x, theta);
      return p;
    }
    case Kind::kPower: {
      const double b = n.children[0].Evaluate(x, theta);
      double r = 1.0;
      for (int k = 0; k < std::abs(n.exponent); ++k) r *= b;
      return n.exponent >= 0 ? r : 1.0 / r;
    }
    case Kind::kTanh:
      return std::tanh(n.children[0].Evaluate(x, theta));
    case Kind::kSin:
      return std::sin(n.children[0].Evaluate(x, theta));
    case Kind::kCos:
      return std::cos(n.children[0].Evaluate(x, theta));
    case Kind::kExp:
      return std::exp(n.children[0].Evaluate(x, theta));
  }
  return 0.0;
}

namespace {

double IntPow(double b, int e) {
  double r = 1.0;
  for (int k = 0; k < std::abs(e); ++k) r *= b;
  return e >= 0 ? r : 1.0 / r;
}

}  // namespace

double Expression::EvaluateWithGradient(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta, int num_states,
    Eigen::VectorXd* gradient) const {
  const int num_vars = num_states + static_cast<int>(theta.size());
  gradient->setZero(num_vars);
  const Node& n = *node_;
  switch (n.kind) {
    case Kind::kConstant:
      return n.value;
    case Kind::kState:
      (*gradient)[n.index] = 1.0;
      return x[n.index];
    case Kind::kParam:
      (*gradient)[num_states + n.index] = 1.0;
      return theta[n.index];
    case Kind::kSum: {
      double s = 0.0;
      Eigen::VectorXd g;
      for (const auto& c : n.children) {
        s += c.EvaluateWithGradient(x, theta, num_states, &g);
        *gradient += g;
      }
      return s;
    }
    case Kind::kProduct: {
      // d(Πf) = Σ_k (Π_{j≠k} f_j) df_k, accumulated left to right.
      double p = 1.0;
      Eigen::VectorXd g;
      for (const auto& c : n.children) {
        const double v = c.EvaluateWithGradient(x, theta, num_states, &g);
        *gradient = *gradient * v + p * g;
        p *= v;
      }
      return p;
    }
    case Kind::kPower: {
      Eigen::VectorXd g;
      const double b =
          n.children[0].EvaluateWithGradient(x, theta, num_states, &g);
      if (n.exponent == 0) return 1.0;
      *gradient = (n.exponent * IntPow(b, n.exponent - 1)) * g;
      return IntPow(b, n.exponent);
    }
    case Kind::kTanh: {
      Eigen::VectorXd g;
      const double a =
          n.children[0].EvaluateWithGradient(x, theta, num_states, &g);
      const double t = std::tanh(a);
      *gradient = (1.0 - t * t) * g;
      return t;
    }
    case Kind::kSin: {
      Eigen::VectorXd g;
      const double a =
          n.children[0].EvaluateWithGradient(x, theta, num_states, &g);
      *gradient = std::cos(a) * g;
      return std::sin(a);
    }
    case Kind::kCos: {
      Eigen::VectorXd g;
      const double a =
          n.children[0].EvaluateWithGradient(x, theta, num_states, &g);
      *gradient = -std::sin(a) * g;
      return std::cos(a);
    }
    case Kind::kExp: {
      Eigen::VectorXd g;
      const double a =
          n.children[0].EvaluateWithGradient(x, theta, num_states, &g);
      const double e = std::exp(a);
      *gradient = e * g;
      return e;
    }
  }
  return 0.0;
}

std::string Expression::ToString() const {
  const Node& n = *node_;
  std::ostringstream os;
  os.precision(17);
  switch (n.kind) {
    case Kind::kConstant:
      os << n.value;
      break;
    case Kind::kState:
      os << "x" << (n.index + 1);
      break;
    case Kind::kParam:
      os << "th" << (n.index + 1);
      break;
    case Kind::kSum:
    case Kind::kProduct: {
      os << "(";
      for (std::size_t i = 0; i < n.children.size(); ++i) {
        if (i > 0) os << (n.kind == Kind::kSum ? " + " : " * ");
        os << n.children[i].ToString();
      }
      os << ")";
      break;
    }
    case Kind::kPower:
      os << n.children[0].ToString() << "^" << n.exponent;
      break;
    case Kind::kTanh:
      os << "tanh(" << n.children[0].ToString() << ")";
      break;
    case Kind::kSin:
      os << "sin(" << n.children[0].ToString() << ")";
      break;
    case Kind::kCos:
      os << "cos(" << n.children[0].ToString() << ")";
      break;
    case Kind::kExp:
      os << "exp(" << n.children[0].ToString() << ")";
      break;
  }
  return os.str();
}

Expression Expression::operator-() const {
  if (kind() == Kind::kConstant) return Constant(-constant_value());
  return Product({Constant(-1.0), *this});
}

Expression operator+(const Expression& a, const Expression& b) {
  if (a.IsZero()) return b;
  if (b.IsZero()) return a;
  return Expression::Sum({a, b});
}

Expression operator-(const Expression& a, const Expression& b) {
  return a + (-b);
}

Expression operator*(const Expression& a, const Expression& b) {
  if (a.IsZero() || b.IsZero()) return Expression::Constant(0.0);
  if (a.kind() == Expression::Kind::kConstant && a.constant_value() == 1.0) {
    return b;
  }
  if (b.kind() == Expression::Kind::kConstant && b.constant_value() == 1.0) {
    return a;
  }
  return Expression::Product({a, b});
}

// ---------------------------------------------------------------------------
// Recursive-descent parser.
//
//   expr   := term (('+' | '-') term)*
//   term   := unary (('*' | '/') unary)*
//   unary  := '-' unary | power
//   power  := atom ('^' ['-'] integer)?
//   atom   := number | identifier | identifier '(' expr ')' | '(' expr ')'

namespace {

class Parser {
 public:
  Parser(std::string_view text, const VariableTable& table)
      : text_(text), table_(table) {}

  Expression Parse() {
    Expression e = ParseSum();
    SkipSpace();
    if (pos_ != text_.size()) Fail("unexpected trailing input");
    return e;
  }

 private:
  [[noreturn]] void Fail(const std::string& what) const {
    throw ParseError("formula '" + std::string(text_) + "': " + what +
                         " at column " + std::to_string(pos_ + 1),
                     pos_ + 1);
  }

  void SkipSpace() {
    while (pos_ < text_.size() &&
           std::isspace(static_cast<unsigned char>(text_[pos_]))) {
      ++pos_;
    }
  }

  bool Accept(char c) {
    SkipSpace();
    if (pos_ < text_.size() && text_[pos_] == c) {
      ++pos_;
      return true;
    }
    return false;
  }

  Expression ParseSum() {
    std::vector<Expression> terms{ParseTerm()};
    while (true) {
      if (Accept('+')) {
        terms.push_back(ParseTerm());
      } else if (Accept('-')) {
        terms.push_back(-ParseTerm());
      } else {
        break;
      }
    }
    return Expression::Sum(std::move(terms));
  }

  Expression ParseTerm() {
    std::vector<Expression> factors{ParseUnary()};
    while (true) {
      if (Accept('*')) {
        factors.push_back(ParseUnary());
      } else if (Accept('/')) {
        const std::size_t at = pos_;
        Expression d = ParseUnary();
        if (d.kind() != Expression::Kind::kConstant) {
          pos_ = at;
          Fail("division is only supported by numeric constants");
        }
        if (d.constant_value() == 0.0) {
          pos_ = at;
          Fail("division by zero");
        }
        factors.push_back(Expression::Constant(1.0 / d.constant_value()));
      } else {
        break;
      }
    }
    return Expression::Product(std::move(factors));
  }

  Expression ParseUnary() {
    if (Accept('-')) return -ParseUnary();
    if (Accept('+')) return ParseUnary();
    return ParsePower();
  }

  Expression ParsePower() {
    Expression base = ParseAtom();
    if (Accept('^')) {
      bool negative = Accept('-');
      SkipSpace();
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             std::isdigit(static_cast<unsigned char>(text_[pos_]))) {
        ++pos_;
      }
      if (start == pos_) Fail("expected integer exponent after '^'");
      int e = std::stoi(std::string(text_.substr(start, pos_ - start)));
      if (negative) e = -e;
      if (base.kind() == Expression::Kind::kConstant) {
        return Expression::Constant(IntPow(base.constant_value(), e));
      }
      return Expression::Power(std::move(base), e);
    }
    return base;
  }

  Expression ParseAtom() {
    SkipSpace();
    if (pos_ >= text_.size()) Fail("unexpected end of formula");
    const char c = text_[pos_];
    if (Accept('(')) {
      Expression e = ParseSum();
      if (!Accept(')')) Fail("expected ')'");
      return e;
    }
    if (std::isdigit(static_cast<unsigned char>(c)) || c == '.') {
      return ParseNumber();
    }
    if (std::isalpha(static_cast<unsigned char>(c)) || c == '_') {
      const std::size_t start = pos_;
      while (pos_ < text_.size() &&
             (std::isalnum(static_cast<unsigned char>(text_[pos_])) ||
              text_[pos_] == '_')) {
        ++pos_;
      }
      const std::string name(text_.substr(start, pos_ - start));
      SkipSpace();
      if (pos_ < text_.size() && text_[pos_] == '(') {
        ++pos_;
        Expression arg = ParseSum();
        if (!Accept(')')) Fail("expected ')' after function argument");
        if (name == "tanh") return Expression::Tanh(std::move(arg));
        if (name == "sin") return Expression::Sin(std::move(arg));
        if (name == "cos") return Expression::Cos(std::move(arg));
        if (name == "exp") return Expression::Exp(std::move(arg));
        pos_ = start;
        Fail("unknown function '" + name + "'");
      }
      return Variable(name, start);
    }
    Fail(std::string("unexpected character '") + c + "'");
  }

  Expression ParseNumber() {
    const char* begin = text_.data() + pos_;
    char* end = nullptr;
    const std::string rest(begin, text_.size() - pos_);
    const double v = std::strtod(rest.c_str(), &end);
    const std::size_t used = static_cast<std::size_t>(end - rest.c_str());
    if (used == 0) Fail("malformed number");
    pos_ += used;
    return Expression::Constant(v);
  }

  Expression Variable(const std::string& name, std::size_t start) {
    const int n = table_.num_states;
    const int total_states = table_.with_reference_states ? 2 * n : n;
    auto index_after = [&](std::size_t prefix) -> int {
      if (name.size() <= prefix) return -1;
      for (std::size_t i = prefix; i < name.size(); ++i) {
        if (!std::isdigit(static_cast<unsigned char>(name[i]))) return -1;
      }
      return std::stoi(name.substr(prefix));
    };
    if (name.rfind("xd", 0) == 0 && table_.with_reference_states) {
      const int k = index_after(2);
      if (k >= 1 && k <= n) {
        return Expression::State(n + k - 1, total_states, table_.num_params);
      }
    } else if (name.rfind("th", 0) == 0) {
      const int k = index_after(2);
      if (k >= 1 && k <= table_.num_params) {
        return Expression::Param(k - 1, total_states, table_.num_params);
      }
    } else if (name.rfind('x', 0) == 0) {
      const int k = index_after(1);
      if (k >= 1 && k <= n) {
        return Expression::State(k - 1, total_states, table_.num_params);
      }
    }
    pos_ = start;
    Fail("unknown identifier '" + name + "'");
  }

  std::string_view text_;
  const VariableTable& table_;
  std::size_t pos_ = 0;
};

}  // namespace

Expression ParseExpression(std::string_view text, const VariableTable& table) {
  return Parser(text, table).Parse();
}

}  // namespace arccm
