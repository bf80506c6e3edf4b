#include "arccm/expr.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace arccm {
namespace {

const VariableTable kTable{3, 4, false};

TEST(ExprTest, EvaluatesHandComputedValue) {
  const Expression e = ParseExpression("x3 - th1*x1 + tanh(x2)^2 / 4", kTable);
  Eigen::Vector3d x(0.5, -1.2, 2.0);
  Eigen::Vector4d th(0.3, 0, 0, 0);
  const double want = 2.0 - 0.3 * 0.5 + std::pow(std::tanh(-1.2), 2) / 4;
  EXPECT_NEAR(e.Evaluate(x, th), want, 1e-15);
}

TEST(ExprTest, OperatorPrecedenceAndUnaryMinus) {
  const Expression e = ParseExpression("-x1^2 + 2*x2*(x3 - 1)", kTable);
  Eigen::Vector3d x(3, 2, 5);
  EXPECT_DOUBLE_EQ(e.Evaluate(x, Eigen::Vector4d::Zero()), -9.0 + 16.0);
}

TEST(ExprTest, GradientMatchesCentralDifferences) {
  const char* formulas[] = {
      "x3 - th1*x1",
      "-x2 - th2*x1^2",
      "tanh(x2) - th3*x3 - th4*x1^2",
      "sin(x1*x2) * cos(th3) + exp(0.5*x3*th4)",
      "(x1 + th2)^3 * tanh(x2 - x3)",
  };
  std::mt19937_64 rng(5);
  std::uniform_real_distribution<double> U(-1.5, 1.5);
  for (const char* f : formulas) {
    const Expression e = ParseExpression(f, kTable);
    for (int trial = 0; trial < 20; ++trial) {
      Eigen::VectorXd x(3), th(4);
      for (int i = 0; i < 3; ++i) x[i] = U(rng);
      for (int i = 0; i < 4; ++i) th[i] = U(rng);
      Eigen::VectorXd g;
      const double v = e.EvaluateWithGradient(x, th, 3, &g);
      ASSERT_EQ(g.size(), 7);
      EXPECT_NEAR(v, e.Evaluate(x, th), 1e-14);
      const double h = 1e-6;
      for (int k = 0; k < 7; ++k) {
        Eigen::VectorXd xp = x, xm = x, tp = th, tm = th;
        if (k < 3) {
          xp[k] += h;
          xm[k] -= h;
        } else {
          tp[k - 3] += h;
          tm[k - 3] -= h;
        }
        const double fd = (e.Evaluate(xp, tp) - e.Evaluate(xm, tm)) / (2 * h);
        EXPECT_NEAR(g[k], fd, 1e-7 * (1 + std::abs(fd))) << f << " var " << k;
      }
    }
  }
}

TEST(ExprTest, ParamDependenceFlag) {
  EXPECT_FALSE(ParseExpression("tanh(x2) + x1^2", kTable).DependsOnParams());
  EXPECT_TRUE(ParseExpression("x1*th4", kTable).DependsOnParams());
  EXPECT_TRUE(ParseExpression("0", kTable).IsZero());
}

TEST(ExprTest, ReferenceStateBlock) {
  const VariableTable t{2, 1, true};
  const Expression e = ParseExpression("(x1 - xd1)^2 + (x2 - xd2)^2", t);
  // xd maps to states n..2n-1
  Eigen::Vector4d z(1, 2, 0.5, 4);
  EXPECT_DOUBLE_EQ(e.Evaluate(z, Eigen::VectorXd::Zero(1)), 0.25 + 4.0);
}

TEST(ExprTest, RejectsUnknownIdentifierWithColumn) {
  try {
    ParseExpression("x1 + foo(x2)", kTable);
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.column(), 6u);  // 1-based
  }
  EXPECT_THROW(ParseExpression("x4", kTable), ParseError);
  EXPECT_THROW(ParseExpression("th5", kTable), ParseError);
  EXPECT_THROW(ParseExpression("x1 / x2", kTable), ParseError);
  EXPECT_THROW(ParseExpression("x1 +", kTable), ParseError);
  EXPECT_THROW(ParseExpression("x1^0.5", kTable), ParseError);
}

TEST(ExprTest, BuilderValidatesIndices) {
  EXPECT_THROW(Expression::State(3, 3, 0), std::out_of_range);
  EXPECT_THROW(Expression::Param(-1, 3, 4), std::out_of_range);
  EXPECT_NO_THROW(Expression::Param(3, 3, 4));
}

}  // namespace
}  // namespace arccm
