#include "arccm/system.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

namespace arccm {
namespace {

TEST(SystemTest, ExampleBoxes) {
  const UncertainSystem sys = ExampleSystem();
  EXPECT_NO_THROW(sys.Validate());
  EXPECT_EQ(sys.n, 3);
  EXPECT_EQ(sys.m, 1);
  EXPECT_EQ(sys.p, 4);
  const Eigen::Vector4d mid(0.0, 1.0, 0.075, -0.625);
  EXPECT_LT((sys.theta_box.Midpoint() - mid).norm(), 1e-15);
  // Θ̃ spans the full width of Θ in each direction
  EXPECT_NEAR(sys.theta_error_box.MaxL1(), 2 + 1 + 1.35 + 2.25, 1e-12);
  EXPECT_TRUE(sys.theta_box.Contains(ExampleTrueParameters()));
}

TEST(SystemTest, DynamicsMatchHandWrittenModel) {
  const UncertainSystem sys = ExampleSystem();
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> U(-2, 2);
  for (int trial = 0; trial < 50; ++trial) {
    Eigen::Vector3d x(U(rng), U(rng), U(rng));
    Eigen::Vector4d th(U(rng), U(rng), U(rng), U(rng));
    Eigen::VectorXd u(1);
    u << U(rng);
    Eigen::Vector3d want(x[2] - th[0] * x[0], -x[1] - th[1] * x[0] * x[0],
                         std::tanh(x[1]) - th[2] * x[2] - th[3] * x[0] * x[0] + u[0]);
    EXPECT_LT((FullDynamics(sys, x, th, u) - want).norm(), 1e-14);

    Eigen::Matrix3d J;
    const double sech2 = 1 - std::pow(std::tanh(x[1]), 2);
    J << -th[0], 0, 1,
         -2 * th[1] * x[0], -1, 0,
         -2 * th[3] * x[0], sech2, -th[2];
    EXPECT_LT((SystemJacobian(sys, x, th, u) - J).norm(), 1e-13);
  }
}

TEST(SystemTest, TermsAreConsistent) {
  const UncertainSystem sys = ExampleSystem();
  Eigen::Vector3d x(0.4, -0.3, 1.2);
  Eigen::Vector4d th(0.1, 0.9, -0.2, 0.3);
  const DynamicsTerms t = EvaluateTerms(sys, x);
  EXPECT_TRUE(t.constant_input);
  EXPECT_EQ(t.B, Eigen::Vector3d(0, 0, 1));
  Eigen::VectorXd u(1);
  u << 0.0;
  EXPECT_LT((t.Drift(th) - FullDynamics(sys, x, th, u)).norm(), 1e-15);
  EXPECT_LT((t.Jacobian(th) - SystemJacobian(sys, x, th, u, true)).norm(), 1e-15);
}

TEST(SystemTest, ValidateRejectsParameterDependentTerms) {
  UncertainSystem sys = ExampleSystem();
  sys.f[0] = Expression::Param(0, 3, 4);
  EXPECT_THROW(sys.Validate(), std::invalid_argument);
  sys = ExampleSystem();
  sys.delta.pop_back();
  EXPECT_THROW(sys.Validate(), std::invalid_argument);
}

TEST(SystemTest, BoxHelpers) {
  ParameterBox b({{-1, 2}, {0, 1}});
  EXPECT_EQ(b.Vertices().size(), 4u);
  EXPECT_EQ(b.Vertices()[1], Eigen::Vector2d(2, 0));
  EXPECT_DOUBLE_EQ(b.MaxL1(), 3.0);
  EXPECT_EQ(b.Clamp(Eigen::Vector2d(5, -3)), Eigen::Vector2d(2, 0));
  EXPECT_FALSE(b.Contains(Eigen::Vector2d(2.1, 0.5)));
  EXPECT_THROW(ParameterBox({{1, 0}}), std::invalid_argument);
}

TEST(SystemTest, ReferenceIsModelConsistent) {
  const UncertainSystem sys = ExampleSystem();
  const Eigen::Vector4d th0 = sys.theta_box.Midpoint();
  const Eigen::Vector4d th1 = ExampleTrueParameters();
  ThetaSignal sig;
  sig.value = [&](double t) -> Eigen::VectorXd {
    const double s = std::clamp((t - 3.0) / 4.0, 0.0, 1.0);
    return th0 + s * (th1 - th0);
  };
  sig.rate = [&](double t) -> Eigen::VectorXd {
    return (t >= 3.0 && t < 7.0) ? Eigen::VectorXd((th1 - th0) / 4.0)
                                 : Eigen::VectorXd(Eigen::Vector4d::Zero());
  };
  const auto ref = GenerateReference(sys, sig, 0.0, 12.0, 0.01);
  ASSERT_EQ(ref.size(), 1201u);
  for (const auto& r : ref) {
    EXPECT_LT(ReferenceResidual(sys, r, sig.value(r.t)), 1e-12) << r.t;
    EXPECT_NEAR(r.xd[0], std::sin(r.t), 1e-15);
  }
  // x2d is continuous through the ramp and stays near its periodic orbit
  for (std::size_t k = 1; k < ref.size(); ++k) {
    EXPECT_LT(std::abs(ref[k].xd[1] - ref[k - 1].xd[1]), 0.02);
  }
}

TEST(SystemTest, PeriodicStartingValue) {
  const UncertainSystem sys = ExampleSystem();
  const Eigen::Vector4d th = sys.theta_box.Midpoint();
  ReferenceGenerator g(sys);
  g.Reset(0.0, th);
  const double x0 = g.Current(th, Eigen::Vector4d::Zero()).xd[1];
  // one more period with θ̂ frozen lands (almost) on the same value
  g.Advance(2 * std::numbers::pi, th, Eigen::Vector4d::Zero());
  EXPECT_NEAR(g.Current(th, Eigen::Vector4d::Zero()).xd[1], x0, 2e-3);
}

}  // namespace
}  // namespace arccm
