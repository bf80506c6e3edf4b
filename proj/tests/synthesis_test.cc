#include "arccm/synthesis.h"

#include <cmath>
#include <filesystem>
#include <random>

#include <gtest/gtest.h>

#include "arccm/verify.h"

namespace arccm {
namespace {

GridSpec SmallExampleGrid(const UncertainSystem& sys) {
  GridSpec g = DefaultSynthesisGrid(sys, UnmatchedParameters(sys));
  for (int i : {0, 1}) g.theta[i].count = 3;
  for (auto& a : g.state) a.count = 3;
  g.random_joint = 50;
  return g;
}

TEST(SynthesisTest, UnmatchedParametersOfExample) {
  EXPECT_EQ(UnmatchedParameters(ExampleSystem()), (std::vector<int>{0, 1}));
  EXPECT_TRUE(UnmatchedParameters(ScalarClfSystem()).empty());
}

TEST(SynthesisTest, MetricStructureRespectsKillingCondition) {
  const UncertainSystem sys = ExampleSystem();
  SynthesisConfig cfg;
  cfg.grid = SmallExampleGrid(sys);
  cfg.threads = 1;
  SynthesisProblem prob(sys, cfg);
  // W: x1, x2, θ1, θ2 only; x3 is the input direction
  const MonomialBasis& wb = *prob.w_basis();
  EXPECT_TRUE(wb.is_active(0));
  EXPECT_TRUE(wb.is_active(1));
  EXPECT_FALSE(wb.is_active(2));
  EXPECT_TRUE(wb.is_active(3));
  EXPECT_TRUE(wb.is_active(4));
  EXPECT_FALSE(wb.is_active(5));
  EXPECT_FALSE(wb.is_active(6));
  EXPECT_EQ(prob.w_params(), (std::vector<int>{0, 1}));
  const MonomialBasis& yb = *prob.y_basis();
  EXPECT_TRUE(yb.is_active(2));
  EXPECT_FALSE(yb.is_active(5));
  EXPECT_EQ(wb.size(), 70);  // C(4+4, 4)

  // any decision vector gives C2 = 0 exactly
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> U(-0.1, 0.1);
  Eigen::VectorXd z = prob.InitialPoint();
  for (int i = 0; i < z.size() - 1; ++i) z[i] += U(rng);
  auto metric = prob.MetricFromDecision(z);
  ConditionSettings s{0.8, 0.5, 2.0, 1e-2, 1e2, RateConvention::kC1TwoLambda};
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Vector3d x(U(rng) * 20, U(rng) * 20, U(rng) * 20);
    Eigen::Vector4d th(U(rng), 1 + U(rng), 0, -0.6);
    for (const auto& b : AssembleConditionBlocks(*metric, s, sys, x, th)) {
      if (b.kind == ConditionKind::kC2) EXPECT_EQ(b.matrix.cwiseAbs().maxCoeff(), 0.0);
    }
  }
}

// W = I, Y = 0: blocks by hand.
TEST(SynthesisTest, ConditionBlocksMatchHandAssembly) {
  const UncertainSystem sys = ExampleSystem();
  const ExponentialScalarMetric identity(3, 4, 1, 0, 0.0);
  const ConditionSettings s{0.7, 0.4, 3.0, 0.5, 4.0, RateConvention::kC1TwoLambda};
  const Eigen::Vector3d x(0.6, -0.2, 1.1);
  const Eigen::Vector4d th(0.2, 0.9, -0.1, 0.4);
  Eigen::VectorXd u = Eigen::VectorXd::Zero(1);
  const Eigen::MatrixXd A = SystemJacobian(sys, x, th, u, true);
  Eigen::MatrixXd delta(4, 3);
  delta << -x[0], 0, 0,
           0, -x[0] * x[0], 0,
           0, 0, -x[2],
           0, 0, -x[0] * x[0];
  Eigen::MatrixXd c1(7, 7);
  c1.topLeftCorner(3, 3) = -A - A.transpose() - 2 * 0.7 * Eigen::Matrix3d::Identity();
  c1.topRightCorner(3, 4) = -delta.transpose();
  c1.bottomLeftCorner(4, 3) = -delta;
  c1.bottomRightCorner(4, 4) = 3.0 * Eigen::Matrix4d::Identity();

  const auto blocks = AssembleConditionBlocks(identity, s, sys, x, th);
  int seen = 0;
  for (const auto& b : blocks) {
    if (b.label == "C1") {
      EXPECT_LT((b.matrix - c1).cwiseAbs().maxCoeff(), 1e-14);
      ++seen;
    } else if (b.label == "bound_low") {
      EXPECT_TRUE(b.matrix.isApprox(0.75 * Eigen::Matrix3d::Identity()));
      ++seen;
    } else if (b.label == "bound_high") {
      EXPECT_TRUE(b.matrix.isApprox(Eigen::Matrix3d::Identity()));
      ++seen;
    } else if (b.kind == ConditionKind::kC3) {
      EXPECT_TRUE(b.matrix.isApprox(0.4 * Eigen::Matrix3d::Identity()));
      ++seen;
    }
  }
  EXPECT_EQ(seen, 5);

  ConditionSettings half = s;
  half.convention = RateConvention::kProofLambda;
  const auto b2 = AssembleConditionBlocks(identity, half, sys, x, th);
  EXPECT_NEAR(b2[0].matrix(0, 0) - c1(0, 0), 0.7, 1e-14);
}

// Directional central differences of the smoothed penalty.
TEST(SynthesisTest, PenaltyGradientMatchesFiniteDifferences) {
  const UncertainSystem sys = ExampleSystem();
  SynthesisConfig cfg;
  cfg.grid = SmallExampleGrid(sys);
  cfg.threads = 1;
  SynthesisProblem prob(sys, cfg);
  std::vector<std::size_t> idx;
  for (std::size_t i = 0; i < prob.grid().size(); i += 7) idx.push_back(i);
  const auto pts = prob.Prepare(idx);

  std::mt19937_64 rng(17);
  std::normal_distribution<double> N;
  for (double temperature : {5e-2, 1e-2}) {
    PenaltyOptions o = prob.MakeOptions(0.8, 0.5);
    o.temperature = temperature;
    for (int probe = 0; probe < 6; ++probe) {
      Eigen::VectorXd z = prob.InitialPoint();
      for (int i = 0; i < z.size() - 1; ++i) z[i] += 0.02 * N(rng);
      z[prob.alpha_index()] = 1.0 + 0.5 * probe;
      Eigen::VectorXd g;
      prob.Penalty(z, o, pts, &g);
      ASSERT_EQ(g.size(), z.size());
      for (int dir = 0; dir < 4; ++dir) {
        Eigen::VectorXd d(z.size());
        for (int i = 0; i < d.size(); ++i) d[i] = N(rng);
        d.normalize();
        const double h = 1e-6;
        const double fp = prob.Penalty(z + h * d, o, pts, nullptr);
        const double fm = prob.Penalty(z - h * d, o, pts, nullptr);
        const double fd = (fp - fm) / (2 * h);
        const double an = g.dot(d);
        EXPECT_LE(std::abs(an - fd), 1e-5 * std::max(1.0, std::abs(fd)))
            << "tau " << temperature << " probe " << probe;
      }
    }
  }
}

TEST(SynthesisTest, GridMaterialization) {
  const UncertainSystem sys = ExampleSystem();
  GridSpec g = SmallExampleGrid(sys);
  SampleGrid grid(sys, g);
  EXPECT_EQ(grid.num_thetas(), 3u * 3u * 2u * 2u);
  EXPECT_EQ(grid.num_states(), 27u);
  EXPECT_EQ(grid.size(), 27u * 36u + 50u);
  for (std::size_t i = 0; i < grid.size(); ++i) {
    ASSERT_TRUE(sys.state_box.Contains(grid.x(i), 1e-12));
    ASSERT_TRUE(sys.theta_box.Contains(grid.theta(i), 1e-12));
  }
  // same seed, same samples
  SampleGrid again(sys, g);
  EXPECT_EQ(grid.x(grid.size() - 1), again.x(grid.size() - 1));
  EXPECT_EQ(GridSpec::FromJson(g.ToJson()).Describe(), g.Describe());
}

// Matched scalar plant: W is a constant, so synthesis is fast and the
// certificate can be checked against the dense grid.
TEST(SynthesisTest, ScalarPlantCertificate) {
  const UncertainSystem sys = ScalarClfSystem();
  SynthesisConfig cfg;
  cfg.degree = 2;
  cfg.lambdas = {0.8};
  cfg.mus = {0.5};
  cfg.threads = 1;
  cfg.grid.theta = {GridAxis{11}};
  cfg.grid.state = {GridAxis{11}};
  const SynthesisResult r = Synthesize(sys, cfg);
  ASSERT_TRUE(r.feasible);
  const MetricCertificate& cert = *r.certificate;
  EXPECT_GE(cert.validation.worst_margin(), -1e-9);
  GridSpec dense;
  dense.theta = {GridAxis{41}};
  dense.state = {GridAxis{41}};
  dense.random_joint = 500;
  const ValidationReport v = ValidateCertificate(cert, sys, dense);
  EXPECT_GE(v.worst_margin(), -1e-6);

  const auto path = std::filesystem::temp_directory_path() / "arccm_scalar_cert.json";
  WriteCertificate(cert, path.string());
  const MetricCertificate back = ReadCertificate(path.string());
  EXPECT_EQ(back.lambda, cert.lambda);
  EXPECT_EQ(back.alpha_sq, cert.alpha_sq);
  MetricEval a, b;
  Eigen::VectorXd x(1), th(1);
  x << 0.3;
  th << -0.2;
  cert.metric->Evaluate(x, th, MetricRequest{false, false, true}, &a);
  back.metric->Evaluate(x, th, MetricRequest{false, false, true}, &b);
  EXPECT_EQ(a.W, b.W);
  EXPECT_EQ(a.Y, b.Y);
  std::filesystem::remove(path);
}

TEST(SynthesisTest, RateConventionNames) {
  for (auto c : {RateConvention::kC1TwoLambda, RateConvention::kProofLambda}) {
    EXPECT_EQ(ParseRateConvention(RateConventionName(c)), c);
  }
  EXPECT_THROW(ParseRateConvention("bogus"), std::invalid_argument);
}

}  // namespace
}  // namespace arccm
