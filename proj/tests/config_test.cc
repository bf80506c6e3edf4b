#include "arccm/config.h"

#include <gtest/gtest.h>

namespace arccm {
namespace {

int ErrorLine(const std::string& text) {
  try {
    ParseRunConfig(text, "t.toml");
  } catch (const ConfigError& e) {
    return e.line();
  }
  return -1;
}

std::string ErrorText(const std::string& text) {
  try {
    ParseRunConfig(text, "t.toml");
  } catch (const ConfigError& e) {
    return e.what();
  }
  return "";
}

TEST(ConfigTest, EmptyTextGivesDefaults) {
  const RunConfig c = ParseRunConfig("");
  EXPECT_EQ(c.system, kExampleSystemName);
  EXPECT_EQ(c.seed, 1u);
  EXPECT_EQ(c.synthesis.theta_grid, 21);
  EXPECT_EQ(c.synthesis.solver.degree, 4);
  EXPECT_EQ(c.simulation.t1, 12.0);
  EXPECT_EQ(c.simulation.estimator.kind, EstimatorKind::kScheduled);
  EXPECT_EQ(c.verify.validation_theta_grid, 41);
  EXPECT_EQ(c.verify.validation_random_joint, 2000);
  EXPECT_TRUE(c.output.plots);
  EXPECT_EQ(c.TrueParameters(), ExampleTrueParameters());
}

TEST(ConfigTest, ExampleFileParses) {
  const RunConfig c = LoadRunConfig(std::string(ARCCM_SOURCE_DIR) + "/configs/example.toml");
  EXPECT_EQ(c.synthesis.solver.lambdas, (std::vector<double>{0.8, 0.5, 0.25}));
  EXPECT_EQ(c.synthesis.solver.mus, (std::vector<double>{0.5}));
  EXPECT_EQ(c.simulation.offset, Eigen::Vector3d(0.5, -0.5, 0.5));
  EXPECT_EQ(c.simulation.estimator.norm, RateNorm::kL1);
  const UncertainSystem sys = c.MakeSystem();
  const SynthesisConfig s = c.SynthesisSettings(sys);
  EXPECT_EQ(s.grid.theta[0].count, 21);
  EXPECT_TRUE(s.grid.theta[2].vertices);
  EXPECT_EQ(s.grid.state[1].count, 5);
  EXPECT_TRUE(s.grid.joint_vertices);
  const GridSpec v = c.ValidationGrid(sys);
  EXPECT_EQ(v.theta[1].count, 41);
  EXPECT_FALSE(v.joint_vertices);
  EXPECT_NE(v.seed, s.grid.seed);
}

TEST(ConfigTest, Overrides) {
  const RunConfig c = ParseRunConfig(R"(
seed = 42
threads = 3
[synthesis]
lambdas = [0.6]
theta_grid = 11
[simulation]
t1 = 4
x0 = [0.1, 0.2, 0.3]
[estimator]
kind = "rls"
derivative = "integral"
rho_min = 0.1
[verify]
sup_theta_err = 1.5
)");
  EXPECT_EQ(c.seed, 42u);
  EXPECT_EQ(c.threads, 3);
  EXPECT_EQ(c.synthesis.solver.lambdas, (std::vector<double>{0.6}));
  EXPECT_EQ(c.synthesis.theta_grid, 11);
  EXPECT_EQ(c.simulation.t1, 4.0);  // integer accepted as a number
  EXPECT_EQ(c.simulation.x0, Eigen::Vector3d(0.1, 0.2, 0.3));
  EXPECT_EQ(c.simulation.estimator.kind, EstimatorKind::kRls);
  EXPECT_EQ(c.simulation.estimator.rls.derivative, "integral");
  EXPECT_EQ(c.verify.bounds.sup_theta_err, 1.5);
  EXPECT_EQ(c.verify.prop1.seed, 44u);
  EXPECT_EQ(c.verify.clf.seed, 45u);
}

TEST(ConfigTest, UnknownKeyCarriesLine) {
  EXPECT_EQ(ErrorLine("seed = 1\n[synthesis]\ndegree = 4\nlambada = [0.8]\n"), 4);
  EXPECT_NE(ErrorText("[synthesis]\nlambada = [0.8]\n").find("unknown key [synthesis] lambada"),
            std::string::npos);
  EXPECT_EQ(ErrorLine("\n\n[bogus]\nx = 1\n"), 3);
  EXPECT_EQ(ErrorLine("seeds = 3\n"), 1);
}

TEST(ConfigTest, BadTypesAndValues) {
  EXPECT_EQ(ErrorLine("[synthesis]\ndegree = \"four\"\n"), 2);
  EXPECT_EQ(ErrorLine("[simulation]\nh = -0.1\n"), 2);
  EXPECT_EQ(ErrorLine("[estimator]\n\nkind = \"kalman\"\n"), 3);
  EXPECT_EQ(ErrorLine("[estimator]\nderivative = \"central\"\n"), 2);
  EXPECT_EQ(ErrorLine("[simulation]\noffset = [1, 2]\n"), -1);  // checked at run time
  EXPECT_EQ(ErrorLine("[output]\nplots = 1\n"), 2);
  EXPECT_EQ(ErrorLine("seed = -3\n"), 1);
  EXPECT_EQ(ErrorLine("system = 3\n"), 1);
  EXPECT_EQ(ErrorLine("[synthesis]\nlambdas = [0.8, \"x\"]\n"), 2);
  EXPECT_EQ(ErrorLine("[synthesis\n"), 1);
  EXPECT_NE(ErrorText("[simulation]\ncontrol_period = 0.0105\n").find("[simulation]"),
            std::string::npos);
  EXPECT_THROW(LoadRunConfig("/nonexistent/arccm.toml"), ConfigError);
}

TEST(ConfigTest, UnknownSystem) {
  const RunConfig c = ParseRunConfig("[system]\nname = \"pendulum\"\n");
  EXPECT_THROW(c.MakeSystem(), std::invalid_argument);
}

TEST(ConfigTest, ApplySeedDerivesEverySeed) {
  RunConfig c;
  c.ApplySeed(10);
  const UncertainSystem sys = c.MakeSystem();
  EXPECT_EQ(c.SynthesisSettings(sys).grid.seed, 10u);
  EXPECT_EQ(c.ValidationGrid(sys).seed, 11u);
  EXPECT_EQ(c.verify.prop1.seed, 12u);
  EXPECT_EQ(c.verify.clf.seed, 13u);
}

}  // namespace
}  // namespace arccm
