#include "arccm/sim.h"

#include <cmath>
#include <filesystem>

#include <gtest/gtest.h>

#include "arccm/control.h"
#include "arccm/synthesis.h"

namespace arccm {
namespace {

const MetricCertificate& FixtureCert() {
  static const MetricCertificate cert =
      ReadCertificate(std::string(ARCCM_SOURCE_DIR) + "/tests/data/example_cert.json");
  return cert;
}

SimConfig ShortRun(double t1) {
  SimConfig cfg;
  cfg.t1 = t1;
  return cfg;
}

TEST(SimTest, Rk4IsFourthOrder) {
  // ẋ = −x·t, x(t) = exp(−t²/2)
  auto f = [](double t, const Eigen::VectorXd& x) -> Eigen::VectorXd { return -t * x; };
  double err[2];
  for (int r = 0; r < 2; ++r) {
    const int steps = 20 << r;
    const double h = 2.0 / steps;
    Eigen::VectorXd x = Eigen::VectorXd::Ones(1);
    for (int k = 0; k < steps; ++k) x = Rk4Step(f, k * h, x, h);
    err[r] = std::abs(x[0] - std::exp(-2.0));
  }
  const double order = std::log2(err[0] / err[1]);
  EXPECT_GT(order, 3.8);
  EXPECT_LT(order, 4.3);
}

TEST(SimTest, Rk4RejectsNonFinite) {
  auto f = [](double, const Eigen::VectorXd& x) -> Eigen::VectorXd {
    return x.array().log();
  };
  EXPECT_THROW(Rk4Step(f, 0.0, -Eigen::VectorXd::Ones(1), 0.1), std::runtime_error);
}

TEST(SimTest, SubstepsPerTick) {
  SimConfig cfg;
  EXPECT_EQ(cfg.SubstepsPerTick(), 10);
  cfg.control_period = 0.0105;
  EXPECT_THROW(cfg.SubstepsPerTick(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.h = 0;
  EXPECT_THROW(cfg.SubstepsPerTick(), std::invalid_argument);
  cfg = SimConfig{};
  cfg.t1 = cfg.t0;
  EXPECT_THROW(cfg.SubstepsPerTick(), std::invalid_argument);
}

TEST(SimTest, ShortAdaptiveRun) {
  const UncertainSystem sys = ExampleSystem();
  SimConfig cfg = ShortRun(1.0);
  const Trace tr = RunClosedLoop(sys, FixtureCert(), cfg);
  ASSERT_EQ(tr.records.size(), 101u);
  EXPECT_EQ(tr.n, 3);
  EXPECT_EQ(tr.p, 4);
  EXPECT_NEAR(tr.dt, 0.01, 1e-15);
  const auto& r0 = tr.records.front();
  EXPECT_LT((r0.x - r0.xd - cfg.offset).norm(), 1e-15);
  EXPECT_LT((r0.theta_hat - sys.theta_box.Midpoint()).norm(), 1e-15);
  for (const auto& r : tr.records) {
    EXPECT_TRUE(r.geo_ok) << r.t;
    EXPECT_TRUE(r.in_domain) << r.t;
    EXPECT_LT(r.reference_residual, 1e-9) << r.t;
    EXPECT_LT((r.theta_err - (ExampleTrueParameters() - r.theta_hat)).norm(), 1e-15);
  }
  // the controller pulls the state in
  EXPECT_LT(tr.records.back().energy, 0.5 * r0.energy);
}

TEST(SimTest, RunIsDeterministic) {
  const UncertainSystem sys = ExampleSystem();
  const SimConfig cfg = ShortRun(0.3);
  EXPECT_EQ(TraceCsv(RunClosedLoop(sys, FixtureCert(), cfg)),
            TraceCsv(RunClosedLoop(sys, FixtureCert(), cfg)));
}

TEST(SimTest, CsvRoundTrip) {
  const UncertainSystem sys = ExampleSystem();
  const Trace tr = RunClosedLoop(sys, FixtureCert(), ShortRun(0.2));
  const auto path = std::filesystem::temp_directory_path() / "arccm_sim_trace.csv";
  WriteTraceCsv(tr, path.string());
  const Trace back = ReadTraceCsv(path.string(), 3, 1, 4, ExampleTrueParameters());
  ASSERT_EQ(back.records.size(), tr.records.size());
  EXPECT_NEAR(back.dt, tr.dt, 1e-15);
  for (std::size_t k = 0; k < tr.records.size(); ++k) {
    const auto& a = tr.records[k];
    const auto& b = back.records[k];
    EXPECT_EQ(a.t, b.t);
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.u, b.u);
    EXPECT_EQ(a.theta_hat, b.theta_hat);
    EXPECT_EQ(a.energy, b.energy);
    EXPECT_EQ(a.geo_ok, b.geo_ok);
    EXPECT_TRUE(std::isnan(b.bound_cons));
  }
  EXPECT_EQ(TraceCsv(back), TraceCsv(tr));
  std::filesystem::remove(path);
}

TEST(SimTest, OverFastScheduleIsRejected) {
  const UncertainSystem sys = ExampleSystem();
  SimConfig cfg = ShortRun(1.0);
  cfg.estimator.t_end = 3.5;  // |Δθ|₁ = 0.95 in half a second
  EXPECT_THROW(RunClosedLoop(sys, FixtureCert(), cfg), RateConditionViolation);
  EXPECT_LT(Rho(FixtureCert().lambda, FixtureCert().mu, 4,
                ScheduleRate(sys.theta_box.Midpoint(), ExampleTrueParameters(), 3.0, 3.5,
                             RateNorm::kL1)),
            0.0);
}

TEST(SimTest, RlsRunRespectsRhoMin) {
  const UncertainSystem sys = ExampleSystem();
  SimConfig cfg = ShortRun(2.0);
  cfg.estimator.kind = EstimatorKind::kRls;
  cfg.estimator.rls.derivative = "integral";
  const Trace tr = RunClosedLoop(sys, FixtureCert(), cfg);
  bool moved = false;
  for (const auto& r : tr.records) {
    EXPECT_GE(r.rho, cfg.estimator.rho_min - 1e-12) << r.t;
    EXPECT_TRUE(sys.theta_box.Contains(r.theta_hat, 1e-12));
    moved |= r.rate > 0;
  }
  EXPECT_TRUE(moved);
  cfg.estimator.rho_min = FixtureCert().lambda;
  EXPECT_THROW(RunClosedLoop(sys, FixtureCert(), cfg), RateConditionViolation);
}

TEST(SimTest, EstimatorNames) {
  for (auto k : {EstimatorKind::kFrozen, EstimatorKind::kScheduled, EstimatorKind::kRls}) {
    EXPECT_EQ(ParseEstimatorKind(EstimatorKindName(k)), k);
  }
  EXPECT_THROW(ParseEstimatorKind("kalman"), std::invalid_argument);
}

}  // namespace
}  // namespace arccm
