#include "arccm/verify.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "arccm/metric.h"

namespace arccm {
namespace {

const MetricCertificate& FixtureCert() {
  static const MetricCertificate cert =
      ReadCertificate(std::string(ARCCM_SOURCE_DIR) + "/tests/data/example_cert.json");
  return cert;
}

TEST(VerifyTest, ConservativeBoundClosedForm) {
  // ρ̄ = 0.8 − 4·0.5·0.1 = 0.6, asymptote = 0.9/0.6·2² = 6
  const std::vector<double> t{0.0, 1.0, 5.0, 200.0};
  const auto b = ConservativeBound(10.0, 0.8, 0.5, 4, 0.9, 0.1, 2.0, t);
  for (std::size_t k = 0; k < t.size(); ++k) {
    const double e = std::exp(-0.6 * t[k]);
    EXPECT_NEAR(b[k], 10 * e + 6 * (1 - e), 1e-12);
  }
  EXPECT_NEAR(b.back(), 6.0, 1e-12);
  const auto wider = ConservativeBound(10.0, 0.8, 0.5, 4, 0.9, 0.1, 2.5, t);
  for (std::size_t k = 1; k < t.size(); ++k) EXPECT_GT(wider[k], b[k]);
  EXPECT_THROW(ConservativeBound(1.0, 0.8, 0.5, 4, 1.0, 0.4, 1.0, t),
               RateConditionViolation);
}

// Ticks every dt with constant ρ and θ̃; E decays like the bound.
Trace SyntheticTrace(int ticks, double dt, double rho, const Eigen::Vector4d& err,
                     double E0) {
  Trace tr;
  tr.n = 3;
  tr.m = 1;
  tr.p = 4;
  tr.dt = dt;
  for (int k = 0; k <= ticks; ++k) {
    TraceRecord r;
    r.t = k * dt;
    r.theta_err = err;
    r.theta_hat = ExampleTrueParameters() - err;
    r.rho = rho;
    r.energy = E0 * std::exp(-0.9 * k * dt);
    r.xd = Eigen::Vector3d::Zero();
    r.x = Eigen::Vector3d::Constant(std::sqrt(r.energy / 3.0));
    r.geo_ok = r.in_domain = true;
    tr.records.push_back(r);
  }
  return tr;
}

TEST(VerifyTest, IntegratedBoundMatchesOde) {
  const Eigen::Vector4d err(0.1, -0.2, 0.0, 0.05);
  const double rho = 0.5, a2 = 0.8, E0 = 2.0;
  const Trace tr = SyntheticTrace(100, 0.05, rho, err, E0);
  const double c = a2 * err.squaredNorm() / rho;
  const auto fine = IntegratedBound(tr, a2, 2000);
  for (const auto& r : tr.records) {
    const std::size_t k = &r - tr.records.data();
    const double exact = c + (E0 - c) * std::exp(-rho * r.t);
    EXPECT_NEAR(fine[k], exact, 3e-5 * exact);  // first order in the step
  }
  // α = 0: plain Euler product
  const auto decay = IntegratedBound(tr, 0.0, 1);
  EXPECT_NEAR(decay[100], E0 * std::pow(1 - rho * 0.05, 100), 1e-12);
  EXPECT_THROW(IntegratedBound(tr, a2, 0), std::invalid_argument);
}

MetricCertificate BareCert() {
  MetricCertificate c;
  c.lambda = 0.8;
  c.mu = 0.5;
  c.alpha_sq = 1.0;
  c.a_low = 0.01;
  c.a_high = 10.0;
  return c;
}

TEST(VerifyTest, CheckTraceCountsViolations) {
  const UncertainSystem sys = ExampleSystem();
  const MetricCertificate cert = BareCert();
  Trace tr = SyntheticTrace(200, 0.05, 0.8, Eigen::Vector4d::Zero(), 1.0);
  BoundReport rep = CheckTrace(&tr, cert, sys);
  EXPECT_TRUE(rep.ok()) << rep.ToJson().dump();
  EXPECT_EQ(rep.checked_ticks, 201);
  EXPECT_NEAR(rep.rho_bar, 0.8, 1e-15);
  EXPECT_EQ(rep.sup_rate, 0.0);
  EXPECT_LT(rep.halving_change, 0.05);
  for (const auto& r : tr.records) {
    EXPECT_FALSE(std::isnan(r.bound_cons));
    EXPECT_GE(r.bound_cons * (1 + 1e-9), r.bound_int);
  }

  // E decays at 0.9 > ρ = 0.8 until a spike at tick 150
  tr.records[150].energy = 5.0;
  rep = CheckTrace(&tr, cert, sys);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(rep.integrated_check.violations, 1);
  EXPECT_EQ(rep.conservative_check.violations, 0);  // sup θ̃ from Θ̃ is generous
  EXPECT_NEAR(rep.integrated_check.worst_time, 7.5, 1e-12);

  // a flagged spike is not checked
  tr.records[150].geo_ok = false;
  rep = CheckTrace(&tr, cert, sys);
  EXPECT_EQ(rep.flagged_ticks, 1);
  EXPECT_EQ(rep.integrated_check.violations, 0);
}

TEST(VerifyTest, FullyFlaggedTraceIsNotCertified) {
  const UncertainSystem sys = ExampleSystem();
  Trace tr = SyntheticTrace(20, 0.05, 0.8, Eigen::Vector4d::Zero(), 1.0);
  for (auto& r : tr.records) r.in_domain = false;
  const BoundReport rep = CheckTrace(&tr, BareCert(), sys);
  EXPECT_FALSE(rep.certified);
  EXPECT_EQ(rep.checked_ticks, 0);
  EXPECT_FALSE(rep.ok());
  EXPECT_NE(rep.note.find("not certified"), std::string::npos);
}

TEST(VerifyTest, NegativeRhoBarIsReported) {
  const UncertainSystem sys = ExampleSystem();
  Trace tr = SyntheticTrace(20, 0.05, -0.1, Eigen::Vector4d::Zero(), 1.0);
  const BoundReport rep = CheckTrace(&tr, BareCert(), sys);
  EXPECT_FALSE(rep.ok());
  EXPECT_NE(rep.note.find("rate condition violated"), std::string::npos);
}

TEST(VerifyTest, Prop1HoldsForCertificate) {
  const UncertainSystem sys = ExampleSystem();
  const MetricCertificate& cert = FixtureCert();
  Prop1Options o;
  o.curves = 40;
  const Prop1Report rep = CheckProp1(*cert.metric, cert.mu, sys, o);
  EXPECT_EQ(rep.curves, 40);
  EXPECT_EQ(rep.checks, 160);
  EXPECT_TRUE(rep.ok()) << rep.ToJson().dump();
  EXPECT_LE(rep.worst_ratio, 1.0 + 1e-3);
}

TEST(VerifyTest, Prop1CatchesAdversarialMetric) {
  const UncertainSystem sys = ExampleSystem();
  Prop1Options o;
  o.curves = 20;
  // M = e^{θ1} I: ∂θ1 log E = 1 exactly
  const ExponentialScalarMetric bad(3, 4, 1, 0, 1.0);
  const Prop1Report rep = CheckProp1(bad, 0.5, sys, o);
  EXPECT_FALSE(rep.ok());
  EXPECT_EQ(rep.failures, 20);
  EXPECT_NEAR(rep.worst_ratio, 2.0, 1e-9);
  ASSERT_FALSE(rep.witnesses.empty());
  EXPECT_EQ(rep.witnesses[0].index, 0);
  EXPECT_NEAR(rep.witnesses[0].log_gradient, 1.0, 1e-9);
  EXPECT_EQ(rep.pointwise_disagreements, 0);
  EXPECT_GT(rep.pointwise_c3_failures, 0);

  const ExponentialScalarMetric mild(3, 4, 1, 0, 0.4);
  const Prop1Report ok = CheckProp1(mild, 0.5, sys, o);
  EXPECT_TRUE(ok.ok()) << ok.ToJson().dump();
  EXPECT_NEAR(ok.worst_ratio, 0.8, 1e-9);
}

TEST(VerifyTest, ClfReferenceVerdicts) {
  const UncertainSystem scalar = ScalarClfSystem();
  const ClfReport q = ClfCheck(ScalarQuadraticCandidate(), scalar);
  EXPECT_EQ(q.verdict(), "pass") << q.ToJson().dump();
  EXPECT_EQ(q.sandwich.checked, 1000);
  // ∇V·B ≠ 0 off the diagonal, so the infimum over u is −∞ there
  EXPECT_GT(q.decrease_vacuous, 0);

  const ClfReport e = ClfCheck(ScalarExponentialCandidate(), scalar);
  EXPECT_EQ(e.verdict(), "fail");
  EXPECT_TRUE(e.sandwich.pass);
  EXPECT_FALSE(e.gradient.pass);  // |∂θV| = V > 0.5 V

  const ClfReport d = ClfCheck(FirstCoordinateCandidate(), ExampleSystem());
  EXPECT_EQ(d.verdict(), "fail");
  EXPECT_FALSE(d.sandwich.pass);  // V vanishes off the x1 axis
}

TEST(VerifyTest, ClfFormulaCandidate) {
  ClfCandidate c = ClfCandidate::FromFormula("2*(x1 - xd1)^2", 1, 1);
  c.k1 = 1.0;
  c.k2 = 3.0;
  c.mu = 0.1;
  const UncertainSystem scalar = ScalarClfSystem();
  const ClfReport r = ClfCheck(c, scalar);
  EXPECT_TRUE(r.sandwich.pass);
  EXPECT_TRUE(r.gradient.pass);
  c.k1 = 2.5;
  EXPECT_FALSE(ClfCheck(c, scalar).sandwich.pass);
}

TEST(VerifyTest, ArccmCandidateSandwichAndGradient) {
  const MetricCertificate& cert = FixtureCert();
  ClfSampleSpec spec;
  spec.samples = 100;
  const ClfReport r = ClfCheck(ArccmCandidate(cert, ExampleSystem().state_box), ExampleSystem(), spec);
  EXPECT_TRUE(r.sandwich.pass) << r.ToJson().dump();
  EXPECT_TRUE(r.gradient.pass) << r.ToJson().dump();
  EXPECT_EQ(r.decrease.checked, 0);
}

}  // namespace
}  // namespace arccm
