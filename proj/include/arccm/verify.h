#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "arccm/geodesic.h"
#include "arccm/metric.h"
#include "arccm/sim.h"
#include "arccm/synthesis.h"
#include "arccm/system.h"

namespace arccm {

/// E0 e^{−ρ̄t} + (α²/ρ̄) s² (1 − e^{−ρ̄t}) with ρ̄ = λ − pμ·sup_rate, at each
/// t in `times` (measured from the start). Throws RateConditionViolation
/// when ρ̄ ≤ 0.
std::vector<double> ConservativeBound(double E0, double lambda, double mu,
                                      int p, double alpha_sq, double sup_rate,
                                      double sup_theta_err,
                                      const std::vector<double>& times);

/// Forward Euler on ḃ = −ρ(t) b + α²|θ̃(t)|₂² from b = E(first tick), at
/// `substeps` steps per tick (θ̃ linear between ticks, ρ held). Values
/// are returned at the ticks.
std::vector<double> IntegratedBound(const Trace& trace, double alpha_sq,
                                    int substeps = 1);

struct BoundCheck {
  int violations = 0;
  /// max over checked ticks of (E − b) / (1 + b); −∞ if none.
  double worst_relative = -std::numeric_limits<double>::infinity();
  double worst_time = 0.0;
};

struct BoundOptions {
  /// Overrides the worst L1 magnitude over Θ̃.
  std::optional<double> sup_theta_err;
  double slack = 1e-6;
};

struct BoundReport {
  std::vector<double> conservative;
  std::vector<double> integrated;
  int ticks = 0;
  int checked_ticks = 0;
  int flagged_ticks = 0;
  bool certified = false;
  std::string note;
  BoundCheck conservative_check;
  BoundCheck integrated_check;
  /// |x − x_d| ≤ sqrt(b_cons / a̲).
  BoundCheck state_norm_check;
  /// Bound ordering: conservative ≥ integrated (relative slack).
  int ordering_violations = 0;
  double rho_min_observed = 0.0;
  double rho_bar = 0.0;
  double sup_rate = 0.0;
  double sup_theta_err = 0.0;
  double a_low = 0.0;
  double a_high = 0.0;
  double alpha_sq = 0.0;
  /// sup|b_h − b_{h/2}| / sup|b_h| for the integrated bound.
  double halving_change = 0.0;
  /// Ticks where |θ̃|₁ grew by more than 1e−9 (monitored, not enforced).
  int theta_err_increases = 0;
  double final_energy = 0.0;

  bool ok() const;
  nlohmann::json ToJson() const;
};

/// Fills both bound series, checks them at certified ticks and writes the
/// bound columns into `trace`.
BoundReport CheckTrace(Trace* trace, const MetricCertificate& cert,
                       const UncertainSystem& sys,
                       const BoundOptions& options = {});

struct Prop1Witness {
  Eigen::VectorXd x_start, x_end, theta;
  int index = 0;
  double log_gradient = 0.0;
};

struct Prop1Report {
  double mu = 0.0;
  int curves = 0;
  int checks = 0;
  int failures = 0;
  /// max |∂θ_i log E| / μ.
  double worst_ratio = 0.0;
  std::vector<Prop1Witness> witnesses;  // first few failures
  int pointwise_checks = 0;
  int pointwise_disagreements = 0;
  int pointwise_c3_failures = 0;

  bool ok() const { return failures == 0 && pointwise_disagreements == 0; }
  nlohmann::json ToJson() const;
};

struct Prop1Options {
  int curves = 100;
  std::uint64_t seed = 7;
  double relative_slack = 1e-3;
  /// Pointwise C3 / tangent-inequality samples per curve.
  int points_per_curve = 4;
  int tangents_per_point = 8;
  int curve_degree = 6;
  int quadrature = 12;
};

/// Proposition 1 by sampling: random curves in X and θ̂ ∈ Θ.
Prop1Report CheckProp1(const DualMetric& metric, double mu,
                       const UncertainSystem& sys,
                       const Prop1Options& options = {});

/// V over (x, x_d, θ) with optional gradients; gradient outputs may be null.
using LyapunovFunction = std::function<double(
    const Eigen::VectorXd& x, const Eigen::VectorXd& xd,
    const Eigen::VectorXd& theta, Eigen::VectorXd* dx, Eigen::VectorXd* dxd,
    Eigen::VectorXd* dtheta)>;

struct ClfCandidate {
  std::string name;
  LyapunovFunction V;
  double k1 = 1.0;
  double k2 = 1.0;
  double k3 = 1.0;
  double a = 2.0;
  double mu = 0.0;
  /// σ(r) = sigma_slope · r.
  double sigma_slope = 1.0;
  /// Checks the decrease condition; off for candidates where only (i) and
  /// (ii) are meaningful.
  bool check_decrease = true;

  /// V given as a formula in x1..xn, xd1..xdn, th1..thp.
  static ClfCandidate FromFormula(const std::string& formula, int n, int p);
  static ClfCandidate FromExpression(Expression e, int n, int p);
};

/// V = E_θ(shortest curve from x_d to x inside `domain`) for a
/// certificate. Shares the certificate's metric; sandwich constants a̲, ā
/// with a = 2.
ClfCandidate ArccmCandidate(const MetricCertificate& cert,
                            const ParameterBox& domain, int curve_degree = 6,
                            int quadrature = 12);

struct ClfSampleSpec {
  int samples = 1000;
  std::uint64_t seed = 11;
  /// |∇xVᵀB| below this (relative to 1 + |∇xV|) counts as zero.
  double input_tolerance = 1e-9;
  double relative_tolerance = 1e-9;
  /// u_d drawn from [−ud_range, ud_range]^m.
  double ud_range = 1.0;
  /// Fraction of samples taken with x = x_d.
  double coincident_fraction = 0.05;
};

struct ClfConditionResult {
  bool pass = true;
  int checked = 0;
  int failures = 0;
  double worst_margin = std::numeric_limits<double>::infinity();
  Eigen::VectorXd witness_x, witness_xd, witness_theta;
};

struct ClfReport {
  std::string candidate;
  ClfConditionResult sandwich;
  ClfConditionResult gradient;
  ClfConditionResult decrease;
  /// Decrease samples skipped because ∇xVᵀB ≠ 0 (vacuous).
  int decrease_vacuous = 0;
  /// Samples inside the σ ball (condition not required).
  int decrease_inside_sigma = 0;

  bool pass() const {
    return sandwich.pass && gradient.pass && decrease.pass;
  }
  std::string verdict() const { return pass() ? "pass" : "fail"; }
  nlohmann::json ToJson() const;
};

ClfReport ClfCheck(const ClfCandidate& candidate, const UncertainSystem& sys,
                   const ClfSampleSpec& spec = {});

/// The three reference candidates.
UncertainSystem ScalarClfSystem();  // ẋ = −x + θ + u on [−2, 2]
ClfCandidate ScalarQuadraticCandidate();    // V = (x − x_d)²
ClfCandidate ScalarExponentialCandidate();  // V = e^{θ1}(x − x_d)², μ = 0.5
ClfCandidate FirstCoordinateCandidate();    // V = (x1 − xd1)² in 3 states

}  // namespace arccm
