#pragma once

#include <functional>
#include <limits>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arccm/control.h"
#include "arccm/synthesis.h"
#include "arccm/system.h"

namespace arccm {

/// Classical RK4. Throws std::runtime_error (with t in the message) when a
/// stage derivative is not finite.
Eigen::VectorXd Rk4Step(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& deriv,
    double t, const Eigen::VectorXd& x, double dt);

enum class EstimatorKind { kFrozen, kScheduled, kRls };
EstimatorKind ParseEstimatorKind(const std::string& name);
std::string EstimatorKindName(EstimatorKind k);

struct EstimatorConfig {
  EstimatorKind kind = EstimatorKind::kScheduled;
  /// Initial estimate; empty means the midpoint of Θ.
  Eigen::VectorXd theta0;
  /// Schedule end value; empty means the true parameters.
  Eigen::VectorXd theta_final;
  double t_start = 3.0;
  double t_end = 7.0;
  RlsOptions rls;
  double rho_min = 0.05;
  RateNorm norm = RateNorm::kL1;
};

struct SimConfig {
  double t0 = 0.0;
  double t1 = 12.0;
  double h = 1e-3;
  double control_period = 1e-2;
  /// Absolute initial state; when empty x0 = x_d(t0) + offset.
  Eigen::VectorXd x0;
  Eigen::VectorXd offset = Eigen::Vector3d(0.5, -0.5, 0.5);
  /// Empty means the system's built-in true parameters.
  Eigen::VectorXd theta_true;
  EstimatorConfig estimator;
  int curve_degree = 6;
  int quadrature = 12;
  GeodesicOptions geodesic;
  bool warm_start = true;
  /// With true, u_d follows the reference continuously between ticks and
  /// only the feedback correction is held.
  bool continuous_feedforward = true;

  /// Throws std::invalid_argument on h ≤ 0, a control period that is
  /// not an integer multiple of h, or t1 ≤ t0.
  int SubstepsPerTick() const;
};

struct TraceRecord {
  double t = 0.0;
  Eigen::VectorXd x, xd, u, ud, theta_hat, theta_err;
  double energy = 0.0;
  double rho = 0.0;
  /// L1 magnitude of dθ̂/dt on the upcoming interval.
  double rate = 0.0;
  bool geo_ok = false;
  bool in_domain = false;
  int geo_iterations = 0;
  /// Filled by verification; NaN when absent.
  double bound_cons = std::numeric_limits<double>::quiet_NaN();
  double bound_int = std::numeric_limits<double>::quiet_NaN();
  double reference_residual = 0.0;

  bool certified() const { return geo_ok && in_domain; }
};

struct Trace {
  int n = 0, m = 0, p = 0;
  std::vector<TraceRecord> records;
  /// Tick spacing.
  double dt = 0.0;
};

/// Estimated peak ‖dθ̂/dt‖ of a schedule; used to refuse schedules that
/// break the rate condition before running.
double ScheduleRate(const Eigen::VectorXd& theta0, const Eigen::VectorXd& theta1,
                    double t_start, double t_end, RateNorm norm);

/// Runs the closed loop. Throws RateConditionViolation when the scheduled
/// ramp or the RLS budget gives ρ ≤ 0.
Trace RunClosedLoop(const UncertainSystem& sys, const MetricCertificate& cert,
                    const SimConfig& cfg);

/// CSV with columns t, x1..xn, xd1..xdn, u1..um, ud1..udm, thhat1..thhatp,
/// E, rho, bound_cons, bound_int, geo_ok, in_domain.
void WriteTraceCsv(const Trace& trace, const std::string& path);
std::string TraceCsv(const Trace& trace);
/// θ̃ is recomputed from `theta_true` (θ̃ = θ* − θ̂).
Trace ReadTraceCsv(const std::string& path, int n, int m, int p,
                   const Eigen::VectorXd& theta_true);

}  // namespace arccm
