#pragma once

#include <deque>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arccm/geodesic.h"
#include "arccm/metric.h"
#include "arccm/system.h"

namespace arccm {

/// Raised when ρ̄ = λ − pμ·sup rate is not positive.
class RateConditionViolation : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// u = u_d + ∫ Y_θ(γ) M_θ(γ) γ_s ds over the geodesic's quadrature.
Eigen::VectorXd Feedback(const DualMetric& metric, const Discretization& disc,
                         const Geodesic& geo, const Eigen::VectorXd& u_d,
                         const Eigen::VectorXd& theta);

/// Linear hand-over from theta0 to theta_final on [t_start, t_end].
struct Schedule {
  Eigen::VectorXd theta0;
  Eigen::VectorXd theta_final;
  double t_start = 3.0;
  double t_end = 7.0;
};

Eigen::VectorXd ScheduledEstimate(const Schedule& s, double t);
/// Right derivative of the schedule at t.
Eigen::VectorXd ScheduledRate(const Schedule& s, double t);

enum class RateNorm { kL1, kL2 };
RateNorm ParseRateNorm(const std::string& name);
std::string RateNormName(RateNorm n);
double RateMagnitude(const Eigen::VectorXd& rate, RateNorm norm);

/// ρ = λ − p·μ·rate.
double Rho(double lambda, double mu, int p, double rate);

struct RateBudget {
  double lambda = 0.0;
  double mu = 0.0;
  int p = 0;
  double rho_min = 0.0;
  RateNorm norm = RateNorm::kL1;
  /// (λ − ρ_min) / (p μ).
  double max_rate() const;
};

/// One linear-regression sample y ≈ φ θ.
struct RegressionSample {
  Eigen::MatrixXd phi;  // n×p
  Eigen::VectorXd y;    // n
};

/// Backward difference: y = (x − x_prev)/dt − f(x_prev) − B(x_prev)u_prev,
/// φ = Δ(x_prev)ᵀ.
RegressionSample BackwardDifferenceSample(const UncertainSystem& sys,
                                          const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& x_prev,
                                          const Eigen::VectorXd& u_prev,
                                          double dt);

/// Integral form over a densely sampled interval (uniform spacing h, u held
/// constant): y = (x_end − x_start − ∫(f + Bu)) / T, φ = ∫Δᵀ / T, using
/// Simpson's rule when the interval count is even.
RegressionSample IntegralSample(const UncertainSystem& sys,
                                const std::vector<Eigen::VectorXd>& path,
                                const Eigen::VectorXd& u, double h);
/// Same with the input sampled alongside the path.
RegressionSample IntegralSample(const UncertainSystem& sys,
                                const std::vector<Eigen::VectorXd>& path,
                                const std::vector<Eigen::VectorXd>& inputs,
                                double h);

struct RlsOptions {
  int window = 100;
  double regularization = 1e-9;
  /// Relative eigenvalue floor of the information matrix below which the
  /// update is skipped.
  double singular_tolerance = 1e-10;
  /// "backward" or "integral".
  std::string derivative = "backward";
};

struct EstimatorState {
  Eigen::VectorXd theta;
  Eigen::VectorXd theta_prev;
  Eigen::MatrixXd information;
  std::deque<RegressionSample> window;
  double last_update_time = 0.0;
  bool skipped = false;
  bool clamped = false;
  /// Rate of the last step, in the budget's norm.
  double last_rate = 0.0;

  static EstimatorState Initial(const Eigen::VectorXd& theta0, double t0);
};

/// Window least-squares update with projection onto Θ and a step clamp so
/// that ‖Δθ̂‖/dt ≤ budget.max_rate().
EstimatorState RlsUpdate(const EstimatorState& state,
                         const RegressionSample& sample, double dt,
                         const UncertainSystem& sys, const RateBudget& budget,
                         const RlsOptions& options = {});

/// rls_step with a backward-difference target.
EstimatorState RlsStep(const EstimatorState& state, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& x_prev,
                       const Eigen::VectorXd& u_prev, double dt,
                       const UncertainSystem& sys, const RateBudget& budget,
                       const RlsOptions& options = {});

}  // namespace arccm
