#include "arccm/control.h"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace arccm {

Eigen::VectorXd Feedback(const DualMetric& metric, const Discretization& disc,
                         const Geodesic& geo, const Eigen::VectorXd& u_d,
                         const Eigen::VectorXd& theta) {
  const auto e = RiemannianEnergy(metric, disc, geo.curve, theta);
  Eigen::VectorXd u = u_d;
  MetricRequest req;
  req.feedback = true;
  MetricEval ev;
  const auto& rule = disc.rule();
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    metric.Evaluate(e.gamma[q], theta, req, &ev);
    u += rule.weights[q] * (ev.Y * e.eta[q]);
  }
  return u;
}

Eigen::VectorXd ScheduledEstimate(const Schedule& s, double t) {
  if (!(s.t_start < s.t_end)) {
    throw std::invalid_argument("schedule needs t_start < t_end");
  }
  if (t <= s.t_start) return s.theta0;
  if (t >= s.t_end) return s.theta_final;
  const double a = (t - s.t_start) / (s.t_end - s.t_start);
  return s.theta0 + a * (s.theta_final - s.theta0);
}

Eigen::VectorXd ScheduledRate(const Schedule& s, double t) {
  if (t < s.t_start || t >= s.t_end) {
    return Eigen::VectorXd::Zero(s.theta0.size());
  }
  return (s.theta_final - s.theta0) / (s.t_end - s.t_start);
}

RateNorm ParseRateNorm(const std::string& name) {
  if (name == "l1") return RateNorm::kL1;
  if (name == "l2") return RateNorm::kL2;
  throw std::invalid_argument("unknown rate norm '" + name + "' (l1 or l2)");
}

std::string RateNormName(RateNorm n) {
  return n == RateNorm::kL1 ? "l1" : "l2";
}

double RateMagnitude(const Eigen::VectorXd& rate, RateNorm norm) {
  return norm == RateNorm::kL1 ? rate.lpNorm<1>() : rate.norm();
}

double Rho(double lambda, double mu, int p, double rate) {
  return lambda - p * mu * rate;
}

double RateBudget::max_rate() const {
  if (!(rho_min > 0.0) || !(lambda > rho_min)) {
    throw std::invalid_argument("rate budget needs 0 < rho_min < lambda");
  }
  return (lambda - rho_min) / (p * mu);
}

RegressionSample BackwardDifferenceSample(const UncertainSystem& sys,
                                          const Eigen::VectorXd& x,
                                          const Eigen::VectorXd& x_prev,
                                          const Eigen::VectorXd& u_prev,
                                          double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const DynamicsTerms t = EvaluateTerms(sys, x_prev);
  RegressionSample s;
  s.y = (x - x_prev) / dt - t.f - t.B * u_prev;
  s.phi = t.delta.transpose();
  return s;
}

RegressionSample IntegralSample(const UncertainSystem& sys,
                                const std::vector<Eigen::VectorXd>& path,
                                const Eigen::VectorXd& u, double h) {
  return IntegralSample(sys, path,
                        std::vector<Eigen::VectorXd>(path.size(), u), h);
}

RegressionSample IntegralSample(const UncertainSystem& sys,
                                const std::vector<Eigen::VectorXd>& path,
                                const std::vector<Eigen::VectorXd>& inputs,
                                double h) {
  if (path.size() < 2) throw std::invalid_argument("path needs two samples");
  if (inputs.size() != path.size()) {
    throw std::invalid_argument("one input per path sample expected");
  }
  const int intervals = static_cast<int>(path.size()) - 1;
  const bool simpson = intervals % 2 == 0;
  Eigen::VectorXd known = Eigen::VectorXd::Zero(sys.n);
  Eigen::MatrixXd phi = Eigen::MatrixXd::Zero(sys.n, sys.p);
  for (int k = 0; k <= intervals; ++k) {
    double w = 1.0;
    if (simpson) {
      w = (k == 0 || k == intervals) ? 1.0 : (k % 2 ? 4.0 : 2.0);
      w *= h / 3.0;
    } else {
      w = (k == 0 || k == intervals) ? 0.5 * h : h;
    }
    const DynamicsTerms t = EvaluateTerms(sys, path[k]);
    known += w * (t.f + t.B * inputs[k]);
    phi += w * t.delta.transpose();
  }
  const double T = h * intervals;
  RegressionSample s;
  s.y = (path.back() - path.front() - known) / T;
  s.phi = phi / T;
  return s;
}

EstimatorState EstimatorState::Initial(const Eigen::VectorXd& theta0,
                                       double t0) {
  EstimatorState s;
  s.theta = theta0;
  s.theta_prev = theta0;
  s.information = Eigen::MatrixXd::Zero(theta0.size(), theta0.size());
  s.last_update_time = t0;
  return s;
}

EstimatorState RlsUpdate(const EstimatorState& state,
                         const RegressionSample& sample, double dt,
                         const UncertainSystem& sys, const RateBudget& budget,
                         const RlsOptions& options) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const int p = sys.p;
  EstimatorState next = state;
  next.window.push_back(sample);
  while (static_cast<int>(next.window.size()) > std::max(1, options.window)) {
    next.window.pop_front();
  }
  next.last_update_time = state.last_update_time + dt;
  next.theta_prev = state.theta;
  next.skipped = false;
  next.clamped = false;
  next.last_rate = 0.0;

  Eigen::MatrixXd info = Eigen::MatrixXd::Zero(p, p);
  Eigen::VectorXd rhs = Eigen::VectorXd::Zero(p);
  for (const auto& s : next.window) {
    info += s.phi.transpose() * s.phi;
    rhs += s.phi.transpose() * s.y;
  }
  next.information = info;
  const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(info);
  const double top = std::max(eig.eigenvalues().maxCoeff(), 1e-300);
  if (eig.eigenvalues().minCoeff() <= options.singular_tolerance * top) {
    next.skipped = true;
    return next;
  }
  info += options.regularization * Eigen::MatrixXd::Identity(p, p);
  rhs += options.regularization * state.theta;
  const Eigen::VectorXd target = sys.theta_box.Clamp(info.ldlt().solve(rhs));

  Eigen::VectorXd step = target - state.theta;
  const double rate = RateMagnitude(step, budget.norm) / dt;
  const double limit = budget.max_rate();
  if (rate > limit) {
    step *= limit / rate;
    next.clamped = true;
  }
  next.theta = sys.theta_box.Clamp(state.theta + step);
  next.last_rate = RateMagnitude(next.theta - state.theta, budget.norm) / dt;
  return next;
}

EstimatorState RlsStep(const EstimatorState& state, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& x_prev,
                       const Eigen::VectorXd& u_prev, double dt,
                       const UncertainSystem& sys, const RateBudget& budget,
                       const RlsOptions& options) {
  return RlsUpdate(state, BackwardDifferenceSample(sys, x, x_prev, u_prev, dt),
                   dt, sys, budget, options);
}

}  // namespace arccm
