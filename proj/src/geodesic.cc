#include "arccm/geodesic.h"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "arccm/optim.h"

namespace arccm {

QuadratureRule GaussLegendre01(int count) {
  if (count < 1) throw std::invalid_argument("quadrature needs >= 1 point");
  QuadratureRule r;
  r.points.resize(count);
  r.weights.resize(count);
  for (int i = 0; i < count; ++i) {
    // Newton on P_count from the Chebyshev-like initial guess.
    double x = std::cos(std::numbers::pi * (i + 0.75) / (count + 0.5));
    double dp = 0.0;
    for (int it = 0; it < 100; ++it) {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= count; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (count == 1) p0 = 1.0;
      dp = count * (x * p1 - p0) / (x * x - 1.0);
      const double dx = p1 / dp;
      x -= dx;
      if (std::abs(dx) < 1e-16) break;
    }
    {
      double p0 = 1.0;
      double p1 = x;
      for (int k = 2; k <= count; ++k) {
        const double pk = ((2.0 * k - 1.0) * x * p1 - (k - 1.0) * p0) / k;
        p0 = p1;
        p1 = pk;
      }
      if (count == 1) p0 = 1.0;
      dp = count * (x * p1 - p0) / (x * x - 1.0);
    }
    // Map [-1, 1] → [0, 1], ascending.
    const int j = count - 1 - i;
    r.points[j] = 0.5 * (1.0 + x);
    r.weights[j] = 0.5 * 2.0 / ((1.0 - x * x) * dp * dp);
  }
  return r;
}

std::vector<double> ChebyshevLobatto01(int degree) {
  if (degree < 1) throw std::invalid_argument("curve degree must be >= 1");
  std::vector<double> s(degree + 1);
  for (int k = 0; k <= degree; ++k) {
    s[k] = 0.5 * (1.0 - std::cos(std::numbers::pi * k / degree));
  }
  s[0] = 0.0;
  s[degree] = 1.0;
  return s;
}

Discretization::Discretization(int degree, int quadrature)
    : degree_(degree),
      nodes_(ChebyshevLobatto01(degree)),
      rule_(GaussLegendre01(quadrature)) {
  const int K = degree + 1;
  const int Q = quadrature;
  value_.resize(Q, K);
  deriv_.resize(Q, K);
  for (int q = 0; q < Q; ++q) {
    const double s = rule_.points[q];
    for (int k = 0; k < K; ++k) {
      double v = 1.0;
      for (int j = 0; j < K; ++j) {
        if (j != k) v *= (s - nodes_[j]) / (nodes_[k] - nodes_[j]);
      }
      double d = 0.0;
      for (int l = 0; l < K; ++l) {
        if (l == k) continue;
        double term = 1.0 / (nodes_[k] - nodes_[l]);
        for (int j = 0; j < K; ++j) {
          if (j != k && j != l) term *= (s - nodes_[j]) / (nodes_[k] - nodes_[j]);
        }
        d += term;
      }
      value_(q, k) = v;
      deriv_(q, k) = d;
    }
  }
}

Curve Curve::StraightLine(const Discretization& disc,
                          const Eigen::VectorXd& from,
                          const Eigen::VectorXd& to) {
  Curve c;
  c.nodes.resize(from.size(), disc.num_nodes());
  for (int k = 0; k < disc.num_nodes(); ++k) {
    const double s = disc.nodes()[k];
    c.nodes.col(k) = (1.0 - s) * from + s * to;
  }
  c.nodes.col(0) = from;
  c.nodes.col(disc.num_nodes() - 1) = to;
  return c;
}

EnergyEval RiemannianEnergy(const DualMetric& metric,
                            const Discretization& disc, const Curve& curve,
                            const Eigen::VectorXd& theta, bool with_gradient,
                            const EnergyOptions& options) {
  const int n = static_cast<int>(curve.nodes.rows());
  const int K = disc.num_nodes();
  if (curve.nodes.cols() != K || n != metric.num_states()) {
    throw std::invalid_argument("curve shape does not match discretization");
  }
  const auto& rule = disc.rule();
  const int Q = static_cast<int>(rule.points.size());
  EnergyEval out;
  out.gamma.resize(Q);
  out.gamma_s.resize(Q);
  out.eta.resize(Q);
  if (with_gradient) out.node_gradient = Eigen::MatrixXd::Zero(n, K);
  MetricRequest req;
  req.state_partials = with_gradient;
  MetricEval ev;
  for (int q = 0; q < Q; ++q) {
    Eigen::VectorXd g = Eigen::VectorXd::Zero(n);
    Eigen::VectorXd gs = Eigen::VectorXd::Zero(n);
    for (int k = 0; k < K; ++k) {
      g += disc.basis(q, k) * curve.nodes.col(k);
      gs += disc.basis_derivative(q, k) * curve.nodes.col(k);
    }
    if (options.domain && !options.domain->Contains(g, 1e-12)) {
      out.out_of_domain = true;
    }
    metric.Evaluate(g, theta, req, &ev);
    Eigen::LLT<Eigen::MatrixXd> llt(ev.W);
    if (llt.info() != Eigen::Success) {
      std::ostringstream os;
      os << "W is not positive definite at x = (" << g.transpose()
         << "), theta = (" << theta.transpose() << ")";
      throw std::runtime_error(os.str());
    }
    Eigen::VectorXd eta = llt.solve(gs);
    out.energy += rule.weights[q] * gs.dot(eta);
    if (with_gradient) {
      Eigen::VectorXd dx(n);
      for (int j = 0; j < n; ++j) dx[j] = -eta.dot(ev.dW_dx[j] * eta);
      for (int k = 0; k < K; ++k) {
        out.node_gradient.col(k) +=
            rule.weights[q] * (2.0 * disc.basis_derivative(q, k) * eta +
                               disc.basis(q, k) * dx);
      }
    }
    out.gamma[q] = std::move(g);
    out.gamma_s[q] = std::move(gs);
    out.eta[q] = std::move(eta);
  }
  return out;
}

Geodesic SolveGeodesic(const DualMetric& metric, const Discretization& disc,
                       const Eigen::VectorXd& x_d, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& theta, const Curve* warm,
                       const GeodesicOptions& options,
                       const EnergyOptions& energy_options) {
  const int n = static_cast<int>(x.size());
  const int K = disc.num_nodes();
  Curve start;
  if (warm && warm->nodes.rows() == n && warm->nodes.cols() == K) {
    start = *warm;
    const Eigen::VectorXd d0 = x_d - warm->start();
    const Eigen::VectorXd d1 = x - warm->end();
    for (int k = 0; k < K; ++k) {
      const double s = disc.nodes()[k];
      start.nodes.col(k) += (1.0 - s) * d0 + s * d1;
    }
    start.nodes.col(0) = x_d;
    start.nodes.col(K - 1) = x;
  } else {
    start = Curve::StraightLine(disc, x_d, x);
  }
  if (warm) {
    // a shifted warm curve can cross a non-definite region; the straight
    // line is the fallback (and throws itself if W fails on it)
    try {
      RiemannianEnergy(metric, disc, start, theta);
    } catch (const std::runtime_error&) {
      start = Curve::StraightLine(disc, x_d, x);
    }
  }
  Geodesic geo;
  geo.curve = start;
  if (K <= 2) {
    const auto e = RiemannianEnergy(metric, disc, start, theta, false,
                                    energy_options);
    geo.energy = e.energy;
    geo.converged = true;
    geo.out_of_domain = e.out_of_domain;
    return geo;
  }
  // Decision vector: interior nodes, column-major.
  const int interior = K - 2;
  Eigen::VectorXd z(n * interior);
  for (int k = 0; k < interior; ++k) z.segment(k * n, n) = start.nodes.col(k + 1);
  Curve work = start;
  auto objective = [&](const Eigen::VectorXd& v, Eigen::VectorXd* grad) {
    for (int k = 0; k < interior; ++k) work.nodes.col(k + 1) = v.segment(k * n, n);
    grad->setZero(v.size());
    EnergyEval e;
    try {
      e = RiemannianEnergy(metric, disc, work, theta, true, energy_options);
    } catch (const std::runtime_error&) {
      // trial step left the region where W is definite; the line search
      // backs off from a non-finite value
      return std::numeric_limits<double>::infinity();
    }
    if (options.confine && e.out_of_domain) {
      return std::numeric_limits<double>::infinity();
    }
    for (int k = 0; k < interior; ++k) {
      grad->segment(k * n, n) = e.node_gradient.col(k + 1);
    }
    return e.energy;
  };
  LbfgsOptions lo;
  lo.max_iterations = options.max_iterations;
  lo.memory = std::max(10, n * interior);
  lo.gradient_abs = options.tolerance;
  lo.gradient_rel = options.tolerance;
  const LbfgsResult r = MinimizeLbfgs(objective, z, lo);
  for (int k = 0; k < interior; ++k) {
    geo.curve.nodes.col(k + 1) = r.x.segment(k * n, n);
  }
  const auto final_eval =
      RiemannianEnergy(metric, disc, geo.curve, theta, false, energy_options);
  geo.energy = final_eval.energy;
  geo.out_of_domain = final_eval.out_of_domain;
  geo.iterations = r.iterations;
  geo.optimality = r.gradient_norm;
  geo.converged = r.converged;
  return geo;
}

Eigen::VectorXd EnergyGradientTheta(const DualMetric& metric,
                                    const Discretization& disc,
                                    const Curve& curve,
                                    const Eigen::VectorXd& theta) {
  const int p = static_cast<int>(theta.size());
  const auto e = RiemannianEnergy(metric, disc, curve, theta, false);
  Eigen::VectorXd g = Eigen::VectorXd::Zero(p);
  MetricRequest req;
  req.param_partials = true;
  MetricEval ev;
  const auto& rule = disc.rule();
  for (std::size_t q = 0; q < rule.points.size(); ++q) {
    metric.Evaluate(e.gamma[q], theta, req, &ev);
    for (int i = 0; i < p; ++i) {
      g[i] -= rule.weights[q] * e.eta[q].dot(ev.dW_dtheta[i] * e.eta[q]);
    }
  }
  return g;
}

double EnergyLogGradientTheta(const DualMetric& metric,
                              const Discretization& disc, const Curve& curve,
                              const Eigen::VectorXd& theta, int i) {
  if (i < 0 || i >= theta.size()) {
    throw std::out_of_range("parameter index out of range");
  }
  const double E = RiemannianEnergy(metric, disc, curve, theta).energy;
  if (!(E > 1e-14)) {
    throw std::domain_error(
        "log-gradient undefined: energy is zero (endpoints coincide)");
  }
  return EnergyGradientTheta(metric, disc, curve, theta)[i] / E;
}

}  // namespace arccm
