#pragma once

#include <vector>

#include <Eigen/Dense>

#include "arccm/metric.h"
#include "arccm/system.h"

namespace arccm {

/// Gauss–Legendre rule mapped to [0, 1].
struct QuadratureRule {
  std::vector<double> points;
  std::vector<double> weights;
};
QuadratureRule GaussLegendre01(int count);

/// Chebyshev–Gauss–Lobatto abscissae on [0, 1]: s_k = (1 − cos(πk/D)) / 2.
std::vector<double> ChebyshevLobatto01(int degree);

/// Lagrange interpolation on CGL nodes, sampled at a quadrature rule.
class Discretization {
 public:
  Discretization(int degree = 6, int quadrature = 12);

  int degree() const { return degree_; }
  int num_nodes() const { return degree_ + 1; }
  const std::vector<double>& nodes() const { return nodes_; }
  const QuadratureRule& rule() const { return rule_; }
  /// Basis value L_k(s_q) and derivative L_k'(s_q).
  double basis(int q, int k) const { return value_(q, k); }
  double basis_derivative(int q, int k) const { return deriv_(q, k); }

 private:
  int degree_;
  std::vector<double> nodes_;
  QuadratureRule rule_;
  Eigen::MatrixXd value_;  // Q × (D+1)
  Eigen::MatrixXd deriv_;
};

/// Node values γ(s_k), one column per node. Column 0 is x_d, the last x.
struct Curve {
  Eigen::MatrixXd nodes;

  static Curve StraightLine(const Discretization& disc,
                            const Eigen::VectorXd& from,
                            const Eigen::VectorXd& to);
  Eigen::VectorXd start() const { return nodes.col(0); }
  Eigen::VectorXd end() const { return nodes.col(nodes.cols() - 1); }
};

struct EnergyOptions {
  /// When set, quadrature points outside this box raise `out_of_domain`.
  const ParameterBox* domain = nullptr;
};

struct EnergyEval {
  double energy = 0.0;
  bool out_of_domain = false;
  /// ∂E/∂node, same shape as the node matrix (filled on request).
  Eigen::MatrixXd node_gradient;
  /// Per-quadrature-point data reused by feedback and θ-gradients.
  std::vector<Eigen::VectorXd> gamma;
  std::vector<Eigen::VectorXd> gamma_s;
  std::vector<Eigen::VectorXd> eta;  // M γ_s
};

/// E = ∫ γ_sᵀ M_θ(γ) γ_s ds with M = W⁻¹ by Cholesky solve. Throws
/// std::runtime_error naming the point if W is not positive definite.
EnergyEval RiemannianEnergy(const DualMetric& metric,
                            const Discretization& disc, const Curve& curve,
                            const Eigen::VectorXd& theta,
                            bool with_gradient = false,
                            const EnergyOptions& options = {});

struct GeodesicOptions {
  int max_iterations = 200;
  double tolerance = 1e-8;  // on ‖∇E‖ / (1 + E)
  /// Rejects curves with a quadrature point outside EnergyOptions::domain,
  /// so the result is the shortest curve inside the box. Interior minima
  /// are unaffected; a minimizer on the boundary may report !converged.
  bool confine = false;
};

struct Geodesic {
  Curve curve;
  double energy = 0.0;
  int iterations = 0;
  double optimality = 0.0;
  bool converged = false;
  bool out_of_domain = false;
};

/// Minimizes E over the interior nodes; the endpoints stay fixed. Starts
/// from the straight line, or from `warm` with its endpoints moved
/// affinely onto (x_d, x).
Geodesic SolveGeodesic(const DualMetric& metric, const Discretization& disc,
                       const Eigen::VectorXd& x_d, const Eigen::VectorXd& x,
                       const Eigen::VectorXd& theta,
                       const Curve* warm = nullptr,
                       const GeodesicOptions& options = {},
                       const EnergyOptions& energy_options = {});

/// ∂E/∂θ_i for every i, using ∂θ M = −M ∂θW M.
Eigen::VectorXd EnergyGradientTheta(const DualMetric& metric,
                                    const Discretization& disc,
                                    const Curve& curve,
                                    const Eigen::VectorXd& theta);

/// (∂E/∂θ_i) / E. Throws std::domain_error when E is (numerically) zero.
double EnergyLogGradientTheta(const DualMetric& metric,
                              const Discretization& disc, const Curve& curve,
                              const Eigen::VectorXd& theta, int i);

}  // namespace arccm
