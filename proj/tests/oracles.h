#pragma once

// Reference metrics and the lattice shortest-path oracle shared by the unit
// and acceptance tests.

#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <vector>

#include <Eigen/Dense>

#include "arccm/metric.h"

namespace arccm::oracle {

// Constant SPD dual metric.
class ConstantMetric final : public DualMetric {
 public:
  explicit ConstantMetric(Eigen::MatrixXd W) : W_(std::move(W)) {}
  int num_states() const override { return static_cast<int>(W_.rows()); }
  int num_params() const override { return 1; }
  int num_inputs() const override { return 1; }
  void Evaluate(const Eigen::Ref<const Eigen::VectorXd>&,
                const Eigen::Ref<const Eigen::VectorXd>&,
                const MetricRequest& req, MetricEval* out) const override {
    const int n = num_states();
    out->W = W_;
    if (req.state_partials) out->dW_dx.assign(n, Eigen::MatrixXd::Zero(n, n));
    if (req.param_partials) out->dW_dtheta.assign(1, Eigen::MatrixXd::Zero(n, n));
    if (req.feedback) out->Y = Eigen::MatrixXd::Zero(1, n);
  }
  std::vector<int> param_dependencies() const override { return {}; }

 private:
  Eigen::MatrixXd W_;
};

// M = m(x) I in the plane with m = 1 + 0.5 x1² + 0.3 x2.
inline double Conformal(double x1, double x2) { return 1.0 + 0.5 * x1 * x1 + 0.3 * x2; }

class ConformalMetric final : public DualMetric {
 public:
  int num_states() const override { return 2; }
  int num_params() const override { return 1; }
  int num_inputs() const override { return 1; }
  void Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>&,
                const MetricRequest& req, MetricEval* out) const override {
    const double m = Conformal(x[0], x[1]);
    const Eigen::Matrix2d I = Eigen::Matrix2d::Identity();
    out->W = I / m;
    if (req.state_partials) {
      // ∂(1/m) = −∂m / m²
      out->dW_dx = {-(x[0] / (m * m)) * I, -(0.3 / (m * m)) * I};
    }
    if (req.param_partials) out->dW_dtheta.assign(1, Eigen::Matrix2d::Zero());
    if (req.feedback) out->Y = Eigen::MatrixXd::Zero(1, 2);
  }
  std::vector<int> param_dependencies() const override { return {}; }
};

// Shortest path on a 200×200 lattice over [-1, 1]², edges to every
// coprime offset within a radius-24 stencil. Returns the Riemannian length.
inline double LatticeLength(int i0, int j0, int i1, int j1) {
  constexpr int kN = 200;
  constexpr int kR = 24;
  const double h = 2.0 / (kN - 1);
  auto coord = [&](int i) { return -1.0 + i * h; };
  std::vector<std::pair<int, int>> stencil;
  for (int a = -kR; a <= kR; ++a) {
    for (int b = -kR; b <= kR; ++b) {
      if ((a || b) && std::gcd(std::abs(a), std::abs(b)) == 1) stencil.push_back({a, b});
    }
  }
  // 3-point Gauss on each edge
  const double gp[3] = {0.5 - std::sqrt(0.15), 0.5, 0.5 + std::sqrt(0.15)};
  const double gw[3] = {5.0 / 18, 8.0 / 18, 5.0 / 18};
  std::vector<double> dist(kN * kN, std::numeric_limits<double>::infinity());
  using Item = std::pair<double, int>;
  std::priority_queue<Item, std::vector<Item>, std::greater<>> pq;
  dist[i0 * kN + j0] = 0;
  pq.push({0.0, i0 * kN + j0});
  const int target = i1 * kN + j1;
  while (!pq.empty()) {
    auto [d, v] = pq.top();
    pq.pop();
    if (d > dist[v]) continue;
    if (v == target) return d;
    const int i = v / kN, j = v % kN;
    for (auto [a, b] : stencil) {
      const int ni = i + a, nj = j + b;
      if (ni < 0 || nj < 0 || ni >= kN || nj >= kN) continue;
      const double len = h * std::hypot(a, b);
      double c = 0;
      for (int q = 0; q < 3; ++q) {
        c += gw[q] * std::sqrt(Conformal(coord(i) + gp[q] * a * h,
                                         coord(j) + gp[q] * b * h));
      }
      const double nd = d + c * len;
      if (nd < dist[ni * kN + nj]) {
        dist[ni * kN + nj] = nd;
        pq.push({nd, ni * kN + nj});
      }
    }
  }
  return dist[target];
}

}  // namespace arccm::oracle
