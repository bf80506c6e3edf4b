#include "arccm/geodesic.h"

#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "arccm/metric.h"
#include "arccm/poly.h"
#include "oracles.h"

namespace arccm {
namespace {

using oracle::ConformalMetric;
using oracle::ConstantMetric;
using oracle::LatticeLength;

TEST(GeodesicTest, QuadratureAndNodes) {
  const QuadratureRule r = GaussLegendre01(12);
  double w = 0;
  double m7 = 0;
  for (std::size_t q = 0; q < r.points.size(); ++q) {
    w += r.weights[q];
    m7 += r.weights[q] * std::pow(r.points[q], 7);
  }
  EXPECT_NEAR(w, 1.0, 1e-14);
  EXPECT_NEAR(m7, 1.0 / 8.0, 1e-14);
  const auto s = ChebyshevLobatto01(6);
  EXPECT_EQ(s.front(), 0.0);
  EXPECT_EQ(s.back(), 1.0);
  EXPECT_NEAR(s[3], 0.5, 1e-15);
}

TEST(GeodesicTest, InterpolationIsExactForPolynomials) {
  const Discretization disc(6, 12);
  Curve c;
  c.nodes.resize(1, 7);
  for (int k = 0; k < 7; ++k) c.nodes(0, k) = std::pow(disc.nodes()[k], 3);
  const ConstantMetric one(Eigen::MatrixXd::Identity(1, 1));
  // ∫ (3s²)² ds = 9/5
  EXPECT_NEAR(RiemannianEnergy(one, disc, c, Eigen::VectorXd::Zero(1)).energy,
              9.0 / 5.0, 1e-13);
}

TEST(GeodesicTest, ConstantMetricGivesStraightLine) {
  std::mt19937_64 rng(8);
  std::normal_distribution<double> N;
  for (int trial = 0; trial < 10; ++trial) {
    Eigen::Matrix3d R;
    for (int i = 0; i < 9; ++i) R.data()[i] = N(rng);
    const Eigen::Matrix3d W = R * R.transpose() + 0.5 * Eigen::Matrix3d::Identity();
    const ConstantMetric metric(W);
    const Discretization disc(6, 12);
    Eigen::Vector3d a(N(rng), N(rng), N(rng)), b(N(rng), N(rng), N(rng));
    Curve warm = Curve::StraightLine(disc, a, b);
    for (int k = 1; k < 6; ++k) warm.nodes.col(k) += 0.3 * Eigen::Vector3d(N(rng), N(rng), N(rng));
    GeodesicOptions opt;
    opt.tolerance = 1e-13;
    opt.max_iterations = 500;
    const Geodesic g = SolveGeodesic(metric, disc, a, b, Eigen::VectorXd::Zero(1),
                                     &warm, opt);
    for (int k = 1; k < 6; ++k) {
      const double s = disc.nodes()[k];
      EXPECT_LE((g.curve.nodes.col(k) - ((1 - s) * a + s * b)).norm(), 1e-8);
    }
    const Eigen::Vector3d d = b - a;
    const double exact = d.dot(W.ldlt().solve(d));
    EXPECT_LE(std::abs(g.energy - exact), 1e-10 * exact);
  }
}

TEST(GeodesicTest, PositionalMetricMatchesLatticeOracle) {
  const ConformalMetric metric;
  const Discretization disc(8, 16);
  std::mt19937_64 rng(21);
  std::uniform_int_distribution<int> I(20, 179);
  const double h = 2.0 / 199;
  GeodesicOptions opt;
  opt.tolerance = 1e-12;
  opt.max_iterations = 500;
  for (int pair = 0; pair < 10; ++pair) {
    int i0 = I(rng), j0 = I(rng), i1 = I(rng), j1 = I(rng);
    if (std::hypot(i1 - i0, j1 - j0) < 60) {
      --pair;
      continue;
    }
    const Eigen::Vector2d a(-1 + i0 * h, -1 + j0 * h), b(-1 + i1 * h, -1 + j1 * h);
    const Geodesic g = SolveGeodesic(metric, disc, a, b, Eigen::VectorXd::Zero(1),
                                     nullptr, opt);
    ASSERT_TRUE(g.converged);
    const double L = LatticeLength(i0, j0, i1, j1);
    // constant-speed minimizer: E = L²
    EXPECT_LE(std::abs(g.energy - L * L), 1e-3 * L * L)
        << "pair " << pair << " E " << g.energy << " L² " << L * L;
  }
}

TEST(GeodesicTest, EnergyThetaGradientMatchesFiniteDifferences) {
  // W = I + small random quadratic in (x, θ)
  std::mt19937_64 rng(12);
  std::uniform_real_distribution<double> U(-1, 1);
  auto basis = std::make_shared<MonomialBasis>(5, 2);
  PolyMatrixFamily W(3, 3, true, basis);
  for (int e = 0; e < W.num_free_entries(); ++e) {
    auto [i, j] = W.free_entry(e);
    for (int k = 0; k < basis->size(); ++k) {
      W.set_coeff(i, j, k, (k == 0 && i == j ? 1.0 : 0.0) + 0.04 * U(rng));
    }
  }
  PolyMatrixFamily Y(1, 3, false, basis);
  const PolyDualMetric metric(W, Y, 2);
  const Discretization disc(6, 12);
  for (int trial = 0; trial < 10; ++trial) {
    Curve c;
    c.nodes.resize(3, 7);
    for (int i = 0; i < c.nodes.size(); ++i) c.nodes.data()[i] = U(rng);
    Eigen::Vector2d th(0.5 * U(rng), 0.5 * U(rng));
    const Eigen::VectorXd g = EnergyGradientTheta(metric, disc, c, th);
    for (int i = 0; i < 2; ++i) {
      const double h = 1e-5;
      Eigen::VectorXd tp = th, tm = th;
      tp[i] += h;
      tm[i] -= h;
      const double fd = (RiemannianEnergy(metric, disc, c, tp).energy -
                         RiemannianEnergy(metric, disc, c, tm).energy) / (2 * h);
      EXPECT_LE(std::abs(g[i] - fd), 1e-6 * std::max(std::abs(fd), 1e-3));
      const double E = RiemannianEnergy(metric, disc, c, th).energy;
      EXPECT_NEAR(EnergyLogGradientTheta(metric, disc, c, th, i), g[i] / E, 1e-12);
    }
  }
}

TEST(GeodesicTest, NodeGradientMatchesFiniteDifferences) {
  const ConformalMetric metric;
  const Discretization disc(6, 12);
  Curve c = Curve::StraightLine(disc, Eigen::Vector2d(-0.5, 0.2), Eigen::Vector2d(0.7, -0.4));
  c.nodes(1, 3) += 0.2;
  const auto e = RiemannianEnergy(metric, disc, c, Eigen::VectorXd::Zero(1), true);
  for (int k = 0; k < 7; ++k) {
    for (int r = 0; r < 2; ++r) {
      Curve p = c, m = c;
      p.nodes(r, k) += 1e-6;
      m.nodes(r, k) -= 1e-6;
      const double fd = (RiemannianEnergy(metric, disc, p, Eigen::VectorXd::Zero(1)).energy -
                         RiemannianEnergy(metric, disc, m, Eigen::VectorXd::Zero(1)).energy) / 2e-6;
      EXPECT_NEAR(e.node_gradient(r, k), fd, 1e-7 * (1 + std::abs(fd)));
    }
  }
}

TEST(GeodesicTest, ZeroEnergyLogGradientThrows) {
  const ConstantMetric metric(Eigen::MatrixXd::Identity(2, 2));
  const Discretization disc(4, 8);
  const Curve c = Curve::StraightLine(disc, Eigen::Vector2d(1, 1), Eigen::Vector2d(1, 1));
  EXPECT_THROW(EnergyLogGradientTheta(metric, disc, c, Eigen::VectorXd::Zero(1), 0),
               std::domain_error);
}

TEST(GeodesicTest, DomainFlag) {
  const ConstantMetric metric(Eigen::MatrixXd::Identity(2, 2));
  const Discretization disc(4, 8);
  const ParameterBox box({{-1, 1}, {-1, 1}});
  EnergyOptions eo;
  eo.domain = &box;
  const Geodesic in = SolveGeodesic(metric, disc, Eigen::Vector2d(0, 0), Eigen::Vector2d(0.9, 0.5),
                                    Eigen::VectorXd::Zero(1), nullptr, {}, eo);
  EXPECT_FALSE(in.out_of_domain);
  const Geodesic out = SolveGeodesic(metric, disc, Eigen::Vector2d(0, 0), Eigen::Vector2d(1.5, 0),
                                     Eigen::VectorXd::Zero(1), nullptr, {}, eo);
  EXPECT_TRUE(out.out_of_domain);
}

}  // namespace
}  // namespace arccm
