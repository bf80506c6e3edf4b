#include "arccm/linalg.h"

#include <random>

#include <gtest/gtest.h>

#include "arccm/optim.h"
#include "arccm/parallel.h"

namespace arccm {
namespace {

Eigen::MatrixXd RandomSymmetric(int n, std::mt19937_64* rng) {
  std::normal_distribution<double> N;
  Eigen::MatrixXd a(n, n);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j <= i; ++j) a(i, j) = a(j, i) = N(*rng);
  }
  return a;
}

TEST(LinalgTest, JacobiMatchesEigen) {
  std::mt19937_64 rng(2);
  for (int n : {1, 2, 4, 5, 9, 16}) {
    for (int trial = 0; trial < 10; ++trial) {
      const Eigen::MatrixXd a = RandomSymmetric(n, &rng);
      const SymmetricEigen e = JacobiEigen(a);
      Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> ref(a);
      EXPECT_LT((e.values - ref.eigenvalues()).cwiseAbs().maxCoeff(), 1e-12);
      const Eigen::MatrixXd recon =
          e.vectors * e.values.asDiagonal() * e.vectors.transpose();
      EXPECT_LT((recon - a).cwiseAbs().maxCoeff(), 1e-12);

      Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> r = a;
      double lmin;
      Eigen::VectorXd v(n);
      ASSERT_TRUE(JacobiMinEigen(n, r.data(), &lmin, v.data()));
      EXPECT_NEAR(lmin, ref.eigenvalues()[0], 1e-12);
      EXPECT_NEAR(v.norm(), 1.0, 1e-12);
      EXPECT_LT((a * v - lmin * v).norm(), 1e-10);
    }
  }
}

TEST(LinalgTest, RepeatedEigenvaluesAreDeterministic) {
  const Eigen::Matrix3d a = Eigen::Vector3d(2, 1, 1).asDiagonal();
  double lmin;
  Eigen::Vector3d v;
  Eigen::Matrix3d r = a;
  ASSERT_TRUE(JacobiMinEigen(3, r.data(), &lmin, v.data()));
  EXPECT_DOUBLE_EQ(lmin, 1.0);
  EXPECT_EQ(v.cwiseAbs(), Eigen::Vector3d(0, 1, 0));
}

TEST(LinalgTest, CholeskyShift) {
  const Eigen::Matrix2d a = (Eigen::Matrix2d() << 2, 1, 1, 2).finished();  // eig 1, 3
  EXPECT_TRUE(CholeskyShiftSucceeds(2, a.data(), 0.99));
  EXPECT_FALSE(CholeskyShiftSucceeds(2, a.data(), 1.01));
}

TEST(LinalgTest, JacobiRejectsNonFinite) {
  Eigen::Matrix2d a;
  a << 1, std::nan(""), std::nan(""), 1;
  EXPECT_THROW(JacobiEigen(a), std::runtime_error);
}

TEST(OptimTest, LbfgsMinimizesRosenbrock) {
  Objective f = [](const Eigen::VectorXd& x, Eigen::VectorXd* g) {
    const double a = 1 - x[0], b = x[1] - x[0] * x[0];
    if (g) {
      g->resize(2);
      (*g)[0] = -2 * a - 400 * x[0] * b;
      (*g)[1] = 200 * b;
    }
    return a * a + 100 * b * b;
  };
  LbfgsOptions opt;
  opt.max_iterations = 500;
  opt.gradient_abs = 1e-10;
  const LbfgsResult r = MinimizeLbfgs(f, Eigen::Vector2d(-1.2, 1.0), opt);
  EXPECT_TRUE(r.converged);
  EXPECT_LT((r.x - Eigen::Vector2d(1, 1)).norm(), 1e-7);
}

TEST(ParallelTest, CoversEveryIndexOnce) {
  std::vector<int> hits(1000, 0);
  ParallelFor(hits.size(), 4, [&](std::size_t i, int worker) {
    EXPECT_GE(worker, 0);
    EXPECT_LT(worker, 4);
    hits[i] += 1;
  });
  for (int h : hits) EXPECT_EQ(h, 1);
  EXPECT_EQ(ResolveThreads(3), 3);
  EXPECT_GE(ResolveThreads(0), 1);
}

}  // namespace
}  // namespace arccm
