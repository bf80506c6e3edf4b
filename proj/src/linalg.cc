#include "arccm/linalg.h"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>
#include <stdexcept>

namespace arccm {

namespace {

// In-place cyclic Jacobi on row-major `a` (dim×dim); accumulates rotations
// into row-major `v` (columns are eigenvectors). Returns false on non-finite
// input.
bool JacobiInPlace(int dim, double* a, double* v) {
  for (int i = 0; i < dim * dim; ++i) {
    if (!std::isfinite(a[i])) return false;
  }
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) v[i * dim + j] = i == j ? 1.0 : 0.0;
  }
  constexpr int kMaxSweeps = 60;
  for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
    double off = 0.0;
    double diag = 0.0;
    for (int i = 0; i < dim; ++i) {
      diag += a[i * dim + i] * a[i * dim + i];
      for (int j = i + 1; j < dim; ++j) off += a[i * dim + j] * a[i * dim + j];
    }
    if (off <= 1e-32 * diag || off == 0.0) break;
    for (int p = 0; p < dim - 1; ++p) {
      for (int q = p + 1; q < dim; ++q) {
        const double apq = a[p * dim + q];
        if (apq == 0.0) continue;
        const double app = a[p * dim + p];
        const double aqq = a[q * dim + q];
        const double theta = (aqq - app) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) /
                         (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (int k = 0; k < dim; ++k) {
          const double akp = a[k * dim + p];
          const double akq = a[k * dim + q];
          a[k * dim + p] = c * akp - s * akq;
          a[k * dim + q] = s * akp + c * akq;
        }
        for (int k = 0; k < dim; ++k) {
          const double apk = a[p * dim + k];
          const double aqk = a[q * dim + k];
          a[p * dim + k] = c * apk - s * aqk;
          a[q * dim + k] = s * apk + c * aqk;
        }
        a[p * dim + q] = 0.0;
        a[q * dim + p] = 0.0;
        for (int k = 0; k < dim; ++k) {
          const double vkp = v[k * dim + p];
          const double vkq = v[k * dim + q];
          v[k * dim + p] = c * vkp - s * vkq;
          v[k * dim + q] = s * vkp + c * vkq;
        }
      }
    }
  }
  for (int i = 0; i < dim; ++i) {
    if (!std::isfinite(a[i * dim + i])) return false;
  }
  return true;
}

}  // namespace

SymmetricEigen JacobiEigen(const Eigen::Ref<const Eigen::MatrixXd>& a) {
  const int dim = static_cast<int>(a.rows());
  if (a.cols() != dim) throw std::invalid_argument("JacobiEigen: not square");
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> w =
      0.5 * (a + a.transpose());
  Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> v(
      dim, dim);
  if (!JacobiInPlace(dim, w.data(), v.data())) {
    throw std::runtime_error("JacobiEigen: non-finite matrix");
  }
  std::vector<int> order(dim);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(),
                   [&](int i, int j) { return w(i, i) < w(j, j); });
  SymmetricEigen out;
  out.values.resize(dim);
  out.vectors.resize(dim, dim);
  for (int k = 0; k < dim; ++k) {
    out.values[k] = w(order[k], order[k]);
    out.vectors.col(k) = v.col(order[k]);
  }
  return out;
}

bool JacobiMinEigen(int dim, const double* a, double* min_value, double* vec) {
  if (dim > kMaxJacobiDim) {
    throw std::invalid_argument("JacobiMinEigen: block too large");
  }
  double w[kMaxJacobiDim * kMaxJacobiDim];
  double v[kMaxJacobiDim * kMaxJacobiDim];
  for (int i = 0; i < dim; ++i) {
    for (int j = 0; j < dim; ++j) {
      w[i * dim + j] = 0.5 * (a[i * dim + j] + a[j * dim + i]);
    }
  }
  if (!JacobiInPlace(dim, w, v)) return false;
  int best = 0;
  for (int i = 1; i < dim; ++i) {
    if (w[i * dim + i] < w[best * dim + best]) best = i;
  }
  *min_value = w[best * dim + best];
  for (int k = 0; k < dim; ++k) vec[k] = v[k * dim + best];
  return std::isfinite(*min_value);
}

bool CholeskyShiftSucceeds(int dim, const double* a, double shift) {
  double l[kMaxJacobiDim * kMaxJacobiDim];
  for (int j = 0; j < dim; ++j) {
    double d = a[j * dim + j] - shift;
    for (int k = 0; k < j; ++k) d -= l[j * dim + k] * l[j * dim + k];
    if (!(d > 0.0)) return false;
    const double ljj = std::sqrt(d);
    l[j * dim + j] = ljj;
    for (int i = j + 1; i < dim; ++i) {
      double s = 0.5 * (a[i * dim + j] + a[j * dim + i]);
      for (int k = 0; k < j; ++k) s -= l[i * dim + k] * l[j * dim + k];
      l[i * dim + j] = s / ljj;
    }
  }
  return true;
}

}  // namespace arccm
