#pragma once

#include <Eigen/Dense>

namespace arccm {

/// Largest block dimension handled by the stack-based Jacobi routines.
inline constexpr int kMaxJacobiDim = 24;

/// Eigen-decomposition of a small symmetric matrix by cyclic Jacobi
/// rotations. Eigenvalues ascending; ties keep the lower original index
/// first, so the "minimum eigenvector" is chosen deterministically.
struct SymmetricEigen {
  Eigen::VectorXd values;
  Eigen::MatrixXd vectors;  // columns
};

SymmetricEigen JacobiEigen(const Eigen::Ref<const Eigen::MatrixXd>& a);

/// Minimum eigenvalue and a unit eigenvector for it, without heap traffic.
/// `a` is row-major dim×dim; `vec` receives dim entries. Returns false if
/// the iteration produced a non-finite value.
bool JacobiMinEigen(int dim, const double* a, double* min_value, double* vec);

/// True iff a - shift·I admits a Cholesky factorization (i.e. its minimum
/// eigenvalue is > shift, up to rounding). `a` is row-major dim×dim.
bool CholeskyShiftSucceeds(int dim, const double* a, double shift);

}  // namespace arccm
