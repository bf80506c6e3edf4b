#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <unordered_map>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

namespace arccm {

/// Monomials of total degree ≤ d in the joint variables z = (x, θ), ordered
/// graded-lexicographically. Monomials are evaluated in normalized
/// coordinates ((z_v - center_v) / scale_v), which keeps coefficient
/// magnitudes comparable across variables with very different ranges; the
/// family is still an ordinary polynomial in z.
///
/// Variables outside `active` never appear with a nonzero exponent. With all
/// variables active the basis has C(num_vars + d, d) elements.
class MonomialBasis {
 public:
  MonomialBasis(int num_vars, int degree, std::vector<bool> active = {},
                Eigen::VectorXd center = {}, Eigen::VectorXd scale = {});

  /// Rebuilds a basis from an explicit exponent list (deserialization).
  static MonomialBasis FromExponents(
      int num_vars, int degree,
      const std::vector<std::vector<int>>& exponents, Eigen::VectorXd center,
      Eigen::VectorXd scale);

  int num_vars() const { return num_vars_; }
  int degree() const { return degree_; }
  int size() const { return size_; }
  int exponent(int k, int v) const { return exponents_[k * num_vars_ + v]; }
  const Eigen::VectorXd& center() const { return center_; }
  const Eigen::VectorXd& scale() const { return scale_; }
  bool is_active(int v) const { return active_[v]; }

  /// Index of the monomial with the given exponents, or -1.
  int IndexOf(std::span<const int> exponents) const;

  /// Writes all monomial values at z into `out` (size()).
  void Evaluate(const Eigen::Ref<const Eigen::VectorXd>& z,
                std::span<double> out) const;
  /// Writes ∂/∂z_var of every monomial at z into `out`.
  void EvaluatePartial(const Eigen::Ref<const Eigen::VectorXd>& z, int var,
                       std::span<double> out) const;

  /// Values and all first partials in one pass: out_values[k] and
  /// out_partials[v * size() + k]. Partials are only filled for variables in
  /// `vars`.
  void EvaluateWithPartials(const Eigen::Ref<const Eigen::VectorXd>& z,
                            std::span<const int> vars,
                            std::span<double> out_values,
                            std::span<double> out_partials) const;

  nlohmann::json ToJson() const;
  static MonomialBasis FromJson(const nlohmann::json& j);

 private:
  MonomialBasis() = default;
  void BuildIndex();
  void PowerTable(const Eigen::Ref<const Eigen::VectorXd>& z,
                  std::vector<double>* table) const;

  int num_vars_ = 0;
  int degree_ = 0;
  int size_ = 0;
  std::vector<bool> active_;
  std::vector<int> active_vars_;
  std::vector<std::uint8_t> exponents_;
  Eigen::VectorXd center_;
  Eigen::VectorXd scale_;
  std::unordered_map<std::uint64_t, int> index_;
};

/// A matrix whose entries are polynomials over a shared MonomialBasis.
/// Coefficients are stored densely, entry-major: coeff(i, j, k).
class PolyMatrixFamily {
 public:
  PolyMatrixFamily(int rows, int cols, bool symmetric,
                   std::shared_ptr<const MonomialBasis> basis);

  /// Constant family (only the degree-0 coefficient set).
  static PolyMatrixFamily ConstantFamily(
      const Eigen::MatrixXd& value, bool symmetric,
      std::shared_ptr<const MonomialBasis> basis);

  int rows() const { return rows_; }
  int cols() const { return cols_; }
  bool symmetric() const { return symmetric_; }
  const MonomialBasis& basis() const { return *basis_; }
  const std::shared_ptr<const MonomialBasis>& basis_ptr() const {
    return basis_;
  }

  double coeff(int i, int j, int k) const {
    return coeffs_[(i * cols_ + j) * basis_->size() + k];
  }
  /// Sets coeff(i, j, k) and, for symmetric families, coeff(j, i, k).
  void set_coeff(int i, int j, int k, double value);
  std::span<const double> entry_coeffs(int i, int j) const {
    return {coeffs_.data() + (i * cols_ + j) * basis_->size(),
            static_cast<std::size_t>(basis_->size())};
  }

  /// Number of independent entries: r(r+1)/2 for symmetric, r·c otherwise.
  int num_free_entries() const;
  /// (row, col) of the e-th independent entry (upper triangle for symmetric).
  std::pair<int, int> free_entry(int e) const;

  Eigen::MatrixXd Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                           const Eigen::Ref<const Eigen::VectorXd>& theta)
      const;
  /// Evaluates against precomputed monomial values.
  Eigen::MatrixXd Contract(std::span<const double> monomials) const;

  /// Exact partial derivative with respect to joint variable `var`
  /// (x indices first, then θ).
  PolyMatrixFamily Partial(int var) const;

  /// Σ_i ∂F/∂x_i (x, θ) · v_i.
  Eigen::MatrixXd DirectionalDerivative(
      const Eigen::Ref<const Eigen::VectorXd>& x,
      const Eigen::Ref<const Eigen::VectorXd>& theta,
      const Eigen::Ref<const Eigen::VectorXd>& v) const;

  PolyMatrixFamily operator*(double s) const;
  PolyMatrixFamily operator+(const PolyMatrixFamily& other) const;

  nlohmann::json ToJson() const;
  /// Restores a family; `basis` is shared when several families use it.
  static PolyMatrixFamily FromJson(const nlohmann::json& j,
                                   std::shared_ptr<const MonomialBasis> basis);

 private:
  Eigen::VectorXd Joint(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& theta) const;

  int rows_;
  int cols_;
  bool symmetric_;
  std::shared_ptr<const MonomialBasis> basis_;
  std::vector<double> coeffs_;
};

}  // namespace arccm
