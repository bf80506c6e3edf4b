#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arccm/expr.h"

namespace arccm {

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
};

/// Axis-aligned box of closed intervals.
class ParameterBox {
 public:
  ParameterBox() = default;
  explicit ParameterBox(std::vector<Interval> intervals);
  static ParameterBox Symmetric(const Eigen::VectorXd& half_widths);

  int size() const { return static_cast<int>(intervals_.size()); }
  const Interval& operator[](int i) const { return intervals_[i]; }
  Eigen::VectorXd lo() const;
  Eigen::VectorXd hi() const;
  Eigen::VectorXd Midpoint() const;
  Eigen::VectorXd HalfWidths() const;
  /// All 2^size corner points; vertex v takes hi in dimension i iff bit i of
  /// v is set.
  std::vector<Eigen::VectorXd> Vertices() const;
  bool Contains(const Eigen::Ref<const Eigen::VectorXd>& v,
                double tol = 0.0) const;
  Eigen::VectorXd Clamp(const Eigen::Ref<const Eigen::VectorXd>& v) const;
  /// max over the box of Σ_i |v_i| (L1 magnitude).
  double MaxL1() const;

 private:
  std::vector<Interval> intervals_;
};

/// ẋ = f(x) + Δ(x)ᵀθ + B(x)u with θ ∈ Θ and estimation error θ̃ ∈ Θ̃.
struct UncertainSystem {
  std::string name;
  /// Reference construction this system supports ("" for none).
  std::string reference_construction;
  int n = 0;
  int m = 0;
  int p = 0;
  std::vector<Expression> f;                   // n
  std::vector<std::vector<Expression>> delta;  // p rows of n entries
  std::vector<std::vector<Expression>> B;      // n rows of m entries
  ParameterBox theta_box;
  ParameterBox theta_error_box;
  ParameterBox state_box;

  /// Throws std::invalid_argument on inconsistent dimensions or when any
  /// f/Δ/B entry depends on θ.
  void Validate() const;
};

/// Everything about the model that depends on x alone, evaluated once per
/// state sample: values and state Jacobians of f, each Δ_i and each b_j.
struct DynamicsTerms {
  Eigen::VectorXd f;                   // n
  Eigen::MatrixXd f_jac;               // n×n
  Eigen::MatrixXd delta;               // p×n (row i = Δ_i)
  std::vector<Eigen::MatrixXd> delta_jac;  // p of n×n, ∇x Δ_iᵀ
  Eigen::MatrixXd B;                   // n×m
  std::vector<Eigen::MatrixXd> b_jac;  // m of n×n, ∇x b_j
  bool constant_input = true;          // every ∇x b_j is zero

  /// f + Δᵀθ.
  Eigen::VectorXd Drift(const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  /// ∇x f + Σ θ_i ∇x Δ_iᵀ (+ Σ u_j ∇x b_j when `u` is non-empty).
  Eigen::MatrixXd Jacobian(const Eigen::Ref<const Eigen::VectorXd>& theta,
                           const Eigen::VectorXd& u = {}) const;
};

DynamicsTerms EvaluateTerms(const UncertainSystem& sys,
                            const Eigen::Ref<const Eigen::VectorXd>& x);

/// f(x) + Δ(x)ᵀθ + B(x)u.
Eigen::VectorXd FullDynamics(const UncertainSystem& sys,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& u);

/// A_θ(x,u) = ∇x f + Σ ∇x b_i u_i + Σ ∇x Δ_i θ_i. With `drift_only` the
/// input terms are dropped.
Eigen::MatrixXd SystemJacobian(const UncertainSystem& sys,
                               const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& theta,
                               const Eigen::Ref<const Eigen::VectorXd>& u,
                               bool drift_only = false);

inline constexpr const char* kExampleSystemName = "example-ccs-3state";

/// The three-state benchmark with four unmatched/matched parameters:
///   ẋ1 = x3 − θ1 x1
///   ẋ2 = −x2 − θ2 x1²
///   ẋ3 = tanh(x2) − θ3 x3 − θ4 x1² + u
UncertainSystem ExampleSystem();
/// θ* for the benchmark.
Eigen::VectorXd ExampleTrueParameters();

struct ReferencePoint {
  double t = 0.0;
  Eigen::VectorXd xd;
  Eigen::VectorXd ud;
  Eigen::VectorXd xd_dot;
};

/// Incremental, model-consistent reference for the benchmark system:
/// x1d = sin t, x3d = ẋ1d + θ̂1 x1d, x2d integrates ẋ2d = −x2d − θ̂2 x1d²,
/// and u_d inverts row 3. θ̂ is treated as piecewise linear in time, so x_d
/// stays continuous when the estimate changes while u_d may jump.
class ReferenceGenerator {
 public:
  /// Throws std::invalid_argument when `sys` does not declare a supported
  /// reference construction.
  explicit ReferenceGenerator(const UncertainSystem& sys);

  /// Starts at t0. When `x2d0` is null, x2d(t0) is the value reached by
  /// integrating one reference period (2π) ending at t0 from zero with θ̂
  /// frozen, i.e. (close to) the periodic steady state.
  void Reset(double t0, const Eigen::VectorXd& theta,
             const double* x2d0 = nullptr);

  /// Reference at the current time, for estimate θ̂ and its rate on the
  /// upcoming interval.
  ReferencePoint Current(const Eigen::VectorXd& theta,
                         const Eigen::VectorXd& theta_rate) const;

  /// Advances to t_next with θ̂ moving linearly from `theta` at `rate`.
  void Advance(double t_next, const Eigen::VectorXd& theta,
               const Eigen::VectorXd& theta_rate);

  double time() const { return t_; }

 private:
  const UncertainSystem* sys_;
  double t_ = 0.0;
  double x2d_ = 0.0;
};

struct ThetaSignal {
  /// θ̂(t) and its (right) derivative.
  std::function<Eigen::VectorXd(double)> value;
  std::function<Eigen::VectorXd(double)> rate;
};

/// Samples the reference on t0, t0+dt, ..., ≤ t1.
std::vector<ReferencePoint> GenerateReference(const UncertainSystem& sys,
                                              const ThetaSignal& theta,
                                              double t0, double t1, double dt);

/// ẋ_d − F_θ̂(x_d, u_d) as an infinity norm.
double ReferenceResidual(const UncertainSystem& sys, const ReferencePoint& r,
                         const Eigen::VectorXd& theta);

}  // namespace arccm
