#pragma once

#include <memory>
#include <vector>

#include <Eigen/Dense>

#include "arccm/poly.h"

namespace arccm {

/// Point evaluation of a parameter-dependent dual metric W_θ(x) = M_θ(x)⁻¹
/// and its feedback numerator Y_θ(x).
struct MetricEval {
  Eigen::MatrixXd W;
  std::vector<Eigen::MatrixXd> dW_dx;      // n entries when requested
  std::vector<Eigen::MatrixXd> dW_dtheta;  // p entries when requested
  Eigen::MatrixXd Y;                       // m×n when requested
};

struct MetricRequest {
  bool state_partials = false;
  bool param_partials = false;
  bool feedback = false;
};

class DualMetric {
 public:
  virtual ~DualMetric() = default;
  virtual int num_states() const = 0;
  virtual int num_params() const = 0;
  virtual int num_inputs() const = 0;
  virtual void Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& theta,
                        const MetricRequest& request, MetricEval* out) const = 0;
  /// Parameter indices W may depend on.
  virtual std::vector<int> param_dependencies() const = 0;
};

/// Dual metric backed by polynomial families W (n×n symmetric) and Y (m×n)
/// in the joint variables (x, θ).
class PolyDualMetric final : public DualMetric {
 public:
  PolyDualMetric(PolyMatrixFamily W, PolyMatrixFamily Y, int num_params);

  int num_states() const override { return W_.rows(); }
  int num_params() const override { return num_params_; }
  int num_inputs() const override { return Y_.rows(); }
  void Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& theta,
                const MetricRequest& request, MetricEval* out) const override;
  std::vector<int> param_dependencies() const override;

  const PolyMatrixFamily& W() const { return W_; }
  const PolyMatrixFamily& Y() const { return Y_; }

 private:
  PolyMatrixFamily W_;
  PolyMatrixFamily Y_;
  int num_params_;
};

/// W_θ(x) = scale·e^{−c θ_i} I (so M = e^{c θ_i} I / scale), with Y ≡ 0.
/// A test fixture: its log-sensitivity to θ_i is exactly |c|.
class ExponentialScalarMetric final : public DualMetric {
 public:
  ExponentialScalarMetric(int n, int p, int m, int index, double c,
                          double scale = 1.0);

  int num_states() const override { return n_; }
  int num_params() const override { return p_; }
  int num_inputs() const override { return m_; }
  void Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                const Eigen::Ref<const Eigen::VectorXd>& theta,
                const MetricRequest& request, MetricEval* out) const override;
  std::vector<int> param_dependencies() const override;

 private:
  int n_, p_, m_, index_;
  double c_, scale_;
};

}  // namespace arccm
