#include "arccm/metric.h"

#include <cmath>
#include <stdexcept>

namespace arccm {

PolyDualMetric::PolyDualMetric(PolyMatrixFamily W, PolyMatrixFamily Y,
                               int num_params)
    : W_(std::move(W)), Y_(std::move(Y)), num_params_(num_params) {
  if (!W_.symmetric() || W_.rows() != W_.cols()) {
    throw std::invalid_argument("W must be a square symmetric family");
  }
  if (Y_.cols() != W_.rows()) {
    throw std::invalid_argument("Y must have n columns");
  }
  const int nv = W_.rows() + num_params_;
  if (W_.basis().num_vars() != nv || Y_.basis().num_vars() != nv) {
    throw std::invalid_argument("metric bases must span (x, θ)");
  }
}

void PolyDualMetric::Evaluate(const Eigen::Ref<const Eigen::VectorXd>& x,
                              const Eigen::Ref<const Eigen::VectorXd>& theta,
                              const MetricRequest& request,
                              MetricEval* out) const {
  const int n = W_.rows();
  if (x.size() != n || theta.size() != num_params_) {
    throw std::invalid_argument("PolyDualMetric: point dimension mismatch");
  }
  Eigen::VectorXd z(n + num_params_);
  z << x, theta;
  const MonomialBasis& wb = W_.basis();
  const int K = wb.size();
  std::vector<int> vars;
  if (request.state_partials) {
    for (int i = 0; i < n; ++i) {
      if (wb.is_active(i)) vars.push_back(i);
    }
  }
  if (request.param_partials) {
    for (int i = 0; i < num_params_; ++i) {
      if (wb.is_active(n + i)) vars.push_back(n + i);
    }
  }
  std::vector<double> values(K);
  std::vector<double> partials(static_cast<std::size_t>(z.size()) * K, 0.0);
  wb.EvaluateWithPartials(z, vars, values, partials);
  out->W = W_.Contract(values);
  auto partial_span = [&](int var) {
    return std::span<const double>(partials.data() +
                                       static_cast<std::size_t>(var) * K,
                                   K);
  };
  if (request.state_partials) {
    out->dW_dx.assign(n, Eigen::MatrixXd::Zero(n, n));
    for (int i = 0; i < n; ++i) {
      if (wb.is_active(i)) out->dW_dx[i] = W_.Contract(partial_span(i));
    }
  }
  if (request.param_partials) {
    out->dW_dtheta.assign(num_params_, Eigen::MatrixXd::Zero(n, n));
    for (int i = 0; i < num_params_; ++i) {
      if (wb.is_active(n + i)) {
        out->dW_dtheta[i] = W_.Contract(partial_span(n + i));
      }
    }
  }
  if (request.feedback) {
    if (Y_.basis_ptr() == W_.basis_ptr()) {
      out->Y = Y_.Contract(values);
    } else {
      std::vector<double> yv(Y_.basis().size());
      Y_.basis().Evaluate(z, yv);
      out->Y = Y_.Contract(yv);
    }
  }
}

std::vector<int> PolyDualMetric::param_dependencies() const {
  std::vector<int> deps;
  const int n = W_.rows();
  for (int i = 0; i < num_params_; ++i) {
    if (W_.basis().is_active(n + i)) deps.push_back(i);
  }
  return deps;
}

ExponentialScalarMetric::ExponentialScalarMetric(int n, int p, int m,
                                                 int index, double c,
                                                 double scale)
    : n_(n), p_(p), m_(m), index_(index), c_(c), scale_(scale) {
  if (index < 0 || index >= p) {
    throw std::invalid_argument("parameter index out of range");
  }
  if (!(scale > 0.0)) throw std::invalid_argument("scale must be positive");
}

void ExponentialScalarMetric::Evaluate(
    const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta,
    const MetricRequest& request, MetricEval* out) const {
  (void)x;
  const double w = scale_ * std::exp(-c_ * theta[index_]);
  out->W = w * Eigen::MatrixXd::Identity(n_, n_);
  if (request.state_partials) {
    out->dW_dx.assign(n_, Eigen::MatrixXd::Zero(n_, n_));
  }
  if (request.param_partials) {
    out->dW_dtheta.assign(p_, Eigen::MatrixXd::Zero(n_, n_));
    out->dW_dtheta[index_] = -c_ * out->W;
  }
  if (request.feedback) out->Y = Eigen::MatrixXd::Zero(m_, n_);
}

std::vector<int> ExponentialScalarMetric::param_dependencies() const {
  return {index_};
}

}  // namespace arccm
