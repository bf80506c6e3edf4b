#include "arccm/system.h"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace arccm {

ParameterBox::ParameterBox(std::vector<Interval> intervals)
    : intervals_(std::move(intervals)) {
  for (std::size_t i = 0; i < intervals_.size(); ++i) {
    if (!(intervals_[i].lo <= intervals_[i].hi)) {
      throw std::invalid_argument("interval " + std::to_string(i + 1) +
                                  " has lo > hi");
    }
  }
}

ParameterBox ParameterBox::Symmetric(const Eigen::VectorXd& half_widths) {
  std::vector<Interval> iv;
  for (int i = 0; i < half_widths.size(); ++i) {
    iv.push_back({-half_widths[i], half_widths[i]});
  }
  return ParameterBox(std::move(iv));
}

Eigen::VectorXd ParameterBox::lo() const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v[i] = intervals_[i].lo;
  return v;
}

Eigen::VectorXd ParameterBox::hi() const {
  Eigen::VectorXd v(size());
  for (int i = 0; i < size(); ++i) v[i] = intervals_[i].hi;
  return v;
}

Eigen::VectorXd ParameterBox::Midpoint() const { return 0.5 * (lo() + hi()); }

Eigen::VectorXd ParameterBox::HalfWidths() const {
  return 0.5 * (hi() - lo());
}

std::vector<Eigen::VectorXd> ParameterBox::Vertices() const {
  std::vector<Eigen::VectorXd> out;
  const std::size_t count = std::size_t{1} << size();
  for (std::size_t v = 0; v < count; ++v) {
    Eigen::VectorXd p(size());
    for (int i = 0; i < size(); ++i) {
      p[i] = (v >> i) & 1 ? intervals_[i].hi : intervals_[i].lo;
    }
    out.push_back(p);
  }
  return out;
}

bool ParameterBox::Contains(const Eigen::Ref<const Eigen::VectorXd>& v,
                            double tol) const {
  if (v.size() != size()) return false;
  for (int i = 0; i < size(); ++i) {
    if (v[i] < intervals_[i].lo - tol || v[i] > intervals_[i].hi + tol) {
      return false;
    }
  }
  return true;
}

Eigen::VectorXd ParameterBox::Clamp(
    const Eigen::Ref<const Eigen::VectorXd>& v) const {
  Eigen::VectorXd out = v;
  for (int i = 0; i < size(); ++i) {
    out[i] = std::min(std::max(out[i], intervals_[i].lo), intervals_[i].hi);
  }
  return out;
}

double ParameterBox::MaxL1() const {
  double s = 0.0;
  for (const auto& iv : intervals_) {
    s += std::max(std::abs(iv.lo), std::abs(iv.hi));
  }
  return s;
}

void UncertainSystem::Validate() const {
  if (n <= 0 || m < 0 || p < 0) {
    throw std::invalid_argument("system dimensions must be n > 0, m, p >= 0");
  }
  if (static_cast<int>(f.size()) != n) {
    throw std::invalid_argument("f must have n entries");
  }
  if (static_cast<int>(delta.size()) != p) {
    throw std::invalid_argument("Δ must have p rows");
  }
  for (const auto& row : delta) {
    if (static_cast<int>(row.size()) != n) {
      throw std::invalid_argument("each Δ row must have n entries");
    }
  }
  if (static_cast<int>(B.size()) != n) {
    throw std::invalid_argument("B must have n rows");
  }
  for (const auto& row : B) {
    if (static_cast<int>(row.size()) != m) {
      throw std::invalid_argument("each B row must have m entries");
    }
  }
  auto check = [&](const Expression& e, const std::string& what) {
    if (e.DependsOnParams()) {
      throw std::invalid_argument(what +
                                  " depends on θ; θ may only enter via Δᵀθ");
    }
    if (e.num_states() > n) {
      throw std::invalid_argument(what + " references states beyond n");
    }
  };
  for (int i = 0; i < n; ++i) check(f[i], "f[" + std::to_string(i + 1) + "]");
  for (int i = 0; i < p; ++i) {
    for (int j = 0; j < n; ++j) check(delta[i][j], "Δ entry");
  }
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < m; ++j) check(B[i][j], "B entry");
  }
  if (theta_box.size() != p || theta_error_box.size() != p) {
    throw std::invalid_argument("parameter boxes must have p intervals");
  }
  if (state_box.size() != n) {
    throw std::invalid_argument("state domain must have n intervals");
  }
}

Eigen::VectorXd DynamicsTerms::Drift(
    const Eigen::Ref<const Eigen::VectorXd>& theta) const {
  return f + delta.transpose() * theta;
}

Eigen::MatrixXd DynamicsTerms::Jacobian(
    const Eigen::Ref<const Eigen::VectorXd>& theta,
    const Eigen::VectorXd& u) const {
  Eigen::MatrixXd A = f_jac;
  for (int i = 0; i < theta.size(); ++i) A += theta[i] * delta_jac[i];
  for (int j = 0; j < u.size(); ++j) A += u[j] * b_jac[j];
  return A;
}

DynamicsTerms EvaluateTerms(const UncertainSystem& sys,
                            const Eigen::Ref<const Eigen::VectorXd>& x) {
  if (x.size() != sys.n) {
    throw std::invalid_argument("state dimension mismatch");
  }
  const int n = sys.n;
  const Eigen::VectorXd no_theta = Eigen::VectorXd::Zero(sys.p);
  DynamicsTerms t;
  t.f.resize(n);
  t.f_jac.resize(n, n);
  Eigen::VectorXd g;
  for (int i = 0; i < n; ++i) {
    t.f[i] = sys.f[i].EvaluateWithGradient(x, no_theta, n, &g);
    t.f_jac.row(i) = g.head(n).transpose();
  }
  t.delta.resize(sys.p, n);
  t.delta_jac.assign(sys.p, Eigen::MatrixXd::Zero(n, n));
  for (int i = 0; i < sys.p; ++i) {
    for (int j = 0; j < n; ++j) {
      const Expression& e = sys.delta[i][j];
      if (e.IsZero()) {
        t.delta(i, j) = 0.0;
        continue;
      }
      t.delta(i, j) = e.EvaluateWithGradient(x, no_theta, n, &g);
      t.delta_jac[i].row(j) = g.head(n).transpose();
    }
  }
  t.B.resize(n, sys.m);
  t.b_jac.assign(sys.m, Eigen::MatrixXd::Zero(n, n));
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < sys.m; ++j) {
      t.B(i, j) = sys.B[i][j].EvaluateWithGradient(x, no_theta, n, &g);
      t.b_jac[j].row(i) = g.head(n).transpose();
    }
  }
  for (const auto& J : t.b_jac) {
    if (!J.isZero(0.0)) t.constant_input = false;
  }
  return t;
}

Eigen::VectorXd FullDynamics(const UncertainSystem& sys,
                             const Eigen::Ref<const Eigen::VectorXd>& x,
                             const Eigen::Ref<const Eigen::VectorXd>& theta,
                             const Eigen::Ref<const Eigen::VectorXd>& u) {
  if (x.size() != sys.n || theta.size() != sys.p || u.size() != sys.m) {
    throw std::invalid_argument("FullDynamics: dimension mismatch");
  }
  const Eigen::VectorXd no_theta = Eigen::VectorXd::Zero(sys.p);
  Eigen::VectorXd dx(sys.n);
  for (int i = 0; i < sys.n; ++i) {
    double v = sys.f[i].Evaluate(x, no_theta);
    for (int k = 0; k < sys.p; ++k) {
      if (theta[k] != 0.0 && !sys.delta[k][i].IsZero()) {
        v += sys.delta[k][i].Evaluate(x, no_theta) * theta[k];
      }
    }
    for (int j = 0; j < sys.m; ++j) {
      v += sys.B[i][j].Evaluate(x, no_theta) * u[j];
    }
    dx[i] = v;
  }
  return dx;
}

Eigen::MatrixXd SystemJacobian(const UncertainSystem& sys,
                               const Eigen::Ref<const Eigen::VectorXd>& x,
                               const Eigen::Ref<const Eigen::VectorXd>& theta,
                               const Eigen::Ref<const Eigen::VectorXd>& u,
                               bool drift_only) {
  if (theta.size() != sys.p || u.size() != sys.m) {
    throw std::invalid_argument("SystemJacobian: dimension mismatch");
  }
  const DynamicsTerms t = EvaluateTerms(sys, x);
  return drift_only ? t.Jacobian(theta) : t.Jacobian(theta, u);
}

UncertainSystem ExampleSystem() {
  UncertainSystem s;
  s.name = kExampleSystemName;
  s.reference_construction = kExampleSystemName;
  s.n = 3;
  s.m = 1;
  s.p = 4;
  const VariableTable vars{3, 4, false};
  auto P = [&](const char* text) { return ParseExpression(text, vars); };
  s.f = {P("x3"), P("-x2"), P("tanh(x2)")};
  const Expression zero = Expression::Constant(0.0);
  s.delta = {
      {P("-x1"), zero, zero},
      {zero, P("-x1^2"), zero},
      {zero, zero, P("-x3")},
      {zero, zero, P("-x1^2")},
  };
  s.B = {{zero}, {zero}, {Expression::Constant(1.0)}};
  s.theta_box = ParameterBox(
      {{-1.0, 1.0}, {0.5, 1.5}, {-0.6, 0.75}, {-1.75, 0.5}});
  std::vector<Interval> err;
  for (int i = 0; i < s.p; ++i) {
    const double w = s.theta_box[i].hi - s.theta_box[i].lo;
    err.push_back({-w, w});
  }
  s.theta_error_box = ParameterBox(std::move(err));
  s.state_box = ParameterBox({{-2.5, 2.5}, {-2.5, 2.5}, {-2.5, 2.5}});
  s.Validate();
  return s;
}

Eigen::VectorXd ExampleTrueParameters() {
  Eigen::VectorXd t(4);
  t << -0.3, 0.8, -0.25, -0.75;
  return t;
}

ReferenceGenerator::ReferenceGenerator(const UncertainSystem& sys)
    : sys_(&sys) {
  if (sys.reference_construction != kExampleSystemName) {
    throw std::invalid_argument(
        "no reference construction declared for system '" + sys.name + "'");
  }
}

namespace {

// ẋ2d = −x2d − θ2(τ) sin²τ with θ2 linear from (t0, th0) at `rate`.
double X2dDerivative(double tau, double x2d, double t0, double th0,
                     double rate) {
  const double s = std::sin(tau);
  return -x2d - (th0 + rate * (tau - t0)) * s * s;
}

double IntegrateX2d(double x2d, double t0, double t1, double th0,
                    double rate) {
  constexpr double kMaxStep = 1e-3;
  const int steps =
      std::max(1, static_cast<int>(std::ceil((t1 - t0) / kMaxStep - 1e-9)));
  const double h = (t1 - t0) / steps;
  double t = t0;
  for (int i = 0; i < steps; ++i) {
    const double k1 = X2dDerivative(t, x2d, t0, th0, rate);
    const double k2 = X2dDerivative(t + h / 2, x2d + h / 2 * k1, t0, th0, rate);
    const double k3 = X2dDerivative(t + h / 2, x2d + h / 2 * k2, t0, th0, rate);
    const double k4 = X2dDerivative(t + h, x2d + h * k3, t0, th0, rate);
    x2d += h / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
    t = t0 + (i + 1) * h;
  }
  return x2d;
}

}  // namespace

void ReferenceGenerator::Reset(double t0, const Eigen::VectorXd& theta,
                               const double* x2d0) {
  t_ = t0;
  if (x2d0 != nullptr) {
    x2d_ = *x2d0;
  } else {
    x2d_ = IntegrateX2d(0.0, t0 - 2 * std::numbers::pi, t0, theta[1], 0.0);
  }
}

ReferencePoint ReferenceGenerator::Current(
    const Eigen::VectorXd& theta, const Eigen::VectorXd& theta_rate) const {
  const double t = t_;
  const double s = std::sin(t);
  const double c = std::cos(t);
  ReferencePoint r;
  r.t = t;
  r.xd.resize(3);
  r.xd_dot.resize(3);
  r.xd[0] = s;
  r.xd[2] = c + theta[0] * s;
  r.xd[1] = x2d_;
  r.xd_dot[0] = c;
  r.xd_dot[1] = -x2d_ - theta[1] * s * s;
  r.xd_dot[2] = -s + theta_rate[0] * s + theta[0] * c;
  r.ud.resize(1);
  r.ud[0] = r.xd_dot[2] - std::tanh(x2d_) + theta[2] * r.xd[2] +
            theta[3] * s * s;
  return r;
}

void ReferenceGenerator::Advance(double t_next, const Eigen::VectorXd& theta,
                                 const Eigen::VectorXd& theta_rate) {
  if (t_next < t_) throw std::invalid_argument("reference cannot go back");
  x2d_ = IntegrateX2d(x2d_, t_, t_next, theta[1], theta_rate[1]);
  t_ = t_next;
}

std::vector<ReferencePoint> GenerateReference(const UncertainSystem& sys,
                                              const ThetaSignal& theta,
                                              double t0, double t1,
                                              double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  ReferenceGenerator gen(sys);
  gen.Reset(t0, theta.value(t0));
  std::vector<ReferencePoint> out;
  const long steps = static_cast<long>(std::floor((t1 - t0) / dt + 1e-9));
  for (long k = 0; k <= steps; ++k) {
    const double t = t0 + k * dt;
    const Eigen::VectorXd th = theta.value(t);
    const Eigen::VectorXd rate = theta.rate(t);
    out.push_back(gen.Current(th, rate));
    if (k < steps) gen.Advance(t0 + (k + 1) * dt, th, rate);
  }
  return out;
}

double ReferenceResidual(const UncertainSystem& sys, const ReferencePoint& r,
                         const Eigen::VectorXd& theta) {
  return (r.xd_dot - FullDynamics(sys, r.xd, theta, r.ud))
      .lpNorm<Eigen::Infinity>();
}

}  // namespace arccm
