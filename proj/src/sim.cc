#include "arccm/sim.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include "arccm/geodesic.h"

namespace arccm {

namespace {

void CheckFinite(const Eigen::VectorXd& v, double t) {
  if (!v.allFinite()) {
    std::ostringstream os;
    os << "non-finite derivative at t = " << t;
    throw std::runtime_error(os.str());
  }
}

}  // namespace

Eigen::VectorXd Rk4Step(
    const std::function<Eigen::VectorXd(double, const Eigen::VectorXd&)>& deriv,
    double t, const Eigen::VectorXd& x, double dt) {
  if (!(dt > 0.0)) throw std::invalid_argument("dt must be positive");
  const Eigen::VectorXd k1 = deriv(t, x);
  CheckFinite(k1, t);
  const Eigen::VectorXd k2 = deriv(t + dt / 2, x + dt / 2 * k1);
  CheckFinite(k2, t + dt / 2);
  const Eigen::VectorXd k3 = deriv(t + dt / 2, x + dt / 2 * k2);
  CheckFinite(k3, t + dt / 2);
  const Eigen::VectorXd k4 = deriv(t + dt, x + dt * k3);
  CheckFinite(k4, t + dt);
  return x + dt / 6 * (k1 + 2 * k2 + 2 * k3 + k4);
}

EstimatorKind ParseEstimatorKind(const std::string& name) {
  if (name == "frozen") return EstimatorKind::kFrozen;
  if (name == "scheduled") return EstimatorKind::kScheduled;
  if (name == "rls") return EstimatorKind::kRls;
  throw std::invalid_argument("unknown estimator kind '" + name +
                              "' (frozen, scheduled or rls)");
}

std::string EstimatorKindName(EstimatorKind k) {
  switch (k) {
    case EstimatorKind::kFrozen: return "frozen";
    case EstimatorKind::kScheduled: return "scheduled";
    case EstimatorKind::kRls: return "rls";
  }
  return "?";
}

int SimConfig::SubstepsPerTick() const {
  if (!(h > 0.0)) throw std::invalid_argument("integrator step h must be > 0");
  if (!(t1 > t0)) throw std::invalid_argument("need t1 > t0");
  const double ratio = control_period / h;
  const double r = std::round(ratio);
  if (r < 1.0 || std::abs(ratio - r) > 1e-9 * std::max(1.0, r)) {
    throw std::invalid_argument(
        "control period must be an integer multiple of h");
  }
  return static_cast<int>(r);
}

double ScheduleRate(const Eigen::VectorXd& theta0, const Eigen::VectorXd& theta1,
                    double t_start, double t_end, RateNorm norm) {
  if (!(t_end > t_start)) {
    throw std::invalid_argument("schedule needs t_start < t_end");
  }
  return RateMagnitude(theta1 - theta0, norm) / (t_end - t_start);
}

Trace RunClosedLoop(const UncertainSystem& sys, const MetricCertificate& cert,
                    const SimConfig& cfg) {
  if (!cert.metric) throw std::invalid_argument("certificate has no metric");
  const int n = sys.n, m = sys.m, p = sys.p;
  const int substeps = cfg.SubstepsPerTick();
  const double T = cfg.control_period;
  const double h = T / substeps;
  const long ticks =
      static_cast<long>(std::floor((cfg.t1 - cfg.t0) / T + 1e-9));

  const Eigen::VectorXd theta_true =
      cfg.theta_true.size() ? cfg.theta_true : ExampleTrueParameters();
  const EstimatorConfig& est = cfg.estimator;
  const Eigen::VectorXd theta0 =
      est.theta0.size() ? est.theta0 : sys.theta_box.Midpoint();
  const Eigen::VectorXd theta_final =
      est.theta_final.size() ? est.theta_final : theta_true;
  if (theta_true.size() != p || theta0.size() != p || theta_final.size() != p) {
    throw std::invalid_argument("parameter vectors must have length p");
  }
  if (!sys.theta_box.Contains(theta0, 1e-12)) {
    throw std::invalid_argument("initial estimate lies outside Θ");
  }

  Schedule schedule{theta0, theta_final, est.t_start, est.t_end};
  RateBudget budget{cert.lambda, cert.mu, p, est.rho_min, est.norm};
  if (est.kind == EstimatorKind::kScheduled) {
    const double rate =
        ScheduleRate(theta0, theta_final, est.t_start, est.t_end, est.norm);
    const double rho = Rho(cert.lambda, cert.mu, p, rate);
    if (!(rho > 0.0)) {
      std::ostringstream os;
      os << "rate condition violated: schedule rate " << rate << " gives rho = "
         << rho << " <= 0 (lambda " << cert.lambda << ", mu " << cert.mu
         << ", p " << p << ")";
      throw RateConditionViolation(os.str());
    }
  } else if (est.kind == EstimatorKind::kRls) {
    if (!(est.rho_min > 0.0) || !(est.rho_min < cert.lambda)) {
      std::ostringstream os;
      os << "rate condition violated: rho_min " << est.rho_min
         << " must lie in (0, lambda = " << cert.lambda << ")";
      throw RateConditionViolation(os.str());
    }
  }

  const DualMetric& metric = *cert.metric;
  const Discretization disc(cfg.curve_degree, cfg.quadrature);
  EnergyOptions energy_opts;
  energy_opts.domain = &sys.state_box;

  ReferenceGenerator gen(sys);
  gen.Reset(cfg.t0, theta0);
  Eigen::VectorXd x;
  {
    const auto r0 = gen.Current(theta0, Eigen::VectorXd::Zero(p));
    if (cfg.x0.size()) {
      x = cfg.x0;
    } else {
      if (cfg.offset.size() != n) {
        throw std::invalid_argument("initial offset must have length n");
      }
      x = r0.xd + cfg.offset;
    }
  }
  if (x.size() != n) throw std::invalid_argument("x0 must have length n");
  if (!sys.state_box.Contains(x, 1e-12)) {
    throw std::invalid_argument("x0 lies outside the state domain");
  }

  Trace trace;
  trace.n = n;
  trace.m = m;
  trace.p = p;
  trace.dt = T;
  trace.records.reserve(ticks + 1);

  Eigen::VectorXd theta_hat = theta0;
  EstimatorState rls = EstimatorState::Initial(theta0, cfg.t0);
  Eigen::VectorXd x_prev = x;
  Eigen::VectorXd u_prev = Eigen::VectorXd::Zero(m);
  std::vector<Eigen::VectorXd> path, path_u;
  Curve warm;
  bool have_warm = false;

  for (long k = 0; k <= ticks; ++k) {
    const double t = cfg.t0 + k * T;
    // Estimate and its rate on [t, t + T).
    Eigen::VectorXd rate = Eigen::VectorXd::Zero(p);
    switch (est.kind) {
      case EstimatorKind::kFrozen:
        break;
      case EstimatorKind::kScheduled:
        theta_hat = ScheduledEstimate(schedule, t);
        rate = (ScheduledEstimate(schedule, t + T) - theta_hat) / T;
        break;
      case EstimatorKind::kRls:
        if (k > 0) {
          RegressionSample sample =
              est.rls.derivative == "integral"
                  ? IntegralSample(sys, path, path_u, h)
                  : BackwardDifferenceSample(sys, x, x_prev, u_prev, T);
          rls.theta = theta_hat;
          rls = RlsUpdate(rls, sample, T, sys, budget, est.rls);
          rate = (rls.theta - theta_hat) / T;
        }
        break;
    }

    const ReferencePoint ref = gen.Current(theta_hat, rate);
    const Geodesic geo =
        SolveGeodesic(metric, disc, ref.xd, x, theta_hat,
                      cfg.warm_start && have_warm ? &warm : nullptr,
                      cfg.geodesic, energy_opts);
    warm = geo.curve;
    have_warm = true;
    const Eigen::VectorXd u = Feedback(metric, disc, geo, ref.ud, theta_hat);

    TraceRecord rec;
    rec.t = t;
    rec.x = x;
    rec.xd = ref.xd;
    rec.u = u;
    rec.ud = ref.ud;
    rec.theta_hat = theta_hat;
    rec.theta_err = theta_true - theta_hat;
    rec.energy = std::max(0.0, geo.energy);
    rec.rate = RateMagnitude(rate, est.norm);
    rec.rho = Rho(cert.lambda, cert.mu, p, rec.rate);
    rec.geo_ok = geo.converged;
    rec.in_domain = !geo.out_of_domain && sys.state_box.Contains(x, 1e-12) &&
                    sys.state_box.Contains(ref.xd, 1e-12);
    rec.geo_iterations = geo.iterations;
    rec.reference_residual = ReferenceResidual(sys, ref, theta_hat);
    trace.records.push_back(std::move(rec));
    if (k == ticks) break;

    // Plant over [t, t + T] with the feedback correction held.
    const Eigen::VectorXd correction = u - ref.ud;
    ReferenceGenerator stage_gen = gen;
    auto input_at = [&](double tau) -> Eigen::VectorXd {
      if (!cfg.continuous_feedforward) return u;
      ReferenceGenerator g = stage_gen;
      g.Advance(tau, theta_hat, rate);
      const Eigen::VectorXd th = theta_hat + (tau - t) * rate;
      return g.Current(th, rate).ud + correction;
    };
    auto plant = [&](double tau, const Eigen::VectorXd& s) {
      return FullDynamics(sys, s, theta_true, input_at(tau));
    };
    x_prev = x;
    u_prev = u;
    path.assign(1, x);
    path_u.assign(1, input_at(t));
    for (int i = 0; i < substeps; ++i) {
      const double ts = t + i * h;
      x = Rk4Step(plant, ts, x, h);
      if (i + 1 < substeps) {
        stage_gen.Advance(t + (i + 1) * h, theta_hat, rate);
      }
      path.push_back(x);
      path_u.push_back(input_at(t + (i + 1) * h));
    }
    gen.Advance(cfg.t0 + (k + 1) * T, theta_hat, rate);
    theta_hat = theta_hat + T * rate;
    if (est.kind == EstimatorKind::kRls) theta_hat = rls.theta;
  }
  return trace;
}

namespace {

void AppendDouble(std::string* out, double v) {
  if (!std::isfinite(v)) return;  // empty cell
  char buf[64];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  out->append(buf, r.ptr);
}

double ParseCell(const std::string& cell) {
  if (cell.empty()) return std::numeric_limits<double>::quiet_NaN();
  double v = 0.0;
  const auto r = std::from_chars(cell.data(), cell.data() + cell.size(), v);
  if (r.ec != std::errc() || r.ptr != cell.data() + cell.size()) {
    throw std::runtime_error("bad number '" + cell + "' in trace CSV");
  }
  return v;
}

}  // namespace

std::string TraceCsv(const Trace& trace) {
  std::string s;
  s += "t";
  auto cols = [&](const char* name, int count) {
    for (int i = 1; i <= count; ++i) s += std::string(",") + name + std::to_string(i);
  };
  cols("x", trace.n);
  cols("xd", trace.n);
  cols("u", trace.m);
  cols("ud", trace.m);
  cols("thhat", trace.p);
  s += ",E,rho,bound_cons,bound_int,geo_ok,in_domain\n";
  for (const auto& r : trace.records) {
    AppendDouble(&s, r.t);
    auto vec = [&](const Eigen::VectorXd& v) {
      for (int i = 0; i < v.size(); ++i) {
        s += ',';
        AppendDouble(&s, v[i]);
      }
    };
    vec(r.x);
    vec(r.xd);
    vec(r.u);
    vec(r.ud);
    vec(r.theta_hat);
    for (double v : {r.energy, r.rho, r.bound_cons, r.bound_int}) {
      s += ',';
      AppendDouble(&s, v);
    }
    s += r.geo_ok ? ",1" : ",0";
    s += r.in_domain ? ",1\n" : ",0\n";
  }
  return s;
}

void WriteTraceCsv(const Trace& trace, const std::string& path) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << TraceCsv(trace);
  if (!f) throw std::runtime_error("write failed for " + path);
}

Trace ReadTraceCsv(const std::string& path, int n, int m, int p,
                   const Eigen::VectorXd& theta_true) {
  std::ifstream f(path);
  if (!f) throw std::runtime_error("cannot open trace " + path);
  if (theta_true.size() != p) {
    throw std::invalid_argument("true parameters must have length p");
  }
  Trace trace;
  trace.n = n;
  trace.m = m;
  trace.p = p;
  const int width = 1 + 2 * n + 2 * m + p + 6;
  std::string line;
  if (!std::getline(f, line)) throw std::runtime_error("empty trace " + path);
  int line_no = 1;
  while (std::getline(f, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream ls(line);
    while (std::getline(ls, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    if (static_cast<int>(cells.size()) != width) {
      throw std::runtime_error(path + ":" + std::to_string(line_no) +
                               ": expected " + std::to_string(width) +
                               " columns");
    }
    int c = 0;
    auto vec = [&](int count) {
      Eigen::VectorXd v(count);
      for (int i = 0; i < count; ++i) v[i] = ParseCell(cells[c++]);
      return v;
    };
    TraceRecord r;
    r.t = ParseCell(cells[c++]);
    r.x = vec(n);
    r.xd = vec(n);
    r.u = vec(m);
    r.ud = vec(m);
    r.theta_hat = vec(p);
    r.theta_err = theta_true - r.theta_hat;
    r.energy = ParseCell(cells[c++]);
    r.rho = ParseCell(cells[c++]);
    r.bound_cons = ParseCell(cells[c++]);
    r.bound_int = ParseCell(cells[c++]);
    r.geo_ok = ParseCell(cells[c++]) != 0.0;
    r.in_domain = ParseCell(cells[c++]) != 0.0;
    trace.records.push_back(std::move(r));
  }
  if (trace.records.size() >= 2) {
    trace.dt = trace.records[1].t - trace.records[0].t;
  }
  return trace;
}

}  // namespace arccm
