#include "arccm/verify.h"

#include <algorithm>
#include <cmath>
#include <random>
#include <sstream>
#include <stdexcept>

#include "arccm/linalg.h"

namespace arccm {

namespace {

double Uniform01(std::mt19937_64& rng) {
  return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

Eigen::VectorXd UniformIn(std::mt19937_64& rng, const ParameterBox& box) {
  Eigen::VectorXd v(box.size());
  for (int i = 0; i < box.size(); ++i) {
    v[i] = box[i].lo + (box[i].hi - box[i].lo) * Uniform01(rng);
  }
  return v;
}

nlohmann::json VecJson(const Eigen::VectorXd& v) {
  return std::vector<double>(v.data(), v.data() + v.size());
}

// NaN/inf are not valid JSON numbers.
nlohmann::json Num(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

void Update(BoundCheck* c, double rel, double t, double slack) {
  if (rel > c->worst_relative) {
    c->worst_relative = rel;
    c->worst_time = t;
  }
  if (rel > slack) ++c->violations;
}

nlohmann::json CheckJson(const BoundCheck& c) {
  return {{"violations", c.violations},
          {"worst_relative", Num(c.worst_relative)},
          {"worst_time", c.worst_time}};
}

}  // namespace

std::vector<double> ConservativeBound(double E0, double lambda, double mu,
                                      int p, double alpha_sq, double sup_rate,
                                      double sup_theta_err,
                                      const std::vector<double>& times) {
  const double rho_bar = Rho(lambda, mu, p, sup_rate);
  if (!(rho_bar > 0.0)) {
    std::ostringstream os;
    os << "rate condition violated: rho_bar = " << rho_bar
       << " <= 0 (lambda " << lambda << ", mu " << mu << ", p " << p
       << ", sup rate " << sup_rate << ")";
    throw RateConditionViolation(os.str());
  }
  const double asymptote = alpha_sq / rho_bar * sup_theta_err * sup_theta_err;
  std::vector<double> out(times.size());
  for (std::size_t k = 0; k < times.size(); ++k) {
    const double e = std::exp(-rho_bar * times[k]);
    out[k] = E0 * e + asymptote * (1.0 - e);
  }
  return out;
}

std::vector<double> IntegratedBound(const Trace& trace, double alpha_sq,
                                    int substeps) {
  if (substeps < 1) throw std::invalid_argument("substeps must be >= 1");
  const auto& r = trace.records;
  std::vector<double> out(r.size());
  if (r.empty()) return out;
  for (const auto& rec : r) {
    if (rec.theta_err.size() != trace.p || !rec.theta_err.allFinite()) {
      throw std::invalid_argument(
          "integrated bound needs the estimation error in every record");
    }
  }
  double b = r[0].energy;
  out[0] = b;
  for (std::size_t k = 0; k + 1 < r.size(); ++k) {
    const double dt = (r[k + 1].t - r[k].t) / substeps;
    for (int j = 0; j < substeps; ++j) {
      const double s = static_cast<double>(j) / substeps;
      const Eigen::VectorXd e =
          (1.0 - s) * r[k].theta_err + s * r[k + 1].theta_err;
      b += dt * (-r[k].rho * b + alpha_sq * e.squaredNorm());
    }
    out[k + 1] = b;
  }
  return out;
}

bool BoundReport::ok() const {
  return certified && conservative_check.violations == 0 &&
         integrated_check.violations == 0 &&
         state_norm_check.violations == 0 && ordering_violations == 0;
}

nlohmann::json BoundReport::ToJson() const {
  return {{"certified", certified},
          {"note", note},
          {"ticks", ticks},
          {"checked_ticks", checked_ticks},
          {"flagged_ticks", flagged_ticks},
          {"conservative", CheckJson(conservative_check)},
          {"integrated", CheckJson(integrated_check)},
          {"state_norm", CheckJson(state_norm_check)},
          {"ordering_violations", ordering_violations},
          {"rho_min_observed", Num(rho_min_observed)},
          {"rho_bar", Num(rho_bar)},
          {"sup_rate", Num(sup_rate)},
          {"sup_theta_err", sup_theta_err},
          {"alpha_sq", alpha_sq},
          {"a_low", a_low},
          {"a_high", a_high},
          {"halving_change", Num(halving_change)},
          {"theta_err_increases", theta_err_increases},
          {"final_energy", final_energy},
          {"ok", ok()}};
}

BoundReport CheckTrace(Trace* trace, const MetricCertificate& cert,
                       const UncertainSystem& sys,
                       const BoundOptions& options) {
  BoundReport rep;
  auto& recs = trace->records;
  rep.ticks = static_cast<int>(recs.size());
  rep.a_low = cert.a_low;
  rep.a_high = cert.a_high;
  rep.alpha_sq = cert.alpha_sq;
  rep.sup_theta_err =
      options.sup_theta_err.value_or(sys.theta_error_box.MaxL1());
  if (recs.empty()) {
    rep.note = "empty trace";
    return rep;
  }
  rep.final_energy = recs.back().energy;
  rep.rho_min_observed = std::numeric_limits<double>::infinity();
  for (const auto& r : recs) {
    rep.rho_min_observed = std::min(rep.rho_min_observed, r.rho);
    if (r.certified()) {
      ++rep.checked_ticks;
    } else {
      ++rep.flagged_ticks;
    }
  }
  rep.rho_bar = rep.rho_min_observed;
  const int p = trace->p;
  rep.sup_rate =
      cert.mu > 0.0 ? std::max(0.0, (cert.lambda - rep.rho_bar) / (p * cert.mu))
                    : 0.0;
  for (std::size_t k = 0; k + 1 < recs.size(); ++k) {
    if (recs[k + 1].theta_err.lpNorm<1>() >
        recs[k].theta_err.lpNorm<1>() + 1e-9) {
      ++rep.theta_err_increases;
    }
  }

  std::vector<double> times(recs.size());
  for (std::size_t k = 0; k < recs.size(); ++k) times[k] = recs[k].t - recs[0].t;
  try {
    rep.conservative =
        ConservativeBound(recs[0].energy, cert.lambda, cert.mu, p,
                          cert.alpha_sq, rep.sup_rate, rep.sup_theta_err, times);
  } catch (const RateConditionViolation& e) {
    rep.note = e.what();
    rep.certified = false;
    return rep;
  }
  rep.integrated = IntegratedBound(*trace, cert.alpha_sq, 1);
  const std::vector<double> fine = IntegratedBound(*trace, cert.alpha_sq, 2);
  double sup = 0.0, diff = 0.0;
  for (std::size_t k = 0; k < fine.size(); ++k) {
    sup = std::max(sup, std::abs(rep.integrated[k]));
    diff = std::max(diff, std::abs(rep.integrated[k] - fine[k]));
  }
  rep.halving_change = sup > 0.0 ? diff / sup : 0.0;

  const double slack = options.slack;
  for (std::size_t k = 0; k < recs.size(); ++k) {
    auto& r = recs[k];
    r.bound_cons = rep.conservative[k];
    r.bound_int = rep.integrated[k];
    const double bc = rep.conservative[k];
    const double bi = rep.integrated[k];
    if (bi - bc > slack * (1.0 + bc)) ++rep.ordering_violations;
    if (!r.certified()) continue;
    Update(&rep.conservative_check, (r.energy - bc) / (1.0 + bc), r.t, slack);
    Update(&rep.integrated_check, (r.energy - bi) / (1.0 + bi), r.t, slack);
    const double norm_bound = std::sqrt(std::max(0.0, bc) / cert.a_low);
    const double err = (r.x - r.xd).norm();
    Update(&rep.state_norm_check, (err - norm_bound) / (1.0 + norm_bound), r.t,
           slack);
  }
  rep.certified = rep.checked_ticks > 0;
  if (!rep.certified) rep.note = "not certified: no tick passed the flags";
  return rep;
}

nlohmann::json Prop1Report::ToJson() const {
  nlohmann::json w = nlohmann::json::array();
  for (const auto& x : witnesses) {
    w.push_back({{"x_start", VecJson(x.x_start)},
                 {"x_end", VecJson(x.x_end)},
                 {"theta", VecJson(x.theta)},
                 {"index", x.index},
                 {"log_gradient", x.log_gradient}});
  }
  return {{"mu", mu},
          {"curves", curves},
          {"checks", checks},
          {"failures", failures},
          {"worst_ratio", Num(worst_ratio)},
          {"witnesses", w},
          {"pointwise_checks", pointwise_checks},
          {"pointwise_disagreements", pointwise_disagreements},
          {"pointwise_c3_failures", pointwise_c3_failures},
          {"ok", ok()}};
}

Prop1Report CheckProp1(const DualMetric& metric, double mu,
                       const UncertainSystem& sys,
                       const Prop1Options& options) {
  Prop1Report rep;
  rep.mu = mu;
  std::mt19937_64 rng(options.seed);
  const Discretization disc(options.curve_degree, options.quadrature);
  const int n = sys.n;
  const int p = sys.p;
  const int K = disc.num_nodes();
  const Eigen::VectorXd half = sys.state_box.HalfWidths();
  EnergyOptions eo;
  eo.domain = &sys.state_box;
  MetricRequest req;
  req.param_partials = true;
  MetricEval ev;

  for (int c = 0; c < options.curves; ++c) {
    Curve curve;
    Eigen::VectorXd theta;
    EnergyEval energy;
    bool found = false;
    for (int attempt = 0; attempt < 100 && !found; ++attempt) {
      const Eigen::VectorXd a = UniformIn(rng, sys.state_box);
      const Eigen::VectorXd b = UniformIn(rng, sys.state_box);
      curve = Curve::StraightLine(disc, a, b);
      for (int k = 1; k + 1 < K; ++k) {
        for (int i = 0; i < n; ++i) {
          curve.nodes(i, k) += 0.3 * half[i] * (2.0 * Uniform01(rng) - 1.0);
        }
        curve.nodes.col(k) = sys.state_box.Clamp(curve.nodes.col(k));
      }
      theta = UniformIn(rng, sys.theta_box);
      energy = RiemannianEnergy(metric, disc, curve, theta, false, eo);
      found = !energy.out_of_domain && energy.energy > 1e-10;
    }
    if (!found) continue;
    ++rep.curves;
    const Eigen::VectorXd g = EnergyGradientTheta(metric, disc, curve, theta);
    for (int i = 0; i < p; ++i) {
      const double lg = g[i] / energy.energy;
      ++rep.checks;
      const double ratio = mu > 0.0 ? std::abs(lg) / mu
                                    : (lg == 0.0 ? 0.0 : HUGE_VAL);
      rep.worst_ratio = std::max(rep.worst_ratio, ratio);
      if (std::abs(lg) > mu * (1.0 + options.relative_slack) + 1e-12) {
        ++rep.failures;
        if (rep.witnesses.size() < 10) {
          rep.witnesses.push_back(
              {curve.start(), curve.end(), theta, i, lg});
        }
      }
    }

    // Pointwise: C3 margin ≥ 0 ⇔ |cᵀ∂M c| ≤ μ cᵀM c for all tangents.
    const int Q = static_cast<int>(energy.gamma.size());
    for (int j = 0; j < options.points_per_curve; ++j) {
      const int q = (j * Q) / std::max(1, options.points_per_curve);
      metric.Evaluate(energy.gamma[q], theta, req, &ev);
      const double scale = ev.W.norm();
      for (int i = 0; i < p; ++i) {
        const Eigen::MatrixXd& dW = ev.dW_dtheta[i];
        const double m =
            std::min(JacobiEigen(mu * ev.W + dW).values.minCoeff(),
                     JacobiEigen(mu * ev.W - dW).values.minCoeff());
        const bool c3_ok = m >= -1e-9 * scale;
        // Worst tangent from the pencil (dW, W); η = M c.
        Eigen::GeneralizedSelfAdjointEigenSolver<Eigen::MatrixXd> ges(dW, ev.W);
        std::vector<Eigen::VectorXd> etas;
        const auto& vals = ges.eigenvalues();
        int worst = 0;
        for (int k = 1; k < vals.size(); ++k) {
          if (std::abs(vals[k]) > std::abs(vals[worst])) worst = k;
        }
        etas.push_back(ges.eigenvectors().col(worst));
        for (int t = 0; t < options.tangents_per_point; ++t) {
          Eigen::VectorXd c(n);
          for (int r = 0; r < n; ++r) c[r] = 2.0 * Uniform01(rng) - 1.0;
          etas.push_back(ev.W.ldlt().solve(c));
        }
        bool tangent_ok = true;
        for (const auto& eta : etas) {
          const double lhs = std::abs(eta.dot(dW * eta));
          const double rhs = mu * eta.dot(ev.W * eta);
          if (lhs > rhs + 1e-9 * scale * eta.squaredNorm()) tangent_ok = false;
        }
        ++rep.pointwise_checks;
        if (!c3_ok) ++rep.pointwise_c3_failures;
        if (c3_ok != tangent_ok) ++rep.pointwise_disagreements;
      }
    }
  }
  return rep;
}

ClfCandidate ClfCandidate::FromExpression(Expression e, int n, int p) {
  ClfCandidate c;
  c.name = e.ToString();
  c.V = [e = std::move(e), n, p](const Eigen::VectorXd& x,
                                 const Eigen::VectorXd& xd,
                                 const Eigen::VectorXd& theta,
                                 Eigen::VectorXd* dx, Eigen::VectorXd* dxd,
                                 Eigen::VectorXd* dtheta) {
    Eigen::VectorXd ext(2 * n);
    ext << x, xd;
    if (!dx && !dxd && !dtheta) return e.Evaluate(ext, theta);
    Eigen::VectorXd g;
    const double v = e.EvaluateWithGradient(ext, theta, 2 * n, &g);
    if (dx) *dx = g.head(n);
    if (dxd) *dxd = g.segment(n, n);
    if (dtheta) *dtheta = g.tail(p);
    return v;
  };
  return c;
}

ClfCandidate ClfCandidate::FromFormula(const std::string& formula, int n,
                                       int p) {
  ClfCandidate c =
      FromExpression(ParseExpression(formula, VariableTable{n, p, true}), n, p);
  c.name = formula;
  return c;
}

ClfCandidate ArccmCandidate(const MetricCertificate& cert,
                            const ParameterBox& domain, int curve_degree,
                            int quadrature) {
  if (!cert.metric) throw std::invalid_argument("certificate has no metric");
  auto metric = cert.metric;
  auto disc = std::make_shared<Discretization>(curve_degree, quadrature);
  auto box = std::make_shared<ParameterBox>(domain);
  ClfCandidate c;
  c.name = "arccm-energy";
  c.V = [metric, disc, box](const Eigen::VectorXd& x, const Eigen::VectorXd& xd,
                            const Eigen::VectorXd& theta, Eigen::VectorXd* dx,
                            Eigen::VectorXd* dxd, Eigen::VectorXd* dtheta) {
    // the metric is only certified on X
    GeodesicOptions go;
    go.confine = true;
    EnergyOptions eo;
    eo.domain = box.get();
    const Geodesic geo = SolveGeodesic(*metric, *disc, xd, x, theta, nullptr, go, eo);
    if (dx || dxd) {
      // Envelope: endpoint partials of E with the interior held at the
      // minimizer.
      const auto e = RiemannianEnergy(*metric, *disc, geo.curve, theta, true);
      if (dx) *dx = e.node_gradient.col(e.node_gradient.cols() - 1);
      if (dxd) *dxd = e.node_gradient.col(0);
    }
    if (dtheta) *dtheta = EnergyGradientTheta(*metric, *disc, geo.curve, theta);
    return geo.energy;
  };
  c.k1 = cert.a_low;
  c.k2 = cert.a_high;
  c.a = 2.0;
  c.mu = cert.mu;
  const double rate =
      cert.convention == RateConvention::kC1TwoLambda ? 2.0 * cert.lambda
                                                      : cert.lambda;
  c.k3 = rate * cert.a_low;
  c.check_decrease = false;
  return c;
}

nlohmann::json ClfReport::ToJson() const {
  auto cond = [](const ClfConditionResult& r) {
    nlohmann::json j = {{"pass", r.pass},
                        {"checked", r.checked},
                        {"failures", r.failures},
                        {"worst_margin", Num(r.worst_margin)}};
    if (r.witness_x.size()) {
      j["witness"] = {{"x", VecJson(r.witness_x)},
                      {"xd", VecJson(r.witness_xd)},
                      {"theta", VecJson(r.witness_theta)}};
    }
    return j;
  };
  return {{"candidate", candidate},
          {"verdict", verdict()},
          {"sandwich", cond(sandwich)},
          {"gradient", cond(gradient)},
          {"decrease", cond(decrease)},
          {"decrease_vacuous", decrease_vacuous},
          {"decrease_inside_sigma", decrease_inside_sigma}};
}

namespace {

void Record(ClfConditionResult* r, double margin, double tol,
            const Eigen::VectorXd& x, const Eigen::VectorXd& xd,
            const Eigen::VectorXd& theta) {
  ++r->checked;
  if (margin < r->worst_margin) {
    r->worst_margin = margin;
    r->witness_x = x;
    r->witness_xd = xd;
    r->witness_theta = theta;
  }
  if (margin < -tol) {
    ++r->failures;
    r->pass = false;
  }
}

}  // namespace

ClfReport ClfCheck(const ClfCandidate& cand, const UncertainSystem& sys,
                   const ClfSampleSpec& spec) {
  if (!cand.V) throw std::invalid_argument("candidate has no V");
  ClfReport rep;
  rep.candidate = cand.name;
  std::mt19937_64 rng(spec.seed);
  const double tol = spec.relative_tolerance;
  const bool needs_x_grad = cand.check_decrease;
  for (int s = 0; s < spec.samples; ++s) {
    const Eigen::VectorXd xd = UniformIn(rng, sys.state_box);
    Eigen::VectorXd x = UniformIn(rng, sys.state_box);
    if (Uniform01(rng) < spec.coincident_fraction) x = xd;
    const Eigen::VectorXd theta = UniformIn(rng, sys.theta_box);
    const Eigen::VectorXd theta_err = UniformIn(rng, sys.theta_error_box);
    Eigen::VectorXd ud(sys.m);
    for (int j = 0; j < sys.m; ++j) {
      ud[j] = spec.ud_range * (2.0 * Uniform01(rng) - 1.0);
    }
    Eigen::VectorXd dx, dxd, dth;
    const double V = cand.V(x, xd, theta, needs_x_grad ? &dx : nullptr,
                            needs_x_grad ? &dxd : nullptr, &dth);
    const double err = (x - xd).norm();
    const double ea = std::pow(err, cand.a);

    // (i) sandwich.
    const double lower = V - cand.k1 * ea;
    const double upper = cand.k2 * ea - V;
    Record(&rep.sandwich, std::min(lower, upper),
           tol * (1.0 + std::abs(V)), x, xd, theta);

    // (ii) |∇θ_i V| ≤ μ V.
    double gmargin = std::numeric_limits<double>::infinity();
    for (int i = 0; i < dth.size(); ++i) {
      gmargin = std::min(gmargin, cand.mu * V - std::abs(dth[i]));
    }
    if (dth.size()) {
      Record(&rep.gradient, gmargin, tol * (1.0 + std::abs(V)), x, xd, theta);
    }

    // (iii) decrease, only where the infimum over u is finite.
    if (!cand.check_decrease) continue;
    if (err < cand.sigma_slope * theta_err.lpNorm<1>()) {
      ++rep.decrease_inside_sigma;
      continue;
    }
    const DynamicsTerms tx = EvaluateTerms(sys, x);
    const Eigen::VectorXd vb = tx.B.transpose() * dx;
    if (vb.norm() > spec.input_tolerance * (1.0 + dx.norm())) {
      ++rep.decrease_vacuous;
      continue;
    }
    const DynamicsTerms txd = EvaluateTerms(sys, xd);
    const Eigen::VectorXd fd =
        txd.f + txd.delta.transpose() * theta + txd.B * ud;
    const double drift = dx.dot(tx.f + tx.delta.transpose() * theta) +
                         dxd.dot(fd) -
                         dx.dot(tx.delta.transpose() * theta_err);
    const double margin = -cand.k3 * ea - drift;
    Record(&rep.decrease, margin, tol * (1.0 + std::abs(drift)), x, xd, theta);
  }
  return rep;
}

UncertainSystem ScalarClfSystem() {
  UncertainSystem s;
  s.name = "scalar-clf";
  s.n = 1;
  s.m = 1;
  s.p = 1;
  const VariableTable vars{1, 1, false};
  s.f = {ParseExpression("-x1", vars)};
  s.delta = {{Expression::Constant(1.0)}};
  s.B = {{Expression::Constant(1.0)}};
  s.theta_box = ParameterBox({{-1.0, 1.0}});
  s.theta_error_box = ParameterBox({{-2.0, 2.0}});
  s.state_box = ParameterBox({{-2.0, 2.0}});
  s.Validate();
  return s;
}

ClfCandidate ScalarQuadraticCandidate() {
  ClfCandidate c = ClfCandidate::FromFormula("(x1 - xd1)^2", 1, 1);
  c.k1 = c.k2 = 1.0;
  c.k3 = 1.0;
  c.a = 2.0;
  c.mu = 0.5;
  return c;
}

ClfCandidate ScalarExponentialCandidate() {
  ClfCandidate c = ClfCandidate::FromFormula("exp(th1) * (x1 - xd1)^2", 1, 1);
  // e^{θ} ∈ [e^{−1}, e] on Θ = [−1, 1].
  c.k1 = std::exp(-1.0);
  c.k2 = std::exp(1.0);
  c.k3 = 1.0;
  c.a = 2.0;
  c.mu = 0.5;
  return c;
}

ClfCandidate FirstCoordinateCandidate() {
  ClfCandidate c = ClfCandidate::FromFormula("(x1 - xd1)^2", 3, 4);
  c.k1 = c.k2 = 1.0;
  c.k3 = 1.0;
  c.a = 2.0;
  c.mu = 0.5;
  return c;
}

}  // namespace arccm
