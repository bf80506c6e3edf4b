#include "arccm/pipeline.h"

#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <thread>

#include "arccm/parallel.h"
#include "arccm/plot.h"

namespace arccm {

namespace fs = std::filesystem;

namespace {

void WriteJson(const std::string& path, const nlohmann::json& j) {
  if (const auto dir = fs::path(path).parent_path(); !dir.empty()) {
    fs::create_directories(dir);
  }
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path);
  f << j.dump(1) << "\n";
}

Eigen::VectorXd ToVector(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), v.size());
}

std::string Require(const std::string& value, const char* flag) {
  if (value.empty()) {
    throw std::invalid_argument(std::string("missing required flag ") + flag);
  }
  return value;
}

nlohmann::json AttemptsJson(const SynthesisResult& r) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& x : r.attempts) {
    a.push_back({{"lambda", x.lambda},
                 {"mu", x.mu},
                 {"feasible", x.feasible},
                 {"worst_margin", std::isfinite(x.worst_margin)
                                      ? nlohmann::json(x.worst_margin)
                                      : nlohmann::json(nullptr)},
                 {"alpha_sq", x.alpha_sq},
                 {"rounds", x.rounds},
                 {"iterations", x.iterations},
                 {"working_set", x.working_set}});
  }
  return a;
}

struct Validated {
  ValidationReport report;
  bool pass = false;
};

Validated RunValidation(const MetricCertificate& cert,
                        const UncertainSystem& sys, const RunConfig& cfg) {
  Validated v;
  v.report = ValidateCertificate(cert, sys, cfg.ValidationGrid(sys),
                                 ResolveThreads(cfg.threads));
  v.pass = v.report.worst_margin() >= -cfg.verify.validation_tolerance;
  return v;
}

nlohmann::json ValidationJson(const Validated& v, double tol) {
  nlohmann::json j = v.report.ToJson();
  j["worst_margin"] = v.report.worst_margin();
  j["tolerance"] = tol;
  j["pass"] = v.pass;
  return j;
}

// Synthesis, certificate and validation files. Returns the certificate
// or nothing when infeasible.
std::optional<MetricCertificate> SynthesizeTo(const RunConfig& cfg,
                                              const UncertainSystem& sys,
                                              const std::string& cert_path,
                                              std::ostream& log,
                                              bool* validation_pass) {
  SynthesisConfig sc = cfg.SynthesisSettings(sys);
  sc.log = [&log](const std::string& s) { log << s << "\n" << std::flush; };
  const SynthesisResult r = Synthesize(sys, sc);
  if (!r.feasible || !r.certificate) {
    log << "synthesis infeasible; best margin " << r.best_margin << "\n";
    WriteJson(cert_path + ".attempts.json",
              {{"feasible", false}, {"attempts", AttemptsJson(r)}});
    return std::nullopt;
  }
  WriteCertificate(*r.certificate, cert_path);
  const Validated v = RunValidation(*r.certificate, sys, cfg);
  WriteJson(ValidationPathFor(cert_path),
            ValidationJson(v, cfg.verify.validation_tolerance));
  log << "certificate written to " << cert_path << "; validation worst margin "
      << v.report.worst_margin() << (v.pass ? " (pass)" : " (FAIL)") << "\n";
  *validation_pass = v.pass;
  return r.certificate;
}

SimConfig FrozenVariant(SimConfig sim) {
  sim.estimator.kind = EstimatorKind::kFrozen;
  return sim;
}

nlohmann::json SummaryJson(const EnergySummary& s) {
  return {{"final_energy", s.final_energy},
          {"window_mean", s.window_mean},
          {"log_slope", s.log_slope},
          {"slope_samples", s.slope_samples}};
}

std::vector<double> Times(const Trace& t) {
  std::vector<double> v;
  for (const auto& r : t.records) v.push_back(r.t);
  return v;
}

}  // namespace

std::string ValidationPathFor(const std::string& cert_path) {
  fs::path p(cert_path);
  if (p.extension() == ".json") p.replace_extension();
  return p.string() + ".validation.json";
}

RunConfig ResolveConfig(const CommandOptions& o) {
  RunConfig cfg = o.config.empty() ? ParseRunConfig("", "defaults")
                                   : LoadRunConfig(o.config);
  if (o.seed) cfg.ApplySeed(*o.seed);
  if (o.threads) cfg.threads = *o.threads;
  return cfg;
}

EnergySummary SummarizeEnergy(const Trace& trace, double window_start,
                              double slope_start, double floor) {
  EnergySummary s;
  if (trace.records.empty()) return s;
  s.final_energy = trace.records.back().energy;
  double sum = 0.0;
  int count = 0;
  double st = 0, se = 0, stt = 0, ste = 0;
  for (const auto& r : trace.records) {
    if (r.t >= window_start - 1e-9) {
      sum += r.energy;
      ++count;
    }
    if (r.t >= slope_start - 1e-9 && r.energy > floor) {
      const double l = std::log(r.energy);
      st += r.t;
      se += l;
      stt += r.t * r.t;
      ste += r.t * l;
      ++s.slope_samples;
    }
  }
  s.window_mean = count ? sum / count : 0.0;
  const int k = s.slope_samples;
  if (k >= 2) {
    const double den = k * stt - st * st;
    s.log_slope = den != 0.0 ? (k * ste - st * se) / den : 0.0;
  }
  return s;
}

void WritePlots(const Trace& adaptive, const Trace* frozen,
                const std::vector<double>& markers, const std::string& dir) {
  fs::create_directories(dir);
  const auto t = Times(adaptive);
  auto column = [](const Trace& tr, auto get) {
    std::vector<double> v;
    for (const auto& r : tr.records) v.push_back(get(r));
    return v;
  };
  PlotSpec e;
  e.title = "Riemannian energy";
  e.x_label = "t [s]";
  e.y_label = "E";
  e.log_y = true;
  e.markers = markers;
  e.series.push_back({"E adaptive", t,
                      column(adaptive, [](auto& r) { return r.energy; }),
                      "#1f77b4"});
  e.series.push_back({"conservative bound", t,
                      column(adaptive, [](auto& r) { return r.bound_cons; }),
                      "#000000", true});
  e.series.push_back({"integrated bound", t,
                      column(adaptive, [](auto& r) { return r.bound_int; }),
                      "#d62ad6", true});
  if (frozen) {
    e.series.push_back({"E frozen", Times(*frozen),
                        column(*frozen, [](auto& r) { return r.energy; }),
                        "#ff7f0e"});
  }
  WriteSvg(e, (fs::path(dir) / "energy.svg").string());

  for (int i = 0; i < std::min(2, adaptive.n); ++i) {
    PlotSpec s;
    const std::string idx = std::to_string(i + 1);
    s.title = "state x" + idx;
    s.x_label = "t [s]";
    s.y_label = "x" + idx;
    s.markers = markers;
    s.series.push_back({"x" + idx + " adaptive", t,
                        column(adaptive, [i](auto& r) { return r.x[i]; }),
                        "#1f77b4"});
    s.series.push_back({"x" + idx + "d adaptive", t,
                        column(adaptive, [i](auto& r) { return r.xd[i]; }),
                        "#2ca02c", true});
    if (frozen) {
      s.series.push_back({"x" + idx + " frozen", Times(*frozen),
                          column(*frozen, [i](auto& r) { return r.x[i]; }),
                          "#ff7f0e"});
    }
    WriteSvg(s, (fs::path(dir) / ("states_x" + idx + ".svg")).string());
  }
}

int CmdSynthesize(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  bool pass = false;
  const auto cert = SynthesizeTo(cfg, sys, Require(o.out, "--out"), log, &pass);
  if (!cert) return kExitFinding;
  return pass ? kExitOk : kExitFinding;
}

int CmdValidate(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  const std::string cert_path = Require(o.cert, "--cert");
  const MetricCertificate cert = ReadCertificate(cert_path);
  const Validated v = RunValidation(cert, sys, cfg);
  const std::string out = o.out.empty() ? ValidationPathFor(cert_path) : o.out;
  WriteJson(out, ValidationJson(v, cfg.verify.validation_tolerance));
  log << "validation worst margin " << v.report.worst_margin() << " over "
      << v.report.points << " points" << (v.pass ? " (pass)" : " (FAIL)")
      << "\n";
  return v.pass ? kExitOk : kExitFinding;
}

int CmdSimulate(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  const MetricCertificate cert = ReadCertificate(Require(o.cert, "--cert"));
  const std::string out = Require(o.out, "--out");
  SimConfig sim = cfg.simulation;
  sim.theta_true = cfg.TrueParameters();
  try {
    const Trace trace = RunClosedLoop(sys, cert, sim);
    if (const auto dir = fs::path(out).parent_path(); !dir.empty()) {
      fs::create_directories(dir);
    }
    WriteTraceCsv(trace, out);
    log << "trace with " << trace.records.size() << " ticks written to " << out
        << "; final energy " << trace.records.back().energy << "\n";
  } catch (const RateConditionViolation& e) {
    log << e.what() << "\n";
    return kExitFinding;
  }
  return kExitOk;
}

int CmdReport(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  const MetricCertificate cert = ReadCertificate(Require(o.cert, "--cert"));
  const std::string trace_path = Require(o.trace, "--trace");
  Trace trace = ReadTraceCsv(trace_path, sys.n, sys.m, sys.p,
                             cfg.TrueParameters());
  const BoundReport rep = CheckTrace(&trace, cert, sys, cfg.verify.bounds);
  WriteTraceCsv(trace, trace_path);
  const auto& est = cfg.simulation.estimator;
  nlohmann::json j = {
      {"trace", trace_path},
      {"bounds", rep.ToJson()},
      {"energy", SummaryJson(SummarizeEnergy(trace, cfg.simulation.t1 - 2.0,
                                             est.t_end))}};
  WriteJson(Require(o.out, "--out"), j);
  if (!o.plots.empty()) WritePlots(trace, nullptr, {est.t_start, est.t_end}, o.plots);
  log << "bounds " << (rep.ok() ? "hold" : "VIOLATED or not certified")
      << " over " << rep.checked_ticks << " certified ticks\n";
  return rep.ok() ? kExitOk : kExitFinding;
}

int CmdGeodesic(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  const MetricCertificate cert = ReadCertificate(Require(o.cert, "--cert"));
  if (static_cast<int>(o.from.size()) != sys.n ||
      static_cast<int>(o.to.size()) != sys.n) {
    throw std::invalid_argument("--from and --to need n values");
  }
  const Eigen::VectorXd theta =
      o.theta.empty() ? sys.theta_box.Midpoint() : ToVector(o.theta);
  if (theta.size() != sys.p) throw std::invalid_argument("--theta needs p values");
  const Discretization disc(cfg.simulation.curve_degree,
                            cfg.simulation.quadrature);
  EnergyOptions eo;
  eo.domain = &sys.state_box;
  const Geodesic g = SolveGeodesic(*cert.metric, disc, ToVector(o.from),
                                   ToVector(o.to), theta, nullptr,
                                   cfg.simulation.geodesic, eo);
  nlohmann::json nodes = nlohmann::json::array();
  for (int k = 0; k < g.curve.nodes.cols(); ++k) {
    const Eigen::VectorXd c = g.curve.nodes.col(k);
    nodes.push_back(std::vector<double>(c.data(), c.data() + c.size()));
  }
  const nlohmann::json j = {{"energy", g.energy},
                            {"converged", g.converged},
                            {"iterations", g.iterations},
                            {"optimality", g.optimality},
                            {"out_of_domain", g.out_of_domain},
                            {"nodes", nodes}};
  if (o.out.empty()) {
    log << j.dump(1) << "\n";
  } else {
    WriteJson(o.out, j);
  }
  return g.converged ? kExitOk : kExitFinding;
}

int CmdClfCheck(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  UncertainSystem sys = cfg.MakeSystem();
  ClfCandidate cand;
  const std::string name = o.candidate.empty() ? "arccm" : o.candidate;
  if (!o.formula.empty()) {
    cand = ClfCandidate::FromFormula(o.formula, sys.n, sys.p);
    cand.k1 = o.k1;
    cand.k2 = o.k2;
    cand.k3 = o.k3;
    cand.a = o.a;
    cand.mu = o.mu;
  } else if (name == "scalar-quadratic") {
    sys = ScalarClfSystem();
    cand = ScalarQuadraticCandidate();
  } else if (name == "scalar-exponential") {
    sys = ScalarClfSystem();
    cand = ScalarExponentialCandidate();
  } else if (name == "first-coordinate") {
    cand = FirstCoordinateCandidate();
  } else if (name == "arccm") {
    cand = ArccmCandidate(ReadCertificate(Require(o.cert, "--cert")),
                          sys.state_box, cfg.simulation.curve_degree,
                          cfg.simulation.quadrature);
  } else {
    throw std::invalid_argument(
        "unknown candidate '" + name +
        "' (scalar-quadratic, scalar-exponential, first-coordinate, arccm)");
  }
  cand.sigma_slope = cfg.verify.sigma_slope;
  const ClfReport rep = ClfCheck(cand, sys, cfg.verify.clf);
  const nlohmann::json j = rep.ToJson();
  if (o.out.empty()) {
    log << j.dump(1) << "\n";
  } else {
    WriteJson(o.out, j);
    log << "clf-check " << cand.name << ": " << rep.verdict() << "\n";
  }
  return rep.pass() ? kExitOk : kExitFinding;
}

int CmdRepro(const CommandOptions& o, std::ostream& log) {
  const RunConfig cfg = ResolveConfig(o);
  const UncertainSystem sys = cfg.MakeSystem();
  const fs::path dir = Require(o.out, "--out");
  fs::create_directories(dir);
  bool validation_pass = false;
  const auto cert = SynthesizeTo(cfg, sys, (dir / "cert.json").string(), log,
                                 &validation_pass);
  if (!cert) return kExitFinding;

  SimConfig adaptive_cfg = cfg.simulation;
  adaptive_cfg.theta_true = cfg.TrueParameters();
  const SimConfig frozen_cfg = FrozenVariant(adaptive_cfg);
  Trace adaptive, frozen;
  std::exception_ptr failure;
  auto run_frozen = [&] {
    try {
      frozen = RunClosedLoop(sys, *cert, frozen_cfg);
    } catch (...) {
      failure = std::current_exception();
    }
  };
  try {
    if (ResolveThreads(cfg.threads) >= 2) {
      std::thread worker(run_frozen);
      try {
        adaptive = RunClosedLoop(sys, *cert, adaptive_cfg);
      } catch (...) {
        worker.join();
        throw;
      }
      worker.join();
    } else {
      adaptive = RunClosedLoop(sys, *cert, adaptive_cfg);
      run_frozen();
    }
    if (failure) std::rethrow_exception(failure);
  } catch (const RateConditionViolation& e) {
    log << e.what() << "\n";
    return kExitFinding;
  }
  log << "simulations done\n";

  const BoundReport ra = CheckTrace(&adaptive, *cert, sys, cfg.verify.bounds);
  const BoundReport rf = CheckTrace(&frozen, *cert, sys, cfg.verify.bounds);
  WriteTraceCsv(adaptive, (dir / "trace_adaptive.csv").string());
  WriteTraceCsv(frozen, (dir / "trace_frozen.csv").string());

  const auto& est = cfg.simulation.estimator;
  const double window = cfg.simulation.t1 - 2.0;
  const EnergySummary sa = SummarizeEnergy(adaptive, window, est.t_end);
  const EnergySummary sf = SummarizeEnergy(frozen, window, est.t_end);

  const Prop1Report p1 = CheckProp1(*cert->metric, cert->mu, sys, cfg.verify.prop1);
  ClfCandidate cand =
      ArccmCandidate(*cert, sys.state_box, cfg.simulation.curve_degree,
                     cfg.simulation.quadrature);
  cand.sigma_slope = cfg.verify.sigma_slope;
  const ClfReport clf = ClfCheck(cand, sys, cfg.verify.clf);
  log << "checks done\n";

  nlohmann::json j = {
      {"certificate",
       {{"lambda", cert->lambda},
        {"mu", cert->mu},
        {"alpha_sq", cert->alpha_sq},
        {"a_low", cert->a_low},
        {"a_high", cert->a_high},
        {"rate_convention", RateConventionName(cert->convention)},
        {"validation_pass", validation_pass}}},
      {"adaptive", {{"bounds", ra.ToJson()}, {"energy", SummaryJson(sa)}}},
      {"frozen", {{"bounds", rf.ToJson()}, {"energy", SummaryJson(sf)}}},
      {"comparison",
       {{"frozen_over_adaptive_window_mean",
         sa.window_mean > 0.0 ? nlohmann::json(sf.window_mean / sa.window_mean)
                              : nlohmann::json(nullptr)},
        {"window_start", window}}},
      {"prop1", p1.ToJson()},
      {"clf_arccm", clf.ToJson()}};
  WriteJson((dir / "report.json").string(), j);
  if (cfg.output.plots) {
    WritePlots(adaptive, &frozen, {est.t_start, est.t_end}, dir.string());
  }
  const bool ok = validation_pass && ra.ok() && rf.ok() && p1.ok() &&
                  clf.sandwich.pass && clf.gradient.pass;
  log << "repro " << (ok ? "passed" : "found violations") << "; outputs in "
      << dir.string() << "\n";
  return ok ? kExitOk : kExitFinding;
}

}  // namespace arccm
