// arccm: synthesize, validate and simulate adaptive robust control
// contraction metrics.

#include <cstdlib>
#include <iostream>
#include <string>

#include <CLI11.hpp>

#include "arccm/config.h"
#include "arccm/control.h"
#include "arccm/pipeline.h"

namespace {

void AddCommon(CLI::App* sub, arccm::CommandOptions* o) {
  sub->add_option("--config", o->config, "TOML run configuration");
  sub->add_option("--seed", o->seed, "override the configured seed");
  sub->add_option("--threads", o->threads,
                  "worker threads (0: hardware; default from ARCCM_THREADS)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive robust control contraction metrics"};
  app.require_subcommand(1);
  arccm::CommandOptions o;

  auto* synth = app.add_subcommand("synthesize", "search for a metric certificate");
  AddCommon(synth, &o);
  synth->add_option("--out", o.out, "certificate path")->required();

  auto* validate = app.add_subcommand("validate", "dense re-check of a certificate");
  AddCommon(validate, &o);
  validate->add_option("--cert", o.cert)->required();
  validate->add_option("--out", o.out, "report path (default next to cert)");

  auto* simulate = app.add_subcommand("simulate", "closed-loop simulation");
  AddCommon(simulate, &o);
  simulate->add_option("--cert", o.cert)->required();
  simulate->add_option("--out", o.out, "trace CSV path")->required();

  auto* report = app.add_subcommand("report", "check energy bounds on a trace");
  AddCommon(report, &o);
  report->add_option("--cert", o.cert)->required();
  report->add_option("--trace", o.trace)->required();
  report->add_option("--out", o.out, "report JSON path")->required();
  report->add_option("--plots", o.plots, "directory for SVG plots");

  auto* geo = app.add_subcommand("geodesic", "minimal-energy curve between two states");
  AddCommon(geo, &o);
  geo->add_option("--cert", o.cert)->required();
  geo->add_option("--from", o.from)->required()->delimiter(',');
  geo->add_option("--to", o.to)->required()->delimiter(',');
  geo->add_option("--theta", o.theta, "parameter estimate (default: box midpoint)")
      ->delimiter(',');
  geo->add_option("--out", o.out, "JSON path (default stdout)");

  auto* clf = app.add_subcommand("clf-check", "sample-based Lyapunov candidate check");
  AddCommon(clf, &o);
  clf->add_option("--candidate", o.candidate,
                  "scalar-quadratic, scalar-exponential, first-coordinate, arccm");
  clf->add_option("--formula", o.formula, "V(x, xd, th) as an expression");
  clf->add_option("--cert", o.cert, "certificate for the arccm candidate");
  clf->add_option("--k1", o.k1);
  clf->add_option("--k2", o.k2);
  clf->add_option("--k3", o.k3);
  clf->add_option("--a", o.a);
  clf->add_option("--mu", o.mu);
  clf->add_option("--out", o.out, "JSON path (default stdout)");

  auto* repro = app.add_subcommand("repro", "full pipeline into one directory");
  AddCommon(repro, &o);
  repro->add_option("--out", o.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : arccm::kExitError;
  }

  if (!o.threads) {
    if (const char* env = std::getenv("ARCCM_THREADS"); env && *env) {
      try {
        o.threads = std::stoi(env);
      } catch (const std::exception&) {
        std::cerr << "error: ARCCM_THREADS is not an integer: " << env << "\n";
        return arccm::kExitError;
      }
    }
  }

  try {
    if (synth->parsed()) return arccm::CmdSynthesize(o, std::cerr);
    if (validate->parsed()) return arccm::CmdValidate(o, std::cerr);
    if (simulate->parsed()) return arccm::CmdSimulate(o, std::cerr);
    if (report->parsed()) return arccm::CmdReport(o, std::cerr);
    if (geo->parsed()) return arccm::CmdGeodesic(o, std::cout);
    if (clf->parsed()) return arccm::CmdClfCheck(o, std::cout);
    if (repro->parsed()) return arccm::CmdRepro(o, std::cerr);
  } catch (const arccm::RateConditionViolation& e) {
    std::cerr << e.what() << "\n";
    return arccm::kExitFinding;
  } catch (const arccm::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return arccm::kExitError;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return arccm::kExitError;
  }
  return arccm::kExitError;
}
