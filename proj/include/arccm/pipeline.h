#pragma once

#include <cstdint>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "arccm/config.h"
#include "arccm/sim.h"
#include "arccm/verify.h"

namespace arccm {

/// Exit codes shared by every command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitFinding = 2;

struct CommandOptions {
  std::string config;  // empty: all defaults
  std::string cert;
  std::string trace;
  std::string out;
  std::string plots;
  std::optional<std::uint64_t> seed;
  std::optional<int> threads;
  // geodesic
  std::vector<double> from, to, theta;
  // clf-check
  std::string candidate;
  std::string formula;
  double k1 = 1.0, k2 = 1.0, k3 = 1.0, a = 2.0, mu = 0.5;
};

/// Loads the config (defaults when no path) and applies --seed/--threads.
RunConfig ResolveConfig(const CommandOptions& o);

int CmdSynthesize(const CommandOptions& o, std::ostream& log);
int CmdValidate(const CommandOptions& o, std::ostream& log);
int CmdSimulate(const CommandOptions& o, std::ostream& log);
int CmdReport(const CommandOptions& o, std::ostream& log);
int CmdGeodesic(const CommandOptions& o, std::ostream& log);
int CmdClfCheck(const CommandOptions& o, std::ostream& log);
int CmdRepro(const CommandOptions& o, std::ostream& log);

/// Energy statistics used by the convergence comparison.
struct EnergySummary {
  double final_energy = 0.0;
  /// Mean E over [window_start, end].
  double window_mean = 0.0;
  /// Least-squares slope of ln E over [slope_start, end], using ticks with
  /// E above `floor`.
  double log_slope = 0.0;
  int slope_samples = 0;
};
EnergySummary SummarizeEnergy(const Trace& trace, double window_start,
                              double slope_start, double floor = 1e-13);

/// Writes energy.svg, states_x1.svg, states_x2.svg into `dir`.
void WritePlots(const Trace& adaptive, const Trace* frozen,
                const std::vector<double>& markers, const std::string& dir);

/// Default validation report path next to a certificate.
std::string ValidationPathFor(const std::string& cert_path);

}  // namespace arccm
