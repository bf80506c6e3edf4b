#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "arccm/sim.h"
#include "arccm/synthesis.h"
#include "arccm/system.h"
#include "arccm/verify.h"

namespace arccm {

/// Malformed or unknown configuration, anchored at a source line.
class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& message, int line)
      : std::runtime_error(message), line_(line) {}
  int line() const { return line_; }

 private:
  int line_;
};

struct SynthesisSection {
  SynthesisConfig solver;
  /// Samples per gridded (unmatched) parameter; vertices elsewhere.
  int theta_grid = 21;
  int state_grid = 5;
  int random_states = 0;
  int random_joint = 100000;
};

struct VerifySection {
  int validation_theta_grid = 41;
  int validation_state_grid = 5;
  int validation_random_joint = 2000;
  double validation_tolerance = 1e-6;
  BoundOptions bounds;
  Prop1Options prop1;
  ClfSampleSpec clf;
  double sigma_slope = 1.0;
};

struct OutputSection {
  bool plots = true;
};

struct RunConfig {
  std::string system = kExampleSystemName;
  std::uint64_t seed = 1;
  int threads = 0;
  SynthesisSection synthesis;
  SimConfig simulation;
  VerifySection verify;
  OutputSection output;

  /// Every seed derives from `seed`: grid sampling, validation sampling,
  /// Proposition 1 and clf sampling.
  void ApplySeed(std::uint64_t s);

  UncertainSystem MakeSystem() const;
  /// Synthesis settings with the grid filled in for `sys`.
  SynthesisConfig SynthesisSettings(const UncertainSystem& sys) const;
  GridSpec ValidationGrid(const UncertainSystem& sys) const;
  Eigen::VectorXd TrueParameters() const;
};

/// Parses TOML text. `origin` names the source in diagnostics.
RunConfig ParseRunConfig(const std::string& text,
                         const std::string& origin = "config");
RunConfig LoadRunConfig(const std::string& path);

}  // namespace arccm
