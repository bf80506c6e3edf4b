#pragma once

#include <cstdint>
#include <functional>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <nlohmann/json.hpp>

#include "arccm/metric.h"
#include "arccm/poly.h"
#include "arccm/system.h"

namespace arccm {

/// Which multiple of λ enters the C1 block: 2λW (default) or λW.
enum class RateConvention { kC1TwoLambda, kProofLambda };

std::string RateConventionName(RateConvention c);
RateConvention ParseRateConvention(const std::string& name);

/// Sampling of one variable. `count` evenly spaced samples over `range`
/// (the system box when unset; a single sample sits at the midpoint), or
/// both interval endpoints when `vertices` is set.
struct GridAxis {
  int count = 1;
  bool vertices = false;
  std::optional<Interval> range;
};

/// Tensor lattice over (x, θ) plus uniform random augmentation. Random
/// states are crossed with the θ lattice; random joint samples draw (x, θ)
/// together from X × Θ.
struct GridSpec {
  std::vector<GridAxis> theta;  // p axes
  std::vector<GridAxis> state;  // n axes
  int random_states = 0;
  int random_joint = 0;
  /// Joint samples take a random endpoint on `vertices` axes instead of a
  /// uniform interior value. Sound when the conditions are affine in those
  /// parameters, and it spends the samples on the remaining variables.
  bool joint_vertices = false;
  std::uint64_t seed = 1;

  std::string Describe() const;
  nlohmann::json ToJson() const;
  static GridSpec FromJson(const nlohmann::json& j);
};

/// Materialized sample points. Lattice point i (i < lattice_size()) pairs
/// state i / num_thetas() with θ i % num_thetas(); joint samples follow.
class SampleGrid {
 public:
  SampleGrid(const UncertainSystem& sys, const GridSpec& spec);

  std::size_t size() const { return lattice_size() + joint_x_.size(); }
  std::size_t lattice_size() const { return states_.size() * thetas_.size(); }
  std::size_t num_states() const { return states_.size(); }
  std::size_t num_thetas() const { return thetas_.size(); }
  std::size_t num_joint() const { return joint_x_.size(); }
  const Eigen::VectorXd& state(std::size_t s) const { return states_[s]; }
  const Eigen::VectorXd& lattice_theta(std::size_t t) const {
    return thetas_[t];
  }
  const Eigen::VectorXd& x(std::size_t i) const;
  const Eigen::VectorXd& theta(std::size_t i) const;
  const std::string& description() const { return description_; }

 private:
  std::vector<Eigen::VectorXd> states_;
  std::vector<Eigen::VectorXd> thetas_;
  std::vector<Eigen::VectorXd> joint_x_;
  std::vector<Eigen::VectorXd> joint_theta_;
  std::string description_;
};

struct ConditionSettings {
  double lambda = 0.0;
  double mu = 0.0;
  double alpha_sq = 0.0;
  double a_low = 1e-2;
  double a_high = 1e2;
  RateConvention convention = RateConvention::kC1TwoLambda;
};

enum class ConditionKind { kC1, kC2, kC3, kBounds };

struct ConditionBlock {
  ConditionKind kind;
  std::string label;  // e.g. "C1", "C2[u1]", "C3+[th1]", "bound_low"
  Eigen::MatrixXd matrix;
};

/// Definition-4 blocks at (x, θ): C1 in Schur form (⪰ 0), one C2 residual
/// per input column (= 0), a C3 pair per θ-dependent parameter (⪰ 0) and the
/// two uniform-bound blocks (⪰ 0).
std::vector<ConditionBlock> AssembleConditionBlocks(
    const DualMetric& metric, const ConditionSettings& settings,
    const UncertainSystem& sys, const Eigen::Ref<const Eigen::VectorXd>& x,
    const Eigen::Ref<const Eigen::VectorXd>& theta);

struct ConditionMargin {
  /// Minimum eigenvalue for PSD conditions, max-abs entry for C2.
  double value = std::numeric_limits<double>::infinity();
  Eigen::VectorXd x;
  Eigen::VectorXd theta;
  std::string label;
  bool evaluated = false;

  nlohmann::json ToJson() const;
  static ConditionMargin FromJson(const nlohmann::json& j);
};

struct ValidationReport {
  ConditionMargin c1;
  ConditionMargin c2;
  ConditionMargin c3;
  ConditionMargin bounds;
  /// Eigenvalue extremes of W over the grid.
  double w_eig_min = std::numeric_limits<double>::infinity();
  double w_eig_max = 0.0;
  std::string grid;
  std::size_t points = 0;

  /// min(C1, C3, bounds, −C2 residual).
  double worst_margin() const;
  nlohmann::json ToJson() const;
  static ValidationReport FromJson(const nlohmann::json& j);
};

/// Dense re-check of every condition at every grid point.
ValidationReport ValidateMetric(const DualMetric& metric,
                                const ConditionSettings& settings,
                                const UncertainSystem& sys,
                                const GridSpec& grid, int threads = 1);

struct SynthesisConfig {
  int degree = 4;
  /// Joint-variable masks (0-based). Unset masks are derived from the
  /// system: W drops states along constant unit input directions and keeps
  /// only unmatched parameters, Y keeps all states and W's parameters.
  std::optional<std::vector<int>> w_state_vars;
  std::optional<std::vector<int>> w_param_vars;
  std::optional<std::vector<int>> y_state_vars;
  std::optional<std::vector<int>> y_param_vars;
  std::vector<double> lambdas{0.8, 0.5, 0.25};
  std::vector<double> mus{0.1, 0.25, 0.5};
  double a_low = 1e-2;
  double a_high = 1e2;
  double temperature = 1e-3;
  /// Softplus temperature of the first exchange round; halves each round
  /// down to `temperature`.
  double temperature_start = 2e-2;
  /// Required unsmoothed margin; the hinge is centred at penalty_shift.
  double margin_target = 2e-3;
  double penalty_shift = 5e-3;
  double c2_weight = 1e3;
  double alpha_weight = 1e-4;
  int max_iterations = 400;
  int max_rounds = 12;
  int initial_working_set = 4000;
  int exchange_batch = 3000;
  /// Post-hoc tightening of α² and (a_low, a_high).
  bool tighten = true;
  double bound_slack = 0.1;
  RateConvention convention = RateConvention::kC1TwoLambda;
  GridSpec grid;
  int threads = 0;
  std::function<void(const std::string&)> log;
};

/// Default synthesis grid for a system: 21 samples on each gridded
/// parameter, vertices on the rest, 5 samples per state and 100000 random
/// joint samples snapped to the vertex axes.
GridSpec DefaultSynthesisGrid(const UncertainSystem& sys,
                              const std::vector<int>& gridded_params);

/// Parameters whose Δ rows do not lie in the span of B on sampled states.
std::vector<int> UnmatchedParameters(const UncertainSystem& sys);

struct MetricCertificate {
  std::string system;
  std::shared_ptr<const PolyDualMetric> metric;
  double lambda = 0.0;
  double mu = 0.0;
  double alpha_sq = 0.0;
  double a_low = 1e-2;
  double a_high = 1e2;
  RateConvention convention = RateConvention::kC1TwoLambda;
  double margin_target = 0.0;
  GridSpec grid;
  ValidationReport validation;

  double alpha() const;
  ConditionSettings settings() const;
  nlohmann::json ToJson() const;
  static MetricCertificate FromJson(const nlohmann::json& j);
};

void WriteCertificate(const MetricCertificate& cert, const std::string& path);
MetricCertificate ReadCertificate(const std::string& path);

ValidationReport ValidateCertificate(const MetricCertificate& cert,
                                     const UncertainSystem& sys,
                                     const GridSpec& grid, int threads = 1);

struct SynthesisAttempt {
  double lambda = 0.0;
  double mu = 0.0;
  bool feasible = false;
  double worst_margin = -std::numeric_limits<double>::infinity();
  double alpha_sq = 0.0;
  int rounds = 0;
  int iterations = 0;
  std::size_t working_set = 0;
};

struct SynthesisResult {
  bool feasible = false;
  std::optional<MetricCertificate> certificate;
  std::vector<SynthesisAttempt> attempts;
  /// Best worst-margin over all attempts (diagnostic for infeasible runs).
  double best_margin = -std::numeric_limits<double>::infinity();
};

/// Per-point precomputed data for the fast penalty path.
struct PreparedPoint {
  std::size_t index = 0;
  Eigen::VectorXd x;
  Eigen::VectorXd theta;
  std::vector<double> w_mono;    // K_W
  std::vector<double> w_drift;   // K_W: Σ_i ∂x_i m_k · (f + Δᵀθ)_i
  std::vector<double> w_dtheta;  // T×K_W: ∂θ_t m_k for W's parameters
  std::vector<double> w_dinput;  // m×K_W: Σ_j ∂x_j m_k · b_ij
  std::vector<double> y_mono;    // K_Y
  std::vector<double> A;         // n×n row-major, drift-only Jacobian
  std::vector<double> delta;     // p×n row-major
  std::vector<double> B;         // n×m row-major
  std::vector<double> b_jac;     // m×n×n, empty for constant B
};

struct PenaltyOptions {
  double lambda = 0.0;
  double mu = 0.0;
  double a_low = 1e-2;
  double a_high = 1e2;
  double temperature = 1e-3;
  double shift = 0.0;
  double c2_weight = 1e3;
  double alpha_weight = 1e-4;
  /// false: exact hinge max(0, shift − λ_min) instead of the softplus.
  bool smoothed = true;
  RateConvention convention = RateConvention::kC1TwoLambda;
};

/// The sampled feasibility problem for one system and config. Decision
/// vector: W coefficients (free entry-major), Y coefficients (entry-major),
/// then α².
class SynthesisProblem {
 public:
  SynthesisProblem(const UncertainSystem& sys, SynthesisConfig cfg);

  int num_decision_vars() const { return num_vars_; }
  int w_offset(int entry) const { return entry * kw_; }
  int y_offset(int row, int col) const {
    return y_begin_ + (row * sys_.n + col) * ky_;
  }
  int alpha_index() const { return num_vars_ - 1; }
  const SampleGrid& grid() const { return grid_; }
  const SynthesisConfig& config() const { return cfg_; }
  const std::shared_ptr<const MonomialBasis>& w_basis() const {
    return w_basis_;
  }
  const std::shared_ptr<const MonomialBasis>& y_basis() const {
    return y_basis_;
  }
  const std::vector<int>& w_params() const { return w_params_; }

  /// W = I, Y = 0, α² = 10.
  Eigen::VectorXd InitialPoint() const;
  std::shared_ptr<const PolyDualMetric> MetricFromDecision(
      const Eigen::VectorXd& z) const;

  PreparedPoint Prepare(std::size_t index) const;
  PreparedPoint Prepare(const Eigen::Ref<const Eigen::VectorXd>& x,
                        const Eigen::Ref<const Eigen::VectorXd>& theta) const;
  std::vector<PreparedPoint> Prepare(std::span<const std::size_t> indices)
      const;

  /// Σ over points and blocks of the hinge on λ_min, plus C2 and α² terms;
  /// writes the gradient when `grad` is non-null. Throws on non-finite
  /// eigenvalues, naming the point.
  double Penalty(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                 std::span<const PreparedPoint> points,
                 Eigen::VectorXd* grad) const;

  /// Smallest margin (PSD blocks and −|C2|) at one prepared point.
  double PointMargin(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                     const PreparedPoint& point) const;

  struct ScanResult {
    /// Exact worst margin among violators; +∞ when every point clears the
    /// threshold.
    double worst = std::numeric_limits<double>::infinity();
    std::size_t worst_index = 0;
    std::vector<std::pair<double, std::size_t>> violators;  // ascending
  };
  /// Full-grid pass reporting points whose margin is below `threshold`.
  ScanResult Scan(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                  double threshold, std::size_t max_violators) const;

  PenaltyOptions MakeOptions(double lambda, double mu) const;

  /// Full line search over (λ, μ).
  SynthesisResult Solve() const;

 private:
  struct FixedResult {
    Eigen::VectorXd z;
    bool feasible = false;
    double worst = -std::numeric_limits<double>::infinity();
    int rounds = 0;
    int iterations = 0;
    std::size_t working_set = 0;
  };
  FixedResult SolveFixed(double lambda, double mu,
                         const Eigen::VectorXd& z0) const;
  void PrepareInto(const DynamicsTerms& terms,
                   const Eigen::Ref<const Eigen::VectorXd>& x,
                   const Eigen::Ref<const Eigen::VectorXd>& theta,
                   PreparedPoint* out) const;
  struct Workspace;
  void BuildBlocks(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                   const PreparedPoint& point, Workspace* ws) const;
  double Evaluate(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                  const PreparedPoint& point, Workspace* ws, double* grad,
                  double* margin) const;
  double ScreenMargin(const Eigen::VectorXd& z, const PenaltyOptions& opts,
                      const PreparedPoint& point, Workspace* ws,
                      double threshold) const;
  void Log(const std::string& msg) const;

  UncertainSystem sys_;
  SynthesisConfig cfg_;
  SampleGrid grid_;
  std::shared_ptr<const MonomialBasis> w_basis_;
  std::shared_ptr<const MonomialBasis> y_basis_;
  std::vector<int> w_params_;
  std::vector<int> w_vars_;  // active joint variables of W's basis
  std::vector<int> entry_row_;
  std::vector<int> entry_col_;
  int kw_ = 0;
  int ky_ = 0;
  int y_begin_ = 0;
  int num_vars_ = 0;
  int threads_ = 1;
};

/// synthesize(sys, cfg): runs the (λ, μ) line search, tightens and
/// validates the winner on the synthesis grid.
SynthesisResult Synthesize(const UncertainSystem& sys,
                           const SynthesisConfig& cfg);

}  // namespace arccm
