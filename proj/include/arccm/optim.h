#pragma once

#include <functional>

#include <Eigen/Dense>

namespace arccm {

/// Objective returning f(x) and writing ∇f(x) into `grad`.
using Objective =
    std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct LbfgsOptions {
  int max_iterations = 200;
  int memory = 10;
  /// Stop when ‖∇f‖ ≤ gradient_abs + gradient_rel·|f|.
  double gradient_abs = 1e-8;
  double gradient_rel = 0.0;
  double armijo = 1e-4;
  int max_backtracks = 40;
  /// Relative rise of f tolerated by the approximate Wolfe fallback.
  double noise_floor = 1e-12;
};

struct LbfgsResult {
  Eigen::VectorXd x;
  double f = 0.0;
  double gradient_norm = 0.0;
  int iterations = 0;
  bool converged = false;
  bool line_search_failed = false;
  bool stopped_by_callback = false;
};

/// Limited-memory BFGS with Armijo backtracking. Accepted iterates have
/// non-increasing objective. `callback`, called after every accepted step,
/// may return true to stop early.
LbfgsResult MinimizeLbfgs(
    const Objective& objective, Eigen::VectorXd x0,
    const LbfgsOptions& options,
    const std::function<bool(const Eigen::VectorXd&, double, int)>& callback =
        {});

}  // namespace arccm
