#include "arccm/optim.h"

#include <cmath>
#include <deque>

namespace arccm {

LbfgsResult MinimizeLbfgs(
    const Objective& objective, Eigen::VectorXd x0,
    const LbfgsOptions& options,
    const std::function<bool(const Eigen::VectorXd&, double, int)>& callback) {
  LbfgsResult r;
  r.x = std::move(x0);
  Eigen::VectorXd g;
  r.f = objective(r.x, &g);
  r.gradient_norm = g.norm();
  std::deque<Eigen::VectorXd> s_hist;
  std::deque<Eigen::VectorXd> y_hist;
  std::deque<double> rho_hist;
  Eigen::VectorXd x_new;
  Eigen::VectorXd g_new;
  for (int it = 0; it < options.max_iterations; ++it) {
    if (r.gradient_norm <=
        options.gradient_abs + options.gradient_rel * std::abs(r.f)) {
      r.converged = true;
      return r;
    }
    // Two-loop recursion.
    Eigen::VectorXd q = g;
    std::vector<double> alpha(s_hist.size());
    for (int i = static_cast<int>(s_hist.size()) - 1; i >= 0; --i) {
      alpha[i] = rho_hist[i] * s_hist[i].dot(q);
      q -= alpha[i] * y_hist[i];
    }
    double gamma = 1.0;
    if (!s_hist.empty()) {
      gamma = s_hist.back().dot(y_hist.back()) / y_hist.back().squaredNorm();
    } else {
      gamma = 1.0 / std::max(1.0, r.gradient_norm);
    }
    q *= gamma;
    for (std::size_t i = 0; i < s_hist.size(); ++i) {
      const double beta = rho_hist[i] * y_hist[i].dot(q);
      q += (alpha[i] - beta) * s_hist[i];
    }
    Eigen::VectorXd dir = -q;
    double slope = g.dot(dir);
    if (!(slope < 0.0)) {
      // Not a descent direction: reset memory, fall back to steepest descent.
      s_hist.clear();
      y_hist.clear();
      rho_hist.clear();
      dir = -g / std::max(1.0, r.gradient_norm);
      slope = g.dot(dir);
    }
    double step = 1.0;
    bool accepted = false;
    double f_new = 0.0;
    for (int bt = 0; bt < options.max_backtracks; ++bt) {
      x_new = r.x + step * dir;
      f_new = objective(x_new, &g_new);
      if (std::isfinite(f_new) && f_new <= r.f + options.armijo * step * slope) {
        accepted = true;
        break;
      }
      // Near convergence f differences drown in rounding; fall back to the
      // approximate Wolfe test on the directional derivative (Hager-Zhang),
      // allowing f to rise by no more than its rounding floor.
      if (std::isfinite(f_new) &&
          f_new <= r.f + options.noise_floor * (1.0 + std::abs(r.f))) {
        const double d_new = g_new.dot(dir);
        if (d_new <= -0.8 * slope && d_new >= 0.9 * slope) {
          accepted = true;
          break;
        }
      }
      step *= 0.5;
    }
    if (accepted && x_new == r.x) accepted = false;
    if (!accepted) {
      if (!s_hist.empty()) {
        s_hist.clear();
        y_hist.clear();
        rho_hist.clear();
        continue;
      }
      r.line_search_failed = true;
      return r;
    }
    Eigen::VectorXd s = x_new - r.x;
    Eigen::VectorXd y = g_new - g;
    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      s_hist.push_back(std::move(s));
      y_hist.push_back(std::move(y));
      rho_hist.push_back(1.0 / sy);
      if (static_cast<int>(s_hist.size()) > options.memory) {
        s_hist.pop_front();
        y_hist.pop_front();
        rho_hist.pop_front();
      }
    }
    r.x = x_new;
    r.f = f_new;
    g = g_new;
    r.gradient_norm = g.norm();
    r.iterations = it + 1;
    if (callback && callback(r.x, r.f, r.iterations)) {
      r.stopped_by_callback = true;
      return r;
    }
  }
  r.converged = r.gradient_norm <=
                options.gradient_abs + options.gradient_rel * std::abs(r.f);
  return r;
}

}  // namespace arccm
