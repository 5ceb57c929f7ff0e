#include "cbo/optim/projected_bfgs.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

#include "cbo/core/errors.hpp"

namespace cbo::optim {

namespace {

Eigen::VectorXd project(const Eigen::VectorXd& x, const Eigen::VectorXd& lo, const Eigen::VectorXd& hi) {
  return x.cwiseMax(lo).cwiseMin(hi);
}

}  // namespace

BfgsResult minimize_projected_bfgs(const ValueAndGradient& f, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                   const BfgsOptions& options) {
  const Eigen::Index n = x0.size();
  if (lower.size() != n || upper.size() != n) throw InputError("minimize_projected_bfgs: bound size mismatch");

  BfgsResult result;
  result.x = project(x0, lower, upper);
  Eigen::VectorXd g(n);
  result.value = f(result.x, &g);
  if (!std::isfinite(result.value) || !g.allFinite()) return result;

  Eigen::MatrixXd inv_hessian = Eigen::MatrixXd::Identity(n, n);
  bool fresh_metric = true;
  int stalled = 0;

  for (int iter = 0; iter < options.max_iterations; ++iter) {
    result.iterations = iter + 1;
    const Eigen::VectorXd pg = result.x - project(result.x - g, lower, upper);
    if (pg.lpNorm<Eigen::Infinity>() <= options.gradient_tolerance * std::max(1.0, std::abs(result.value))) {
      result.converged = true;
      break;
    }

    std::vector<bool> active(static_cast<std::size_t>(n), false);
    for (Eigen::Index i = 0; i < n; ++i) {
      const double span = upper[i] - lower[i];
      const double tol = 1e-12 * (1.0 + span);
      active[static_cast<std::size_t>(i)] =
          (result.x[i] <= lower[i] + tol && g[i] > 0.0) || (result.x[i] >= upper[i] - tol && g[i] < 0.0);
    }

    Eigen::VectorXd direction = Eigen::VectorXd::Zero(n);
    for (Eigen::Index i = 0; i < n; ++i) {
      if (active[static_cast<std::size_t>(i)]) continue;
      double acc = 0.0;
      for (Eigen::Index j = 0; j < n; ++j)
        if (!active[static_cast<std::size_t>(j)]) acc -= inv_hessian(i, j) * g[j];
      direction[i] = acc;
    }
    if (!(g.dot(direction) < 0.0)) {
      inv_hessian.setIdentity();
      fresh_metric = true;
      for (Eigen::Index i = 0; i < n; ++i) direction[i] = active[static_cast<std::size_t>(i)] ? 0.0 : -g[i];
    }

    // Without curvature information a unit step along -g can be arbitrarily
    // long; cap the first trial move at max_step per coordinate.
    double step = 1.0;
    if (fresh_metric) step = std::min(1.0, options.max_step / direction.lpNorm<Eigen::Infinity>());
    Eigen::VectorXd x_new, g_new(n);
    double f_new = 0.0;
    bool accepted = false;
    for (int ls = 0; ls < 40; ++ls) {
      x_new = project(result.x + step * direction, lower, upper);
      f_new = f(x_new, nullptr);
      const double predicted = g.dot(x_new - result.x);
      if (std::isfinite(f_new) && f_new <= result.value + 1e-4 * predicted) {
        f_new = f(x_new, &g_new);
        accepted = std::isfinite(f_new) && g_new.allFinite();
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (fresh_metric) break;
      inv_hessian.setIdentity();
      fresh_metric = true;
      continue;
    }

    const Eigen::VectorXd s = x_new - result.x;
    const Eigen::VectorXd y = g_new - g;
    const double decrease = result.value - f_new;
    result.x = x_new;
    g = g_new;
    result.value = f_new;

    const double sy = s.dot(y);
    if (sy > 1e-12 * s.norm() * y.norm()) {
      const double rho = 1.0 / sy;
      const Eigen::MatrixXd v = Eigen::MatrixXd::Identity(n, n) - rho * y * s.transpose();
      inv_hessian = v.transpose() * inv_hessian * v + rho * s * s.transpose();
      fresh_metric = false;
    }

    stalled = decrease <= options.function_tolerance * (1.0 + std::abs(result.value)) ? stalled + 1 : 0;
    if (stalled >= 3) {
      result.converged = true;
      break;
    }
  }
  return result;
}

}  // namespace cbo::optim
