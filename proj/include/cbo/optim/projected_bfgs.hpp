#pragma once

#include <Eigen/Core>
#include <functional>

namespace cbo::optim {

/// Returns f(x); writes the gradient when `grad` is non-null. Line searches
/// call it with a null gradient. May return a
/// non-finite value to signal an infeasible point (treated as a failed step).
using ValueAndGradient = std::function<double(const Eigen::VectorXd& x, Eigen::VectorXd* grad)>;

struct BfgsOptions {
  int max_iterations = 200;
  /// On the projected gradient (infinity norm), relative to max(1, |f|).
  double gradient_tolerance = 1e-6;
  double function_tolerance = 1e-12;  // relative decrease regarded as stalled
  double max_step = 1.0;              // first trial move per coordinate on a fresh metric
};

struct BfgsResult {
  Eigen::VectorXd x;
  double value = 0.0;
  int iterations = 0;
  bool converged = false;
};

/// Bound-constrained minimization: BFGS on the free variables, variables
/// pinned at a bound with an outward gradient held fixed, projected Armijo
/// backtracking. Never returns a point worse than the (clamped) start.
BfgsResult minimize_projected_bfgs(const ValueAndGradient& f, const Eigen::VectorXd& x0,
                                   const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                   const BfgsOptions& options = {});

}  // namespace cbo::optim
