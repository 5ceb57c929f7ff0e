#include "cbo/gp/training.hpp"

#include <cmath>
#include <limits>

namespace cbo::gp {

optim::BfgsResult multistart_minimize(const optim::ValueAndGradient& f, const std::vector<Eigen::VectorXd>& starts,
                                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                      int max_iterations) {
  optim::BfgsOptions opts;
  opts.max_iterations = max_iterations;
  optim::BfgsResult best;
  best.value = std::numeric_limits<double>::infinity();
  for (const Eigen::VectorXd& s : starts) {
    optim::BfgsResult r = optim::minimize_projected_bfgs(f, s, lower, upper, opts);
    if (std::isfinite(r.value) && (r.value < best.value || best.x.size() == 0)) best = std::move(r);
  }
  if (best.x.size() == 0 && !starts.empty()) {
    best.x = starts.front().cwiseMax(lower).cwiseMin(upper);
  }
  return best;
}

}  // namespace cbo::gp
