#pragma once

#include <Eigen/Core>
#include <vector>

#include "cbo/optim/projected_bfgs.hpp"

namespace cbo::gp {

/// Runs projected BFGS from each start and keeps the lowest value; ties go
/// to the earlier start.
optim::BfgsResult multistart_minimize(const optim::ValueAndGradient& f, const std::vector<Eigen::VectorXd>& starts,
                                      const Eigen::VectorXd& lower, const Eigen::VectorXd& upper,
                                      int max_iterations);

}  // namespace cbo::gp
