#pragma once

#include <Eigen/Core>
#include <functional>
#include <span>
#include <vector>

#include "cbo/core/box_domain.hpp"
#include "cbo/core/random.hpp"

namespace cbo::optim {

using PointObjective = std::function<double(const Eigen::VectorXd&)>;
/// Evaluates the objective at every row of `points` (M x D).
using BatchObjective = std::function<Eigen::VectorXd(const Eigen::MatrixXd& points)>;

struct SearchOptions {
  int restarts = 10;           // Latin-hypercube seeds refined locally
  int screen_points = 2601;    // full-grid screening budget (51 x 51 in 2-D)
  int refine_best_screened = 3;
  int max_evaluations_per_start = 300;
  double initial_step = 0.1;   // fraction of the domain width
  double min_step = 1e-7;
};

struct SearchResult {
  Eigen::VectorXd x;
  double value = 0.0;
};

/// Grid with max(2, floor(budget^(1/D))) points per dimension, corners exact,
/// first dimension varying slowest.
Eigen::MatrixXd screening_grid(const BoxDomain& box, int budget);

/// n points of a Latin hypercube inside the box.
Eigen::MatrixXd latin_hypercube(const BoxDomain& box, int n, Rng& rng);

/// Compass search with step halving from `start`; moves only on strict improvement.
SearchResult compass_search(const BoxDomain& box, const PointObjective& f, const Eigen::VectorXd& start,
                            double start_value, const SearchOptions& options);

/// Multi-start maximization. Start order: domain center, `extra_starts`,
/// Latin-hypercube seeds, then the best screening-grid points. The winner is
/// the first start whose refined value is strictly greatest, so a constant
/// objective returns the domain center.
SearchResult maximize_in_box(const BoxDomain& box, const PointObjective& f, const BatchObjective& batch,
                             const SearchOptions& options, Rng& rng,
                             std::span<const Eigen::VectorXd> extra_starts = {});

}  // namespace cbo::optim
