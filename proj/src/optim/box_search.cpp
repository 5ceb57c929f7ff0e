#include "cbo/optim/box_search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace cbo::optim {

Eigen::MatrixXd screening_grid(const BoxDomain& box, int budget) {
  const auto dims = static_cast<int>(box.dims());
  int per_dim = static_cast<int>(std::floor(std::pow(static_cast<double>(std::max(budget, 1)), 1.0 / dims) + 1e-9));
  per_dim = std::max(per_dim, 2);
  Eigen::Index total = 1;
  for (int d = 0; d < dims; ++d) total *= per_dim;

  Eigen::MatrixXd grid(total, dims);
  for (Eigen::Index row = 0; row < total; ++row) {
    Eigen::Index rest = row;
    for (int d = dims - 1; d >= 0; --d) {
      const auto idx = static_cast<double>(rest % per_dim);
      rest /= per_dim;
      const double frac = idx / static_cast<double>(per_dim - 1);
      grid(row, d) = frac == 1.0 ? box.upper()[d] : box.lower()[d] + frac * (box.upper()[d] - box.lower()[d]);
    }
  }
  return grid;
}

Eigen::MatrixXd latin_hypercube(const BoxDomain& box, int n, Rng& rng) {
  const auto dims = static_cast<Eigen::Index>(box.dims());
  Eigen::MatrixXd pts(n, dims);
  std::vector<int> perm(static_cast<std::size_t>(n));
  for (Eigen::Index d = 0; d < dims; ++d) {
    std::iota(perm.begin(), perm.end(), 0);
    for (int i = n - 1; i > 0; --i) {
      const auto j = static_cast<int>(rng() % static_cast<std::uint64_t>(i + 1));
      std::swap(perm[static_cast<std::size_t>(i)], perm[static_cast<std::size_t>(j)]);
    }
    for (int i = 0; i < n; ++i) {
      const double u = (perm[static_cast<std::size_t>(i)] + uniform(rng, 0.0, 1.0)) / n;
      pts(i, d) = box.lower()[d] + u * (box.upper()[d] - box.lower()[d]);
    }
  }
  return pts;
}

SearchResult compass_search(const BoxDomain& box, const PointObjective& f, const Eigen::VectorXd& start,
                            double start_value, const SearchOptions& options) {
  SearchResult cur{box.clamp(start), start_value};
  const Eigen::VectorXd width = box.width();
  double step = options.initial_step;
  int evals = 0;
  while (step >= options.min_step && evals < options.max_evaluations_per_start) {
    bool moved = false;
    for (Eigen::Index d = 0; d < cur.x.size() && evals < options.max_evaluations_per_start; ++d) {
      for (double sign : {1.0, -1.0}) {
        Eigen::VectorXd trial = cur.x;
        trial[d] = std::clamp(trial[d] + sign * step * width[d], box.lower()[d], box.upper()[d]);
        if (trial[d] == cur.x[d]) continue;
        const double v = f(trial);
        ++evals;
        if (v > cur.value) {
          cur = {std::move(trial), v};
          moved = true;
          break;
        }
      }
    }
    if (!moved) step *= 0.5;
  }
  return cur;
}

SearchResult maximize_in_box(const BoxDomain& box, const PointObjective& f, const BatchObjective& batch,
                             const SearchOptions& options, Rng& rng,
                             std::span<const Eigen::VectorXd> extra_starts) {
  const auto dims = static_cast<Eigen::Index>(box.dims());
  const Eigen::MatrixXd lhs = latin_hypercube(box, std::max(options.restarts, 0), rng);
  const Eigen::MatrixXd grid = options.screen_points > 0 ? screening_grid(box, options.screen_points)
                                                         : Eigen::MatrixXd(0, dims);

  const Eigen::Index n_seed = 1 + static_cast<Eigen::Index>(extra_starts.size()) + lhs.rows();
  Eigen::MatrixXd candidates(n_seed + grid.rows(), dims);
  candidates.row(0) = box.center().transpose();
  Eigen::Index row = 1;
  for (const Eigen::VectorXd& s : extra_starts) candidates.row(row++) = box.clamp(s).transpose();
  if (lhs.rows() > 0) candidates.middleRows(row, lhs.rows()) = lhs;
  row += lhs.rows();
  if (grid.rows() > 0) candidates.bottomRows(grid.rows()) = grid;

  const Eigen::VectorXd values = batch(candidates);

  std::vector<Eigen::Index> starts(static_cast<std::size_t>(n_seed));
  std::iota(starts.begin(), starts.end(), Eigen::Index{0});
  if (grid.rows() > 0 && options.refine_best_screened > 0) {
    std::vector<Eigen::Index> order(static_cast<std::size_t>(grid.rows()));
    std::iota(order.begin(), order.end(), n_seed);
    const auto k = std::min<std::size_t>(order.size(), static_cast<std::size_t>(options.refine_best_screened));
    std::partial_sort(order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k), order.end(),
                      [&](Eigen::Index a, Eigen::Index b) {
                        return values[a] > values[b] || (values[a] == values[b] && a < b);
                      });
    starts.insert(starts.end(), order.begin(), order.begin() + static_cast<std::ptrdiff_t>(k));
  }

  SearchResult best{candidates.row(0).transpose(), values[0]};
  for (Eigen::Index i = 1; i < candidates.rows(); ++i)
    if (values[i] > best.value) best = {candidates.row(i).transpose(), values[i]};

  for (Eigen::Index idx : starts) {
    SearchResult refined = compass_search(box, f, candidates.row(idx).transpose(), values[idx], options);
    if (refined.value > best.value) best = std::move(refined);
  }
  return best;
}

}  // namespace cbo::optim
