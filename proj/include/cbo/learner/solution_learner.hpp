#pragma once

// The solution model GP_s: theta -> z*, the log-det context sampler and the
// outer adaptive-sampling loop.

#include <Eigen/Core>
#include <functional>
#include <json.hpp>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "cbo/bo/contextual_bo.hpp"
#include "cbo/core/box_domain.hpp"
#include "cbo/gp/gp_regressor.hpp"
#include "cbo/mogp/mogp_regressor.hpp"

namespace cbo::learner {

struct SolutionFitConfig {
  gp::TrainConfig train;
  double initial_lengthscale = 0.3;  // unit-box coordinates
  /// Coregionalization rank for dim(z) > 1; 0 is full rank.
  std::size_t rank = 0;
};

/// A GP over theta when dim(z) = 1, an ICM multi-output GP otherwise. Both
/// use a Matern 3/2 kernel on the unit box over the context domain with
/// standardized outputs. An unfitted model holds the prior only.
class SolutionModel {
 public:
  SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, double initial_lengthscale = 0.3);
  SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, gp::GPRegressor model);
  SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, mogp::MOGPRegressor model);

  const BoxDomain& theta_domain() const { return theta_domain_; }
  const BoxDomain& z_domain() const { return z_domain_; }
  std::size_t size() const;
  bool fitted() const { return size() > 0; }
  bool multi_output() const { return std::holds_alternative<mogp::MOGPRegressor>(model_); }
  const gp::GPRegressor& gp() const { return std::get<gp::GPRegressor>(model_); }
  const mogp::MOGPRegressor& mogp() const { return std::get<mogp::MOGPRegressor>(model_); }

  /// Stored (theta, z*) pairs, one per row.
  Eigen::MatrixXd contexts() const;
  Eigen::MatrixXd solutions() const;

  /// Latent covariance of the standardized outputs at theta (dim z x dim z).
  Eigen::MatrixXd normalized_covariance(const Eigen::VectorXd& theta) const;
  /// Posterior mean in original z units, not clamped.
  Eigen::VectorXd mean(const Eigen::VectorXd& theta) const;

 private:
  BoxDomain theta_domain_;
  BoxDomain z_domain_;
  std::variant<gp::GPRegressor, mogp::MOGPRegressor> model_;
};

/// Trains a solution model on the pairs (rows of thetas, rows of zs).
/// Restart 0 uses `warm`'s hyperparameters when given.
SolutionModel fit_solution_model(const BoxDomain& theta_domain, const BoxDomain& z_domain,
                                 const Eigen::MatrixXd& thetas, const Eigen::MatrixXd& zs,
                                 const SolutionFitConfig& cfg, std::uint64_t seed,
                                 const SolutionModel* warm = nullptr);

/// sum_i log max(lambda_i, 1e-12) over the eigenvalues of the normalized covariance.
double log_det_criterion(const SolutionModel& model, const Eigen::VectorXd& theta);

/// argmax over the context domain of log_det_criterion.
Eigen::VectorXd next_context(const SolutionModel& model, const optim::SearchOptions& search, Rng& rng);

/// Posterior mean clamped to the z domain. A context outside its domain is
/// clamped with a warning. Throws StateError on an unfitted model.
Eigen::VectorXd adapt(const SolutionModel& model, const Eigen::VectorXd& theta);

struct OuterLoopConfig {
  int j_max = 30;
  bo::InnerBoConfig inner;
  bo::SurrogateSettings surrogate;
  optim::SearchOptions sampler;
  SolutionFitConfig solution;
  std::uint64_t seed = 0;
  /// Points per dimension of the grid on which the mean log det is monitored.
  int probe_points_per_dim = 11;
};

/// Everything needed to continue a run after outer iteration `completed`.
struct OuterLoopState {
  int completed = 0;
  bo::SurrogateModel surrogate;
  SolutionModel solution;
  Eigen::MatrixXd thetas;  // D_s contexts
  Eigen::MatrixXd zs;      // D_s solutions
  std::vector<bo::IterationRecord> records;
  std::vector<double> probe_log_det;  // prior, then after each outer iteration
};

struct OuterLoopResult {
  OuterLoopState state;
  bool aborted = false;
  std::string diagnostic;
};

using CheckpointCallback = std::function<void(const OuterLoopState&)>;

OuterLoopState initial_state(const BoxDomain& z_domain, const BoxDomain& theta_domain, const OuterLoopConfig& cfg);

/// Outer adaptive-sampling loop. Runs outer iterations completed+1 .. j_max from `state`;
/// every random stream is derived from (cfg.seed, j, purpose), so resuming
/// from a checkpoint reproduces an uninterrupted run. `on_iteration` fires
/// after each completed outer iteration. An exception inside the inner loop
/// stops the run and returns the last consistent state with a diagnostic.
OuterLoopResult outer_loop(bo::ObjectiveEvaluator& evaluator, OuterLoopState state, const OuterLoopConfig& cfg,
                           const CheckpointCallback& on_iteration = {});

OuterLoopResult outer_loop(bo::ObjectiveEvaluator& evaluator, const BoxDomain& z_domain,
                           const BoxDomain& theta_domain, const OuterLoopConfig& cfg,
                           const CheckpointCallback& on_iteration = {});

/// {"type": "solution_model", theta_domain, z_domain, model}.
nlohmann::json to_json(const SolutionModel& model);
SolutionModel solution_model_from_json(const nlohmann::json& j);

nlohmann::json to_json(const bo::SurrogateModel& surrogate);
bo::SurrogateModel surrogate_from_json(const nlohmann::json& j);

nlohmann::json to_json(const OuterLoopState& state);
OuterLoopState state_from_json(const nlohmann::json& j);

}  // namespace cbo::learner
