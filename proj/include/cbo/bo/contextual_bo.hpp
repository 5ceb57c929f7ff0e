#pragma once

// GP surrogate of J(z, theta) with a product kernel over the z-slice and the
// theta-slice, the UCB acquisition, and the inner BO loop at a fixed context.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <ostream>
#include <vector>

#include "cbo/core/box_domain.hpp"
#include "cbo/gp/gp_regressor.hpp"
#include "cbo/optim/box_search.hpp"

namespace cbo::bo {

struct SurrogateSettings {
  gp::KernelFamily z_family = gp::KernelFamily::Matern32;
  gp::KernelFamily theta_family = gp::KernelFamily::Matern32;
  std::size_t max_data = 300;
  /// In unit-box coordinates.
  double initial_lengthscale = 0.3;
  double initial_noise_variance = 1e-2;
};

/// Value type: every update returns a new model. Inputs are stored as
/// concatenated (z, theta) rows and mapped onto the unit box over Z x Theta.
class SurrogateModel {
 public:
  SurrogateModel(BoxDomain z_domain, BoxDomain theta_domain, const SurrogateSettings& settings = {});
  /// Wraps an existing regressor (e.g. reloaded from disk).
  SurrogateModel(BoxDomain z_domain, BoxDomain theta_domain, std::size_t max_data, gp::GPRegressor gp);

  const BoxDomain& z_domain() const { return z_domain_; }
  const BoxDomain& theta_domain() const { return theta_domain_; }
  std::size_t max_data() const { return max_data_; }
  const gp::GPRegressor& gp() const { return gp_; }
  std::size_t size() const { return gp_.size(); }

  gp::Prediction predict(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const;
  /// Predictions at every row of `zs` (M x dim z) for one context.
  void predict_at_context(const Eigen::MatrixXd& zs, const Eigen::VectorXd& theta, Eigen::VectorXd* mean,
                          Eigen::VectorXd* variance) const;

  SurrogateModel with_gp(gp::GPRegressor gp) const;

 private:
  BoxDomain z_domain_;
  BoxDomain theta_domain_;
  std::size_t max_data_;
  gp::GPRegressor gp_;
};

struct AcquisitionConfig {
  double beta = 100.0;
  optim::SearchOptions search;
};

/// mu + sqrt(beta) sigma at (z, theta). Throws InputError outside the domains.
double ucb(const SurrogateModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& theta, double beta);

/// Maximizes the UCB over Z at a fixed context. `extra_starts` (e.g. the
/// incumbent) join the center and Latin-hypercube starts.
Eigen::VectorXd optimize_acquisition(const SurrogateModel& model, const Eigen::VectorXd& theta,
                                     const AcquisitionConfig& cfg, Rng& rng,
                                     std::span<const Eigen::VectorXd> extra_starts = {});

/// Appends one observation, dropping the oldest when the model is full, and
/// reconditions with unchanged hyperparameters.
SurrogateModel manage_dataset(const SurrogateModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                              double y);

/// Re-trains the hyperparameters from the current ones (restart 0) plus
/// `cfg.restarts - 1` random starts.
SurrogateModel refit(const SurrogateModel& model, const gp::TrainConfig& cfg);

class ObjectiveEvaluator {
 public:
  virtual ~ObjectiveEvaluator() = default;
  /// One noisy observation of J(z, theta). `seed` fixes any randomness in
  /// the observation so a run can be replayed.
  virtual double evaluate(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, std::uint64_t seed) = 0;
};

struct InnerBoConfig {
  int k_max = 30;
  AcquisitionConfig acquisition;
  gp::TrainConfig train = [] {
    gp::TrainConfig t;
    t.restarts = 2;
    return t;
  }();
  /// Hyperparameters are re-trained at every iteration k <= refit_every_until
  /// and then at every refit_period-th one; otherwise the GP is only
  /// reconditioned on the new data.
  int refit_every_until = 10;
  int refit_period = 5;
  std::uint64_t seed = 0;
};

struct IterationRecord {
  int j = 0;  // outer iteration, 0 when the inner loop runs alone
  int k = 0;
  Eigen::VectorXd z;
  Eigen::VectorXd theta;
  double y = 0.0;
  double incumbent = 0.0;  // best y seen so far at this context
};

struct InnerBoResult {
  Eigen::VectorXd z_star;
  std::vector<IterationRecord> records;
};

/// Inner contextual BO at `theta`: k_max evaluations, each followed by a
/// model update. `surrogate` is updated in place, so if the evaluator throws
/// it still holds every observation made before the failure.
InnerBoResult inner_bo(const Eigen::VectorXd& theta, SurrogateModel& surrogate, ObjectiveEvaluator& evaluator,
                       const InnerBoConfig& cfg);

/// argmax_z of the posterior mean at `theta` (UCB with beta = 0).
Eigen::VectorXd posterior_mean_argmax(const SurrogateModel& model, const Eigen::VectorXd& theta,
                                      const optim::SearchOptions& search, Rng& rng,
                                      std::span<const Eigen::VectorXd> extra_starts = {});

void write_run_log_header(std::ostream& out, std::size_t z_dims, std::size_t theta_dims);
void write_run_log_row(std::ostream& out, const IterationRecord& r);

}  // namespace cbo::bo
