#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <span>

#include "cbo/core/box_domain.hpp"
#include "cbo/gp/dataset.hpp"
#include "cbo/gp/kernel.hpp"

namespace cbo::gp {

/// Input/output conditioning applied before the kernel sees the data.
struct GpOptions {
  /// Inputs are mapped onto the unit box over this domain; identity when unset.
  std::optional<BoxDomain> input_box;
  /// Outputs are shifted/scaled to zero mean, unit variance for fitting and
  /// mapped back at prediction.
  bool standardize_outputs = false;
};

/// Inputs mapped onto the unit box and standardized targets, as the kernel sees them.
struct NormalizedData {
  Eigen::MatrixXd inputs;
  Eigen::VectorXd outputs;
  double offset = 0.0;
  double scale = 1.0;
};

NormalizedData normalize_data(const Dataset& data, const GpOptions& options);

struct Prediction {
  double mean = 0.0;
  double variance = 0.0;
};

/// Zero-mean GP posterior with fixed hyperparameters. Immutable once built;
/// concurrent predictions are safe.
class GPRegressor {
 public:
  /// Conditions on `data`. An empty dataset gives the prior.
  /// Throws NumericalError if K + noise I cannot be factorized with jitter.
  GPRegressor(Dataset data, KernelSpec kernel, double noise_variance, GpOptions options = {});

  const Dataset& data() const { return data_; }
  const KernelSpec& kernel() const { return kernel_; }
  double noise_variance() const { return noise_variance_; }
  const GpOptions& options() const { return options_; }
  double jitter() const { return jitter_; }
  std::size_t size() const { return data_.size(); }
  std::size_t input_dim() const { return kernel_.input_dim(); }
  double output_offset() const { return y_offset_; }
  double output_scale() const { return y_scale_; }

  /// Latent (noise-free) posterior at `x` in original units.
  Prediction predict(std::span<const double> x) const;
  Prediction predict(const Eigen::VectorXd& x) const { return predict(std::span<const double>(x.data(), x.size())); }

  /// Row-wise predictions for an M x D matrix of query points.
  void predict_batch(const Eigen::MatrixXd& points, Eigen::VectorXd* mean, Eigen::VectorXd* variance) const;

  /// Log evidence of the conditioned (normalized) targets:
  /// -1/2 y^T (K + s I)^-1 y - 1/2 log det(K + s I) - N/2 log 2 pi.
  double log_marginal_likelihood() const { return lml_; }

  /// Same hyperparameters, new data.
  GPRegressor with_data(Dataset data) const;
  /// Same data, new hyperparameters.
  GPRegressor with_hyperparameters(KernelSpec kernel, double noise_variance) const;

  /// Inputs after the unit-box map (N x D).
  Eigen::MatrixXd normalized_inputs() const;
  Eigen::VectorXd normalize_input(const Eigen::VectorXd& x) const;
  /// Targets after standardization.
  Eigen::VectorXd normalized_outputs() const;

 private:
  Dataset data_;
  KernelSpec kernel_;
  double noise_variance_;
  GpOptions options_;

  double y_offset_ = 0.0;
  double y_scale_ = 1.0;
  double jitter_ = 0.0;
  double lml_ = 0.0;
  Eigen::MatrixXd x_scaled_;  // normalized inputs divided by lengthscales, N x D
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
};

/// Box bounds for training. Lengthscale bounds are multiples of the
/// per-dimension input range (1 after unit-box normalization).
struct HyperparameterBounds {
  double lengthscale_min = 1e-2;
  double lengthscale_max = 1e2;
  double signal_variance_min = 1e-4;
  double signal_variance_max = 1e4;
  double noise_variance_min = 1e-8;
  double noise_variance_max = 1.0;
};

struct TrainConfig {
  HyperparameterBounds bounds;
  /// Total number of starting points; the first is always the supplied
  /// hyperparameters, the rest are drawn log-uniformly.
  int restarts = 4;
  std::uint64_t seed = 0;
  int max_iterations = 200;
  double initial_noise_variance = 1e-2;
  bool optimize_noise = true;
};

/// Maximizes the log marginal likelihood over log-parameterized
/// (lengthscales, signal variance, noise variance) by multi-start projected
/// BFGS. Throws InputError on an empty dataset.
GPRegressor gp_fit(const Dataset& data, const KernelSpec& initial, const TrainConfig& config,
                   const GpOptions& options = {});

/// Same as gp_fit but starting from an existing model's hyperparameters.
GPRegressor gp_refit(const GPRegressor& warm, const Dataset& data, const TrainConfig& config);

/// Negative log marginal likelihood and its gradient with respect to
/// [log l_1..log l_D, log signal variance, log noise variance] for already
/// normalized inputs and targets. Returns +inf when the covariance cannot be
/// factorized.
double negative_log_marginal_likelihood(const Eigen::MatrixXd& x_normalized, const Eigen::VectorXd& y,
                                        const KernelSpec& structure, const Eigen::VectorXd& log_params,
                                        Eigen::VectorXd* gradient);

Eigen::VectorXd pack_log_params(const KernelSpec& kernel, double noise_variance);
void unpack_log_params(const Eigen::VectorXd& log_params, KernelSpec* kernel, double* noise_variance);

}  // namespace cbo::gp
