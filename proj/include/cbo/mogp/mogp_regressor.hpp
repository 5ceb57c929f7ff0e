#pragma once

// Intrinsic coregionalization model: cov(f_q(x), f_q'(x')) = B_qq' k(x, x').
//
// Stacking convention. Targets are stored observation-major as an N x Q
// matrix (row i holds every output of observation i). For the joint
// covariance they are vectorized column by column, so the entry for
// (output q, observation i) sits at index q * N + i. That is exactly the
// index order of the Kronecker product B (x) K.

#include <Eigen/Cholesky>
#include <Eigen/Core>
#include <span>

#include "cbo/gp/gp_regressor.hpp"

namespace cbo::mogp {

/// B = A A^T + diag(d), A is Q x R, d >= 0.
struct CoregionalizationMatrix {
  Eigen::MatrixXd a;
  Eigen::VectorXd d;

  static CoregionalizationMatrix identity(std::size_t outputs, double scale = 1.0);
  /// Full-rank factor of a symmetric PSD matrix (eigen-decomposition square root).
  static CoregionalizationMatrix from_matrix(const Eigen::MatrixXd& b);

  std::size_t outputs() const { return static_cast<std::size_t>(a.rows()); }
  std::size_t rank() const { return static_cast<std::size_t>(a.cols()); }
  Eigen::MatrixXd matrix() const;
  /// B_12 / sqrt(B_11 B_22) style correlation for a pair of outputs.
  double correlation(std::size_t q1, std::size_t q2) const;
  void validate() const;
};

struct MultiDataset {
  Eigen::MatrixXd inputs;   // N x D
  Eigen::MatrixXd outputs;  // N x Q

  MultiDataset() = default;
  MultiDataset(Eigen::MatrixXd x, Eigen::MatrixXd y);
  static MultiDataset empty(std::size_t dims, std::size_t outputs);

  std::size_t size() const { return static_cast<std::size_t>(inputs.rows()); }
  std::size_t dims() const { return static_cast<std::size_t>(inputs.cols()); }
  std::size_t outputs_count() const { return static_cast<std::size_t>(outputs.cols()); }
  void validate() const;
  void append(std::span<const double> x, std::span<const double> y);
};

struct MultiPrediction {
  Eigen::VectorXd mean;        // Q
  Eigen::MatrixXd covariance;  // Q x Q, latent (noise-free)
};

/// ICM posterior with fixed hyperparameters. One shared noise variance for
/// every output. Immutable after construction.
class MOGPRegressor {
 public:
  MOGPRegressor(MultiDataset data, gp::KernelSpec base_kernel, CoregionalizationMatrix coregionalization,
                double noise_variance, gp::GpOptions options = {});

  const MultiDataset& data() const { return data_; }
  const gp::KernelSpec& base_kernel() const { return kernel_; }
  const CoregionalizationMatrix& coregionalization() const { return coreg_; }
  double noise_variance() const { return noise_variance_; }
  const gp::GpOptions& options() const { return options_; }
  std::size_t outputs() const { return coreg_.outputs(); }
  std::size_t input_dim() const { return kernel_.input_dim(); }
  std::size_t size() const { return data_.size(); }
  const Eigen::VectorXd& output_offsets() const { return y_offset_; }
  const Eigen::VectorXd& output_scales() const { return y_scale_; }
  double jitter() const { return jitter_; }

  /// Predictive mean and covariance in original output units.
  MultiPrediction predict(std::span<const double> x) const;
  MultiPrediction predict(const Eigen::VectorXd& x) const { return predict(std::span<const double>(x.data(), x.size())); }

  /// Latent predictive covariance of the standardized outputs, before clamping.
  Eigen::MatrixXd normalized_covariance(std::span<const double> x) const;

  double log_marginal_likelihood() const { return lml_; }

  MOGPRegressor with_data(MultiDataset data) const;

  /// Standardized targets vectorized in Kronecker order (q * N + i).
  Eigen::VectorXd stacked_normalized_outputs() const;
  Eigen::MatrixXd normalized_inputs() const;

 private:
  void predict_normalized(std::span<const double> x, Eigen::VectorXd* mean, Eigen::MatrixXd* cov) const;

  MultiDataset data_;
  gp::KernelSpec kernel_;
  CoregionalizationMatrix coreg_;
  double noise_variance_;
  gp::GpOptions options_;

  Eigen::VectorXd y_offset_;
  Eigen::VectorXd y_scale_;
  Eigen::MatrixXd b_;
  Eigen::MatrixXd x_scaled_;
  Eigen::LLT<Eigen::MatrixXd> llt_;
  Eigen::VectorXd alpha_;
  double jitter_ = 0.0;
  double lml_ = 0.0;
};

/// B (x) K assembled densely, NQ x NQ.
Eigen::MatrixXd kronecker_covariance(const Eigen::MatrixXd& b, const Eigen::MatrixXd& k);

struct MogpTrainConfig {
  gp::TrainConfig base;
  /// Coregionalization rank; 0 means full rank (R = Q).
  std::size_t rank = 0;
};

/// Joint likelihood maximization over base-kernel lengthscales, the factors
/// of B and the shared noise. The base kernel's signal variance is pinned to
/// 1 so that B carries the output scales; with Q = 1 the parameter vector
/// and restart draws coincide with gp_fit.
MOGPRegressor mogp_fit(const MultiDataset& data, const gp::KernelSpec& base, std::size_t outputs,
                       const MogpTrainConfig& config, const gp::GpOptions& options = {});

/// Same as mogp_fit, starting from an existing model's hyperparameters.
MOGPRegressor mogp_refit(const MOGPRegressor& warm, const MultiDataset& data, const MogpTrainConfig& config);

/// Negative log marginal likelihood and gradient for packed parameters
/// [log l_1..D, B factors, log noise]; exposed for testing.
double mogp_negative_log_marginal_likelihood(const Eigen::MatrixXd& x_normalized, const Eigen::VectorXd& y_stacked,
                                             const gp::KernelSpec& structure, std::size_t outputs, std::size_t rank,
                                             const Eigen::VectorXd& params, Eigen::VectorXd* gradient);

Eigen::VectorXd pack_mogp_params(const gp::KernelSpec& base, const CoregionalizationMatrix& b, double noise);
void unpack_mogp_params(const Eigen::VectorXd& params, std::size_t outputs, std::size_t rank, gp::KernelSpec* base,
                        CoregionalizationMatrix* b, double* noise);

}  // namespace cbo::mogp
