#include "cbo/gp/gp_regressor.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <vector>

#include "cbo/core/errors.hpp"
#include "cbo/core/random.hpp"
#include "cbo/gp/covariance.hpp"
#include "cbo/gp/training.hpp"

namespace cbo::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

void standardization(const Eigen::VectorXd& y, bool enabled, double* offset, double* scale) {
  *offset = 0.0;
  *scale = 1.0;
  if (!enabled || y.size() == 0) return;
  *offset = y.mean();
  if (y.size() < 2) return;
  const double var = (y.array() - *offset).square().sum() / static_cast<double>(y.size());
  const double sd = std::sqrt(var);
  if (sd > 1e-12 * (1.0 + std::abs(*offset))) *scale = sd;
}

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x, const std::optional<BoxDomain>& box) {
  if (!box) return x;
  if (static_cast<std::size_t>(x.cols()) != box->dims()) throw InputError("input dimension does not match input box");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d)
    out.col(d) = (x.col(d).array() - box->lower()[d]) / (box->upper()[d] - box->lower()[d]);
  return out;
}

}  // namespace

NormalizedData normalize_data(const Dataset& data, const GpOptions& options) {
  NormalizedData out;
  standardization(data.outputs, options.standardize_outputs, &out.offset, &out.scale);
  out.inputs = normalize_rows(data.inputs, options.input_box);
  out.outputs = (data.outputs.array() - out.offset) / out.scale;
  return out;
}

GPRegressor::GPRegressor(Dataset data, KernelSpec kernel, double noise_variance, GpOptions options)
    : data_(std::move(data)), kernel_(std::move(kernel)), noise_variance_(noise_variance), options_(std::move(options)) {
  kernel_.validate();
  data_.validate();
  if (data_.dims() != kernel_.input_dim())
    throw InputError("GPRegressor: data has " + std::to_string(data_.dims()) + " input dims, kernel expects " +
                     std::to_string(kernel_.input_dim()));
  if (!(noise_variance_ >= 0.0) || !std::isfinite(noise_variance_))
    throw InputError("GPRegressor: noise variance must be a nonnegative finite number");

  standardization(data_.outputs, options_.standardize_outputs, &y_offset_, &y_scale_);
  x_scaled_ = scale_inputs(normalize_rows(data_.inputs, options_.input_box), kernel_);
  const auto n = static_cast<Eigen::Index>(data_.size());
  if (n == 0) {
    alpha_.resize(0);
    lml_ = 0.0;
    return;
  }
  Eigen::MatrixXd cov = cross_covariance(kernel_, x_scaled_, x_scaled_);
  cov.diagonal().array() += noise_variance_;
  JitteredCholesky f = factorize_with_jitter(cov, kernel_.signal_variance);
  llt_ = std::move(f.llt);
  jitter_ = f.jitter;
  const Eigen::VectorXd y = normalized_outputs();
  alpha_ = llt_.solve(y);
  lml_ = -0.5 * y.dot(alpha_) - 0.5 * log_det(llt_) - 0.5 * static_cast<double>(n) * kLog2Pi;
}

Eigen::MatrixXd GPRegressor::normalized_inputs() const { return normalize_rows(data_.inputs, options_.input_box); }

Eigen::VectorXd GPRegressor::normalize_input(const Eigen::VectorXd& x) const {
  if (static_cast<std::size_t>(x.size()) != input_dim()) throw InputError("GPRegressor: query dimension mismatch");
  return options_.input_box ? options_.input_box->to_unit(x) : x;
}

Eigen::VectorXd GPRegressor::normalized_outputs() const {
  return (data_.outputs.array() - y_offset_) / y_scale_;
}

Prediction GPRegressor::predict(std::span<const double> x) const {
  if (x.size() != input_dim())
    throw InputError("GPRegressor::predict: query has " + std::to_string(x.size()) + " dims, model expects " +
                     std::to_string(input_dim()));
  Eigen::MatrixXd q(1, static_cast<Eigen::Index>(x.size()));
  q.row(0) = to_vector(x).transpose();
  Eigen::VectorXd mean, var;
  predict_batch(q, &mean, &var);
  return {mean[0], var[0]};
}

void GPRegressor::predict_batch(const Eigen::MatrixXd& points, Eigen::VectorXd* mean, Eigen::VectorXd* variance) const {
  if (static_cast<std::size_t>(points.cols()) != input_dim())
    throw InputError("GPRegressor::predict_batch: query dimension mismatch");
  const Eigen::Index m = points.rows();
  const double prior = kernel_.signal_variance;
  if (data_.size() == 0) {
    if (mean) *mean = Eigen::VectorXd::Constant(m, y_offset_);
    if (variance) *variance = Eigen::VectorXd::Constant(m, prior * y_scale_ * y_scale_);
    return;
  }
  const Eigen::MatrixXd q_scaled = scale_inputs(normalize_rows(points, options_.input_box), kernel_);
  Eigen::MatrixXd k_star = cross_covariance(kernel_, x_scaled_, q_scaled);  // N x M
  if (mean) *mean = ((k_star.transpose() * alpha_).array() * y_scale_ + y_offset_).matrix();
  if (variance) {
    llt_.matrixL().solveInPlace(k_star);
    Eigen::VectorXd var = (prior - k_star.colwise().squaredNorm().transpose().array()).matrix();
    *variance = (var.array().max(0.0) * (y_scale_ * y_scale_)).matrix();
  }
}

GPRegressor GPRegressor::with_data(Dataset data) const {
  return GPRegressor(std::move(data), kernel_, noise_variance_, options_);
}

GPRegressor GPRegressor::with_hyperparameters(KernelSpec kernel, double noise_variance) const {
  return GPRegressor(data_, std::move(kernel), noise_variance, options_);
}

Eigen::VectorXd pack_log_params(const KernelSpec& kernel, double noise_variance) {
  const auto d = static_cast<Eigen::Index>(kernel.input_dim());
  Eigen::VectorXd p(d + 2);
  for (Eigen::Index i = 0; i < d; ++i) p[i] = std::log(kernel.lengthscales[static_cast<std::size_t>(i)]);
  p[d] = std::log(kernel.signal_variance);
  p[d + 1] = std::log(std::max(noise_variance, std::numeric_limits<double>::min()));
  return p;
}

void unpack_log_params(const Eigen::VectorXd& p, KernelSpec* kernel, double* noise_variance) {
  const auto d = static_cast<Eigen::Index>(kernel->input_dim());
  for (Eigen::Index i = 0; i < d; ++i) kernel->lengthscales[static_cast<std::size_t>(i)] = std::exp(p[i]);
  kernel->signal_variance = std::exp(p[d]);
  *noise_variance = std::exp(p[d + 1]);
}

double negative_log_marginal_likelihood(const Eigen::MatrixXd& x_normalized, const Eigen::VectorXd& y,
                                        const KernelSpec& structure, const Eigen::VectorXd& log_params,
                                        Eigen::VectorXd* gradient) {
  KernelSpec kernel = structure;
  double noise = 0.0;
  unpack_log_params(log_params, &kernel, &noise);
  const Eigen::Index n = x_normalized.rows();
  const auto dims = static_cast<Eigen::Index>(kernel.input_dim());

  const Eigen::MatrixXd xs = scale_inputs(x_normalized, kernel);
  const Eigen::MatrixXd k_f = cross_covariance(kernel, xs, xs);
  Eigen::MatrixXd cov = k_f;
  cov.diagonal().array() += noise;
  JitteredCholesky f;
  if (!try_factorize_with_jitter(cov, kernel.signal_variance, &f)) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = f.llt.solve(y);
  const double value = 0.5 * y.dot(alpha) + 0.5 * log_det(f.llt) + 0.5 * static_cast<double>(n) * kLog2Pi;
  if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();

  if (gradient) {
    // d(-lml)/dp = -1/2 tr(W dK/dp), W = alpha alpha^T - K^-1.
    Eigen::MatrixXd w = -inverse_from_cholesky(f.llt);
    w.noalias() += alpha * alpha.transpose();
    gradient->setZero(dims + 2);
    gradient->head(dims) = -0.5 * lengthscale_trace_terms(kernel, xs, k_f, w);
    (*gradient)[dims] = -0.5 * (w.array() * k_f.array()).sum();
    (*gradient)[dims + 1] = -0.5 * noise * w.trace();
  }
  return value;
}

namespace {

struct LogBounds {
  Eigen::VectorXd lower, upper;
  Eigen::VectorXd sample_lower, sample_upper;
};

LogBounds log_bounds(const KernelSpec& kernel, const Eigen::MatrixXd& x_normalized, const TrainConfig& cfg) {
  const auto d = static_cast<Eigen::Index>(kernel.input_dim());
  LogBounds b;
  b.lower.resize(d + 2);
  b.upper.resize(d + 2);
  b.sample_lower.resize(d + 2);
  b.sample_upper.resize(d + 2);
  for (Eigen::Index i = 0; i < d; ++i) {
    double range = 1.0;
    if (x_normalized.rows() > 1) {
      const double r = x_normalized.col(i).maxCoeff() - x_normalized.col(i).minCoeff();
      if (r > 0.0) range = r;
    }
    b.lower[i] = std::log(cfg.bounds.lengthscale_min * range);
    b.upper[i] = std::log(cfg.bounds.lengthscale_max * range);
    b.sample_lower[i] = std::log(0.05 * range);
    b.sample_upper[i] = std::log(2.0 * range);
  }
  b.lower[d] = std::log(cfg.bounds.signal_variance_min);
  b.upper[d] = std::log(cfg.bounds.signal_variance_max);
  b.sample_lower[d] = std::log(0.1);
  b.sample_upper[d] = std::log(10.0);
  b.lower[d + 1] = std::log(cfg.bounds.noise_variance_min);
  b.upper[d + 1] = std::log(cfg.bounds.noise_variance_max);
  b.sample_lower[d + 1] = std::log(std::max(1e-6, cfg.bounds.noise_variance_min));
  b.sample_upper[d + 1] = std::log(std::min(1e-1, cfg.bounds.noise_variance_max));
  for (Eigen::Index i = 0; i < d + 2; ++i) {
    b.sample_lower[i] = std::clamp(b.sample_lower[i], b.lower[i], b.upper[i]);
    b.sample_upper[i] = std::clamp(b.sample_upper[i], b.lower[i], b.upper[i]);
  }
  return b;
}

GPRegressor fit_from(const Dataset& data, const KernelSpec& initial, double initial_noise, const TrainConfig& cfg,
                     const GpOptions& options) {
  if (data.size() == 0) throw InputError("gp_fit: empty dataset");
  data.validate();
  initial.validate();
  const NormalizedData nd = normalize_data(data, options);
  const Eigen::MatrixXd& xn = nd.inputs;
  const Eigen::VectorXd& yn = nd.outputs;

  LogBounds b = log_bounds(initial, xn, cfg);
  const auto d = static_cast<Eigen::Index>(initial.input_dim());
  if (!cfg.optimize_noise) {
    const double fixed = std::log(std::max(initial_noise, std::numeric_limits<double>::min()));
    b.lower[d + 1] = b.upper[d + 1] = fixed;
    b.sample_lower[d + 1] = b.sample_upper[d + 1] = fixed;
  }

  std::vector<Eigen::VectorXd> starts;
  starts.push_back(pack_log_params(initial, initial_noise).cwiseMax(b.lower).cwiseMin(b.upper));
  Rng rng(cfg.seed);
  for (int r = 1; r < cfg.restarts; ++r) {
    Eigen::VectorXd s(d + 2);
    for (Eigen::Index i = 0; i < d + 2; ++i) s[i] = uniform(rng, b.sample_lower[i], b.sample_upper[i]);
    starts.push_back(s);
  }

  const auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
    return negative_log_marginal_likelihood(xn, yn, initial, p, g);
  };
  const optim::BfgsResult best = multistart_minimize(objective, starts, b.lower, b.upper, cfg.max_iterations);

  KernelSpec kernel = initial;
  double noise = initial_noise;
  unpack_log_params(best.x, &kernel, &noise);
  return GPRegressor(data, std::move(kernel), noise, options);
}

}  // namespace

GPRegressor gp_fit(const Dataset& data, const KernelSpec& initial, const TrainConfig& config,
                   const GpOptions& options) {
  return fit_from(data, initial, config.initial_noise_variance, config, options);
}

GPRegressor gp_refit(const GPRegressor& warm, const Dataset& data, const TrainConfig& config) {
  return fit_from(data, warm.kernel(), warm.noise_variance(), config, warm.options());
}

}  // namespace cbo::gp
