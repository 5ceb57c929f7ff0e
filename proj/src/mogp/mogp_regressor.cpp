#include "cbo/mogp/mogp_regressor.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <limits>

#include "cbo/core/errors.hpp"
#include "cbo/core/random.hpp"
#include "cbo/gp/covariance.hpp"
#include "cbo/gp/training.hpp"

namespace cbo::mogp {

using gp::KernelSpec;

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

Eigen::MatrixXd normalize_rows(const Eigen::MatrixXd& x, const std::optional<BoxDomain>& box) {
  if (!box) return x;
  if (static_cast<std::size_t>(x.cols()) != box->dims()) throw InputError("input dimension does not match input box");
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d)
    out.col(d) = (x.col(d).array() - box->lower()[d]) / (box->upper()[d] - box->lower()[d]);
  return out;
}

void column_standardization(const Eigen::MatrixXd& y, bool enabled, Eigen::VectorXd* offset, Eigen::VectorXd* scale) {
  const Eigen::Index q = y.cols();
  *offset = Eigen::VectorXd::Zero(q);
  *scale = Eigen::VectorXd::Ones(q);
  if (!enabled || y.rows() == 0) return;
  for (Eigen::Index c = 0; c < q; ++c) {
    const double m = y.col(c).mean();
    (*offset)[c] = m;
    if (y.rows() < 2) continue;
    const double sd = std::sqrt((y.col(c).array() - m).square().sum() / static_cast<double>(y.rows()));
    if (sd > 1e-12 * (1.0 + std::abs(m))) (*scale)[c] = sd;
  }
}

Eigen::VectorXd stack(const Eigen::MatrixXd& y) {
  return Eigen::Map<const Eigen::VectorXd>(y.data(), y.size());
}

bool full_rank(std::size_t outputs, std::size_t rank) { return rank == 0 || rank >= outputs; }

std::size_t coreg_param_count(std::size_t q, std::size_t rank) {
  return full_rank(q, rank) ? q * (q + 1) / 2 : q * rank + q;
}

}  // namespace

CoregionalizationMatrix CoregionalizationMatrix::identity(std::size_t outputs, double scale) {
  const auto q = static_cast<Eigen::Index>(outputs);
  return {std::sqrt(scale) * Eigen::MatrixXd::Identity(q, q), Eigen::VectorXd::Zero(q)};
}

CoregionalizationMatrix CoregionalizationMatrix::from_matrix(const Eigen::MatrixXd& b) {
  if (b.rows() != b.cols() || b.rows() == 0) throw InputError("coregionalization matrix must be square");
  if ((b - b.transpose()).cwiseAbs().maxCoeff() > 1e-12 * (1.0 + b.cwiseAbs().maxCoeff()))
    throw InputError("coregionalization matrix must be symmetric");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(0.5 * (b + b.transpose()));
  if (es.eigenvalues().minCoeff() < -1e-8) throw InputError("coregionalization matrix must be positive semidefinite");
  const Eigen::VectorXd root = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
  return {es.eigenvectors() * root.asDiagonal(), Eigen::VectorXd::Zero(b.rows())};
}

Eigen::MatrixXd CoregionalizationMatrix::matrix() const {
  Eigen::MatrixXd b = a * a.transpose();
  b.diagonal() += d;
  return b;
}

double CoregionalizationMatrix::correlation(std::size_t q1, std::size_t q2) const {
  const Eigen::MatrixXd b = matrix();
  const auto i = static_cast<Eigen::Index>(q1), j = static_cast<Eigen::Index>(q2);
  return b(i, j) / std::sqrt(b(i, i) * b(j, j));
}

void CoregionalizationMatrix::validate() const {
  if (a.rows() == 0 || a.cols() == 0) throw InputError("coregionalization: empty factor");
  if (d.size() != a.rows()) throw InputError("coregionalization: diagonal size mismatch");
  if (!a.allFinite() || !d.allFinite() || (d.array() < 0.0).any())
    throw InputError("coregionalization: factors must be finite with nonnegative diagonal");
}

MultiDataset::MultiDataset(Eigen::MatrixXd x, Eigen::MatrixXd y) : inputs(std::move(x)), outputs(std::move(y)) {
  validate();
}

MultiDataset MultiDataset::empty(std::size_t dims, std::size_t q) {
  MultiDataset m;
  m.inputs.resize(0, static_cast<Eigen::Index>(dims));
  m.outputs.resize(0, static_cast<Eigen::Index>(q));
  return m;
}

void MultiDataset::validate() const {
  if (inputs.rows() != outputs.rows()) throw InputError("MultiDataset: input/output row counts differ");
  if (outputs.cols() < 1) throw InputError("MultiDataset: need at least one output");
  if (!inputs.allFinite() || !outputs.allFinite()) throw InputError("MultiDataset: non-finite entries");
}

void MultiDataset::append(std::span<const double> x, std::span<const double> y) {
  if (static_cast<Eigen::Index>(x.size()) != inputs.cols() || static_cast<Eigen::Index>(y.size()) != outputs.cols())
    throw InputError("MultiDataset::append: dimension mismatch");
  const Eigen::Index n = inputs.rows();
  inputs.conservativeResize(n + 1, Eigen::NoChange);
  outputs.conservativeResize(n + 1, Eigen::NoChange);
  for (Eigen::Index d = 0; d < inputs.cols(); ++d) inputs(n, d) = x[static_cast<std::size_t>(d)];
  for (Eigen::Index q = 0; q < outputs.cols(); ++q) outputs(n, q) = y[static_cast<std::size_t>(q)];
}

Eigen::MatrixXd kronecker_covariance(const Eigen::MatrixXd& b, const Eigen::MatrixXd& k) {
  const Eigen::Index q = b.rows(), n = k.rows(), m = k.cols();
  Eigen::MatrixXd out(q * n, b.cols() * m);
  for (Eigen::Index i = 0; i < q; ++i)
    for (Eigen::Index j = 0; j < b.cols(); ++j) out.block(i * n, j * m, n, m) = b(i, j) * k;
  return out;
}

MOGPRegressor::MOGPRegressor(MultiDataset data, KernelSpec base_kernel, CoregionalizationMatrix coregionalization,
                             double noise_variance, gp::GpOptions options)
    : data_(std::move(data)),
      kernel_(std::move(base_kernel)),
      coreg_(std::move(coregionalization)),
      noise_variance_(noise_variance),
      options_(std::move(options)) {
  kernel_.validate();
  coreg_.validate();
  data_.validate();
  if (data_.dims() != kernel_.input_dim()) throw InputError("MOGPRegressor: input dimension mismatch");
  if (data_.outputs_count() != coreg_.outputs())
    throw InputError("MOGPRegressor: data has " + std::to_string(data_.outputs_count()) + " outputs, B is " +
                     std::to_string(coreg_.outputs()) + "x" + std::to_string(coreg_.outputs()));
  if (!(noise_variance_ >= 0.0) || !std::isfinite(noise_variance_))
    throw InputError("MOGPRegressor: noise variance must be a nonnegative finite number");

  b_ = coreg_.matrix();
  column_standardization(data_.outputs, options_.standardize_outputs, &y_offset_, &y_scale_);
  x_scaled_ = gp::scale_inputs(normalize_rows(data_.inputs, options_.input_box), kernel_);
  const auto n = static_cast<Eigen::Index>(data_.size());
  if (n == 0) return;

  Eigen::MatrixXd cov = kronecker_covariance(b_, gp::cross_covariance(kernel_, x_scaled_, x_scaled_));
  cov.diagonal().array() += noise_variance_;
  gp::JitteredCholesky f = gp::factorize_with_jitter(cov, kernel_.signal_variance * b_.diagonal().maxCoeff());
  llt_ = std::move(f.llt);
  jitter_ = f.jitter;
  const Eigen::VectorXd y = stacked_normalized_outputs();
  alpha_ = llt_.solve(y);
  lml_ = -0.5 * y.dot(alpha_) - 0.5 * gp::log_det(llt_) - 0.5 * static_cast<double>(y.size()) * kLog2Pi;
}

Eigen::MatrixXd MOGPRegressor::normalized_inputs() const { return normalize_rows(data_.inputs, options_.input_box); }

Eigen::VectorXd MOGPRegressor::stacked_normalized_outputs() const {
  Eigen::MatrixXd y = data_.outputs;
  for (Eigen::Index q = 0; q < y.cols(); ++q) y.col(q) = (y.col(q).array() - y_offset_[q]) / y_scale_[q];
  return stack(y);
}

void MOGPRegressor::predict_normalized(std::span<const double> x, Eigen::VectorXd* mean, Eigen::MatrixXd* cov) const {
  if (x.size() != input_dim())
    throw InputError("MOGPRegressor::predict: query has " + std::to_string(x.size()) + " dims, model expects " +
                     std::to_string(input_dim()));
  const auto q = static_cast<Eigen::Index>(outputs());
  const double k_ss = kernel_.signal_variance;
  if (data_.size() == 0) {
    *mean = Eigen::VectorXd::Zero(q);
    *cov = b_ * k_ss;
    return;
  }
  Eigen::MatrixXd query(1, static_cast<Eigen::Index>(x.size()));
  query.row(0) = to_vector(x).transpose();
  const Eigen::MatrixXd qs = gp::scale_inputs(normalize_rows(query, options_.input_box), kernel_);
  const Eigen::MatrixXd k_star = gp::cross_covariance(kernel_, x_scaled_, qs);  // N x 1
  // (B (x) k_*)^T, NQ x Q.
  Eigen::MatrixXd cross = kronecker_covariance(b_, k_star);
  *mean = cross.transpose() * alpha_;
  llt_.matrixL().solveInPlace(cross);
  *cov = b_ * k_ss - cross.transpose() * cross;
  *cov = 0.5 * (*cov + cov->transpose());
}

Eigen::MatrixXd MOGPRegressor::normalized_covariance(std::span<const double> x) const {
  Eigen::VectorXd m;
  Eigen::MatrixXd c;
  predict_normalized(x, &m, &c);
  return c;
}

MultiPrediction MOGPRegressor::predict(std::span<const double> x) const {
  Eigen::VectorXd m;
  Eigen::MatrixXd c;
  predict_normalized(x, &m, &c);
  // Clamp tiny negative eigenvalues from cancellation.
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(c);
  if (es.eigenvalues().minCoeff() < 0.0)
    c = es.eigenvectors() * es.eigenvalues().cwiseMax(0.0).asDiagonal() * es.eigenvectors().transpose();
  MultiPrediction p;
  p.mean = (m.array() * y_scale_.array() + y_offset_.array()).matrix();
  p.covariance = y_scale_.asDiagonal() * c * y_scale_.asDiagonal();
  return p;
}

MOGPRegressor MOGPRegressor::with_data(MultiDataset data) const {
  return MOGPRegressor(std::move(data), kernel_, coreg_, noise_variance_, options_);
}

Eigen::VectorXd pack_mogp_params(const KernelSpec& base, const CoregionalizationMatrix& coreg, double noise) {
  const std::size_t q = coreg.outputs(), r = coreg.rank();
  const auto dims = static_cast<Eigen::Index>(base.input_dim());
  Eigen::VectorXd p(dims + static_cast<Eigen::Index>(coreg_param_count(q, r)) + 1);
  for (Eigen::Index i = 0; i < dims; ++i) p[i] = std::log(base.lengthscales[static_cast<std::size_t>(i)]);
  Eigen::Index k = dims;
  if (full_rank(q, r)) {
    Eigen::MatrixXd b = coreg.matrix();
    gp::JitteredCholesky f = gp::factorize_with_jitter(b, b.diagonal().maxCoeff());
    const Eigen::MatrixXd l = f.llt.matrixL();
    for (Eigen::Index i = 0; i < static_cast<Eigen::Index>(q); ++i)
      for (Eigen::Index j = 0; j <= i; ++j) p[k++] = i == j ? std::log(l(i, i) * l(i, i)) : l(i, j);
  } else {
    for (Eigen::Index i = 0; i < coreg.a.rows(); ++i)
      for (Eigen::Index j = 0; j < coreg.a.cols(); ++j) p[k++] = coreg.a(i, j);
    for (Eigen::Index i = 0; i < coreg.d.size(); ++i)
      p[k++] = std::log(std::max(coreg.d[i], std::numeric_limits<double>::min()));
  }
  p[k] = std::log(std::max(noise, std::numeric_limits<double>::min()));
  return p;
}

void unpack_mogp_params(const Eigen::VectorXd& p, std::size_t outputs, std::size_t rank, KernelSpec* base,
                        CoregionalizationMatrix* coreg, double* noise) {
  const auto dims = static_cast<Eigen::Index>(base->input_dim());
  const auto q = static_cast<Eigen::Index>(outputs);
  for (Eigen::Index i = 0; i < dims; ++i) base->lengthscales[static_cast<std::size_t>(i)] = std::exp(p[i]);
  base->signal_variance = 1.0;
  Eigen::Index k = dims;
  if (full_rank(outputs, rank)) {
    coreg->a = Eigen::MatrixXd::Zero(q, q);
    coreg->d = Eigen::VectorXd::Zero(q);
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j <= i; ++j) coreg->a(i, j) = i == j ? std::exp(0.5 * p[k++]) : p[k++];
  } else {
    const auto r = static_cast<Eigen::Index>(rank);
    coreg->a.resize(q, r);
    coreg->d.resize(q);
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j < r; ++j) coreg->a(i, j) = p[k++];
    for (Eigen::Index i = 0; i < q; ++i) coreg->d[i] = std::exp(p[k++]);
  }
  *noise = std::exp(p[k]);
}

double mogp_negative_log_marginal_likelihood(const Eigen::MatrixXd& x_normalized, const Eigen::VectorXd& y,
                                             const KernelSpec& structure, std::size_t outputs, std::size_t rank,
                                             const Eigen::VectorXd& params, Eigen::VectorXd* gradient) {
  KernelSpec kernel = structure;
  CoregionalizationMatrix coreg;
  double noise = 0.0;
  unpack_mogp_params(params, outputs, rank, &kernel, &coreg, &noise);
  const Eigen::MatrixXd b = coreg.matrix();
  const Eigen::Index n = x_normalized.rows();
  const auto q = static_cast<Eigen::Index>(outputs);
  const auto dims = static_cast<Eigen::Index>(kernel.input_dim());

  const Eigen::MatrixXd xs = gp::scale_inputs(x_normalized, kernel);
  const Eigen::MatrixXd k = gp::cross_covariance(kernel, xs, xs);
  Eigen::MatrixXd cov = kronecker_covariance(b, k);
  cov.diagonal().array() += noise;
  gp::JitteredCholesky f;
  if (!gp::try_factorize_with_jitter(cov, b.diagonal().maxCoeff(), &f)) return std::numeric_limits<double>::infinity();
  const Eigen::VectorXd alpha = f.llt.solve(y);
  const double value =
      0.5 * y.dot(alpha) + 0.5 * gp::log_det(f.llt) + 0.5 * static_cast<double>(y.size()) * kLog2Pi;
  if (!std::isfinite(value)) return std::numeric_limits<double>::infinity();
  if (!gradient) return value;

  Eigen::MatrixXd w = -gp::inverse_from_cholesky(f.llt);
  w.noalias() += alpha * alpha.transpose();

  // m(q, q') = <W_qq', K>, weighted(i, j) = sum_qq' B_qq' W_qq'(i, j).
  Eigen::MatrixXd m(q, q);
  Eigen::MatrixXd weighted = Eigen::MatrixXd::Zero(n, n);
  for (Eigen::Index a = 0; a < q; ++a)
    for (Eigen::Index c = 0; c < q; ++c) {
      const auto blk = w.block(a * n, c * n, n, n);
      m(a, c) = (blk.array() * k.array()).sum();
      weighted += b(a, c) * blk;
    }

  gradient->setZero(params.size());
  gradient->head(dims) = -0.5 * gp::lengthscale_trace_terms(kernel, xs, k, weighted);

  // d<B, M>/dA = 2 M A; the objective carries -1/2.
  const Eigen::MatrixXd ga = -(m * coreg.a);
  Eigen::Index idx = dims;
  if (full_rank(outputs, rank)) {
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j <= i; ++j)
        (*gradient)[idx++] = i == j ? ga(i, i) * 0.5 * coreg.a(i, i) : ga(i, j);
  } else {
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j < coreg.a.cols(); ++j) (*gradient)[idx++] = ga(i, j);
    for (Eigen::Index i = 0; i < q; ++i) (*gradient)[idx++] = -0.5 * m(i, i) * coreg.d[i];
  }
  (*gradient)[idx] = -0.5 * noise * w.trace();
  return value;
}

namespace {

MOGPRegressor fit_from(const MultiDataset& data, const KernelSpec& base, const CoregionalizationMatrix* warm_b,
                       double init_noise, std::size_t outputs, const MogpTrainConfig& config,
                       const gp::GpOptions& options) {
  if (data.size() == 0) throw InputError("mogp_fit: empty dataset");
  data.validate();
  base.validate();
  if (outputs == 0 || data.outputs_count() != outputs)
    throw InputError("mogp_fit: every output must be a " + std::to_string(outputs) + "-vector");
  const std::size_t rank = full_rank(outputs, config.rank) ? outputs : config.rank;
  const gp::TrainConfig& cfg = config.base;

  const Eigen::MatrixXd xn = normalize_rows(data.inputs, options.input_box);
  Eigen::VectorXd offset, scale;
  column_standardization(data.outputs, options.standardize_outputs, &offset, &scale);
  Eigen::MatrixXd yn = data.outputs;
  for (Eigen::Index c = 0; c < yn.cols(); ++c) yn.col(c) = (yn.col(c).array() - offset[c]) / scale[c];
  const Eigen::VectorXd ys = stack(yn);

  const auto dims = static_cast<Eigen::Index>(base.input_dim());
  const auto q = static_cast<Eigen::Index>(outputs);
  const Eigen::Index np = dims + static_cast<Eigen::Index>(coreg_param_count(outputs, rank)) + 1;
  Eigen::VectorXd lo(np), hi(np), slo(np), shi(np);
  for (Eigen::Index i = 0; i < dims; ++i) {
    double range = 1.0;
    if (xn.rows() > 1) {
      const double r = xn.col(i).maxCoeff() - xn.col(i).minCoeff();
      if (r > 0.0) range = r;
    }
    lo[i] = std::log(cfg.bounds.lengthscale_min * range);
    hi[i] = std::log(cfg.bounds.lengthscale_max * range);
    slo[i] = std::log(0.05 * range);
    shi[i] = std::log(2.0 * range);
  }
  Eigen::Index k = dims;
  const double coef_bound = std::sqrt(cfg.bounds.signal_variance_max);
  if (rank == outputs) {
    for (Eigen::Index i = 0; i < q; ++i)
      for (Eigen::Index j = 0; j <= i; ++j, ++k) {
        if (i == j) {
          lo[k] = std::log(cfg.bounds.signal_variance_min);
          hi[k] = std::log(cfg.bounds.signal_variance_max);
          slo[k] = std::log(0.1);
          shi[k] = std::log(10.0);
        } else {
          lo[k] = -coef_bound;
          hi[k] = coef_bound;
          slo[k] = -1.0;
          shi[k] = 1.0;
        }
      }
  } else {
    for (Eigen::Index i = 0; i < q * static_cast<Eigen::Index>(rank); ++i, ++k) {
      lo[k] = -coef_bound;
      hi[k] = coef_bound;
      slo[k] = -1.0;
      shi[k] = 1.0;
    }
    for (Eigen::Index i = 0; i < q; ++i, ++k) {
      lo[k] = std::log(cfg.bounds.noise_variance_min);
      hi[k] = std::log(cfg.bounds.signal_variance_max);
      slo[k] = std::log(1e-3);
      shi[k] = std::log(1.0);
    }
  }
  lo[k] = std::log(cfg.bounds.noise_variance_min);
  hi[k] = std::log(cfg.bounds.noise_variance_max);
  slo[k] = std::log(std::max(1e-6, cfg.bounds.noise_variance_min));
  shi[k] = std::log(std::min(1e-1, cfg.bounds.noise_variance_max));
  if (!cfg.optimize_noise) lo[k] = hi[k] = slo[k] = shi[k] = std::log(init_noise);
  for (Eigen::Index i = 0; i < np; ++i) {
    slo[i] = std::clamp(slo[i], lo[i], hi[i]);
    shi[i] = std::clamp(shi[i], lo[i], hi[i]);
  }

  CoregionalizationMatrix init_b;
  if (warm_b && warm_b->rank() == rank && warm_b->outputs() == outputs) {
    init_b = *warm_b;
  } else if (rank == outputs) {
    init_b = CoregionalizationMatrix::identity(outputs, base.signal_variance);
  } else {
    init_b.a = Eigen::MatrixXd::Constant(q, static_cast<Eigen::Index>(rank), std::sqrt(base.signal_variance / rank));
    init_b.d = Eigen::VectorXd::Constant(q, 0.1 * base.signal_variance);
  }
  std::vector<Eigen::VectorXd> starts;
  starts.push_back(pack_mogp_params(base, init_b, init_noise).cwiseMax(lo).cwiseMin(hi));
  Rng rng(cfg.seed);
  for (int r = 1; r < cfg.restarts; ++r) {
    Eigen::VectorXd s(np);
    for (Eigen::Index i = 0; i < np; ++i) s[i] = uniform(rng, slo[i], shi[i]);
    starts.push_back(s);
  }

  const auto objective = [&](const Eigen::VectorXd& p, Eigen::VectorXd* g) {
    return mogp_negative_log_marginal_likelihood(xn, ys, base, outputs, rank, p, g);
  };
  const optim::BfgsResult best = gp::multistart_minimize(objective, starts, lo, hi, cfg.max_iterations);

  KernelSpec kernel = base;
  CoregionalizationMatrix coreg;
  double noise = 0.0;
  unpack_mogp_params(best.x, outputs, rank, &kernel, &coreg, &noise);
  return MOGPRegressor(data, std::move(kernel), std::move(coreg), noise, options);
}

}  // namespace

MOGPRegressor mogp_fit(const MultiDataset& data, const KernelSpec& base, std::size_t outputs,
                       const MogpTrainConfig& config, const gp::GpOptions& options) {
  return fit_from(data, base, nullptr, config.base.initial_noise_variance, outputs, config, options);
}

MOGPRegressor mogp_refit(const MOGPRegressor& warm, const MultiDataset& data, const MogpTrainConfig& config) {
  return fit_from(data, warm.base_kernel(), &warm.coregionalization(), warm.noise_variance(), warm.outputs(), config,
                  warm.options());
}

}  // namespace cbo::mogp
