#pragma once

// Dense covariance assembly and factorization shared by the single- and
// multi-output regressors.

#include <Eigen/Cholesky>
#include <Eigen/Core>

#include "cbo/gp/kernel.hpp"

namespace cbo::gp {

/// Divides column d of `x` (N x D) by lengthscale d. The result is the
/// dimension-major layout the SIMD kernels consume.
Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& x, const KernelSpec& kernel);

/// K(a, b) for lengthscale-scaled inputs, |a| x |b|.
Eigen::MatrixXd cross_covariance(const KernelSpec& kernel, const Eigen::MatrixXd& a_scaled,
                                 const Eigen::MatrixXd& b_scaled);

struct JitteredCholesky {
  Eigen::LLT<Eigen::MatrixXd> llt;
  double jitter = 0.0;
};

/// Cholesky of `cov`, retrying with diagonal jitter 1e-8 * reference_variance
/// doubled up to 1e-4 * reference_variance. Throws NumericalError when every
/// attempt fails.
JitteredCholesky factorize_with_jitter(const Eigen::MatrixXd& cov, double reference_variance);

/// Non-throwing variant; returns false when the matrix cannot be factorized.
bool try_factorize_with_jitter(const Eigen::MatrixXd& cov, double reference_variance, JitteredCholesky* out);

/// Log-determinant from a Cholesky factor.
double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt);

/// (L L^T)^-1 via L^-1, symmetric.
Eigen::MatrixXd inverse_from_cholesky(const Eigen::LLT<Eigen::MatrixXd>& llt);

/// t_d = sum_ij m_ij dK_ij/dlog l_d for lengthscale-scaled inputs `x_scaled`
/// and their covariance `k`. `m` must be symmetric.
Eigen::VectorXd lengthscale_trace_terms(const KernelSpec& kernel, const Eigen::MatrixXd& x_scaled,
                                        const Eigen::MatrixXd& k, const Eigen::MatrixXd& m);

}  // namespace cbo::gp
