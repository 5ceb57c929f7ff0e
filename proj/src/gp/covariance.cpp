#include "cbo/gp/covariance.hpp"

#include <vector>

#include <cmath>

#include "cbo/core/errors.hpp"

namespace cbo::gp {

Eigen::MatrixXd scale_inputs(const Eigen::MatrixXd& x, const KernelSpec& kernel) {
  if (static_cast<std::size_t>(x.cols()) != kernel.input_dim())
    throw InputError("input dimension " + std::to_string(x.cols()) + " does not match kernel dimension " +
                     std::to_string(kernel.input_dim()));
  Eigen::MatrixXd out(x.rows(), x.cols());
  for (Eigen::Index d = 0; d < x.cols(); ++d)
    out.col(d) = x.col(d) / kernel.lengthscales[static_cast<std::size_t>(d)];
  return out;
}

Eigen::MatrixXd cross_covariance(const KernelSpec& kernel, const Eigen::MatrixXd& a_scaled,
                                 const Eigen::MatrixXd& b_scaled) {
  Eigen::MatrixXd out(a_scaled.rows(), b_scaled.rows());
  if (out.size() == 0) return out;
  const auto layout = kernel.layout();
  const simd::PointBlock a{a_scaled.data(), static_cast<std::size_t>(a_scaled.rows()),
                           static_cast<std::size_t>(a_scaled.rows())};
  const simd::PointBlock b{b_scaled.data(), static_cast<std::size_t>(b_scaled.rows()),
                           static_cast<std::size_t>(b_scaled.rows())};
  simd::covariance_block(layout, a, b, kernel.signal_variance, out.data(), static_cast<std::size_t>(out.rows()));
  return out;
}

bool try_factorize_with_jitter(const Eigen::MatrixXd& cov, double reference_variance, JitteredCholesky* out) {
  out->llt.compute(cov);
  out->jitter = 0.0;
  if (out->llt.info() == Eigen::Success && out->llt.matrixLLT().diagonal().allFinite()) return true;
  const double ref = reference_variance > 0.0 ? reference_variance : 1.0;
  for (double jitter = 1e-8 * ref; jitter <= 1e-4 * ref * (1.0 + 1e-12); jitter *= 2.0) {
    Eigen::MatrixXd jittered = cov;
    jittered.diagonal().array() += jitter;
    out->llt.compute(jittered);
    if (out->llt.info() == Eigen::Success && out->llt.matrixLLT().diagonal().allFinite()) {
      out->jitter = jitter;
      return true;
    }
  }
  return false;
}

JitteredCholesky factorize_with_jitter(const Eigen::MatrixXd& cov, double reference_variance) {
  JitteredCholesky f;
  if (!try_factorize_with_jitter(cov, reference_variance, &f))
    throw NumericalError("covariance matrix is not positive definite after maximum jitter");
  return f;
}

double log_det(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  return 2.0 * llt.matrixLLT().diagonal().array().log().sum();
}

Eigen::MatrixXd inverse_from_cholesky(const Eigen::LLT<Eigen::MatrixXd>& llt) {
  const Eigen::Index n = llt.rows();
  Eigen::MatrixXd linv = Eigen::MatrixXd::Identity(n, n);
  llt.matrixL().solveInPlace(linv);
  Eigen::MatrixXd inv = Eigen::MatrixXd::Zero(n, n);
  inv.selfadjointView<Eigen::Lower>().rankUpdate(linv.transpose());
  inv.triangularView<Eigen::StrictlyUpper>() = inv.transpose();
  return inv;
}

Eigen::VectorXd lengthscale_trace_terms(const KernelSpec& kernel, const Eigen::MatrixXd& x_scaled,
                                        const Eigen::MatrixXd& k, const Eigen::MatrixXd& m) {
  constexpr double kSqrt3 = 1.7320508075688772935;
  const Eigen::Index n = x_scaled.rows();
  const Eigen::ArrayXXd g = m.array() * k.array();
  Eigen::VectorXd out = Eigen::VectorXd::Zero(x_scaled.cols());
  std::vector<KernelSlice> slices = kernel.slices;
  if (kernel.family != KernelFamily::Product) slices = {KernelSlice{kernel.family, 0, kernel.input_dim()}};
  Eigen::ArrayXXd diff2(n, n), weight(n, n);
  for (const KernelSlice& s : slices) {
    const auto first = static_cast<Eigen::Index>(s.first_dim), count = static_cast<Eigen::Index>(s.n_dims);
    if (s.family == KernelFamily::SquaredExponential) {
      // dk/dlog l_d = k u_d^2.
      weight = g;
    } else {
      // dk/dlog l_d = k 3 u_d^2 / (1 + sqrt3 r).
      Eigen::ArrayXXd r2 = Eigen::ArrayXXd::Zero(n, n);
      for (Eigen::Index d = first; d < first + count; ++d) {
        const Eigen::ArrayXd c = x_scaled.col(d).array();
        r2 += (c.replicate(1, n) - c.transpose().replicate(n, 1)).square();
      }
      weight = 3.0 * g / (1.0 + kSqrt3 * r2.sqrt());
    }
    for (Eigen::Index d = first; d < first + count; ++d) {
      const Eigen::ArrayXd c = x_scaled.col(d).array();
      diff2 = (c.replicate(1, n) - c.transpose().replicate(n, 1)).square();
      out[d] = (weight * diff2).sum();
    }
  }
  return out;
}

}  // namespace cbo::gp
