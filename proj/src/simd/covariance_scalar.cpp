#include "cbo/simd/covariance.hpp"

#include <cmath>

namespace cbo::simd::detail {

void covariance_block_scalar(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                             double variance, double* out, std::size_t ld_out) {
  for (std::size_t j = 0; j < b.count; ++j) {
    for (std::size_t i = 0; i < a.count; ++i) {
      double exponent = 0.0;
      double poly = 1.0;
      for (const FactorLayout& f : factors) {
        double r2 = 0.0;
        for (std::size_t d = f.first_dim; d < f.first_dim + f.n_dims; ++d) {
          const double diff = a.data[d * a.stride + i] - b.data[d * b.stride + j];
          r2 += diff * diff;
        }
        if (f.family == FactorFamily::SquaredExponential) {
          exponent -= 0.5 * r2;
        } else {
          const double s = std::sqrt(3.0 * r2);
          exponent -= s;
          poly *= 1.0 + s;
        }
      }
      out[j * ld_out + i] = variance * poly * std::exp(exponent);
    }
  }
}

void exp_nonpositive_scalar(std::span<const double> x, std::span<double> out) {
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = std::exp(x[i]);
}

}  // namespace cbo::simd::detail
