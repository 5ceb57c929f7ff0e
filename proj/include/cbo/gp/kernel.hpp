#pragma once

#include <Eigen/Core>
#include <span>
#include <string>
#include <vector>

#include "cbo/simd/covariance.hpp"

namespace cbo::gp {

enum class KernelFamily { SquaredExponential, Matern32, Product };

std::string to_string(KernelFamily f);
KernelFamily kernel_family_from_string(const std::string& s);

/// One stationary factor of a product kernel over dims [first_dim, first_dim + n_dims).
struct KernelSlice {
  KernelFamily family = KernelFamily::Matern32;
  std::size_t first_dim = 0;
  std::size_t n_dims = 0;

  bool operator==(const KernelSlice&) const = default;
};

/// Stationary ARD kernel, or a product of stationary kernels on disjoint
/// input slices. Per-dimension lengthscales live in one flat vector; the
/// factors of a product carry unit variance and share `signal_variance`.
struct KernelSpec {
  KernelFamily family = KernelFamily::Matern32;
  std::vector<double> lengthscales;
  double signal_variance = 1.0;
  std::vector<KernelSlice> slices;  // Product only; must tile [0, D) in order

  static KernelSpec squared_exponential(std::vector<double> lengthscales, double signal_variance = 1.0);
  static KernelSpec matern32(std::vector<double> lengthscales, double signal_variance = 1.0);
  static KernelSpec product(std::vector<KernelSlice> slices, std::vector<double> lengthscales,
                            double signal_variance = 1.0);

  std::size_t input_dim() const { return lengthscales.size(); }

  /// Throws InputError on non-positive hyperparameters or a bad slice partition.
  void validate() const;

  /// Factor layout for the batched covariance kernels.
  std::vector<simd::FactorLayout> layout() const;

  bool operator==(const KernelSpec&) const = default;
};

/// Direct evaluation of k(x, x2). Reference path; does not touch the SIMD layer.
double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> x2);

/// d k(x_i, x_j) / d log(lengthscale_d) divided by k(x_i, x_j), for the
/// lengthscale-scaled coordinate differences `scaled_diff`.
void log_lengthscale_sensitivity(const KernelSpec& spec, std::span<const double> scaled_diff,
                                 std::span<double> out);

}  // namespace cbo::gp
