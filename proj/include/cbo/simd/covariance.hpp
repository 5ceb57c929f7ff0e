#pragma once

// Batched stationary-covariance evaluation. The scalar path is the
// reference; vector paths must agree with it to a few ulp and are chosen at
// runtime from the CPU feature set.

#include <cstddef>
#include <cstdint>
#include <span>
#include <string_view>

namespace cbo::simd {

enum class FactorFamily : std::uint8_t { SquaredExponential, Matern32 };

/// One factor of a product kernel acting on dims [first_dim, first_dim + n_dims).
struct FactorLayout {
  FactorFamily family;
  std::size_t first_dim;
  std::size_t n_dims;
};

/// A set of points stored dimension-major: coordinate d of point i lives at
/// data[d * stride + i]. Coordinates are already divided by their lengthscale.
struct PointBlock {
  const double* data;
  std::size_t count;
  std::size_t stride;
};

enum class Backend : std::uint8_t { Scalar, Avx2 };

std::string_view backend_name(Backend b);
bool backend_available(Backend b);

/// Backend in use. Defaults to the widest available one unless the
/// environment variable CBO_SIMD=scalar is set at first use.
Backend active_backend();

/// Forces a backend (tests, benchmarking). Throws InputError if unavailable.
void set_backend(Backend b);

/// out[j * ld_out + i] = variance * prod_f phi_f(a_i, b_j) for all i < a.count, j < b.count.
void covariance_block(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                      double variance, double* out, std::size_t ld_out);

/// out[i] = exp(x[i]) for x[i] <= 0; the same exponential the vector kernels use.
void exp_nonpositive(std::span<const double> x, std::span<double> out);

namespace detail {
void covariance_block_scalar(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                             double variance, double* out, std::size_t ld_out);
void exp_nonpositive_scalar(std::span<const double> x, std::span<double> out);
#if defined(__x86_64__) || defined(_M_X64)
void covariance_block_avx2(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                           double variance, double* out, std::size_t ld_out);
void exp_nonpositive_avx2(std::span<const double> x, std::span<double> out);
#endif
}  // namespace detail

}  // namespace cbo::simd
