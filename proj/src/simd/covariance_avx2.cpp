// Compiled with -mavx2 -mfma. Nothing in this file may be called unless
// backend_available(Backend::Avx2) returned true.

#include "cbo/simd/covariance.hpp"

#include <immintrin.h>

#include <algorithm>
#include <array>

namespace cbo::simd::detail {

namespace {

// Cephes-style exp: range reduction by ln2 and a (2,3) Pade approximant on
// [-ln2/2, ln2/2]. Inputs below -708 flush to zero; inputs must be <= 0.
inline __m256d exp_pd(__m256d x) {
  const __m256d lower = _mm256_set1_pd(-708.0);
  const __m256d underflow = _mm256_cmp_pd(x, lower, _CMP_LT_OQ);
  x = _mm256_max_pd(x, lower);

  const __m256d log2e = _mm256_set1_pd(1.4426950408889634073599);
  const __m256d c1 = _mm256_set1_pd(6.93145751953125E-1);
  const __m256d c2 = _mm256_set1_pd(1.42860682030941723212E-6);

  __m256d n = _mm256_round_pd(_mm256_mul_pd(x, log2e), _MM_FROUND_TO_NEAREST_INT | _MM_FROUND_NO_EXC);
  x = _mm256_fnmadd_pd(n, c1, x);
  x = _mm256_fnmadd_pd(n, c2, x);

  const __m256d xx = _mm256_mul_pd(x, x);
  __m256d p = _mm256_set1_pd(1.26177193074810590878E-4);
  p = _mm256_fmadd_pd(p, xx, _mm256_set1_pd(3.02994407707441961300E-2));
  p = _mm256_fmadd_pd(p, xx, _mm256_set1_pd(9.99999999999999999910E-1));
  p = _mm256_mul_pd(p, x);

  __m256d q = _mm256_set1_pd(3.00198505138664455042E-6);
  q = _mm256_fmadd_pd(q, xx, _mm256_set1_pd(2.52448340349684104192E-3));
  q = _mm256_fmadd_pd(q, xx, _mm256_set1_pd(2.27265548208155028766E-1));
  q = _mm256_fmadd_pd(q, xx, _mm256_set1_pd(2.00000000000000000009E0));

  __m256d r = _mm256_div_pd(p, _mm256_sub_pd(q, p));
  r = _mm256_fmadd_pd(r, _mm256_set1_pd(2.0), _mm256_set1_pd(1.0));

  // 2^n assembled directly in the exponent field; n >= -1022 after the clamp.
  const __m128i n32 = _mm256_cvtpd_epi32(n);
  __m256i bits = _mm256_cvtepi32_epi64(n32);
  bits = _mm256_add_epi64(bits, _mm256_set1_epi64x(1023));
  bits = _mm256_slli_epi64(bits, 52);
  r = _mm256_mul_pd(r, _mm256_castsi256_pd(bits));
  return _mm256_andnot_pd(underflow, r);
}

constexpr std::size_t kLanes = 4;
constexpr std::size_t kMaxDims = 64;

}  // namespace

void covariance_block_avx2(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                           double variance, double* out, std::size_t ld_out) {
  const __m256d three = _mm256_set1_pd(3.0);
  const __m256d half = _mm256_set1_pd(0.5);
  const __m256d one = _mm256_set1_pd(1.0);
  const __m256d var = _mm256_set1_pd(variance);

  std::size_t dims = 0;
  for (const FactorLayout& f : factors) dims = std::max(dims, f.first_dim + f.n_dims);
  if (dims > kMaxDims) {
    covariance_block_scalar(factors, a, b, variance, out, ld_out);
    return;
  }

  // Tail rows are copied into a padded local block so every entry goes
  // through the same vector exp.
  std::array<double, kMaxDims * kLanes> tail{};
  const std::size_t full = a.count - a.count % kLanes;
  const std::size_t rem = a.count - full;
  for (std::size_t d = 0; d < dims && rem > 0; ++d)
    for (std::size_t l = 0; l < rem; ++l) tail[d * kLanes + l] = a.data[d * a.stride + full + l];

  for (std::size_t j = 0; j < b.count; ++j) {
    double* col = out + j * ld_out;
    for (std::size_t i = 0; i < a.count; i += kLanes) {
      const bool is_tail = i >= full;
      const double* base = is_tail ? tail.data() : a.data + i;
      const std::size_t stride = is_tail ? kLanes : a.stride;

      __m256d exponent = _mm256_setzero_pd();
      __m256d poly = one;
      for (const FactorLayout& f : factors) {
        __m256d r2 = _mm256_setzero_pd();
        for (std::size_t d = f.first_dim; d < f.first_dim + f.n_dims; ++d) {
          const __m256d diff = _mm256_sub_pd(_mm256_loadu_pd(base + d * stride),
                                             _mm256_set1_pd(b.data[d * b.stride + j]));
          r2 = _mm256_fmadd_pd(diff, diff, r2);
        }
        if (f.family == FactorFamily::SquaredExponential) {
          exponent = _mm256_fnmadd_pd(half, r2, exponent);
        } else {
          const __m256d s = _mm256_sqrt_pd(_mm256_mul_pd(three, r2));
          exponent = _mm256_sub_pd(exponent, s);
          poly = _mm256_mul_pd(poly, _mm256_add_pd(one, s));
        }
      }
      const __m256d value = _mm256_mul_pd(_mm256_mul_pd(var, poly), exp_pd(exponent));
      if (!is_tail) {
        _mm256_storeu_pd(col + i, value);
      } else {
        alignas(32) std::array<double, kLanes> lanes;
        _mm256_store_pd(lanes.data(), value);
        std::copy_n(lanes.begin(), rem, col + i);
      }
    }
  }
}

void exp_nonpositive_avx2(std::span<const double> x, std::span<double> out) {
  std::size_t i = 0;
  for (; i + kLanes <= x.size(); i += kLanes)
    _mm256_storeu_pd(out.data() + i, exp_pd(_mm256_loadu_pd(x.data() + i)));
  if (i < x.size()) {
    alignas(32) std::array<double, kLanes> buf{};
    std::copy(x.begin() + static_cast<std::ptrdiff_t>(i), x.end(), buf.begin());
    _mm256_store_pd(buf.data(), exp_pd(_mm256_load_pd(buf.data())));
    std::copy_n(buf.begin(), x.size() - i, out.begin() + static_cast<std::ptrdiff_t>(i));
  }
}

}  // namespace cbo::simd::detail
