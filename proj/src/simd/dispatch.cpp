#include <atomic>
#include <cstdlib>
#include <string>

#include "cbo/core/errors.hpp"
#include "cbo/simd/covariance.hpp"

namespace cbo::simd {

namespace {

Backend detect() {
  if (const char* env = std::getenv("CBO_SIMD"); env != nullptr && std::string(env) == "scalar")
    return Backend::Scalar;
  return backend_available(Backend::Avx2) ? Backend::Avx2 : Backend::Scalar;
}

std::atomic<Backend>& selected() {
  static std::atomic<Backend> backend{detect()};
  return backend;
}

}  // namespace

std::string_view backend_name(Backend b) {
  switch (b) {
    case Backend::Scalar: return "scalar";
    case Backend::Avx2: return "avx2";
  }
  return "unknown";
}

bool backend_available(Backend b) {
  switch (b) {
    case Backend::Scalar: return true;
    case Backend::Avx2:
#if defined(__x86_64__) || defined(_M_X64)
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
  }
  return false;
}

Backend active_backend() { return selected().load(std::memory_order_relaxed); }

void set_backend(Backend b) {
  if (!backend_available(b))
    throw InputError("SIMD backend '" + std::string(backend_name(b)) + "' is not available on this CPU");
  selected().store(b, std::memory_order_relaxed);
}

void covariance_block(std::span<const FactorLayout> factors, PointBlock a, PointBlock b,
                      double variance, double* out, std::size_t ld_out) {
  if (a.count == 0 || b.count == 0) return;
#if defined(__x86_64__) || defined(_M_X64)
  if (active_backend() == Backend::Avx2) {
    detail::covariance_block_avx2(factors, a, b, variance, out, ld_out);
    return;
  }
#endif
  detail::covariance_block_scalar(factors, a, b, variance, out, ld_out);
}

void exp_nonpositive(std::span<const double> x, std::span<double> out) {
  if (out.size() < x.size()) throw InputError("exp_nonpositive: output span too small");
#if defined(__x86_64__) || defined(_M_X64)
  if (active_backend() == Backend::Avx2) {
    detail::exp_nonpositive_avx2(x, out);
    return;
  }
#endif
  detail::exp_nonpositive_scalar(x, out);
}

}  // namespace cbo::simd
