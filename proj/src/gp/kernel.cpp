#include "cbo/gp/kernel.hpp"

#include <cmath>

#include "cbo/core/errors.hpp"

namespace cbo::gp {

namespace {

constexpr double kSqrt3 = 1.7320508075688772935;

std::vector<KernelSlice> effective_slices(const KernelSpec& spec) {
  if (spec.family == KernelFamily::Product) return spec.slices;
  return {KernelSlice{spec.family, 0, spec.input_dim()}};
}

}  // namespace

std::string to_string(KernelFamily f) {
  switch (f) {
    case KernelFamily::SquaredExponential: return "squared_exponential";
    case KernelFamily::Matern32: return "matern32";
    case KernelFamily::Product: return "product";
  }
  return "unknown";
}

KernelFamily kernel_family_from_string(const std::string& s) {
  if (s == "squared_exponential") return KernelFamily::SquaredExponential;
  if (s == "matern32") return KernelFamily::Matern32;
  if (s == "product") return KernelFamily::Product;
  throw InputError("unknown kernel family '" + s + "'");
}

KernelSpec KernelSpec::squared_exponential(std::vector<double> ls, double var) {
  KernelSpec k{KernelFamily::SquaredExponential, std::move(ls), var, {}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::matern32(std::vector<double> ls, double var) {
  KernelSpec k{KernelFamily::Matern32, std::move(ls), var, {}};
  k.validate();
  return k;
}

KernelSpec KernelSpec::product(std::vector<KernelSlice> slices, std::vector<double> ls, double var) {
  KernelSpec k{KernelFamily::Product, std::move(ls), var, std::move(slices)};
  k.validate();
  return k;
}

void KernelSpec::validate() const {
  if (lengthscales.empty()) throw InputError("KernelSpec: no input dimensions");
  for (double l : lengthscales)
    if (!(l > 0.0) || !std::isfinite(l)) throw InputError("KernelSpec: lengthscales must be positive and finite");
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance))
    throw InputError("KernelSpec: signal variance must be positive and finite");
  if (family == KernelFamily::Product) {
    if (slices.empty()) throw InputError("KernelSpec: product kernel without factors");
    std::size_t next = 0;
    for (const KernelSlice& s : slices) {
      if (s.family == KernelFamily::Product) throw InputError("KernelSpec: nested product factors");
      if (s.first_dim != next || s.n_dims == 0)
        throw InputError("KernelSpec: product slices must tile the input dimensions without overlap");
      next += s.n_dims;
    }
    if (next != input_dim()) throw InputError("KernelSpec: product slices do not cover every input dimension");
  } else if (!slices.empty()) {
    throw InputError("KernelSpec: slices given for a non-product kernel");
  }
}

std::vector<simd::FactorLayout> KernelSpec::layout() const {
  std::vector<simd::FactorLayout> out;
  for (const KernelSlice& s : effective_slices(*this)) {
    const auto fam = s.family == KernelFamily::SquaredExponential ? simd::FactorFamily::SquaredExponential
                                                                  : simd::FactorFamily::Matern32;
    out.push_back({fam, s.first_dim, s.n_dims});
  }
  return out;
}

double kernel_eval(const KernelSpec& spec, std::span<const double> x, std::span<const double> x2) {
  if (x.size() != spec.input_dim() || x2.size() != spec.input_dim())
    throw InputError("kernel_eval: input dimension does not match the kernel");
  double value = spec.signal_variance;
  for (const KernelSlice& s : effective_slices(spec)) {
    double r2 = 0.0;
    for (std::size_t d = s.first_dim; d < s.first_dim + s.n_dims; ++d) {
      const double diff = (x[d] - x2[d]) / spec.lengthscales[d];
      r2 += diff * diff;
    }
    if (s.family == KernelFamily::SquaredExponential) {
      value *= std::exp(-0.5 * r2);
    } else {
      const double r = std::sqrt(r2);
      value *= (1.0 + kSqrt3 * r) * std::exp(-kSqrt3 * r);
    }
  }
  return value;
}

void log_lengthscale_sensitivity(const KernelSpec& spec, std::span<const double> scaled_diff,
                                 std::span<double> out) {
  for (const KernelSlice& s : effective_slices(spec)) {
    if (s.family == KernelFamily::SquaredExponential) {
      for (std::size_t d = s.first_dim; d < s.first_dim + s.n_dims; ++d) out[d] = scaled_diff[d] * scaled_diff[d];
    } else {
      // k = (1 + sqrt3 r) exp(-sqrt3 r): dk/dlog l_d = 3 e^{-sqrt3 r} u_d^2, ratio 3 u_d^2 / (1 + sqrt3 r).
      double r2 = 0.0;
      for (std::size_t d = s.first_dim; d < s.first_dim + s.n_dims; ++d) r2 += scaled_diff[d] * scaled_diff[d];
      const double denom = 1.0 + kSqrt3 * std::sqrt(r2);
      for (std::size_t d = s.first_dim; d < s.first_dim + s.n_dims; ++d)
        out[d] = 3.0 * scaled_diff[d] * scaled_diff[d] / denom;
    }
  }
}

}  // namespace cbo::gp
