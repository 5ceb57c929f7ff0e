#include "cbo/harness/analytic.hpp"

#include <cmath>

#include "cbo/core/errors.hpp"
#include "cbo/core/random.hpp"

namespace cbo::harness {

using Eigen::VectorXd;

namespace {

Eigen::Matrix2d linear_map() {
  Eigen::Matrix2d a;
  a << 0.5, 0.3, -0.2, 0.6;
  return a;
}

double kink(double t) { return 0.2 + 0.6 * std::abs(2.0 * t - 1.0); }

}  // namespace

std::vector<std::string> analytic_benchmark_ids() { return {"quadratic", "linear2d", "kinked"}; }

AnalyticBenchmark analytic_benchmark(const std::string& id) {
  AnalyticBenchmark b;
  b.id = id;
  if (id == "quadratic") {
    b.z_domain = BoxDomain::unit(1);
    b.theta_domain = BoxDomain::unit(1);
    b.gamma = [](const VectorXd& th) { return VectorXd(th); };
  } else if (id == "linear2d") {
    b.z_domain = BoxDomain::uniform(2, -1.0, 1.0);
    b.theta_domain = BoxDomain::unit(2);
    b.gamma = [](const VectorXd& th) { return VectorXd(linear_map() * th); };
  } else if (id == "kinked") {
    b.z_domain = BoxDomain::unit(1);
    b.theta_domain = BoxDomain::unit(1);
    b.gamma = [](const VectorXd& th) { return VectorXd::Constant(1, kink(th(0))); };
  } else {
    throw ConfigError("unknown analytic benchmark '" + id + "'");
  }
  auto gamma = b.gamma;
  b.objective = [gamma](const VectorXd& z, const VectorXd& th) { return -(z - gamma(th)).squaredNorm(); };
  return b;
}

AnalyticEvaluator::AnalyticEvaluator(AnalyticBenchmark benchmark, double noise_sigma)
    : benchmark_(std::move(benchmark)), noise_sigma_(noise_sigma) {
  if (!(noise_sigma >= 0.0) || !std::isfinite(noise_sigma)) throw ConfigError("noise_sigma must be >= 0");
}

double AnalyticEvaluator::evaluate(const VectorXd& z, const VectorXd& theta, std::uint64_t seed) {
  if (static_cast<std::size_t>(z.size()) != benchmark_.z_domain.dims() ||
      static_cast<std::size_t>(theta.size()) != benchmark_.theta_domain.dims())
    throw InputError("analytic benchmark called with wrong dimensions");
  ++calls_;
  const double y = benchmark_.objective(z, theta);
  if (noise_sigma_ == 0.0) return y;
  Rng rng(seed);
  return y + noise_sigma_ * standard_normal(rng);
}

}  // namespace cbo::harness
