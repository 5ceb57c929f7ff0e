#pragma once

// Closed-form test problems with a known solution map gamma(theta).

#include <Eigen/Core>
#include <functional>
#include <string>
#include <vector>

#include "cbo/bo/contextual_bo.hpp"
#include "cbo/core/box_domain.hpp"

namespace cbo::harness {

struct AnalyticBenchmark {
  std::string id;
  BoxDomain z_domain;
  BoxDomain theta_domain;
  /// Noise-free objective; maximized over z at gamma(theta).
  std::function<double(const Eigen::VectorXd& z, const Eigen::VectorXd& theta)> objective;
  std::function<Eigen::VectorXd(const Eigen::VectorXd& theta)> gamma;
};

/// "quadratic": J = -(z - theta)^2 on [0,1] x [0,1], gamma = theta.
/// "linear2d":  J = -|z - A theta|^2, A = [[0.5, 0.3], [-0.2, 0.6]],
///              theta in [0,1]^2, z in [-1,1]^2, gamma = A theta.
/// "kinked":    J = -(z - gamma)^2, gamma = 0.2 + 0.6 |2 theta - 1|, on [0,1] x [0,1].
/// Throws ConfigError for an unknown id.
AnalyticBenchmark analytic_benchmark(const std::string& id);
std::vector<std::string> analytic_benchmark_ids();

/// J(z, theta) + sigma * N(0, 1), the normal draw seeded by the call seed.
class AnalyticEvaluator : public bo::ObjectiveEvaluator {
 public:
  AnalyticEvaluator(AnalyticBenchmark benchmark, double noise_sigma);
  double evaluate(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, std::uint64_t seed) override;
  const AnalyticBenchmark& benchmark() const { return benchmark_; }
  std::size_t calls() const { return calls_; }

 private:
  AnalyticBenchmark benchmark_;
  double noise_sigma_;
  std::size_t calls_ = 0;
};

}  // namespace cbo::harness
