#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <json.hpp>
#include <string>
#include <vector>

#include "cbo/core/box_domain.hpp"
#include "cbo/learner/solution_learner.hpp"
#include "cbo/sim/scenario.hpp"

namespace cbo::harness {

/// Environment variable that replaces the output directory of any config.
inline constexpr const char* kOutputDirEnv = "CBO_OUTPUT_DIR";

enum class EvaluatorKind { Analytic, CavSim };

struct EvaluatorConfig {
  EvaluatorKind kind = EvaluatorKind::Analytic;
  std::string benchmark = "quadratic";  // analytic only
  double noise_sigma = 0.0;             // analytic only
  sim::ScenarioConfig scenario;         // CAV only
  sim::MetricConfig metric;             // CAV only
};

struct RunConfig {
  BoxDomain z_domain;
  BoxDomain theta_domain;
  int j_max = 30;
  int k_max = 30;
  double beta = 100.0;
  std::size_t max_data = 300;
  int refit_every_until = 10;
  int refit_period = 5;
  int inner_train_restarts = 2;
  int solution_train_restarts = 4;
  std::size_t solution_rank = 0;
  int probe_points_per_dim = 11;
  EvaluatorConfig evaluator;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  /// Throws ConfigError.
  void validate() const;
  learner::OuterLoopConfig outer_loop_config() const;
};

/// Missing optional keys take the defaults above; `seed` is required and
/// unknown keys are rejected. Domains default to the benchmark's (analytic)
/// or [-b, b]^2 with b = weight_log_bound (CAV). Throws ConfigError.
RunConfig run_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const RunConfig& cfg);

/// Reads, parses and validates; applies the output-directory override.
/// IoError when the file cannot be read or is not JSON, ConfigError otherwise.
RunConfig load_run_config(const std::string& path);

struct ControllerSpec {
  enum class Kind { Adaptive, Fixed };
  std::string name;
  Kind kind = Kind::Fixed;
  std::string model_path;  // Adaptive
  Eigen::VectorXd z;       // Fixed: log10 of the CAV weights
};

struct ComparisonSpec {
  std::vector<ControllerSpec> controllers;
  int episodes = 200;
  /// Contexts are drawn uniformly from this box.
  BoxDomain context_domain = BoxDomain::uniform(2, -2.0, 2.0);
  sim::ScenarioConfig scenario;
  sim::MetricConfig metric;
  std::uint64_t seed = 0;
  std::string output_dir = "out";

  void validate() const;
};

ComparisonSpec comparison_spec_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ComparisonSpec& spec);
ComparisonSpec load_comparison_spec(const std::string& path);

nlohmann::json to_json(const sim::ScenarioConfig& cfg);
sim::ScenarioConfig scenario_from_json(const nlohmann::json& j);
nlohmann::json to_json(const sim::MetricConfig& cfg);
sim::MetricConfig metric_from_json(const nlohmann::json& j);

/// Reads a JSON document; IoError on failure.
nlohmann::json read_json_file(const std::string& path);
/// Writes via a temporary file and rename, so readers never see a partial file.
void write_text_file(const std::string& path, const std::string& text);

}  // namespace cbo::harness
