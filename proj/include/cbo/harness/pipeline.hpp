#pragma once

#include <Eigen/Core>
#include <memory>
#include <string>
#include <vector>

#include "cbo/harness/config.hpp"
#include "cbo/learner/solution_learner.hpp"

namespace cbo::harness {

std::unique_ptr<bo::ObjectiveEvaluator> make_evaluator(const RunConfig& cfg);

struct LearnResult {
  int completed = 0;
  bool resumed = false;
  bool aborted = false;
  std::string diagnostic;
  std::vector<double> probe_log_det;
  std::string model_path;
  std::string run_log_path;
};

/// Runs the outer loop and writes, under cfg.output_dir:
///   config.json, run_log.csv, checkpoint.json (after every outer iteration),
///   model.json and summary.json.
/// With `resume`, a checkpoint produced by the same config (up to j_max, so a
/// finished run can be extended) is continued.
/// The run log is regenerated from the full record list, so it is identical
/// whether or not the run was interrupted.
LearnResult run_learn(const RunConfig& cfg, bool resume = true);

/// Accepts a model.json written by run_learn or a bare solution-model document.
learner::SolutionModel load_solution_model(const std::string& path);

struct ControllerSummary {
  std::string name;
  int episodes = 0;
  int safe = 0;            // episodes with g_coll < 0
  double mean_exit_time = 0.0;
  double mean_accel = 0.0;  // mean of int u^2 / t_f
  double mean_metric = 0.0;
  int timed_out = 0;
};

struct EpisodeRow {
  int episode = 0;
  std::uint64_t seed = 0;
  Eigen::VectorXd theta;
  sim::InitialCondition init;
  Eigen::VectorXd z;
  double exit_time = 0.0;
  double accel = 0.0;
  double coll_margin = 0.0;
  double metric = 0.0;
  bool timed_out = false;
  bool failed = false;  // simulation threw; charged the worst-case metric
};

struct CompareResult {
  std::vector<ControllerSummary> table;
  std::vector<std::vector<EpisodeRow>> episodes;  // per controller
};

/// Paired comparison: episode e draws its context and initial condition from
/// derive_seed(spec.seed, {e}) once, and every controller sees that triple.
/// Writes table.csv, episodes.csv and manifest_<controller>.csv.
CompareResult run_compare(const ComparisonSpec& spec);

/// Writes heatmap_z<i>.csv (one row per cell of a grid^dim(theta) grid over
/// the context domain, holding adapt()) and heatmap_samples.csv (the stored
/// contexts and solutions). Returns the written paths.
std::vector<std::string> export_heatmap(const std::string& model_path, int grid, const std::string& output_dir);

/// One closed-loop episode, dumped as a trajectory CSV; returns the path.
std::string run_simulate(const RunConfig& cfg, const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                         std::uint64_t seed, const std::string& output_dir);

/// Grid over a box, the last coordinate varying fastest.
Eigen::MatrixXd grid_points(const BoxDomain& domain, int per_dim);

}  // namespace cbo::harness
