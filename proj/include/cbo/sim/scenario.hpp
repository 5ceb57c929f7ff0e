#pragma once

#include <Eigen/Core>
#include <cstddef>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <vector>

#include "cbo/bo/contextual_bo.hpp"
#include "cbo/core/random.hpp"
#include "cbo/sim/mpc.hpp"

namespace cbo::sim {

struct ScenarioConfig {
  MPCConfig mpc;
  double p0_min = -30.0, p0_max = -20.0;
  double v0_min = 3.0, v0_max = 7.0;
  double exit_position = 15.0;  // CAV episode ends when it reaches this p
  double time_cap = 30.0;       // s
  int hdv_horizon = 6;
  double omega12 = 1.0;
  double weight_log_bound = 2.0;  // z, theta in [-b, b]^2
  /// Number of HDVs on the crossing road. Extra HDVs trail the first one and
  /// track a constant-time-headway speed reference.
  int hdv_count = 1;
  double trailing_gap_min = 8.0, trailing_gap_max = 15.0;  // initial spacing, m
  double headway_standstill = 2.0;                          // m
  double headway_time = 1.5;                                // s

  void validate() const;
};

struct MetricConfig {
  double lambda_time = 1.0;
  double lambda_acce = 5.0;
  double lambda_coll = 1e4;
  double sigmoid_scale = 1.0;
  int n_s = 20;  // episodes per performance evaluation

  void validate() const;
};

struct InitialCondition {
  VehicleState cav;
  std::vector<VehicleState> hdvs;
};

InitialCondition sample_initial_condition(const ScenarioConfig& cfg, Rng& rng);

/// Sentinel returned by select_active_hdv when every HDV has crossed.
inline constexpr std::size_t kNoActiveHdv = std::numeric_limits<std::size_t>::max();

/// The HDV the CAV negotiates with: the one closest to the conflict point
/// among those that have not reached it yet (p < 0).
std::size_t select_active_hdv(const std::vector<VehicleState>& hdvs);

struct TrajectorySample {
  double t = 0.0;
  VehicleState cav;
  std::vector<VehicleState> hdvs;
  double cav_accel = 0.0;            // input applied from t onward
  std::vector<double> hdv_accel;
};

struct ScenarioOutcome {
  std::vector<TrajectorySample> trajectory;
  double exit_time = 0.0;        // t_f, s
  double accel_integral = 0.0;   // integral of the CAV input squared over [0, t_f]
  double coll_margin = 0.0;      // max over realized states of r^2 - (p1^2 + p2^2)
  bool timed_out = false;
  int infeasible_steps = 0;      // MPC steps that ended on an infeasible fallback
};

/// Closed loop: the CAV applies the first input of its MPC plan (with the
/// true HDV weights 10^theta), each HDV applies its own receding-horizon
/// action, both clamped so speeds stay within bounds.
ScenarioOutcome simulate_episode(const InitialCondition& init, const Eigen::VectorXd& z,
                                 const Eigen::VectorXd& theta, const ScenarioConfig& cfg);
/// Draws the initial condition from `seed`.
ScenarioOutcome simulate_episode(const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                                 const ScenarioConfig& cfg, std::uint64_t seed);

/// lambda_time t_f + lambda_acce int u^2 + lambda_coll sigmoid(g_coll / scale).
double episode_metric(const ScenarioOutcome& out, const MetricConfig& m);

/// Metric charged for an episode that could not be simulated: the time cap,
/// full-scale input over the whole cap, and a certain collision.
double worst_case_metric(const ScenarioConfig& cfg, const MetricConfig& m);

/// Negative mean episode metric over n_s episodes; episode e uses the
/// initial condition drawn from derive_seed(seed, {e}).
double performance(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, const ScenarioConfig& cfg,
                   const MetricConfig& m, std::uint64_t seed);

class CavEvaluator : public bo::ObjectiveEvaluator {
 public:
  CavEvaluator(ScenarioConfig scenario, MetricConfig metric);
  double evaluate(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, std::uint64_t seed) override;
  std::size_t calls() const { return calls_; }

 private:
  ScenarioConfig scenario_;
  MetricConfig metric_;
  std::size_t calls_ = 0;
};

/// Columns t, p1, v1, a1, then p, v, a for each HDV.
void write_trajectory_csv(std::ostream& os, const ScenarioOutcome& out);

}  // namespace cbo::sim
