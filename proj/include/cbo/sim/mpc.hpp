#pragma once

// Two vehicles approaching a shared conflict point on crossing roads.
// Positions are signed distances to the conflict point (negative before it),
// dynamics are double integrators, and the CAV plans both vehicles' inputs by
// minimizing the sum of their costs plus a shared log-distance term.

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

namespace cbo::sim {

struct VehicleState {
  double p = 0.0;  // m, signed distance to the conflict point
  double v = 0.0;  // m/s
};

/// p' = p + dt v + dt^2 a / 2, v' = v + dt a.
VehicleState step_dynamics(VehicleState s, double a, double dt);

enum class VRefPolicy { MaxSpeed, CarFollowing };

struct MPCConfig {
  int horizon = 12;
  double dt = 0.25;
  double u_min = -5.0;
  double u_max = 3.0;
  double v_min = 0.0;
  double v_max = 10.0;
  double r = 5.0;       // safety radius, m
  double eps = 1e-3;    // keeps the log term finite
  /// Planned trajectories keep r^2 + safety_backoff, so a plan accepted at
  /// the solver tolerance still lies on the safe side of r.
  double safety_backoff = 1e-3;  // m^2
  VRefPolicy v_ref_policy = VRefPolicy::MaxSpeed;

  void validate() const;
};

/// omega1 = (acceleration, speed-tracking) weights of the CAV, omega2 the
/// same for the HDV, omega12 the shared interaction weight.
struct MPCWeights {
  Eigen::Vector2d omega1{1.0, 1.0};
  Eigen::Vector2d omega2{1.0, 1.0};
  double omega12 = 1.0;

  /// omega1 = 10^z, omega2 = 10^theta.
  static MPCWeights from_log10(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, double omega12 = 1.0);
  void validate() const;
};

/// States k = 0..H and inputs k = 0..H-1 of both vehicles.
struct PredictedTrajectory {
  std::vector<VehicleState> x1, x2;
  Eigen::VectorXd u1, u2;
};

PredictedTrajectory predict_trajectory(VehicleState x1, VehicleState x2, const Eigen::VectorXd& u1,
                                       const Eigen::VectorXd& u2, double dt);

/// sum_k [sum_i (w_i1 a_ik^2 + w_i2 (v_i,k+1 - v_ref)^2) - w12 log(p1,k+1^2 + p2,k+1^2 + eps)]
/// with v_ref = v_max for both vehicles.
double mpc_objective(const PredictedTrajectory& traj, const MPCWeights& w, const MPCConfig& cfg);
double mpc_objective(const PredictedTrajectory& traj, const MPCWeights& w, const MPCConfig& cfg, double v_ref1,
                     double v_ref2);

struct MpcSolution {
  Eigen::VectorXd u1, u2;
  /// False when neither a solver start nor the braking fallback satisfies
  /// the speed and safety constraints.
  bool feasible = true;
  /// u1/u2 hold the braking fallback, either because no start was feasible
  /// or because braking had the lower objective.
  bool fallback = false;
  double objective = 0.0;  // mpc_objective with the caller's weights
  double max_speed_violation = 0.0;
  double max_safety_violation = 0.0;
  /// Augmented-Lagrangian state at the returned point (see mpc_augmented_objective).
  Eigen::VectorXd multipliers;
  double rho = 0.0;
};

struct MpcOptions {
  /// Drop the shared log term and the safety constraint (no active HDV).
  bool interaction = true;
  std::optional<double> v_ref1, v_ref2;  // default v_max
  /// Previous solution, shifted by one step before use.
  const MpcSolution* warm = nullptr;
  double speed_tolerance = 1e-4;   // m/s
  double safety_tolerance = 1e-3;  // m^2
};

/// Minimizes the joint objective over both input sequences subject to input
/// bounds (exact), speed bounds on both vehicles and the safety constraint
/// r^2 - (p1^2 + p2^2) <= 0 at every predicted step. Weights are divided by
/// their maximum first, so the minimizer is invariant to positive scaling.
MpcSolution solve_mpc(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg,
                      const MpcOptions& options = {});

/// Maximum braking that does not drive either speed below v_min.
MpcSolution braking_fallback(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg);

/// Objective (normalized weights) plus the augmented-Lagrangian penalty
/// sum_j [max(0, l_j + rho c_j)^2 - l_j^2] / (2 rho). Constraint order: for
/// vehicle 1 then 2, H upper speed bounds and H lower speed bounds, then H
/// safety constraints.
double mpc_augmented_objective(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg,
                               const Eigen::VectorXd& u1, const Eigen::VectorXd& u2,
                               const Eigen::VectorXd& multipliers, double rho, const MpcOptions& options = {});

struct HdvOptions {
  int horizon = 6;
  std::optional<double> v_ref;  // default v_max
  /// Previous HDV input sequence, shifted by one step before use.
  const Eigen::VectorXd* warm = nullptr;
};

/// The HDV's own receding-horizon choice: it minimizes its tracking and
/// effort terms plus the shared term, predicting the CAV at constant
/// velocity, under input and speed bounds. It has no hard safety constraint;
/// the shared log term is its only reason to keep away. Returns the whole plan; the
/// action is its first element, always inside [u_min, u_max].
Eigen::VectorXd hdv_plan(VehicleState cav, VehicleState hdv, const Eigen::Vector2d& omega2, double omega12,
                         const MPCConfig& cfg, const HdvOptions& options = {});
double hdv_action(VehicleState cav, VehicleState hdv, const Eigen::Vector2d& omega2, double omega12,
                  const MPCConfig& cfg, const HdvOptions& options = {});

}  // namespace cbo::sim
