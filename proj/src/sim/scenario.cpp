#include "cbo/sim/scenario.hpp"

#include <algorithm>
#include <cmath>
#include <ostream>
#include <string>

#include "cbo/core/errors.hpp"
#include "cbo/core/format.hpp"
#include "cbo/core/log.hpp"

namespace cbo::sim {

using Eigen::VectorXd;

void ScenarioConfig::validate() const {
  mpc.validate();
  if (!(p0_min <= p0_max) || !(p0_max < 0.0)) throw InputError("initial positions must lie before the conflict point");
  if (!(v0_min <= v0_max) || v0_min < mpc.v_min || v0_max > mpc.v_max)
    throw InputError("initial speeds must lie within the speed bounds");
  if (!(exit_position > 0.0)) throw InputError("exit position must be past the conflict point");
  if (!(time_cap > 0.0)) throw InputError("time cap must be positive");
  if (hdv_horizon < 1) throw InputError("HDV horizon must be >= 1");
  if (!(omega12 > 0.0) || !std::isfinite(omega12)) throw InputError("omega12 must be positive");
  if (!(weight_log_bound > 0.0)) throw InputError("weight bound must be positive");
  if (hdv_count < 0) throw InputError("hdv_count must be >= 0");
  if (!(trailing_gap_min > 0.0) || !(trailing_gap_min <= trailing_gap_max))
    throw InputError("trailing gaps must satisfy 0 < min <= max");
  if (!(headway_time > 0.0) || headway_standstill < 0.0) throw InputError("headway parameters are invalid");
}

void MetricConfig::validate() const {
  if (lambda_time < 0.0 || lambda_acce < 0.0 || lambda_coll < 0.0) throw InputError("metric weights must be >= 0");
  if (!(sigmoid_scale > 0.0)) throw InputError("sigmoid scale must be positive");
  if (n_s < 1) throw InputError("n_s must be >= 1");
}

InitialCondition sample_initial_condition(const ScenarioConfig& cfg, Rng& rng) {
  InitialCondition ic;
  ic.cav.p = uniform(rng, cfg.p0_min, cfg.p0_max);
  ic.cav.v = uniform(rng, cfg.v0_min, cfg.v0_max);
  for (int i = 0; i < cfg.hdv_count; ++i) {
    VehicleState s;
    if (i == 0)
      s.p = uniform(rng, cfg.p0_min, cfg.p0_max);
    else
      s.p = ic.hdvs.back().p - uniform(rng, cfg.trailing_gap_min, cfg.trailing_gap_max);
    s.v = uniform(rng, cfg.v0_min, cfg.v0_max);
    ic.hdvs.push_back(s);
  }
  return ic;
}

std::size_t select_active_hdv(const std::vector<VehicleState>& hdvs) {
  std::size_t best = kNoActiveHdv;
  for (std::size_t i = 0; i < hdvs.size(); ++i)
    if (hdvs[i].p < 0.0 && (best == kNoActiveHdv || hdvs[i].p > hdvs[best].p)) best = i;
  return best;
}

namespace {

double clamp_input(VehicleState s, double u, const MPCConfig& c) {
  const double lo = std::max(c.u_min, (c.v_min - s.v) / c.dt);
  const double hi = std::min(c.u_max, (c.v_max - s.v) / c.dt);
  return std::clamp(u, lo, std::max(lo, hi));
}

// Speed reference for HDV i: the leader tracks v_max, followers a
// constant-time-headway speed (gap - s0) / T_h.
double hdv_reference(const std::vector<VehicleState>& hdvs, std::size_t i, const ScenarioConfig& cfg) {
  if (i == 0) return cfg.mpc.v_max;
  const double gap = hdvs[i - 1].p - hdvs[i].p;
  return std::clamp((gap - cfg.headway_standstill) / cfg.headway_time, cfg.mpc.v_min, cfg.mpc.v_max);
}

double margin(VehicleState cav, const std::vector<VehicleState>& hdvs, double r) {
  double g = -std::numeric_limits<double>::infinity();
  for (const VehicleState& h : hdvs) g = std::max(g, r * r - (cav.p * cav.p + h.p * h.p));
  return g;
}

VehicleState advance(VehicleState s, double a, double tau) { return step_dynamics(s, a, tau); }

void check_weights(const VectorXd& z, const VectorXd& theta, double bound) {
  if (z.size() != 2 || theta.size() != 2) throw InputError("z and theta must be 2-D");
  for (int i = 0; i < 2; ++i)
    if (!(std::abs(z(i)) <= bound) || !(std::abs(theta(i)) <= bound))
      throw InputError("log-weights outside [-" + format_double(bound) + ", " + format_double(bound) + "]");
}

}  // namespace

ScenarioOutcome simulate_episode(const InitialCondition& init, const VectorXd& z, const VectorXd& theta,
                                 const ScenarioConfig& cfg) {
  cfg.validate();
  check_weights(z, theta, cfg.weight_log_bound);
  if (static_cast<int>(init.hdvs.size()) != cfg.hdv_count) throw InputError("initial condition has wrong HDV count");
  const MPCConfig& mc = cfg.mpc;
  const MPCWeights w = MPCWeights::from_log10(z, theta, cfg.omega12);

  ScenarioOutcome out;
  VehicleState cav = init.cav;
  std::vector<VehicleState> hdvs = init.hdvs;
  MpcSolution prev;
  bool have_prev = false;
  std::size_t prev_active = kNoActiveHdv;
  std::vector<VectorXd> hdv_prev(hdvs.size());
  out.coll_margin = margin(cav, hdvs, mc.r);
  double t = 0.0;
  const int max_steps = static_cast<int>(std::ceil(cfg.time_cap / mc.dt - 1e-9));

  for (int step = 0;; ++step) {
    if (step >= max_steps) {
      out.timed_out = true;
      out.exit_time = cfg.time_cap;
      out.trajectory.push_back({t, cav, hdvs, 0.0, std::vector<double>(hdvs.size(), 0.0)});
      break;
    }
    std::size_t active = select_active_hdv(hdvs);
    if (active == kNoActiveHdv) {
      // Every HDV has crossed, but one that is still inside the safety
      // radius can be hit; keep negotiating with the nearest of those.
      for (std::size_t i = 0; i < hdvs.size(); ++i)
        if (hdvs[i].p < mc.r && (active == kNoActiveHdv || hdvs[i].p < hdvs[active].p)) active = i;
    }
    MpcOptions opt;
    opt.interaction = active != kNoActiveHdv;
    opt.warm = have_prev && active == prev_active ? &prev : nullptr;
    VehicleState partner{-1e3, mc.v_max};
    if (opt.interaction) {
      partner = hdvs[active];
      opt.v_ref2 = hdv_reference(hdvs, active, cfg);
    }
    prev = solve_mpc(cav, partner, w, mc, opt);
    have_prev = true;
    prev_active = active;
    if (!prev.feasible) ++out.infeasible_steps;
    const double a1 = clamp_input(cav, prev.u1(0), mc);

    std::vector<double> a2(hdvs.size());
    for (std::size_t i = 0; i < hdvs.size(); ++i) {
      HdvOptions ho;
      ho.horizon = cfg.hdv_horizon;
      ho.v_ref = hdv_reference(hdvs, i, cfg);
      if (hdv_prev[i].size() > 0) ho.warm = &hdv_prev[i];
      hdv_prev[i] = hdv_plan(cav, hdvs[i], w.omega2, w.omega12, mc, ho);
      a2[i] = clamp_input(hdvs[i], hdv_prev[i](0), mc);
    }
    out.trajectory.push_back({t, cav, hdvs, a1, a2});

    const VehicleState next = step_dynamics(cav, a1, mc.dt);
    double tau = mc.dt;
    bool exits = false;
    if (next.p >= cfg.exit_position) {
      // Root of p + v tau + a tau^2 / 2 = exit in (0, dt], in the form that
      // stays accurate when a is small.
      const double gap = cfg.exit_position - cav.p;
      const double disc = std::max(0.0, cav.v * cav.v + 2.0 * a1 * gap);
      const double den = cav.v + std::sqrt(disc);
      tau = den > 0.0 ? std::clamp(2.0 * gap / den, 0.0, mc.dt) : mc.dt;
      exits = true;
    }
    out.accel_integral += a1 * a1 * tau;
    cav = exits ? advance(cav, a1, tau) : next;
    for (std::size_t i = 0; i < hdvs.size(); ++i) hdvs[i] = advance(hdvs[i], a2[i], tau);
    t += tau;
    out.coll_margin = std::max(out.coll_margin, margin(cav, hdvs, mc.r));
    if (exits) {
      cav.p = cfg.exit_position;
      out.exit_time = t;
      out.trajectory.push_back({t, cav, hdvs, 0.0, std::vector<double>(hdvs.size(), 0.0)});
      break;
    }
  }
  return out;
}

ScenarioOutcome simulate_episode(const VectorXd& z, const VectorXd& theta, const ScenarioConfig& cfg,
                                 std::uint64_t seed) {
  Rng rng(seed);
  return simulate_episode(sample_initial_condition(cfg, rng), z, theta, cfg);
}

double episode_metric(const ScenarioOutcome& out, const MetricConfig& m) {
  const double x = out.coll_margin / m.sigmoid_scale;
  double sig;
  if (x >= 0.0) {
    sig = 1.0 / (1.0 + std::exp(-x));
  } else {
    const double e = std::exp(x);
    sig = e / (1.0 + e);
  }
  return m.lambda_time * out.exit_time + m.lambda_acce * out.accel_integral + m.lambda_coll * sig;
}

double worst_case_metric(const ScenarioConfig& cfg, const MetricConfig& m) {
  const double u = std::max(std::abs(cfg.mpc.u_min), std::abs(cfg.mpc.u_max));
  return m.lambda_time * cfg.time_cap + m.lambda_acce * u * u * cfg.time_cap + m.lambda_coll;
}

double performance(const VectorXd& z, const VectorXd& theta, const ScenarioConfig& cfg, const MetricConfig& m,
                   std::uint64_t seed) {
  cfg.validate();
  m.validate();
  check_weights(z, theta, cfg.weight_log_bound);
  double sum = 0.0;
  for (int e = 0; e < m.n_s; ++e) {
    Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(e)}));
    const InitialCondition ic = sample_initial_condition(cfg, rng);
    try {
      sum += episode_metric(simulate_episode(ic, z, theta, cfg), m);
    } catch (const std::runtime_error& err) {
      warn(std::string("episode failed, charged worst case: ") + err.what());
      sum += worst_case_metric(cfg, m);
    }
  }
  return -sum / m.n_s;
}

CavEvaluator::CavEvaluator(ScenarioConfig scenario, MetricConfig metric)
    : scenario_(std::move(scenario)), metric_(metric) {
  scenario_.validate();
  metric_.validate();
}

double CavEvaluator::evaluate(const VectorXd& z, const VectorXd& theta, std::uint64_t seed) {
  ++calls_;
  return performance(z, theta, scenario_, metric_, seed);
}

void write_trajectory_csv(std::ostream& os, const ScenarioOutcome& out) {
  const std::size_t n = out.trajectory.empty() ? 0 : out.trajectory.front().hdvs.size();
  os << "t,p1,v1,a1";
  for (std::size_t i = 0; i < n; ++i) os << ",p" << i + 2 << ",v" << i + 2 << ",a" << i + 2;
  os << '\n';
  for (const TrajectorySample& s : out.trajectory) {
    os << format_double(s.t) << ',' << format_double(s.cav.p) << ',' << format_double(s.cav.v) << ','
       << format_double(s.cav_accel);
    for (std::size_t i = 0; i < n; ++i)
      os << ',' << format_double(s.hdvs[i].p) << ',' << format_double(s.hdvs[i].v) << ','
         << format_double(s.hdv_accel[i]);
    os << '\n';
  }
}

}  // namespace cbo::sim
