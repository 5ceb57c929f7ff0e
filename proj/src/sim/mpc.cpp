#include "cbo/sim/mpc.hpp"

#include <Eigen/Cholesky>
#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

#include "cbo/core/errors.hpp"

namespace cbo::sim {

using Eigen::MatrixXd;
using Eigen::VectorXd;

VehicleState step_dynamics(VehicleState s, double a, double dt) {
  return {s.p + dt * s.v + 0.5 * dt * dt * a, s.v + dt * a};
}

void MPCConfig::validate() const {
  if (horizon < 1) throw InputError("MPC horizon must be >= 1");
  if (!(dt > 0.0)) throw InputError("MPC dt must be positive");
  if (!(u_min < 0.0 && 0.0 < u_max)) throw InputError("MPC input bounds must satisfy u_min < 0 < u_max");
  if (!(0.0 <= v_min && v_min < v_max)) throw InputError("MPC speed bounds must satisfy 0 <= v_min < v_max");
  if (!(r > 0.0) || !(eps > 0.0)) throw InputError("MPC r and eps must be positive");
  if (!(safety_backoff >= 0.0)) throw InputError("MPC safety_backoff must be >= 0");
}

MPCWeights MPCWeights::from_log10(const VectorXd& z, const VectorXd& theta, double omega12) {
  if (z.size() != 2 || theta.size() != 2) throw InputError("weights need 2-D z and theta");
  MPCWeights w;
  w.omega1 = Eigen::Vector2d(std::pow(10.0, z(0)), std::pow(10.0, z(1)));
  w.omega2 = Eigen::Vector2d(std::pow(10.0, theta(0)), std::pow(10.0, theta(1)));
  w.omega12 = omega12;
  w.validate();
  return w;
}

void MPCWeights::validate() const {
  auto ok = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!ok(omega1(0)) || !ok(omega1(1)) || !ok(omega2(0)) || !ok(omega2(1)) || !ok(omega12))
    throw InputError("MPC weights must be positive and finite");
}

PredictedTrajectory predict_trajectory(VehicleState x1, VehicleState x2, const VectorXd& u1, const VectorXd& u2,
                                       double dt) {
  if (u1.size() != u2.size()) throw InputError("input sequences differ in length");
  PredictedTrajectory t;
  t.u1 = u1;
  t.u2 = u2;
  t.x1.push_back(x1);
  t.x2.push_back(x2);
  for (Eigen::Index k = 0; k < u1.size(); ++k) {
    t.x1.push_back(step_dynamics(t.x1.back(), u1(k), dt));
    t.x2.push_back(step_dynamics(t.x2.back(), u2(k), dt));
  }
  return t;
}

double mpc_objective(const PredictedTrajectory& traj, const MPCWeights& w, const MPCConfig& cfg, double v_ref1,
                     double v_ref2) {
  const Eigen::Index h = traj.u1.size();
  if (traj.u2.size() != h || static_cast<Eigen::Index>(traj.x1.size()) != h + 1 ||
      static_cast<Eigen::Index>(traj.x2.size()) != h + 1)
    throw InputError("inconsistent predicted trajectory");
  double f = 0.0;
  for (Eigen::Index k = 0; k < h; ++k) {
    const VehicleState& a = traj.x1[k + 1];
    const VehicleState& b = traj.x2[k + 1];
    f += w.omega1(0) * traj.u1(k) * traj.u1(k) + w.omega1(1) * (a.v - v_ref1) * (a.v - v_ref1);
    f += w.omega2(0) * traj.u2(k) * traj.u2(k) + w.omega2(1) * (b.v - v_ref2) * (b.v - v_ref2);
    f -= w.omega12 * std::log(a.p * a.p + b.p * b.p + cfg.eps);
  }
  return f;
}

double mpc_objective(const PredictedTrajectory& traj, const MPCWeights& w, const MPCConfig& cfg) {
  return mpc_objective(traj, w, cfg, cfg.v_max, cfg.v_max);
}

namespace {

// Positions and speeds over the horizon are affine in the inputs:
// p_{k+1} = bp_k + P_k u, v_{k+1} = bv_k + V_k u with lower-triangular P, V.
struct Problem {
  int h = 0;
  double dt = 0.0;
  bool ctrl[2] = {true, true};
  double wa[2] = {0, 0}, wv[2] = {0, 0}, vref[2] = {0, 0};
  double w12 = 0.0;
  bool interaction = true;
  bool safety = true;
  double umin = 0, umax = 0, vmin = 0, vmax = 0, r2 = 0, eps = 0;
  MatrixXd P, VtV;
  VectorXd bp[2], bv[2];
  int off[2] = {-1, -1};
  int nc = 0;

  int n() const { return nc * h; }
  int m() const { return nc * 2 * h + (safety ? h : 0); }
};

Problem make_problem(int h, const MPCConfig& cfg, VehicleState a, VehicleState b, bool ctrl_a, bool ctrl_b) {
  Problem pb;
  pb.h = h;
  pb.dt = cfg.dt;
  pb.ctrl[0] = ctrl_a;
  pb.ctrl[1] = ctrl_b;
  pb.umin = cfg.u_min;
  pb.umax = cfg.u_max;
  pb.vmin = cfg.v_min;
  pb.vmax = cfg.v_max;
  pb.r2 = cfg.r * cfg.r + cfg.safety_backoff;
  pb.eps = cfg.eps;
  pb.P = MatrixXd::Zero(h, h);
  MatrixXd V = MatrixXd::Zero(h, h);
  for (int k = 0; k < h; ++k)
    for (int m = 0; m <= k; ++m) {
      pb.P(k, m) = cfg.dt * cfg.dt * (k - m + 0.5);
      V(k, m) = cfg.dt;
    }
  pb.VtV = V.transpose() * V;
  const VehicleState xs[2] = {a, b};
  for (int i = 0; i < 2; ++i) {
    pb.bp[i].resize(h);
    pb.bv[i] = VectorXd::Constant(h, xs[i].v);
    for (int k = 0; k < h; ++k) pb.bp[i](k) = xs[i].p + (k + 1) * cfg.dt * xs[i].v;
    if (pb.ctrl[i]) pb.off[i] = h * pb.nc++;
  }
  return pb;
}

void states(const Problem& pb, const VectorXd& x, VectorXd p[2], VectorXd v[2]) {
  for (int i = 0; i < 2; ++i) {
    if (pb.ctrl[i]) {
      const auto u = x.segment(pb.off[i], pb.h);
      p[i] = pb.bp[i] + pb.P.triangularView<Eigen::Lower>() * u;
      v[i].resize(pb.h);
      double acc = 0.0;
      for (int k = 0; k < pb.h; ++k) {
        acc += u(k);
        v[i](k) = pb.bv[i](k) + pb.dt * acc;
      }
    } else {
      p[i] = pb.bp[i];
      v[i] = pb.bv[i];
    }
  }
}

VectorXd constraints(const Problem& pb, const VectorXd& x) {
  VectorXd p[2], v[2];
  states(pb, x, p, v);
  VectorXd c(pb.m());
  int j = 0;
  for (int i = 0; i < 2; ++i) {
    if (!pb.ctrl[i]) continue;
    for (int k = 0; k < pb.h; ++k) c(j++) = v[i](k) - pb.vmax;
    for (int k = 0; k < pb.h; ++k) c(j++) = pb.vmin - v[i](k);
  }
  if (pb.safety)
    for (int k = 0; k < pb.h; ++k) c(j++) = pb.r2 - p[0](k) * p[0](k) - p[1](k) * p[1](k);
  return c;
}

// Objective plus augmented-Lagrangian penalty; gradient and exact Hessian on
// request. The x-independent -lam^2 / (2 rho) part of the penalty is left out
// so line searches do not compare values swamped by it.
double evaluate(const Problem& pb, const VectorXd& x, const VectorXd& lam, double rho, VectorXd* g, MatrixXd* H) {
  const int h = pb.h;
  VectorXd p[2], v[2];
  states(pb, x, p, v);
  if (g) g->setZero(pb.n());
  if (H) H->setZero(pb.n(), pb.n());
  double f = 0.0;
  int j = 0;
  for (int i = 0; i < 2; ++i) {
    if (!pb.ctrl[i]) continue;
    const int o = pb.off[i];
    const auto u = x.segment(o, h);
    const VectorXd dv = v[i].array() - pb.vref[i];
    f += pb.wa[i] * u.squaredNorm() + pb.wv[i] * dv.squaredNorm();
    if (g) {
      // V^T dv: suffix sums scaled by dt.
      double acc = 0.0;
      for (int m = h - 1; m >= 0; --m) {
        acc += dv(m);
        (*g)(o + m) += 2.0 * pb.wa[i] * u(m) + 2.0 * pb.wv[i] * pb.dt * acc;
      }
    }
    if (H) {
      H->block(o, o, h, h) += 2.0 * pb.wv[i] * pb.VtV;
      H->block(o, o, h, h).diagonal().array() += 2.0 * pb.wa[i];
    }
    for (int side = 0; side < 2; ++side) {
      const double sgn = side == 0 ? 1.0 : -1.0;
      for (int k = 0; k < h; ++k, ++j) {
        const double c = side == 0 ? v[i](k) - pb.vmax : pb.vmin - v[i](k);
        const double mu = std::max(0.0, lam(j) + rho * c);
        f += mu * mu / (2.0 * rho);
        if (mu > 0.0) {
          if (g) g->segment(o, k + 1).array() += sgn * mu * pb.dt;
          if (H) H->block(o, o, k + 1, k + 1).array() += rho * pb.dt * pb.dt;
        }
      }
    }
  }
  if (pb.interaction || pb.safety) {
    for (int k = 0; k < h; ++k) {
      const double s = p[0](k) * p[0](k) + p[1](k) * p[1](k);
      double mu = 0.0;
      if (pb.interaction) f -= pb.w12 * std::log(s + pb.eps);
      if (pb.safety) {
        const double c = pb.r2 - s;
        const int js = j + k;
        mu = std::max(0.0, lam(js) + rho * c);
        f += mu * mu / (2.0 * rho);
      }
      if (!g && !H) continue;
      // d/dp_i: -2 p_i (w12/(s+eps) + mu); second derivatives assemble
      // d * delta_ij + beta * p_i p_j on the P_k^T P_k blocks.
      const double se = s + pb.eps;
      const double lin = pb.interaction ? pb.w12 / se : 0.0;
      const double d = -2.0 * (lin + mu);
      const double beta = (pb.interaction ? 4.0 * pb.w12 / (se * se) : 0.0) + (mu > 0.0 ? 4.0 * rho : 0.0);
      const auto row = pb.P.row(k).head(k + 1);
      for (int a = 0; a < 2; ++a) {
        if (!pb.ctrl[a]) continue;
        if (g) g->segment(pb.off[a], k + 1) += (-2.0 * p[a](k) * (lin + mu)) * row.transpose();
        if (!H) continue;
        for (int b = 0; b < 2; ++b) {
          if (!pb.ctrl[b]) continue;
          const double coef = (a == b ? d : 0.0) + beta * p[a](k) * p[b](k);
          if (coef != 0.0) H->block(pb.off[a], pb.off[b], k + 1, k + 1).noalias() += coef * row.transpose() * row;
        }
      }
    }
  }
  return f;
}

VectorXd clamp_box(const Problem& pb, const VectorXd& x) { return x.cwiseMax(pb.umin).cwiseMin(pb.umax); }

// Projected Newton on the input box with an epsilon-active set and a
// diagonal shift whenever the free block of the Hessian is not positive definite.
void minimize_inner(const Problem& pb, VectorXd& x, const VectorXd& lam, double rho, int max_iter = 300) {
  const int n = pb.n();
  VectorXd g(n);
  MatrixXd H(n, n);
  for (int it = 0; it < max_iter; ++it) {
    const double f = evaluate(pb, x, lam, rho, &g, &H);
    const VectorXd pg = clamp_box(pb, x - g) - x;
    const double pg_norm = pg.cwiseAbs().maxCoeff();
    if (pg_norm < 1e-10 * std::max(1.0, std::abs(f))) return;
    const double act = std::min(1e-6, pg_norm);
    std::vector<int> free_idx;
    for (int i = 0; i < n; ++i) {
      const bool at_lo = x(i) <= pb.umin + act && g(i) > 0.0;
      const bool at_hi = x(i) >= pb.umax - act && g(i) < 0.0;
      if (!at_lo && !at_hi) free_idx.push_back(i);
    }
    VectorXd d = VectorXd::Zero(n);
    if (!free_idx.empty()) {
      const int nf = static_cast<int>(free_idx.size());
      MatrixXd Hf(nf, nf);
      VectorXd gf(nf);
      for (int a = 0; a < nf; ++a) {
        gf(a) = g(free_idx[a]);
        for (int b = 0; b < nf; ++b) Hf(a, b) = H(free_idx[a], free_idx[b]);
      }
      const double scale = std::max(1e-12, Hf.diagonal().cwiseAbs().maxCoeff());
      double tau = 0.0;
      Eigen::LLT<MatrixXd> llt;
      for (int t = 0; t < 60; ++t) {
        MatrixXd shifted = Hf;
        shifted.diagonal().array() += tau;
        llt.compute(shifted);
        if (llt.info() == Eigen::Success) break;
        tau = tau == 0.0 ? 1e-8 * scale : 4.0 * tau;
      }
      const VectorXd df = llt.solve(-gf);
      for (int a = 0; a < nf; ++a) d(free_idx[a]) = df(a);
    }
    bool moved = false;
    for (int attempt = 0; attempt < 2 && !moved; ++attempt) {
      const VectorXd dir = attempt == 0 ? d : VectorXd(-g);
      double alpha = 1.0;
      for (int ls = 0; ls < 40; ++ls, alpha *= 0.5) {
        const VectorXd xn = clamp_box(pb, x + alpha * dir);
        const VectorXd step = xn - x;
        const double decrease = g.dot(step);
        if (decrease >= 0.0) continue;
        const double fn = evaluate(pb, xn, lam, rho, nullptr, nullptr);
        if (fn <= f + 1e-4 * decrease) {
          moved = step.cwiseAbs().maxCoeff() > 1e-14;
          x = xn;
          break;
        }
      }
    }
    if (!moved) return;
  }
}

struct AlResult {
  VectorXd x, lam;
  double rho = 0.0;
  double speed_viol = 0.0, safety_viol = 0.0;
};

void violations(const Problem& pb, const VectorXd& c, double& speed, double& safety) {
  const int ns = pb.nc * 2 * pb.h;
  speed = 0.0;
  safety = 0.0;
  for (int j = 0; j < ns; ++j) speed = std::max(speed, c(j));
  for (int j = ns; j < c.size(); ++j) safety = std::max(safety, c(j));
}

AlResult solve_al(const Problem& pb, VectorXd x0) {
  AlResult r;
  r.x = clamp_box(pb, x0);
  VectorXd lam = VectorXd::Zero(pb.m());
  double rho = 10.0;
  double prev = std::numeric_limits<double>::infinity();
  int stalled = 0;
  for (int outer = 0; outer < 30; ++outer) {
    minimize_inner(pb, r.x, lam, rho);
    r.lam = lam;
    r.rho = rho;
    const VectorXd c = constraints(pb, r.x);
    violations(pb, c, r.speed_viol, r.safety_viol);
    // Complementarity on inactive constraints: multipliers must vanish too.
    double comp = 0.0;
    for (Eigen::Index j = 0; j < c.size(); ++j) comp = std::max(comp, std::abs(std::max(c(j), -lam(j) / rho)));
    lam = (lam + rho * c).cwiseMax(0.0);
    if (r.speed_viol <= 1e-7 && r.safety_viol <= 1e-6 && comp <= 1e-6) break;
    const double viol = std::max(r.speed_viol, r.safety_viol);
    // Once feasible, only the multipliers are still converging; a larger
    // penalty would just worsen the conditioning of the inner problem.
    const bool feasible = r.speed_viol <= 1e-7 && r.safety_viol <= 1e-6;
    if (!feasible && viol > 0.25 * prev) {
      // Past the penalty cap a stalled iterate is taken as locally infeasible.
      if (rho >= 1e8 && ++stalled >= 2) break;
      rho = std::min(rho * 10.0, 1e8);
    }
    prev = viol;
  }
  return r;
}

struct Normalized {
  double wa[2], wv[2], w12;
};

Normalized normalize(const MPCWeights& w) {
  const double mx = std::max({w.omega1(0), w.omega1(1), w.omega2(0), w.omega2(1), w.omega12});
  return {{w.omega1(0) / mx, w.omega2(0) / mx}, {w.omega1(1) / mx, w.omega2(1) / mx}, w.omega12 / mx};
}

Problem cav_problem(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg,
                    const MpcOptions& opt) {
  Problem pb = make_problem(cfg.horizon, cfg, x1, x2, true, true);
  const Normalized nw = normalize(w);
  for (int i = 0; i < 2; ++i) {
    pb.wa[i] = nw.wa[i];
    pb.wv[i] = nw.wv[i];
  }
  pb.vref[0] = opt.v_ref1.value_or(cfg.v_max);
  pb.vref[1] = opt.v_ref2.value_or(cfg.v_max);
  pb.w12 = nw.w12;
  pb.interaction = opt.interaction;
  pb.safety = opt.interaction;
  return pb;
}

VectorXd shifted(const VectorXd& u, int h, double fill_default) {
  VectorXd s(h);
  for (int k = 0; k < h; ++k) {
    const Eigen::Index src = k + 1;
    s(k) = src < u.size() ? u(src) : (u.size() > 0 ? u(u.size() - 1) : fill_default);
  }
  return s;
}

VectorXd braking_sequence(VehicleState x, const MPCConfig& cfg, int h) {
  VectorXd u(h);
  for (int k = 0; k < h; ++k) {
    u(k) = std::min(cfg.u_max, std::max(cfg.u_min, (cfg.v_min - x.v) / cfg.dt));
    x = step_dynamics(x, u(k), cfg.dt);
  }
  return u;
}

void check_state(VehicleState s, const char* who) {
  if (!std::isfinite(s.p) || !std::isfinite(s.v)) throw InputError(std::string(who) + " state is not finite");
}

}  // namespace

MpcSolution braking_fallback(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg) {
  cfg.validate();
  MpcSolution s;
  s.u1 = braking_sequence(x1, cfg, cfg.horizon);
  s.u2 = braking_sequence(x2, cfg, cfg.horizon);
  const Problem pb = cav_problem(x1, x2, w, cfg, {});
  VectorXd x(2 * cfg.horizon);
  x << s.u1, s.u2;
  violations(pb, constraints(pb, x), s.max_speed_violation, s.max_safety_violation);
  s.objective = mpc_objective(predict_trajectory(x1, x2, s.u1, s.u2, cfg.dt), w, cfg);
  s.fallback = true;
  s.multipliers = VectorXd::Zero(pb.m());
  s.rho = 1.0;
  return s;
}

MpcSolution solve_mpc(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg,
                      const MpcOptions& opt) {
  cfg.validate();
  w.validate();
  check_state(x1, "CAV");
  check_state(x2, "HDV");
  const int h = cfg.horizon;
  const Problem pb = cav_problem(x1, x2, w, cfg, opt);

  std::vector<VectorXd> starts;
  VectorXd s0(2 * h);
  if (opt.warm && opt.warm->u1.size() > 0 && opt.warm->u2.size() > 0)
    s0 << shifted(opt.warm->u1, h, 0.0), shifted(opt.warm->u2, h, 0.0);
  else
    s0.setZero();
  starts.push_back(s0);
  if (opt.interaction) {
    // One start per crossing order; the safety constraint makes the problem
    // nonconvex with one local basin per order.
    VectorXd a(2 * h), b(2 * h);
    a << VectorXd::Constant(h, cfg.u_max), braking_sequence(x2, cfg, h);
    b << braking_sequence(x1, cfg, h), VectorXd::Constant(h, cfg.u_max);
    starts.push_back(a);
    starts.push_back(b);
    VectorXd c(2 * h);
    c << braking_sequence(x1, cfg, h), braking_sequence(x2, cfg, h);
    starts.push_back(c);
  }

  const double v1 = opt.v_ref1.value_or(cfg.v_max), v2 = opt.v_ref2.value_or(cfg.v_max);
  MPCWeights eff = w;
  if (!opt.interaction) eff.omega12 = 0.0;
  auto objective = [&](const VectorXd& u1, const VectorXd& u2) {
    return mpc_objective(predict_trajectory(x1, x2, u1, u2, cfg.dt), eff, cfg, v1, v2);
  };

  bool have = false;
  AlResult best;
  double best_f = std::numeric_limits<double>::infinity();
  for (const VectorXd& st : starts) {
    AlResult r = solve_al(pb, st);
    if (r.speed_viol > opt.speed_tolerance || r.safety_viol > opt.safety_tolerance) continue;
    const double f = objective(r.x.head(h), r.x.tail(h));
    if (f < best_f - 1e-12 * std::max(1.0, std::abs(f))) {
      best_f = f;
      best = std::move(r);
      have = true;
    }
  }

  MpcSolution brake = braking_fallback(x1, x2, w, cfg);
  const bool brake_ok = brake.max_speed_violation <= opt.speed_tolerance &&
                        (!opt.interaction || brake.max_safety_violation <= opt.safety_tolerance);
  if (!opt.interaction) brake.max_safety_violation = 0.0;
  brake.objective = objective(brake.u1, brake.u2);
  if (!have) {
    brake.feasible = brake_ok;
    return brake;
  }
  MpcSolution s;
  s.u1 = best.x.head(h);
  s.u2 = best.x.tail(h);
  s.max_speed_violation = best.speed_viol;
  s.max_safety_violation = best.safety_viol;
  s.multipliers = best.lam;
  s.rho = best.rho;
  s.objective = objective(s.u1, s.u2);
  if (brake_ok && brake.objective < s.objective) {
    brake.feasible = true;
    return brake;
  }
  return s;
}

double mpc_augmented_objective(VehicleState x1, VehicleState x2, const MPCWeights& w, const MPCConfig& cfg,
                               const VectorXd& u1, const VectorXd& u2, const VectorXd& multipliers, double rho,
                               const MpcOptions& opt) {
  cfg.validate();
  w.validate();
  const Problem pb = cav_problem(x1, x2, w, cfg, opt);
  if (u1.size() != pb.h || u2.size() != pb.h) throw InputError("input sequences must have horizon length");
  if (multipliers.size() != pb.m()) throw InputError("multiplier vector has wrong length");
  if (!(rho > 0.0)) throw InputError("rho must be positive");
  VectorXd x(2 * pb.h);
  x << u1, u2;
  return evaluate(pb, x, multipliers, rho, nullptr, nullptr) - multipliers.squaredNorm() / (2.0 * rho);
}

VectorXd hdv_plan(VehicleState cav, VehicleState hdv, const Eigen::Vector2d& omega2, double omega12,
                  const MPCConfig& cfg, const HdvOptions& opt) {
  cfg.validate();
  check_state(cav, "CAV");
  check_state(hdv, "HDV");
  if (opt.horizon < 1) throw InputError("HDV horizon must be >= 1");
  auto ok = [](double x) { return std::isfinite(x) && x > 0.0; };
  if (!ok(omega2(0)) || !ok(omega2(1)) || !ok(omega12)) throw InputError("HDV weights must be positive and finite");
  Problem pb = make_problem(opt.horizon, cfg, cav, hdv, false, true);
  const double mx = std::max({omega2(0), omega2(1), omega12});
  pb.wa[1] = omega2(0) / mx;
  pb.wv[1] = omega2(1) / mx;
  pb.vref[1] = opt.v_ref.value_or(cfg.v_max);
  pb.w12 = omega12 / mx;
  pb.interaction = true;
  pb.safety = false;
  VectorXd x0 = opt.warm ? shifted(*opt.warm, opt.horizon, 0.0) : VectorXd::Zero(opt.horizon);
  AlResult r = solve_al(pb, x0);
  if (r.speed_viol > 1e-4) return braking_sequence(hdv, cfg, opt.horizon);
  return r.x;
}

double hdv_action(VehicleState cav, VehicleState hdv, const Eigen::Vector2d& omega2, double omega12,
                  const MPCConfig& cfg, const HdvOptions& opt) {
  return std::clamp(hdv_plan(cav, hdv, omega2, omega12, cfg, opt)(0), cfg.u_min, cfg.u_max);
}

}  // namespace cbo::sim
