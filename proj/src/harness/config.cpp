#include "cbo/harness/config.hpp"

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "cbo/core/errors.hpp"
#include "cbo/harness/analytic.hpp"

namespace cbo::harness {

using nlohmann::json;

namespace {

// Typed access to one JSON object; remembers which keys were read so that
// leftovers (typos) can be reported.
class Reader {
 public:
  Reader(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_object()) throw ConfigError(where_ + ": expected an object");
  }

  bool has(const std::string& key) const { return j_.contains(key); }

  template <class T>
  T get(const std::string& key, T fallback) {
    seen_.insert(key);
    if (!j_.contains(key)) return fallback;
    return convert<T>(j_.at(key), key);
  }

  template <class T>
  T require(const std::string& key) {
    seen_.insert(key);
    if (!j_.contains(key)) throw ConfigError(where_ + ": missing required key '" + key + "'");
    return convert<T>(j_.at(key), key);
  }

  const json& child(const std::string& key) {
    seen_.insert(key);
    return j_.at(key);
  }

  void finish() const {
    for (auto it = j_.begin(); it != j_.end(); ++it)
      if (!seen_.count(it.key())) throw ConfigError(where_ + ": unknown key '" + it.key() + "'");
  }

 private:
  template <class T>
  T convert(const json& v, const std::string& key) const {
    try {
      if constexpr (std::is_same_v<T, double>) {
        if (!v.is_number()) throw ConfigError("");
      } else if constexpr (std::is_integral_v<T> && !std::is_same_v<T, bool>) {
        if (!v.is_number_integer()) throw ConfigError("");
        if constexpr (std::is_unsigned_v<T>)
          if (v.is_number_integer() && !v.is_number_unsigned() && v.get<long long>() < 0) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, bool>) {
        if (!v.is_boolean()) throw ConfigError("");
      } else if constexpr (std::is_same_v<T, std::string>) {
        if (!v.is_string()) throw ConfigError("");
      }
      return v.get<T>();
    } catch (const std::exception&) {
      throw ConfigError(where_ + ": key '" + key + "' has the wrong type");
    }
  }

  json j_;
  std::string where_;
  std::set<std::string> seen_;
};

Eigen::VectorXd vector_from_json(const json& j, const std::string& where) {
  if (!j.is_array()) throw ConfigError(where + ": expected an array of numbers");
  Eigen::VectorXd v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) {
    if (!j[i].is_number()) throw ConfigError(where + ": expected an array of numbers");
    v(static_cast<Eigen::Index>(i)) = j[i].get<double>();
  }
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) { return json(to_std(v)); }

BoxDomain domain_from_json(const json& j, const std::string& where) {
  Reader r(j, where);
  const Eigen::VectorXd lo = vector_from_json(r.child("lower"), where + ".lower");
  const Eigen::VectorXd hi = vector_from_json(r.child("upper"), where + ".upper");
  r.finish();
  try {
    return BoxDomain(lo, hi);
  } catch (const std::exception& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

json domain_to_json(const BoxDomain& d) { return {{"lower", vector_to_json(d.lower())}, {"upper", vector_to_json(d.upper())}}; }

template <class F>
void wrap_validate(const std::string& where, F&& f) {
  try {
    f();
  } catch (const InputError& e) {
    throw ConfigError(where + ": " + e.what());
  }
}

std::string env_output_dir(const std::string& configured) {
  const char* v = std::getenv(kOutputDirEnv);
  return v && *v ? std::string(v) : configured;
}

}  // namespace

json to_json(const sim::ScenarioConfig& c) {
  const sim::MPCConfig& m = c.mpc;
  return {{"mpc",
           {{"horizon", m.horizon},
            {"dt", m.dt},
            {"u_min", m.u_min},
            {"u_max", m.u_max},
            {"v_min", m.v_min},
            {"v_max", m.v_max},
            {"r", m.r},
            {"eps", m.eps},
            {"safety_backoff", m.safety_backoff}}},
          {"p0_min", c.p0_min},
          {"p0_max", c.p0_max},
          {"v0_min", c.v0_min},
          {"v0_max", c.v0_max},
          {"exit_position", c.exit_position},
          {"time_cap", c.time_cap},
          {"hdv_horizon", c.hdv_horizon},
          {"omega12", c.omega12},
          {"weight_log_bound", c.weight_log_bound},
          {"hdv_count", c.hdv_count},
          {"trailing_gap_min", c.trailing_gap_min},
          {"trailing_gap_max", c.trailing_gap_max},
          {"headway_standstill", c.headway_standstill},
          {"headway_time", c.headway_time}};
}

sim::ScenarioConfig scenario_from_json(const json& j) {
  sim::ScenarioConfig c;
  Reader r(j, "scenario");
  if (r.has("mpc")) {
    Reader m(r.child("mpc"), "scenario.mpc");
    c.mpc.horizon = m.get("horizon", c.mpc.horizon);
    c.mpc.dt = m.get("dt", c.mpc.dt);
    c.mpc.u_min = m.get("u_min", c.mpc.u_min);
    c.mpc.u_max = m.get("u_max", c.mpc.u_max);
    c.mpc.v_min = m.get("v_min", c.mpc.v_min);
    c.mpc.v_max = m.get("v_max", c.mpc.v_max);
    c.mpc.r = m.get("r", c.mpc.r);
    c.mpc.eps = m.get("eps", c.mpc.eps);
    c.mpc.safety_backoff = m.get("safety_backoff", c.mpc.safety_backoff);
    m.finish();
  }
  c.p0_min = r.get("p0_min", c.p0_min);
  c.p0_max = r.get("p0_max", c.p0_max);
  c.v0_min = r.get("v0_min", c.v0_min);
  c.v0_max = r.get("v0_max", c.v0_max);
  c.exit_position = r.get("exit_position", c.exit_position);
  c.time_cap = r.get("time_cap", c.time_cap);
  c.hdv_horizon = r.get("hdv_horizon", c.hdv_horizon);
  c.omega12 = r.get("omega12", c.omega12);
  c.weight_log_bound = r.get("weight_log_bound", c.weight_log_bound);
  c.hdv_count = r.get("hdv_count", c.hdv_count);
  c.trailing_gap_min = r.get("trailing_gap_min", c.trailing_gap_min);
  c.trailing_gap_max = r.get("trailing_gap_max", c.trailing_gap_max);
  c.headway_standstill = r.get("headway_standstill", c.headway_standstill);
  c.headway_time = r.get("headway_time", c.headway_time);
  r.finish();
  wrap_validate("scenario", [&] { c.validate(); });
  return c;
}

json to_json(const sim::MetricConfig& m) {
  return {{"lambda_time", m.lambda_time},
          {"lambda_acce", m.lambda_acce},
          {"lambda_coll", m.lambda_coll},
          {"sigmoid_scale", m.sigmoid_scale},
          {"n_s", m.n_s}};
}

sim::MetricConfig metric_from_json(const json& j) {
  sim::MetricConfig m;
  Reader r(j, "metric");
  m.lambda_time = r.get("lambda_time", m.lambda_time);
  m.lambda_acce = r.get("lambda_acce", m.lambda_acce);
  m.lambda_coll = r.get("lambda_coll", m.lambda_coll);
  m.sigmoid_scale = r.get("sigmoid_scale", m.sigmoid_scale);
  m.n_s = r.get("n_s", m.n_s);
  r.finish();
  wrap_validate("metric", [&] { m.validate(); });
  return m;
}

void RunConfig::validate() const {
  if (j_max < 1) throw ConfigError("j_max must be >= 1");
  if (k_max < 1) throw ConfigError("k_max must be >= 1");
  if (!(beta >= 0.0) || !std::isfinite(beta)) throw ConfigError("beta must be >= 0");
  if (max_data < 2) throw ConfigError("max_data must be >= 2");
  if (refit_every_until < 0 || refit_period < 1) throw ConfigError("refit cadence is invalid");
  if (inner_train_restarts < 1 || solution_train_restarts < 1) throw ConfigError("train restarts must be >= 1");
  if (probe_points_per_dim < 2) throw ConfigError("probe_points_per_dim must be >= 2");
  if (z_domain.dims() == 0 || theta_domain.dims() == 0) throw ConfigError("domains must be non-empty");
  if (solution_rank > z_domain.dims()) throw ConfigError("solution_rank exceeds dim(z)");
  if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
  if (evaluator.kind == EvaluatorKind::Analytic) {
    const AnalyticBenchmark b = analytic_benchmark(evaluator.benchmark);
    if (b.z_domain.dims() != z_domain.dims() || b.theta_domain.dims() != theta_domain.dims())
      throw ConfigError("domain dimensions do not match benchmark '" + evaluator.benchmark + "'");
    if (!(evaluator.noise_sigma >= 0.0)) throw ConfigError("noise_sigma must be >= 0");
  } else {
    wrap_validate("scenario", [&] { evaluator.scenario.validate(); });
    wrap_validate("metric", [&] { evaluator.metric.validate(); });
    const double b = evaluator.scenario.weight_log_bound;
    if (z_domain.dims() != 2 || theta_domain.dims() != 2) throw ConfigError("CAV domains must be 2-D");
    for (const BoxDomain* d : {&z_domain, &theta_domain})
      if (d->lower().minCoeff() < -b || d->upper().maxCoeff() > b)
        throw ConfigError("CAV domains must lie within the weight bound");
  }
}

learner::OuterLoopConfig RunConfig::outer_loop_config() const {
  learner::OuterLoopConfig o;
  o.j_max = j_max;
  o.seed = seed;
  o.inner.k_max = k_max;
  o.inner.acquisition.beta = beta;
  o.inner.refit_every_until = refit_every_until;
  o.inner.refit_period = refit_period;
  o.inner.train.restarts = inner_train_restarts;
  o.surrogate.max_data = max_data;
  o.solution.train.restarts = solution_train_restarts;
  o.solution.rank = solution_rank;
  o.probe_points_per_dim = probe_points_per_dim;
  return o;
}

RunConfig run_config_from_json(const json& j) {
  RunConfig c;
  Reader r(j, "config");
  c.seed = r.require<std::uint64_t>("seed");
  c.output_dir = r.get<std::string>("output_dir", c.output_dir);
  c.j_max = r.get("j_max", c.j_max);
  c.k_max = r.get("k_max", c.k_max);
  c.beta = r.get("beta", c.beta);
  c.max_data = r.get("max_data", c.max_data);
  c.refit_every_until = r.get("refit_every_until", c.refit_every_until);
  c.refit_period = r.get("refit_period", c.refit_period);
  c.inner_train_restarts = r.get("inner_train_restarts", c.inner_train_restarts);
  c.solution_train_restarts = r.get("solution_train_restarts", c.solution_train_restarts);
  c.solution_rank = r.get("solution_rank", c.solution_rank);
  c.probe_points_per_dim = r.get("probe_points_per_dim", c.probe_points_per_dim);

  Reader e(r.require<json>("evaluator"), "evaluator");
  const std::string type = e.require<std::string>("type");
  if (type == "analytic") {
    c.evaluator.kind = EvaluatorKind::Analytic;
    c.evaluator.benchmark = e.require<std::string>("benchmark");
    c.evaluator.noise_sigma = e.get("noise_sigma", c.evaluator.noise_sigma);
  } else if (type == "cav_sim") {
    c.evaluator.kind = EvaluatorKind::CavSim;
    if (e.has("scenario")) c.evaluator.scenario = scenario_from_json(e.child("scenario"));
    if (e.has("metric")) c.evaluator.metric = metric_from_json(e.child("metric"));
  } else {
    throw ConfigError("evaluator.type must be 'analytic' or 'cav_sim'");
  }
  e.finish();

  if (c.evaluator.kind == EvaluatorKind::Analytic) {
    const AnalyticBenchmark b = analytic_benchmark(c.evaluator.benchmark);
    c.z_domain = b.z_domain;
    c.theta_domain = b.theta_domain;
  } else {
    const double b = c.evaluator.scenario.weight_log_bound;
    c.z_domain = c.theta_domain = BoxDomain::uniform(2, -b, b);
  }
  if (r.has("domains")) {
    Reader d(r.child("domains"), "domains");
    if (d.has("z")) c.z_domain = domain_from_json(d.child("z"), "domains.z");
    if (d.has("theta")) c.theta_domain = domain_from_json(d.child("theta"), "domains.theta");
    d.finish();
  }
  r.finish();
  c.validate();
  return c;
}

json to_json(const RunConfig& c) {
  json ev;
  if (c.evaluator.kind == EvaluatorKind::Analytic)
    ev = {{"type", "analytic"}, {"benchmark", c.evaluator.benchmark}, {"noise_sigma", c.evaluator.noise_sigma}};
  else
    ev = {{"type", "cav_sim"}, {"scenario", to_json(c.evaluator.scenario)}, {"metric", to_json(c.evaluator.metric)}};
  return {{"seed", c.seed},
          {"output_dir", c.output_dir},
          {"j_max", c.j_max},
          {"k_max", c.k_max},
          {"beta", c.beta},
          {"max_data", c.max_data},
          {"refit_every_until", c.refit_every_until},
          {"refit_period", c.refit_period},
          {"inner_train_restarts", c.inner_train_restarts},
          {"solution_train_restarts", c.solution_train_restarts},
          {"solution_rank", c.solution_rank},
          {"probe_points_per_dim", c.probe_points_per_dim},
          {"evaluator", ev},
          {"domains", {{"z", domain_to_json(c.z_domain)}, {"theta", domain_to_json(c.theta_domain)}}}};
}

json read_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open '" + path + "'");
  try {
    return json::parse(in);
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not valid JSON: " + e.what());
  }
}

void write_text_file(const std::string& path, const std::string& text) {
  namespace fs = std::filesystem;
  const fs::path target(path);
  std::error_code ec;
  if (target.has_parent_path()) fs::create_directories(target.parent_path(), ec);
  if (ec) throw IoError("cannot create directory for '" + path + "': " + ec.message());
  const fs::path tmp = target.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << text;
    out.flush();
    if (!out) throw IoError("write to '" + tmp.string() + "' failed");
  }
  fs::rename(tmp, target, ec);
  if (ec) throw IoError("cannot rename onto '" + path + "': " + ec.message());
}

RunConfig load_run_config(const std::string& path) {
  RunConfig c = run_config_from_json(read_json_file(path));
  c.output_dir = env_output_dir(c.output_dir);
  return c;
}

void ComparisonSpec::validate() const {
  if (controllers.size() < 2) throw ConfigError("a comparison needs at least two controllers");
  if (episodes < 1) throw ConfigError("episodes must be >= 1");
  if (output_dir.empty()) throw ConfigError("output_dir must be non-empty");
  wrap_validate("scenario", [&] { scenario.validate(); });
  wrap_validate("metric", [&] { metric.validate(); });
  const double b = scenario.weight_log_bound;
  if (context_domain.dims() != 2 || context_domain.lower().minCoeff() < -b || context_domain.upper().maxCoeff() > b)
    throw ConfigError("context domain must be 2-D within the weight bound");
  std::set<std::string> names;
  for (const ControllerSpec& c : controllers) {
    if (c.name.empty() || !names.insert(c.name).second) throw ConfigError("controller names must be unique and non-empty");
    if (c.kind == ControllerSpec::Kind::Adaptive && c.model_path.empty())
      throw ConfigError("adaptive controller '" + c.name + "' needs a model path");
    if (c.kind == ControllerSpec::Kind::Fixed &&
        (c.z.size() != 2 || !(c.z.cwiseAbs().maxCoeff() <= b)))
      throw ConfigError("fixed controller '" + c.name + "' needs z within the weight bound");
  }
}

ComparisonSpec comparison_spec_from_json(const json& j) {
  ComparisonSpec s;
  Reader r(j, "comparison");
  s.seed = r.require<std::uint64_t>("seed");
  s.episodes = r.get("episodes", s.episodes);
  s.output_dir = r.get<std::string>("output_dir", s.output_dir);
  if (r.has("scenario")) s.scenario = scenario_from_json(r.child("scenario"));
  if (r.has("metric")) s.metric = metric_from_json(r.child("metric"));
  if (r.has("context_domain")) s.context_domain = domain_from_json(r.child("context_domain"), "context_domain");
  const json& cs = r.require<json>("controllers");
  if (!cs.is_array()) throw ConfigError("controllers must be an array");
  for (const json& cj : cs) {
    Reader c(cj, "controller");
    ControllerSpec spec;
    spec.name = c.require<std::string>("name");
    const std::string type = c.require<std::string>("type");
    if (type == "adaptive") {
      spec.kind = ControllerSpec::Kind::Adaptive;
      spec.model_path = c.require<std::string>("model");
    } else if (type == "fixed") {
      spec.kind = ControllerSpec::Kind::Fixed;
      spec.z = vector_from_json(c.child("z"), "controller.z");
    } else {
      throw ConfigError("controller type must be 'adaptive' or 'fixed'");
    }
    c.finish();
    s.controllers.push_back(spec);
  }
  r.finish();
  s.validate();
  return s;
}

json to_json(const ComparisonSpec& s) {
  json cs = json::array();
  for (const ControllerSpec& c : s.controllers) {
    if (c.kind == ControllerSpec::Kind::Adaptive)
      cs.push_back({{"name", c.name}, {"type", "adaptive"}, {"model", c.model_path}});
    else
      cs.push_back({{"name", c.name}, {"type", "fixed"}, {"z", vector_to_json(c.z)}});
  }
  return {{"seed", s.seed},
          {"episodes", s.episodes},
          {"output_dir", s.output_dir},
          {"scenario", to_json(s.scenario)},
          {"metric", to_json(s.metric)},
          {"context_domain", domain_to_json(s.context_domain)},
          {"controllers", cs}};
}

ComparisonSpec load_comparison_spec(const std::string& path) {
  ComparisonSpec s = comparison_spec_from_json(read_json_file(path));
  s.output_dir = env_output_dir(s.output_dir);
  return s;
}

}  // namespace cbo::harness
