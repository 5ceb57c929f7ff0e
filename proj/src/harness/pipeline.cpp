#include "cbo/harness/pipeline.hpp"

#include <filesystem>
#include <fstream>
#include <sstream>

#include "cbo/core/errors.hpp"
#include "cbo/core/format.hpp"
#include "cbo/core/log.hpp"
#include "cbo/core/random.hpp"
#include "cbo/harness/analytic.hpp"
#include "cbo/sim/scenario.hpp"

namespace cbo::harness {

using Eigen::MatrixXd;
using Eigen::VectorXd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

std::string join(const std::string& dir, const std::string& file) { return (fs::path(dir) / file).string(); }

// CSV artifacts carry the producing config on their first line.
std::string config_line(const json& config) { return "# config: " + config.dump() + "\n"; }

// Fields a checkpoint may differ in and still be resumed: where it lives and
// how far the run goes.
json resumable_part(json j) {
  j.erase("output_dir");
  j.erase("j_max");
  return j;
}

std::string run_log_text(const RunConfig& cfg, const learner::OuterLoopState& state) {
  std::ostringstream os;
  os << config_line(to_json(cfg));
  bo::write_run_log_header(os, cfg.z_domain.dims(), cfg.theta_domain.dims());
  for (const bo::IterationRecord& r : state.records) bo::write_run_log_row(os, r);
  return os.str();
}

void write_checkpoint(const RunConfig& cfg, const learner::OuterLoopState& state) {
  const json doc = {{"config", to_json(cfg)}, {"state", learner::to_json(state)}};
  write_text_file(join(cfg.output_dir, "checkpoint.json"), doc.dump());
  write_text_file(join(cfg.output_dir, "run_log.csv"), run_log_text(cfg, state));
}

}  // namespace

std::unique_ptr<bo::ObjectiveEvaluator> make_evaluator(const RunConfig& cfg) {
  if (cfg.evaluator.kind == EvaluatorKind::Analytic)
    return std::make_unique<AnalyticEvaluator>(analytic_benchmark(cfg.evaluator.benchmark), cfg.evaluator.noise_sigma);
  return std::make_unique<sim::CavEvaluator>(cfg.evaluator.scenario, cfg.evaluator.metric);
}

LearnResult run_learn(const RunConfig& cfg, bool resume) {
  cfg.validate();
  const learner::OuterLoopConfig loop = cfg.outer_loop_config();
  const json config = to_json(cfg);
  LearnResult result;

  const std::string checkpoint = join(cfg.output_dir, "checkpoint.json");
  const bool from_checkpoint = resume && fs::exists(checkpoint);
  learner::OuterLoopState state = [&] {
    if (!from_checkpoint) return learner::initial_state(cfg.z_domain, cfg.theta_domain, loop);
    const json doc = read_json_file(checkpoint);
    if (!doc.contains("config") || resumable_part(doc.at("config")) != resumable_part(config))
      throw ConfigError("'" + checkpoint + "' was written by a different config; remove it or change output_dir");
    try {
      learner::OuterLoopState s = learner::state_from_json(doc.at("state"));
      if (s.completed > cfg.j_max) throw ConfigError("checkpoint is past j_max");
      return s;
    } catch (const json::exception& e) {
      throw IoError("corrupt checkpoint '" + checkpoint + "': " + e.what());
    }
  }();
  result.resumed = from_checkpoint;

  write_text_file(join(cfg.output_dir, "config.json"), config.dump(2) + "\n");
  std::unique_ptr<bo::ObjectiveEvaluator> evaluator = make_evaluator(cfg);
  learner::OuterLoopResult out =
      learner::outer_loop(*evaluator, std::move(state), loop, [&](const learner::OuterLoopState& s) {
        write_checkpoint(cfg, s);
      });
  write_checkpoint(cfg, out.state);

  result.completed = out.state.completed;
  result.aborted = out.aborted;
  result.diagnostic = out.diagnostic;
  result.probe_log_det = out.state.probe_log_det;
  result.run_log_path = join(cfg.output_dir, "run_log.csv");
  if (out.state.solution.fitted()) {
    result.model_path = join(cfg.output_dir, "model.json");
    const json model = {{"config", config}, {"model", learner::to_json(out.state.solution)}};
    write_text_file(result.model_path, model.dump());
  }
  const json summary = {{"config", config},
                        {"completed", result.completed},
                        {"aborted", result.aborted},
                        {"diagnostic", result.diagnostic},
                        {"evaluations", out.state.records.size()},
                        {"probe_log_det", result.probe_log_det}};
  write_text_file(join(cfg.output_dir, "summary.json"), summary.dump(2) + "\n");
  return result;
}

learner::SolutionModel load_solution_model(const std::string& path) {
  const json doc = read_json_file(path);
  try {
    const bool bare = doc.value("type", "") == "solution_model";
    return learner::solution_model_from_json(bare ? doc : doc.at("model"));
  } catch (const json::exception& e) {
    throw IoError("'" + path + "' is not a solution model: " + e.what());
  }
}

CompareResult run_compare(const ComparisonSpec& spec) {
  spec.validate();
  std::vector<std::optional<learner::SolutionModel>> models;
  for (const ControllerSpec& c : spec.controllers) {
    if (c.kind != ControllerSpec::Kind::Adaptive) {
      models.emplace_back();
      continue;
    }
    if (!fs::exists(c.model_path)) throw IoError("model file '" + c.model_path + "' not found");
    learner::SolutionModel m = load_solution_model(c.model_path);
    if (m.z_domain().dims() != 2 || m.theta_domain().dims() != 2)
      throw ConfigError("model '" + c.model_path + "' is not a 2-D CAV solution model");
    models.emplace_back(std::move(m));
  }

  const double worst = sim::worst_case_metric(spec.scenario, spec.metric);
  CompareResult result;
  result.episodes.resize(spec.controllers.size());
  for (int e = 0; e < spec.episodes; ++e) {
    const std::uint64_t seed = derive_seed(spec.seed, {static_cast<std::uint64_t>(e)});
    Rng rng(seed);
    VectorXd theta(spec.context_domain.dims());
    for (Eigen::Index i = 0; i < theta.size(); ++i)
      theta[i] = uniform(rng, spec.context_domain.lower()[i], spec.context_domain.upper()[i]);
    const sim::InitialCondition init = sim::sample_initial_condition(spec.scenario, rng);

    for (std::size_t c = 0; c < spec.controllers.size(); ++c) {
      EpisodeRow row;
      row.episode = e;
      row.seed = seed;
      row.theta = theta;
      row.init = init;
      row.z = models[c] ? learner::adapt(*models[c], theta) : spec.controllers[c].z;
      try {
        const sim::ScenarioOutcome out = sim::simulate_episode(init, row.z, theta, spec.scenario);
        row.exit_time = out.exit_time;
        row.accel = out.exit_time > 0.0 ? out.accel_integral / out.exit_time : 0.0;
        row.coll_margin = out.coll_margin;
        row.metric = sim::episode_metric(out, spec.metric);
        row.timed_out = out.timed_out;
      } catch (const std::runtime_error& err) {
        warn("episode " + std::to_string(e) + " failed for '" + spec.controllers[c].name + "': " + err.what());
        row.failed = true;
        row.exit_time = spec.scenario.time_cap;
        row.coll_margin = std::numeric_limits<double>::infinity();
        row.metric = worst;
      }
      result.episodes[c].push_back(row);
    }
  }

  for (std::size_t c = 0; c < spec.controllers.size(); ++c) {
    ControllerSummary s;
    s.name = spec.controllers[c].name;
    for (const EpisodeRow& r : result.episodes[c]) {
      ++s.episodes;
      if (r.coll_margin < 0.0) ++s.safe;
      if (r.timed_out) ++s.timed_out;
      s.mean_exit_time += r.exit_time;
      s.mean_accel += r.accel;
      s.mean_metric += r.metric;
    }
    s.mean_exit_time /= s.episodes;
    s.mean_accel /= s.episodes;
    s.mean_metric /= s.episodes;
    result.table.push_back(s);
  }

  const std::string header = config_line(to_json(spec));
  std::ostringstream table;
  table << header << "controller,episodes,safe,safe_fraction,mean_exit_time,mean_accel,mean_metric,timed_out\n";
  for (const ControllerSummary& s : result.table)
    table << s.name << ',' << s.episodes << ',' << s.safe << ','
          << format_double(static_cast<double>(s.safe) / s.episodes) << ',' << format_double(s.mean_exit_time)
          << ',' << format_double(s.mean_accel) << ',' << format_double(s.mean_metric) << ',' << s.timed_out
          << '\n';
  write_text_file(join(spec.output_dir, "table.csv"), table.str());

  std::ostringstream episodes;
  episodes << header
           << "controller,episode,z0,z1,exit_time,accel,coll_margin,safe,metric,timed_out,failed\n";
  for (std::size_t c = 0; c < spec.controllers.size(); ++c) {
    // The manifest holds only what must agree across controllers, so pairing
    // can be checked by diffing the files.
    std::ostringstream manifest;
    manifest << header << "episode,seed,theta0,theta1,p1,v1";
    const std::size_t hdvs = spec.scenario.hdv_count;
    for (std::size_t i = 0; i < hdvs; ++i) manifest << ",p" << i + 2 << ",v" << i + 2;
    manifest << '\n';
    for (const EpisodeRow& r : result.episodes[c]) {
      manifest << r.episode << ',' << r.seed << ',' << format_double(r.theta[0]) << ','
               << format_double(r.theta[1]) << ',' << format_double(r.init.cav.p) << ','
               << format_double(r.init.cav.v);
      for (const sim::VehicleState& h : r.init.hdvs) manifest << ',' << format_double(h.p) << ',' << format_double(h.v);
      manifest << '\n';
      episodes << spec.controllers[c].name << ',' << r.episode << ',' << format_double(r.z[0]) << ','
               << format_double(r.z[1]) << ',' << format_double(r.exit_time) << ',' << format_double(r.accel)
               << ',' << format_double(r.coll_margin) << ',' << (r.coll_margin < 0.0 ? 1 : 0) << ','
               << format_double(r.metric) << ',' << (r.timed_out ? 1 : 0) << ',' << (r.failed ? 1 : 0) << '\n';
    }
    write_text_file(join(spec.output_dir, "manifest_" + spec.controllers[c].name + ".csv"), manifest.str());
  }
  write_text_file(join(spec.output_dir, "episodes.csv"), episodes.str());
  return result;
}

MatrixXd grid_points(const BoxDomain& domain, int per_dim) {
  if (per_dim < 2) throw InputError("grid resolution must be >= 2");
  const auto d = static_cast<Eigen::Index>(domain.dims());
  Eigen::Index n = 1;
  for (Eigen::Index i = 0; i < d; ++i) n *= per_dim;
  MatrixXd pts(n, d);
  for (Eigen::Index row = 0; row < n; ++row) {
    Eigen::Index rest = row;
    for (Eigen::Index i = d - 1; i >= 0; --i) {
      const Eigen::Index idx = rest % per_dim;
      rest /= per_dim;
      // Endpoints are taken verbatim so the corners are exact.
      const double lo = domain.lower()[i], hi = domain.upper()[i];
      pts(row, i) = idx == 0 ? lo : idx == per_dim - 1 ? hi : lo + (hi - lo) * idx / (per_dim - 1);
    }
  }
  return pts;
}

std::vector<std::string> export_heatmap(const std::string& model_path, int grid, const std::string& output_dir) {
  if (grid < 2) throw ConfigError("grid resolution must be >= 2");
  const json doc = read_json_file(model_path);
  const learner::SolutionModel model = load_solution_model(model_path);
  if (!model.fitted()) throw StateError("model '" + model_path + "' holds no data");

  json config = {{"model", model_path}, {"grid", grid}};
  if (doc.contains("config")) config["run"] = doc.at("config");
  const std::string header = config_line(config);

  const MatrixXd pts = grid_points(model.theta_domain(), grid);
  const std::size_t zd = model.z_domain().dims(), td = model.theta_domain().dims();
  MatrixXd values(pts.rows(), static_cast<Eigen::Index>(zd));
  for (Eigen::Index r = 0; r < pts.rows(); ++r) values.row(r) = learner::adapt(model, pts.row(r).transpose()).transpose();

  std::vector<std::string> paths;
  for (std::size_t q = 0; q < zd; ++q) {
    std::ostringstream os;
    os << header;
    for (std::size_t i = 0; i < td; ++i) os << "theta" << i << ',';
    os << "z" << q << '\n';
    for (Eigen::Index r = 0; r < pts.rows(); ++r) {
      for (std::size_t i = 0; i < td; ++i) os << format_double(pts(r, static_cast<Eigen::Index>(i))) << ',';
      os << format_double(values(r, static_cast<Eigen::Index>(q))) << '\n';
    }
    paths.push_back(join(output_dir, "heatmap_z" + std::to_string(q) + ".csv"));
    write_text_file(paths.back(), os.str());
  }

  const MatrixXd thetas = model.contexts(), zs = model.solutions();
  std::ostringstream os;
  os << header;
  for (std::size_t i = 0; i < td; ++i) os << "theta" << i << ',';
  for (std::size_t q = 0; q < zd; ++q) os << 'z' << q << (q + 1 < zd ? "," : "\n");
  for (Eigen::Index r = 0; r < thetas.rows(); ++r) {
    for (Eigen::Index i = 0; i < thetas.cols(); ++i) os << format_double(thetas(r, i)) << ',';
    for (Eigen::Index q = 0; q < zs.cols(); ++q) os << format_double(zs(r, q)) << (q + 1 < zs.cols() ? "," : "\n");
  }
  paths.push_back(join(output_dir, "heatmap_samples.csv"));
  write_text_file(paths.back(), os.str());
  return paths;
}

std::string run_simulate(const RunConfig& cfg, const VectorXd& z, const VectorXd& theta, std::uint64_t seed,
                         const std::string& output_dir) {
  if (cfg.evaluator.kind != EvaluatorKind::CavSim) throw ConfigError("simulate needs a cav_sim evaluator");
  if (z.size() != 2 || theta.size() != 2) throw ConfigError("simulate needs 2-D z and theta");
  const sim::ScenarioOutcome out = sim::simulate_episode(z, theta, cfg.evaluator.scenario, seed);
  json config = to_json(cfg);
  config["simulate"] = {{"z", to_std(z)}, {"theta", to_std(theta)}, {"seed", seed}};
  std::ostringstream os;
  os << config_line(config);
  sim::write_trajectory_csv(os, out);
  const std::string path = join(output_dir, "trajectory.csv");
  write_text_file(path, os.str());
  return path;
}

}  // namespace cbo::harness
