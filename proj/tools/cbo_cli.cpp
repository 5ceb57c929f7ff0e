// Command-line front end: learn, compare, simulate, heatmap.

#include <CLI11.hpp>
#include <cstdio>
#include <iostream>

#include "cbo/core/errors.hpp"
#include "cbo/harness/pipeline.hpp"

namespace {

enum ExitCode { kOk = 0, kOther = 1, kConfig = 2, kNumerical = 3, kIo = 4 };

Eigen::VectorXd to_eigen(const std::vector<double>& v) {
  return Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size()));
}

int learn(const std::string& path, bool fresh) {
  const cbo::harness::RunConfig cfg = cbo::harness::load_run_config(path);
  const cbo::harness::LearnResult r = cbo::harness::run_learn(cfg, !fresh);
  std::cout << "completed " << r.completed << "/" << cfg.j_max << " outer iterations"
            << (r.resumed ? " (resumed)" : "") << "\n";
  if (!r.model_path.empty()) std::cout << "model: " << r.model_path << "\n";
  std::cout << "run log: " << r.run_log_path << "\n";
  if (r.aborted) {
    std::cerr << "run aborted: " << r.diagnostic << "\n";
    return kNumerical;
  }
  return kOk;
}

int compare(const std::string& path) {
  const cbo::harness::ComparisonSpec spec = cbo::harness::load_comparison_spec(path);
  const cbo::harness::CompareResult r = cbo::harness::run_compare(spec);
  for (const auto& s : r.table)
    std::printf("%-16s safe %d/%d  t_f %.3f  accel %.4f  metric %.3f\n", s.name.c_str(), s.safe, s.episodes,
                s.mean_exit_time, s.mean_accel, s.mean_metric);
  std::cout << "table: " << spec.output_dir << "/table.csv\n";
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Contextual Bayesian optimization of MPC weights"};
  app.require_subcommand(1);

  std::string learn_config;
  bool fresh = false;
  auto* learn_cmd = app.add_subcommand("learn", "Learn a solution model from a run config");
  learn_cmd->add_option("config", learn_config, "Run config (JSON)")->required();
  learn_cmd->add_flag("--fresh", fresh, "Ignore an existing checkpoint");

  std::string compare_spec;
  auto* compare_cmd = app.add_subcommand("compare", "Paired closed-loop comparison of controllers");
  compare_cmd->add_option("spec", compare_spec, "Comparison spec (JSON)")->required();

  std::string sim_config;
  std::vector<double> z, theta;
  std::uint64_t seed = 0;
  auto* sim_cmd = app.add_subcommand("simulate", "Dump one closed-loop trajectory");
  sim_cmd->add_option("config", sim_config, "Run config with a cav_sim evaluator")->required();
  sim_cmd->add_option("--z", z, "log10 CAV weights")->required()->expected(2);
  sim_cmd->add_option("--theta", theta, "log10 HDV weights")->required()->expected(2);
  sim_cmd->add_option("--seed", seed, "Episode seed")->required();

  std::string model_path, heat_out = ".";
  int grid = 0;
  auto* heat_cmd = app.add_subcommand("heatmap", "Export adapt() on a context grid");
  heat_cmd->add_option("model", model_path, "Solution model (JSON)")->required();
  heat_cmd->add_option("--grid", grid, "Points per context dimension")->required();
  heat_cmd->add_option("--out", heat_out, "Output directory");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kConfig;
  }

  try {
    if (*learn_cmd) return learn(learn_config, fresh);
    if (*compare_cmd) return compare(compare_spec);
    if (*sim_cmd) {
      const cbo::harness::RunConfig cfg = cbo::harness::load_run_config(sim_config);
      std::cout << cbo::harness::run_simulate(cfg, to_eigen(z), to_eigen(theta), seed, cfg.output_dir) << "\n";
      return kOk;
    }
    if (*heat_cmd) {
      const char* env = std::getenv(cbo::harness::kOutputDirEnv);
      for (const std::string& p : cbo::harness::export_heatmap(model_path, grid, env && *env ? env : heat_out))
        std::cout << p << "\n";
      return kOk;
    }
  } catch (const cbo::ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kConfig;
  } catch (const cbo::InputError& e) {
    std::cerr << "invalid input: " << e.what() << "\n";
    return kConfig;
  } catch (const cbo::NumericalError& e) {
    std::cerr << "numerical failure: " << e.what() << "\n";
    return kNumerical;
  } catch (const cbo::IoError& e) {
    std::cerr << "I/O error: " << e.what() << "\n";
    return kIo;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kOther;
  }
  return kOther;
}
