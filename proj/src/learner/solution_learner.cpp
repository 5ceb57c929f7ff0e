#include "cbo/learner/solution_learner.hpp"

#include <Eigen/Eigenvalues>
#include <cmath>
#include <sstream>

#include "cbo/core/errors.hpp"
#include "cbo/core/log.hpp"
#include "cbo/gp/serialization.hpp"
#include "cbo/mogp/serialization.hpp"

namespace cbo::learner {

namespace {

constexpr double kEigenFloor = 1e-12;

gp::GpOptions solution_options(const BoxDomain& theta_domain) {
  gp::GpOptions o;
  o.input_box = theta_domain;
  o.standardize_outputs = true;
  return o;
}

gp::KernelSpec solution_kernel(std::size_t dims, double lengthscale) {
  return gp::KernelSpec::matern32(std::vector<double>(dims, lengthscale), 1.0);
}

std::variant<gp::GPRegressor, mogp::MOGPRegressor> prior_model(const BoxDomain& theta_domain,
                                                               const BoxDomain& z_domain, double lengthscale) {
  const gp::KernelSpec k = solution_kernel(theta_domain.dims(), lengthscale);
  if (z_domain.dims() == 1)
    return gp::GPRegressor(gp::Dataset::empty(theta_domain.dims()), k, 1e-2, solution_options(theta_domain));
  return mogp::MOGPRegressor(mogp::MultiDataset::empty(theta_domain.dims(), z_domain.dims()), k,
                             mogp::CoregionalizationMatrix::identity(z_domain.dims()), 1e-2,
                             solution_options(theta_domain));
}

}  // namespace

SolutionModel::SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, double initial_lengthscale)
    : theta_domain_(std::move(theta_domain)),
      z_domain_(std::move(z_domain)),
      model_(prior_model(theta_domain_, z_domain_, initial_lengthscale)) {}

SolutionModel::SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, gp::GPRegressor model)
    : theta_domain_(std::move(theta_domain)), z_domain_(std::move(z_domain)), model_(std::move(model)) {
  if (z_domain_.dims() != 1 || gp().input_dim() != theta_domain_.dims())
    throw InputError("solution GP must map the context domain to a scalar z");
}

SolutionModel::SolutionModel(BoxDomain theta_domain, BoxDomain z_domain, mogp::MOGPRegressor model)
    : theta_domain_(std::move(theta_domain)), z_domain_(std::move(z_domain)), model_(std::move(model)) {
  if (mogp().outputs() != z_domain_.dims() || mogp().input_dim() != theta_domain_.dims())
    throw InputError("solution MOGP dimensions do not match the domains");
}

std::size_t SolutionModel::size() const {
  return std::visit([](const auto& m) { return m.size(); }, model_);
}

Eigen::MatrixXd SolutionModel::contexts() const {
  return std::visit([](const auto& m) -> Eigen::MatrixXd { return m.data().inputs; }, model_);
}

Eigen::MatrixXd SolutionModel::solutions() const {
  if (multi_output()) return mogp().data().outputs;
  return gp().data().outputs;
}

Eigen::MatrixXd SolutionModel::normalized_covariance(const Eigen::VectorXd& theta) const {
  if (multi_output()) return mogp().normalized_covariance(std::span<const double>(theta.data(), theta.size()));
  const double s = gp().output_scale();
  return Eigen::MatrixXd::Constant(1, 1, gp().predict(theta).variance / (s * s));
}

Eigen::VectorXd SolutionModel::mean(const Eigen::VectorXd& theta) const {
  if (multi_output()) return mogp().predict(theta).mean;
  return Eigen::VectorXd::Constant(1, gp().predict(theta).mean);
}

SolutionModel fit_solution_model(const BoxDomain& theta_domain, const BoxDomain& z_domain,
                                 const Eigen::MatrixXd& thetas, const Eigen::MatrixXd& zs,
                                 const SolutionFitConfig& cfg, std::uint64_t seed, const SolutionModel* warm) {
  if (thetas.rows() != zs.rows() || thetas.rows() == 0) throw InputError("solution data must be nonempty pairs");
  if (static_cast<std::size_t>(zs.cols()) != z_domain.dims() ||
      static_cast<std::size_t>(thetas.cols()) != theta_domain.dims())
    throw InputError("solution data dimensions do not match the domains");
  const bool use_warm = warm && warm->fitted();
  if (z_domain.dims() == 1) {
    gp::TrainConfig t = cfg.train;
    t.seed = seed;
    gp::KernelSpec k = solution_kernel(theta_domain.dims(), cfg.initial_lengthscale);
    if (use_warm) {
      k = warm->gp().kernel();
      t.initial_noise_variance = warm->gp().noise_variance();
    }
    return SolutionModel(theta_domain, z_domain,
                         gp::gp_fit(gp::Dataset(thetas, zs.col(0)), k, t, solution_options(theta_domain)));
  }
  mogp::MogpTrainConfig t;
  t.base = cfg.train;
  t.base.seed = seed;
  t.rank = cfg.rank;
  mogp::MultiDataset data(thetas, zs);
  if (use_warm) return SolutionModel(theta_domain, z_domain, mogp::mogp_refit(warm->mogp(), data, t));
  return SolutionModel(theta_domain, z_domain,
                       mogp::mogp_fit(data, solution_kernel(theta_domain.dims(), cfg.initial_lengthscale),
                                      z_domain.dims(), t, solution_options(theta_domain)));
}

double log_det_criterion(const SolutionModel& model, const Eigen::VectorXd& theta) {
  const Eigen::MatrixXd c = model.normalized_covariance(theta);
  if (c.rows() == 1) return std::log(std::max(c(0, 0), kEigenFloor));
  const Eigen::VectorXd ev = Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c, Eigen::EigenvaluesOnly).eigenvalues();
  double s = 0.0;
  for (Eigen::Index i = 0; i < ev.size(); ++i) s += std::log(std::max(ev[i], kEigenFloor));
  return s;
}

Eigen::VectorXd next_context(const SolutionModel& model, const optim::SearchOptions& search, Rng& rng) {
  const auto point = [&](const Eigen::VectorXd& theta) { return log_det_criterion(model, theta); };
  const auto batch = [&](const Eigen::MatrixXd& thetas) -> Eigen::VectorXd {
    Eigen::VectorXd out(thetas.rows());
    if (!model.multi_output()) {
      Eigen::VectorXd mean, var;
      model.gp().predict_batch(thetas, &mean, &var);
      const double s2 = model.gp().output_scale() * model.gp().output_scale();
      for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = std::log(std::max(var[i] / s2, kEigenFloor));
      return out;
    }
    for (Eigen::Index i = 0; i < out.size(); ++i) out[i] = point(thetas.row(i).transpose());
    return out;
  };
  return optim::maximize_in_box(model.theta_domain(), point, batch, search, rng).x;
}

Eigen::VectorXd adapt(const SolutionModel& model, const Eigen::VectorXd& theta) {
  if (!model.fitted()) throw StateError("adapt: solution model has no data");
  if (static_cast<std::size_t>(theta.size()) != model.theta_domain().dims())
    throw InputError("adapt: context has the wrong dimension");
  Eigen::VectorXd t = theta;
  if (!model.theta_domain().contains(theta)) {
    std::ostringstream msg;
    msg << "adapt: context (" << theta.transpose() << ") outside its domain, clamped";
    warn(msg.str());
    t = model.theta_domain().clamp(theta);
  }
  return model.z_domain().clamp(model.mean(t));
}

namespace {

double probe_mean_log_det(const SolutionModel& model, const Eigen::MatrixXd& probe) {
  double s = 0.0;
  for (Eigen::Index i = 0; i < probe.rows(); ++i) s += log_det_criterion(model, probe.row(i).transpose());
  return s / static_cast<double>(probe.rows());
}

Eigen::MatrixXd append_row(const Eigen::MatrixXd& m, const Eigen::VectorXd& r) {
  Eigen::MatrixXd out(m.rows() + 1, r.size());
  if (m.rows() > 0) out.topRows(m.rows()) = m;
  out.row(m.rows()) = r.transpose();
  return out;
}

}  // namespace

Eigen::MatrixXd probe_grid(const BoxDomain& theta_domain, int per_dim) {
  int budget = 1;
  for (std::size_t d = 0; d < theta_domain.dims(); ++d) budget *= std::max(per_dim, 2);
  return optim::screening_grid(theta_domain, budget);
}

OuterLoopState initial_state(const BoxDomain& z_domain, const BoxDomain& theta_domain, const OuterLoopConfig& cfg) {
  OuterLoopState s{0,
                   bo::SurrogateModel(z_domain, theta_domain, cfg.surrogate),
                   SolutionModel(theta_domain, z_domain, cfg.solution.initial_lengthscale),
                   Eigen::MatrixXd(0, static_cast<Eigen::Index>(theta_domain.dims())),
                   Eigen::MatrixXd(0, static_cast<Eigen::Index>(z_domain.dims())),
                   {},
                   {}};
  s.probe_log_det.push_back(probe_mean_log_det(s.solution, probe_grid(theta_domain, cfg.probe_points_per_dim)));
  return s;
}

OuterLoopResult outer_loop(bo::ObjectiveEvaluator& evaluator, OuterLoopState state, const OuterLoopConfig& cfg,
                           const CheckpointCallback& on_iteration) {
  if (cfg.j_max < 1) throw InputError("outer_loop: j_max must be at least 1");
  if (cfg.inner.k_max < 1) throw InputError("outer_loop: k_max must be at least 1");
  const BoxDomain& theta_domain = state.surrogate.theta_domain();
  const BoxDomain& z_domain = state.surrogate.z_domain();
  const Eigen::MatrixXd probe = probe_grid(theta_domain, cfg.probe_points_per_dim);

  bool aborted = false;
  std::string diagnostic;
  for (int j = state.completed + 1; j <= cfg.j_max; ++j) {
    const auto jj = static_cast<std::uint64_t>(j);
    Rng sampler_rng = make_rng(cfg.seed, {jj, 1});
    const Eigen::VectorXd theta = next_context(state.solution, cfg.sampler, sampler_rng);

    bo::InnerBoConfig inner = cfg.inner;
    inner.seed = derive_seed(cfg.seed, {jj, 2});
    bo::SurrogateModel surrogate = state.surrogate;
    bo::InnerBoResult r;
    SolutionModel solution = state.solution;
    Eigen::MatrixXd thetas, zs;
    try {
      r = bo::inner_bo(theta, surrogate, evaluator, inner);
      thetas = append_row(state.thetas, theta);
      zs = append_row(state.zs, r.z_star);
      solution = fit_solution_model(theta_domain, z_domain, thetas, zs, cfg.solution, derive_seed(cfg.seed, {jj, 3}),
                                    &state.solution);
    } catch (const std::exception& e) {
      aborted = true;
      diagnostic = "outer iteration " + std::to_string(j) + " failed: " + e.what();
      break;
    }

    for (bo::IterationRecord& rec : r.records) {
      rec.j = j;
      state.records.push_back(std::move(rec));
    }
    state.surrogate = std::move(surrogate);
    state.solution = std::move(solution);
    state.thetas = std::move(thetas);
    state.zs = std::move(zs);
    state.probe_log_det.push_back(probe_mean_log_det(state.solution, probe));
    state.completed = j;
    if (on_iteration) on_iteration(state);
  }
  return OuterLoopResult{std::move(state), aborted, std::move(diagnostic)};
}

OuterLoopResult outer_loop(bo::ObjectiveEvaluator& evaluator, const BoxDomain& z_domain,
                           const BoxDomain& theta_domain, const OuterLoopConfig& cfg,
                           const CheckpointCallback& on_iteration) {
  return outer_loop(evaluator, initial_state(z_domain, theta_domain, cfg), cfg, on_iteration);
}

using nlohmann::json;

json to_json(const SolutionModel& model) {
  json j{{"type", "solution_model"},
         {"theta_domain", gp::to_json(model.theta_domain())},
         {"z_domain", gp::to_json(model.z_domain())}};
  j["model"] = model.multi_output() ? mogp::to_json(model.mogp()) : gp::to_json(model.gp());
  return j;
}

SolutionModel solution_model_from_json(const json& j) {
  try {
    if (j.at("type").get<std::string>() != "solution_model") throw IoError("document is not a solution model");
    BoxDomain theta = gp::box_from_json(j.at("theta_domain"));
    BoxDomain z = gp::box_from_json(j.at("z_domain"));
    const json& m = j.at("model");
    if (m.at("type").get<std::string>() == "mogp")
      return SolutionModel(std::move(theta), std::move(z), mogp::mogp_from_json(m));
    return SolutionModel(std::move(theta), std::move(z), gp::gp_from_json(m));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed solution model: ") + e.what());
  }
}

json to_json(const bo::SurrogateModel& s) {
  return {{"type", "surrogate"},
          {"z_domain", gp::to_json(s.z_domain())},
          {"theta_domain", gp::to_json(s.theta_domain())},
          {"max_data", s.max_data()},
          {"gp", gp::to_json(s.gp())}};
}

bo::SurrogateModel surrogate_from_json(const json& j) {
  try {
    if (j.at("type").get<std::string>() != "surrogate") throw IoError("document is not a surrogate model");
    return bo::SurrogateModel(gp::box_from_json(j.at("z_domain")), gp::box_from_json(j.at("theta_domain")),
                              j.at("max_data").get<std::size_t>(), gp::gp_from_json(j.at("gp")));
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed surrogate: ") + e.what());
  }
}

json to_json(const OuterLoopState& s) {
  json records = json::array();
  for (const bo::IterationRecord& r : s.records)
    records.push_back({{"j", r.j},
                       {"k", r.k},
                       {"z", gp::to_json(r.z)},
                       {"theta", gp::to_json(r.theta)},
                       {"y", r.y},
                       {"incumbent", r.incumbent}});
  return {{"type", "outer_loop_state"},
          {"completed", s.completed},
          {"surrogate", to_json(s.surrogate)},
          {"solution", to_json(s.solution)},
          {"thetas", gp::to_json(s.thetas)},
          {"zs", gp::to_json(s.zs)},
          {"records", records},
          {"probe_log_det", s.probe_log_det}};
}

OuterLoopState state_from_json(const json& j) {
  try {
    if (j.at("type").get<std::string>() != "outer_loop_state") throw IoError("document is not a checkpoint");
    bo::SurrogateModel surrogate = surrogate_from_json(j.at("surrogate"));
    SolutionModel solution = solution_model_from_json(j.at("solution"));
    const auto dt = static_cast<Eigen::Index>(surrogate.theta_domain().dims());
    const auto dz = static_cast<Eigen::Index>(surrogate.z_domain().dims());
    OuterLoopState s{j.at("completed").get<int>(),
                     std::move(surrogate),
                     std::move(solution),
                     gp::matrix_from_json(j.at("thetas"), dt),
                     gp::matrix_from_json(j.at("zs"), dz),
                     {},
                     j.at("probe_log_det").get<std::vector<double>>()};
    for (const json& r : j.at("records"))
      s.records.push_back({r.at("j").get<int>(), r.at("k").get<int>(), gp::vector_from_json(r.at("z")),
                           gp::vector_from_json(r.at("theta")), r.at("y").get<double>(),
                           r.at("incumbent").get<double>()});
    return s;
  } catch (const json::exception& e) {
    throw IoError(std::string("malformed checkpoint: ") + e.what());
  }
}

}  // namespace cbo::learner
