#include "cbo/bo/contextual_bo.hpp"

#include <cmath>
#include <string>

#include "cbo/core/errors.hpp"
#include "cbo/core/format.hpp"

namespace cbo::bo {

namespace {

gp::KernelSpec product_kernel(const BoxDomain& z, const BoxDomain& theta, const SurrogateSettings& s) {
  const std::size_t dz = z.dims(), dt = theta.dims();
  return gp::KernelSpec::product({{s.z_family, 0, dz}, {s.theta_family, dz, dt}},
                                 std::vector<double>(dz + dt, s.initial_lengthscale), 1.0);
}

gp::GpOptions surrogate_options(const BoxDomain& z, const BoxDomain& theta) {
  gp::GpOptions o;
  o.input_box = product(z, theta);
  o.standardize_outputs = true;
  return o;
}

void check_in(const BoxDomain& box, const Eigen::VectorXd& x, const char* what) {
  if (static_cast<std::size_t>(x.size()) != box.dims())
    throw InputError(std::string(what) + " has " + std::to_string(x.size()) + " dims, domain has " +
                     std::to_string(box.dims()));
  if (!box.contains(x, 1e-9)) throw InputError(std::string(what) + " lies outside its domain");
}

Eigen::VectorXd joint(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) {
  Eigen::VectorXd x(z.size() + theta.size());
  x << z, theta;
  return x;
}

}  // namespace

SurrogateModel::SurrogateModel(BoxDomain z_domain, BoxDomain theta_domain, const SurrogateSettings& settings)
    : z_domain_(std::move(z_domain)),
      theta_domain_(std::move(theta_domain)),
      max_data_(settings.max_data),
      gp_(gp::Dataset::empty(z_domain_.dims() + theta_domain_.dims()),
          product_kernel(z_domain_, theta_domain_, settings), settings.initial_noise_variance,
          surrogate_options(z_domain_, theta_domain_)) {
  if (max_data_ == 0) throw InputError("surrogate max_data must be positive");
}

SurrogateModel::SurrogateModel(BoxDomain z_domain, BoxDomain theta_domain, std::size_t max_data, gp::GPRegressor gp)
    : z_domain_(std::move(z_domain)), theta_domain_(std::move(theta_domain)), max_data_(max_data), gp_(std::move(gp)) {
  if (max_data_ == 0) throw InputError("surrogate max_data must be positive");
  const gp::KernelSpec& k = gp_.kernel();
  if (k.family != gp::KernelFamily::Product || k.slices.size() != 2 || k.slices[0].n_dims != z_domain_.dims() ||
      k.slices[1].n_dims != theta_domain_.dims())
    throw InputError("surrogate kernel must be a product over the z and theta slices");
}

gp::Prediction SurrogateModel::predict(const Eigen::VectorXd& z, const Eigen::VectorXd& theta) const {
  return gp_.predict(joint(z, theta));
}

void SurrogateModel::predict_at_context(const Eigen::MatrixXd& zs, const Eigen::VectorXd& theta,
                                        Eigen::VectorXd* mean, Eigen::VectorXd* variance) const {
  Eigen::MatrixXd x(zs.rows(), zs.cols() + theta.size());
  x.leftCols(zs.cols()) = zs;
  x.rightCols(theta.size()) = theta.transpose().replicate(zs.rows(), 1);
  gp_.predict_batch(x, mean, variance);
}

SurrogateModel SurrogateModel::with_gp(gp::GPRegressor gp) const {
  return SurrogateModel(z_domain_, theta_domain_, max_data_, std::move(gp));
}

double ucb(const SurrogateModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& theta, double beta) {
  if (!(beta >= 0.0)) throw InputError("ucb: beta must be nonnegative");
  check_in(model.z_domain(), z, "z");
  check_in(model.theta_domain(), theta, "theta");
  const gp::Prediction p = model.predict(z, theta);
  return beta == 0.0 ? p.mean : p.mean + std::sqrt(beta) * std::sqrt(p.variance);
}

namespace {

Eigen::VectorXd maximize_ucb(const SurrogateModel& model, const Eigen::VectorXd& theta, double beta,
                             const optim::SearchOptions& search, Rng& rng,
                             std::span<const Eigen::VectorXd> extra_starts) {
  check_in(model.theta_domain(), theta, "theta");
  const double root_beta = std::sqrt(beta);
  const auto point = [&](const Eigen::VectorXd& z) {
    const gp::Prediction p = model.predict(z, theta);
    return beta == 0.0 ? p.mean : p.mean + root_beta * std::sqrt(p.variance);
  };
  const auto batch = [&](const Eigen::MatrixXd& zs) {
    Eigen::VectorXd mean, var;
    model.predict_at_context(zs, theta, &mean, &var);
    if (beta == 0.0) return mean;
    return Eigen::VectorXd(mean.array() + root_beta * var.array().sqrt());
  };
  return optim::maximize_in_box(model.z_domain(), point, batch, search, rng, extra_starts).x;
}

}  // namespace

Eigen::VectorXd optimize_acquisition(const SurrogateModel& model, const Eigen::VectorXd& theta,
                                     const AcquisitionConfig& cfg, Rng& rng,
                                     std::span<const Eigen::VectorXd> extra_starts) {
  if (!(cfg.beta >= 0.0)) throw InputError("acquisition beta must be nonnegative");
  return maximize_ucb(model, theta, cfg.beta, cfg.search, rng, extra_starts);
}

Eigen::VectorXd posterior_mean_argmax(const SurrogateModel& model, const Eigen::VectorXd& theta,
                                      const optim::SearchOptions& search, Rng& rng,
                                      std::span<const Eigen::VectorXd> extra_starts) {
  return maximize_ucb(model, theta, 0.0, search, rng, extra_starts);
}

SurrogateModel manage_dataset(const SurrogateModel& model, const Eigen::VectorXd& z, const Eigen::VectorXd& theta,
                              double y) {
  const gp::Dataset& old = model.gp().data();
  const Eigen::Index n = static_cast<Eigen::Index>(old.size());
  const Eigen::Index keep = std::min<Eigen::Index>(n, static_cast<Eigen::Index>(model.max_data()) - 1);
  gp::Dataset next;
  next.inputs.resize(keep + 1, old.inputs.cols());
  next.outputs.resize(keep + 1);
  next.inputs.topRows(keep) = old.inputs.bottomRows(keep);
  next.outputs.head(keep) = old.outputs.tail(keep);
  next.inputs.row(keep) = joint(z, theta).transpose();
  next.outputs[keep] = y;
  return model.with_gp(model.gp().with_data(std::move(next)));
}

SurrogateModel refit(const SurrogateModel& model, const gp::TrainConfig& cfg) {
  return model.with_gp(gp::gp_refit(model.gp(), model.gp().data(), cfg));
}

InnerBoResult inner_bo(const Eigen::VectorXd& theta, SurrogateModel& surrogate, ObjectiveEvaluator& evaluator,
                       const InnerBoConfig& cfg) {
  if (cfg.k_max < 1) throw InputError("inner_bo: k_max must be at least 1");
  check_in(surrogate.theta_domain(), theta, "theta");

  InnerBoResult result;
  std::optional<Eigen::VectorXd> incumbent_z;
  double incumbent = -std::numeric_limits<double>::infinity();
  for (int k = 1; k <= cfg.k_max; ++k) {
    const auto kk = static_cast<std::uint64_t>(k);
    Rng acq_rng = make_rng(cfg.seed, {kk, 1});
    std::vector<Eigen::VectorXd> extra;
    if (incumbent_z) extra.push_back(*incumbent_z);
    const Eigen::VectorXd z = optimize_acquisition(surrogate, theta, cfg.acquisition, acq_rng, extra);

    const double y = evaluator.evaluate(z, theta, derive_seed(cfg.seed, {kk, 2}));
    if (!std::isfinite(y)) throw NumericalError("objective returned a non-finite value");

    SurrogateModel next = manage_dataset(surrogate, z, theta, y);
    if (k <= cfg.refit_every_until || (cfg.refit_period > 0 && k % cfg.refit_period == 0)) {
      gp::TrainConfig t = cfg.train;
      t.seed = derive_seed(cfg.seed, {kk, 3});
      next = refit(next, t);
    }
    surrogate = std::move(next);

    if (y > incumbent) {
      incumbent = y;
      incumbent_z = z;
    }
    result.records.push_back({0, k, z, theta, y, incumbent});
  }

  Rng final_rng = make_rng(cfg.seed, {0, 4});
  std::vector<Eigen::VectorXd> extra;
  if (incumbent_z) extra.push_back(*incumbent_z);
  result.z_star = posterior_mean_argmax(surrogate, theta, cfg.acquisition.search, final_rng, extra);
  return result;
}

void write_run_log_header(std::ostream& out, std::size_t z_dims, std::size_t theta_dims) {
  out << "j,k";
  for (std::size_t i = 0; i < z_dims; ++i) out << ",z" << i;
  for (std::size_t i = 0; i < theta_dims; ++i) out << ",theta" << i;
  out << ",J,incumbent\n";
}

void write_run_log_row(std::ostream& out, const IterationRecord& r) {
  out << r.j << ',' << r.k;
  for (Eigen::Index i = 0; i < r.z.size(); ++i) out << ',' << format_double(r.z[i]);
  for (Eigen::Index i = 0; i < r.theta.size(); ++i) out << ',' << format_double(r.theta[i]);
  out << ',' << format_double(r.y) << ',' << format_double(r.incumbent) << '\n';
}

}  // namespace cbo::bo
