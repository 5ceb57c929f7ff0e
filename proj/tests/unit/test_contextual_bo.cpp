#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "cbo/bo/contextual_bo.hpp"
#include "cbo/core/errors.hpp"
#include "cbo/core/random.hpp"

using namespace cbo;
using namespace cbo::bo;

namespace {

Eigen::VectorXd vec(std::initializer_list<double> v) {
  Eigen::VectorXd x(static_cast<Eigen::Index>(v.size()));
  Eigen::Index i = 0;
  for (double d : v) x[i++] = d;
  return x;
}

// J(z, theta) = -(z - theta)^2 + sigma * N(0, 1).
class Quadratic1D : public ObjectiveEvaluator {
 public:
  explicit Quadratic1D(double sigma = 0.0) : sigma_(sigma) {}
  double evaluate(const Eigen::VectorXd& z, const Eigen::VectorXd& theta, std::uint64_t seed) override {
    ++calls;
    points.push_back(z);
    Rng rng(seed);
    return -(z[0] - theta[0]) * (z[0] - theta[0]) + (sigma_ > 0.0 ? sigma_ * standard_normal(rng) : 0.0);
  }
  int calls = 0;
  std::vector<Eigen::VectorXd> points;

 private:
  double sigma_;
};

class FailingAfter : public ObjectiveEvaluator {
 public:
  explicit FailingAfter(int n) : n_(n) {}
  double evaluate(const Eigen::VectorXd& z, const Eigen::VectorXd&, std::uint64_t) override {
    if (calls++ >= n_) throw std::runtime_error("simulator crashed");
    return -z[0] * z[0];
  }
  int calls = 0;

 private:
  int n_;
};

SurrogateModel random_surrogate(Rng& rng, std::size_t dz, std::size_t dt, int n) {
  SurrogateModel s(BoxDomain::unit(dz), BoxDomain::unit(dt));
  for (int i = 0; i < n; ++i) {
    Eigen::VectorXd z(static_cast<Eigen::Index>(dz)), t(static_cast<Eigen::Index>(dt));
    for (Eigen::Index d = 0; d < z.size(); ++d) z[d] = uniform(rng, 0.0, 1.0);
    for (Eigen::Index d = 0; d < t.size(); ++d) t[d] = uniform(rng, 0.0, 1.0);
    s = manage_dataset(s, z, t, uniform(rng, -1.0, 1.0) + std::sin(5.0 * z[0]));
  }
  return s;
}

}  // namespace

TEST_CASE("ucb with beta = 0 is the posterior mean") {
  Rng rng(1);
  const SurrogateModel s = random_surrogate(rng, 1, 1, 6);
  for (int i = 0; i < 10; ++i) {
    const Eigen::VectorXd z = vec({uniform(rng, 0.0, 1.0)}), t = vec({uniform(rng, 0.0, 1.0)});
    CHECK(ucb(s, z, t, 0.0) == s.predict(z, t).mean);
  }
}

TEST_CASE("ucb with beta = 4 at mean 1, std 0.5 is 2") {
  gp::Dataset d(Eigen::MatrixXd::Zero(1, 2), vec({1.0}));
  gp::GpOptions o;
  o.input_box = BoxDomain::uniform(2, -1.0, 100.0);
  o.standardize_outputs = true;
  const gp::KernelSpec k = gp::KernelSpec::product(
      {{gp::KernelFamily::Matern32, 0, 1}, {gp::KernelFamily::Matern32, 1, 1}}, {1e-3, 1e-3}, 0.25);
  const SurrogateModel s(BoxDomain::uniform(1, -1.0, 100.0), BoxDomain::uniform(1, -1.0, 100.0), 10,
                         gp::GPRegressor(d, k, 1e-4, o));
  const gp::Prediction p = s.predict(vec({90.0}), vec({90.0}));
  CHECK(p.mean == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p.variance == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(ucb(s, vec({90.0}), vec({90.0}), 4.0) == doctest::Approx(2.0).epsilon(1e-12));
}

TEST_CASE("ucb with beta = 100 is mean + 10 std") {
  Rng rng(2);
  for (int t = 0; t < 10; ++t) {
    const SurrogateModel s = random_surrogate(rng, 2, 1, 8);
    const Eigen::VectorXd z = vec({uniform(rng, 0.0, 1.0), uniform(rng, 0.0, 1.0)}), th = vec({uniform(rng, 0.0, 1.0)});
    Eigen::VectorXd x(3);
    x << z, th;
    const gp::Prediction p = s.gp().predict(x);
    CHECK(ucb(s, z, th, 100.0) == doctest::Approx(p.mean + 10.0 * std::sqrt(p.variance)).epsilon(1e-14));
  }
}

TEST_CASE("ucb is monotone in beta and rejects out-of-domain queries") {
  Rng rng(3);
  const SurrogateModel s = random_surrogate(rng, 1, 1, 5);
  for (int i = 0; i < 50; ++i) {
    const Eigen::VectorXd z = vec({uniform(rng, 0.0, 1.0)}), t = vec({uniform(rng, 0.0, 1.0)});
    const double b1 = uniform(rng, 0.0, 50.0), b2 = b1 + uniform(rng, 0.0, 50.0);
    CHECK(ucb(s, z, t, b1) <= ucb(s, z, t, b2));
  }
  CHECK_THROWS_AS(ucb(s, vec({1.5}), vec({0.5}), 1.0), InputError);
  CHECK_THROWS_AS(ucb(s, vec({0.5}), vec({-0.5}), 1.0), InputError);
  CHECK_THROWS_AS(ucb(s, vec({0.5, 0.5}), vec({0.5}), 1.0), InputError);
  CHECK_THROWS_AS(ucb(s, vec({0.5}), vec({0.5}), -1.0), InputError);
}

TEST_CASE("acquisition on an empty model returns the domain center") {
  const SurrogateModel s(BoxDomain({vec({-2.0, 0.0})}, vec({2.0, 1.0})), BoxDomain::unit(1));
  Rng rng(4);
  const Eigen::VectorXd z = optimize_acquisition(s, vec({0.3}), AcquisitionConfig{}, rng);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.5);
}

TEST_CASE("single large observation pulls the beta = 0 optimum to it") {
  // Output standardization makes a lone observation's posterior mean flat, so
  // flat background data at a distant context fixes the offset and scale.
  Rng rng(5);
  for (int t = 0; t < 10; ++t) {
    SurrogateModel s(BoxDomain::uniform(2, -1.0, 1.0), BoxDomain::unit(1));
    for (int a = 0; a <= 4; ++a)
      for (int b = 0; b <= 4; ++b) s = manage_dataset(s, vec({-1.0 + a / 2.0, -1.0 + b / 2.0}), vec({0.0}), 0.0);
    const Eigen::VectorXd z0 = vec({uniform(rng, -0.9, 0.9), uniform(rng, -0.9, 0.9)});
    const Eigen::VectorXd th = vec({1.0});
    s = manage_dataset(s, z0, th, 100.0);
    AcquisitionConfig cfg;
    cfg.beta = 0.0;
    const Eigen::VectorXd z = optimize_acquisition(s, th, cfg, rng);
    CHECK((z - z0).cwiseAbs().maxCoeff() <= 0.05 * 2.0);
    double grid_max = -std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 50; ++a)
      for (int b = 0; b <= 50; ++b)
        grid_max = std::max(grid_max, ucb(s, vec({-1.0 + a / 25.0, -1.0 + b / 25.0}), th, 0.0));
    CHECK(ucb(s, z, th, 0.0) >= grid_max - 1e-6);
  }
}

TEST_CASE("dense data on -(z - 0.3)^2 gives argmax near 0.3") {
  SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1));
  for (int i = 0; i <= 20; ++i) {
    const double z = i / 20.0;
    s = manage_dataset(s, vec({z}), vec({0.5}), -(z - 0.3) * (z - 0.3));
  }
  s = refit(s, gp::TrainConfig{});
  Rng rng(6);
  AcquisitionConfig cfg;
  cfg.beta = 0.0;
  CHECK(std::abs(optimize_acquisition(s, vec({0.5}), cfg, rng)[0] - 0.3) <= 0.02);
}

TEST_CASE("acquisition optimum dominates a 51 x 51 reference grid") {
  Rng rng(7);
  for (int t = 0; t < 10; ++t) {
    const SurrogateModel s = random_surrogate(rng, 2, 1, 12);
    const Eigen::VectorXd th = vec({uniform(rng, 0.0, 1.0)});
    AcquisitionConfig cfg;
    cfg.beta = t % 2 ? 100.0 : 1.0;
    const Eigen::VectorXd z = optimize_acquisition(s, th, cfg, rng);
    REQUIRE(s.z_domain().contains(z));
    const double best = ucb(s, z, th, cfg.beta);
    double grid_max = -std::numeric_limits<double>::infinity();
    for (int a = 0; a <= 50; ++a)
      for (int b = 0; b <= 50; ++b) grid_max = std::max(grid_max, ucb(s, vec({a / 50.0, b / 50.0}), th, cfg.beta));
    CHECK(best >= grid_max - 1e-6);
  }
}

TEST_CASE("manage_dataset appends and evicts oldest first") {
  SurrogateSettings settings;
  settings.max_data = 10;
  SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1), settings);
  for (int i = 0; i < 5; ++i) s = manage_dataset(s, vec({i / 30.0}), vec({0.1}), i);
  CHECK(s.size() == 5);
  s = manage_dataset(s, vec({5 / 30.0}), vec({0.1}), 5);
  CHECK(s.size() == 6);
  for (int i = 6; i < 10; ++i) s = manage_dataset(s, vec({i / 30.0}), vec({0.1}), i);
  CHECK(s.size() == 10);
  s = manage_dataset(s, vec({10 / 30.0}), vec({0.1}), 10);
  CHECK(s.size() == 10);
  CHECK(s.gp().data().outputs[0] == 1.0);

  for (int i = 11; i < 25; ++i) s = manage_dataset(s, vec({i / 30.0}), vec({0.1}), i);
  REQUIRE(s.size() == 10);
  for (int i = 0; i < 10; ++i) {
    CHECK(s.gp().data().outputs[i] == 15 + i);
    CHECK(s.gp().data().inputs(i, 0) == (15 + i) / 30.0);
    CHECK(s.gp().data().inputs(i, 1) == 0.1);
  }
}

TEST_CASE("inner_bo finds z = theta on the noiseless quadratic") {
  SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1));
  Quadratic1D f;
  InnerBoConfig cfg;
  cfg.seed = 42;
  const InnerBoResult r = inner_bo(vec({0.5}), s, f, cfg);
  CHECK(f.calls == 30);
  CHECK(s.size() == 30);
  CHECK(r.records.size() == 30);
  CHECK(std::abs(r.z_star[0] - 0.5) <= 0.05);
  for (const Eigen::VectorXd& z : f.points) CHECK(s.z_domain().contains(z));
  for (std::size_t i = 1; i < r.records.size(); ++i) CHECK(r.records[i].incumbent >= r.records[i - 1].incumbent);
}

TEST_CASE("inner_bo with k_max = 1 adds exactly one point") {
  SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1));
  Quadratic1D f;
  InnerBoConfig cfg;
  cfg.k_max = 1;
  inner_bo(vec({0.2}), s, f, cfg);
  CHECK(s.size() == 1);
  CHECK(f.calls == 1);
  cfg.k_max = 0;
  CHECK_THROWS_AS(inner_bo(vec({0.2}), s, f, cfg), InputError);
}

TEST_CASE("inner_bo replays identically under a fixed seed") {
  InnerBoConfig cfg;
  cfg.k_max = 12;
  cfg.seed = 9;
  std::string logs[2];
  for (std::string& log : logs) {
    SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1));
    Quadratic1D f(0.01);
    const InnerBoResult r = inner_bo(vec({0.7}), s, f, cfg);
    std::ostringstream out;
    write_run_log_header(out, 1, 1);
    for (const IterationRecord& rec : r.records) write_run_log_row(out, rec);
    log = out.str();
  }
  CHECK(logs[0] == logs[1]);
  CHECK(logs[0].rfind("j,k,z0,theta0,J,incumbent\n", 0) == 0);
}

TEST_CASE("evaluator failure keeps the observations made so far") {
  SurrogateModel s(BoxDomain::unit(1), BoxDomain::unit(1));
  FailingAfter f(3);
  InnerBoConfig cfg;
  CHECK_THROWS_AS(inner_bo(vec({0.2}), s, f, cfg), std::runtime_error);
  CHECK(s.size() == 3);
}

TEST_CASE("posterior mean argmax is invariant to an output shift") {
  Rng rng(10);
  for (int t = 0; t < 5; ++t) {
    const SurrogateModel s = random_surrogate(rng, 1, 1, 10);
    gp::Dataset shifted = s.gp().data();
    shifted.outputs.array() += 37.0;
    const SurrogateModel s2 = s.with_gp(s.gp().with_data(shifted));
    const Eigen::VectorXd th = vec({0.4});
    Rng r1(1), r2(1);
    const Eigen::VectorXd a = posterior_mean_argmax(s, th, optim::SearchOptions{}, r1);
    const Eigen::VectorXd b = posterior_mean_argmax(s2, th, optim::SearchOptions{}, r2);
    CHECK(std::abs(a[0] - b[0]) <= 1e-6);
  }
}

TEST_CASE("a surrogate warm-started at nearby contexts does no worse than a cold start") {
  std::vector<double> warm_regret, cold_regret;
  InnerBoConfig cfg;
  cfg.k_max = 6;
  for (int seed = 0; seed < 20; ++seed) {
    Rng rng(static_cast<std::uint64_t>(100 + seed));
    const double theta = uniform(rng, 0.2, 0.8);
    SurrogateModel warm(BoxDomain::unit(1), BoxDomain::unit(1));
    Quadratic1D pre(0.01);
    for (double dt : {-0.1, 0.1}) {
      for (int i = 0; i <= 10; ++i) {
        const double z = i / 10.0;
        const Eigen::VectorXd th = vec({theta + dt});
        warm = manage_dataset(warm, vec({z}), th, pre.evaluate(vec({z}), th, rng()));
      }
    }
    warm = refit(warm, gp::TrainConfig{});
    SurrogateModel cold(BoxDomain::unit(1), BoxDomain::unit(1));
    cfg.seed = static_cast<std::uint64_t>(seed);
    Quadratic1D f1(0.01), f2(0.01);
    warm_regret.push_back(std::abs(inner_bo(vec({theta}), warm, f1, cfg).z_star[0] - theta));
    cold_regret.push_back(std::abs(inner_bo(vec({theta}), cold, f2, cfg).z_star[0] - theta));
  }
  std::nth_element(warm_regret.begin(), warm_regret.begin() + 10, warm_regret.end());
  std::nth_element(cold_regret.begin(), cold_regret.begin() + 10, cold_regret.end());
  CHECK(warm_regret[10] <= cold_regret[10]);
}
