#include <doctest.h>

#include <Eigen/Eigenvalues>
#include <cmath>

#include "cbo/core/errors.hpp"
#include "cbo/core/random.hpp"
#include "cbo/gp/covariance.hpp"
#include "cbo/mogp/mogp_regressor.hpp"
#include "cbo/mogp/serialization.hpp"
#include "dense_oracle.hpp"

using namespace cbo;
using namespace cbo::gp;
using namespace cbo::mogp;

namespace {

Eigen::MatrixXd random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo, double hi) {
  Eigen::MatrixXd m(r, c);
  for (Eigen::Index i = 0; i < r; ++i)
    for (Eigen::Index j = 0; j < c; ++j) m(i, j) = uniform(rng, lo, hi);
  return m;
}

CoregionalizationMatrix random_coreg(Rng& rng, Eigen::Index q) {
  CoregionalizationMatrix b;
  b.a = random_matrix(rng, q, q, -1.0, 1.0);
  b.d = random_matrix(rng, q, 1, 0.05, 0.5);
  return b;
}

KernelSpec random_base(Rng& rng, std::size_t d) {
  std::vector<double> ls(d);
  for (double& l : ls) l = uniform(rng, 0.3, 2.0);
  return rng() % 2 ? KernelSpec::squared_exponential(ls, 1.0) : KernelSpec::matern32(ls, 1.0);
}

MultiDataset sample_data(Rng& rng, std::size_t n, std::size_t d, std::size_t q) {
  return MultiDataset(random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(d), -1.0, 1.0),
                      random_matrix(rng, static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(q), -2.0, 2.0));
}

}  // namespace

TEST_CASE("Kronecker assembly equals element-wise construction exactly") {
  Rng rng(11);
  for (int t = 0; t < 10; ++t) {
    const Eigen::MatrixXd b = random_coreg(rng, 3).matrix();
    const Eigen::MatrixXd k = random_matrix(rng, 4, 4, -1.0, 1.0);
    const Eigen::MatrixXd m = kronecker_covariance(b, k);
    for (int a = 0; a < 3; ++a)
      for (int i = 0; i < 4; ++i)
        for (int c = 0; c < 3; ++c)
          for (int j = 0; j < 4; ++j) REQUIRE(m(a * 4 + i, c * 4 + j) == b(a, c) * k(i, j));
  }
}

TEST_CASE("coregionalization matrix is symmetric PSD and validates") {
  Rng rng(3);
  for (int t = 0; t < 20; ++t) {
    const CoregionalizationMatrix c = random_coreg(rng, 3);
    const Eigen::MatrixXd b = c.matrix();
    CHECK((b - b.transpose()).cwiseAbs().maxCoeff() == 0.0);
    CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(b).eigenvalues().minCoeff() >= -1e-8);
    const CoregionalizationMatrix back = CoregionalizationMatrix::from_matrix(b);
    CHECK((back.matrix() - b).cwiseAbs().maxCoeff() < 1e-12);
  }
  Eigen::MatrixXd bad(2, 2);
  bad << 1.0, 2.0, 2.0, 1.0;
  CHECK_THROWS_AS(CoregionalizationMatrix::from_matrix(bad), InputError);
}

TEST_CASE("dense Kronecker oracle, N=3 Q=2") {
  Rng rng(2024);
  for (int t = 0; t < 20; ++t) {
    const MultiDataset data = sample_data(rng, 3, 2, 2);
    const KernelSpec k = random_base(rng, 2);
    const CoregionalizationMatrix c = random_coreg(rng, 2);
    const double noise = uniform(rng, 1e-3, 0.2);
    const MOGPRegressor m(data, k, c, noise);
    const oracle::Vec xs{uniform(rng, -1.5, 1.5), uniform(rng, -1.5, 1.5)};
    oracle::Vec mean;
    oracle::Mat cov;
    oracle::icm_posterior(k, c.matrix(), noise, data.inputs, data.outputs, xs, &mean, &cov);
    const MultiPrediction p = m.predict(xs);
    for (int a = 0; a < 2; ++a) {
      REQUIRE(std::abs(p.mean[a] - mean[static_cast<std::size_t>(a)]) < 1e-8);
      for (int c2 = 0; c2 < 2; ++c2)
        REQUIRE(std::abs(p.covariance(a, c2) - cov[static_cast<std::size_t>(a)][static_cast<std::size_t>(c2)]) <
                1e-8);
    }
  }
}

TEST_CASE("B = I reduces to independent single-output GPs") {
  Rng rng(77);
  for (int t = 0; t < 10; ++t) {
    const MultiDataset data = sample_data(rng, 6, 2, 2);
    const KernelSpec k = random_base(rng, 2);
    const double noise = uniform(rng, 1e-3, 0.1);
    const MOGPRegressor m(data, k, CoregionalizationMatrix::identity(2), noise);
    const Eigen::Vector2d xs(uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0));
    const MultiPrediction p = m.predict(xs);
    for (int q = 0; q < 2; ++q) {
      const GPRegressor g(Dataset(data.inputs, data.outputs.col(q)), k, noise);
      const Prediction s = g.predict(xs);
      CHECK(std::abs(p.mean[q] - s.mean) < 1e-8);
      CHECK(std::abs(p.covariance(q, q) - s.variance) < 1e-8);
    }
    CHECK(std::abs(p.covariance(0, 1)) < 1e-8);
  }
}

TEST_CASE("Q=1 prediction equals the single-output GP") {
  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const std::size_t d = 1 + rng() % 3;
    const MultiDataset data = sample_data(rng, 2 + rng() % 8, d, 1);
    KernelSpec k = random_base(rng, d);
    const double var = uniform(rng, 0.5, 3.0);
    const double noise = uniform(rng, 1e-4, 0.1);
    GpOptions opts;
    opts.standardize_outputs = t % 2 == 0;
    const MOGPRegressor m(data, k, CoregionalizationMatrix::identity(1, var), noise, opts);
    KernelSpec ks = k;
    ks.signal_variance = var;
    const GPRegressor g(Dataset(data.inputs, data.outputs.col(0)), ks, noise, opts);
    for (int r = 0; r < 5; ++r) {
      Eigen::VectorXd xs(static_cast<Eigen::Index>(d));
      for (Eigen::Index i = 0; i < xs.size(); ++i) xs[i] = uniform(rng, -1.5, 1.5);
      const MultiPrediction p = m.predict(xs);
      const Prediction s = g.predict(xs);
      CHECK(std::abs(p.mean[0] - s.mean) < 1e-10);
      CHECK(std::abs(p.covariance(0, 0) - s.variance) < 1e-10);
    }
    CHECK(std::abs(m.log_marginal_likelihood() - g.log_marginal_likelihood()) < 1e-9);
  }
}

TEST_CASE("Q=1 fit equals gp_fit") {
  Rng rng(8);
  for (int t = 0; t < 3; ++t) {
    const MultiDataset data = sample_data(rng, 10, 1, 1);
    MultiDataset smooth = data;
    for (Eigen::Index i = 0; i < data.inputs.rows(); ++i)
      smooth.outputs(i, 0) = std::sin(3.0 * data.inputs(i, 0)) + 0.05 * data.outputs(i, 0);
    MogpTrainConfig cfg;
    cfg.base.seed = 100 + static_cast<std::uint64_t>(t);
    cfg.base.restarts = 3;
    GpOptions opts;
    opts.standardize_outputs = true;
    const KernelSpec base = KernelSpec::matern32({0.5}, 1.0);
    const MOGPRegressor m = mogp_fit(smooth, base, 1, cfg, opts);
    const GPRegressor g = gp_fit(Dataset(smooth.inputs, smooth.outputs.col(0)), base, cfg.base, opts);
    for (double x = -1.0; x <= 1.0; x += 0.25) {
      const Eigen::VectorXd xs = Eigen::VectorXd::Constant(1, x);
      CHECK(std::abs(m.predict(xs).mean[0] - g.predict(xs).mean) < 1e-6);
      CHECK(std::abs(m.predict(xs).covariance(0, 0) - g.predict(xs).variance) < 1e-6);
    }
  }
}

TEST_CASE("predictive covariance eigenvalues are bounded below") {
  Rng rng(99);
  for (int t = 0; t < 50; ++t) {
    const std::size_t q = 1 + rng() % 3;
    const MultiDataset data = sample_data(rng, 1 + rng() % 8, 2, q);
    const MOGPRegressor m(data, random_base(rng, 2), random_coreg(rng, static_cast<Eigen::Index>(q)),
                          uniform(rng, 1e-6, 1e-2));
    for (int r = 0; r < 4; ++r) {
      const std::vector<double> xs{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
      const Eigen::MatrixXd c = m.normalized_covariance(xs);
      CHECK(Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>(c).eigenvalues().minCoeff() >= -1e-8);
      const MultiPrediction p = m.predict(xs);
      CHECK((p.covariance - p.covariance.transpose()).cwiseAbs().maxCoeff() < 1e-14);
    }
  }
}

TEST_CASE("log det of predictive covariance is non-increasing as data is appended") {
  Rng rng(31);
  for (int t = 0; t < 20; ++t) {
    const KernelSpec k = random_base(rng, 1);
    const CoregionalizationMatrix c = random_coreg(rng, 2);
    const double noise = uniform(rng, 1e-3, 0.1);
    MultiDataset data = MultiDataset::empty(1, 2);
    const std::vector<double> xs{uniform(rng, -1.0, 1.0)};
    double prev = std::log(MOGPRegressor(data, k, c, noise).predict(xs).covariance.determinant());
    for (int i = 0; i < 6; ++i) {
      const std::vector<double> x{uniform(rng, -1.0, 1.0)};
      const std::vector<double> y{uniform(rng, -1.0, 1.0), uniform(rng, -1.0, 1.0)};
      data.append(x, y);
      const double cur = std::log(MOGPRegressor(data, k, c, noise).predict(xs).covariance.determinant());
      CHECK(cur <= prev + 1e-9);
      prev = cur;
    }
  }
}

TEST_CASE("likelihood gradient matches finite differences") {
  Rng rng(123);
  for (std::size_t rank : {std::size_t{0}, std::size_t{1}}) {
    for (int t = 0; t < 5; ++t) {
      const MultiDataset data = sample_data(rng, 6, 2, 2);
      const KernelSpec k = random_base(rng, 2);
      CoregionalizationMatrix c;
      if (rank == 0) {
        c = CoregionalizationMatrix::from_matrix(random_coreg(rng, 2).matrix());
      } else {
        c.a = random_matrix(rng, 2, 1, -1.0, 1.0);
        c.d = random_matrix(rng, 2, 1, 0.1, 0.5);
      }
      const Eigen::VectorXd y = Eigen::Map<const Eigen::VectorXd>(data.outputs.data(), data.outputs.size());
      const Eigen::VectorXd p = pack_mogp_params(k, c, 0.05);
      Eigen::VectorXd g;
      mogp_negative_log_marginal_likelihood(data.inputs, y, k, 2, rank, p, &g);
      for (Eigen::Index i = 0; i < p.size(); ++i) {
        const double h = 1e-6;
        Eigen::VectorXd pp = p, pm = p;
        pp[i] += h;
        pm[i] -= h;
        const double fd = (mogp_negative_log_marginal_likelihood(data.inputs, y, k, 2, rank, pp, nullptr) -
                           mogp_negative_log_marginal_likelihood(data.inputs, y, k, 2, rank, pm, nullptr)) /
                          (2.0 * h);
        CHECK(g[i] == doctest::Approx(fd).epsilon(1e-5).scale(1.0));
      }
    }
  }
}

TEST_CASE("pack and unpack round trip") {
  Rng rng(4);
  const KernelSpec k = KernelSpec::squared_exponential({0.7, 1.3}, 1.0);
  const CoregionalizationMatrix c = random_coreg(rng, 3);
  KernelSpec k2 = k;
  CoregionalizationMatrix c2;
  double noise = 0.0;
  unpack_mogp_params(pack_mogp_params(k, c, 0.02), 3, 0, &k2, &c2, &noise);
  CHECK((c2.matrix() - c.matrix()).cwiseAbs().maxCoeff() < 1e-10);
  CHECK(noise == doctest::Approx(0.02));
  CHECK(k2.lengthscales[1] == doctest::Approx(1.3));
}

TEST_CASE("fitted B recovers correlated and independent outputs") {
  Rng rng(2718);
  const std::size_t n = 30;
  Eigen::MatrixXd x(static_cast<Eigen::Index>(n), 1);
  for (std::size_t i = 0; i < n; ++i) x(static_cast<Eigen::Index>(i), 0) = -1.0 + 2.0 * static_cast<double>(i) / (n - 1);
  MogpTrainConfig cfg;
  cfg.base.seed = 9;
  GpOptions opts;
  opts.standardize_outputs = true;
  const KernelSpec base = KernelSpec::squared_exponential({0.5}, 1.0);

  SUBCASE("identical outputs") {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, 0) = y(i, 1) = std::sin(3.0 * x(i, 0));
    const MOGPRegressor m = mogp_fit(MultiDataset(x, y), base, 2, cfg, opts);
    CHECK(m.coregionalization().correlation(0, 1) >= 0.9);
  }
  SUBCASE("independent outputs") {
    Eigen::MatrixXd y(static_cast<Eigen::Index>(n), 2);
    for (Eigen::Index i = 0; i < y.rows(); ++i) {
      y(i, 0) = std::sin(3.0 * x(i, 0)) + 0.05 * standard_normal(rng);
      y(i, 1) = std::cos(5.0 * x(i, 0) + 1.0) + 0.05 * standard_normal(rng);
    }
    const MOGPRegressor m = mogp_fit(MultiDataset(x, y), base, 2, cfg, opts);
    CHECK(std::abs(m.coregionalization().correlation(0, 1)) <= 0.5);
  }
}

TEST_CASE("fit does not decrease the likelihood of the initial point") {
  Rng rng(17);
  const MultiDataset data = sample_data(rng, 8, 1, 2);
  const KernelSpec base = KernelSpec::matern32({0.5}, 1.0);
  MogpTrainConfig cfg;
  cfg.base.restarts = 2;
  const MOGPRegressor init(data, base, CoregionalizationMatrix::identity(2), cfg.base.initial_noise_variance);
  const MOGPRegressor fit = mogp_fit(data, base, 2, cfg);
  CHECK(fit.log_marginal_likelihood() >= init.log_marginal_likelihood() - 1e-9);
}

TEST_CASE("input validation") {
  Rng rng(1);
  const MultiDataset data = sample_data(rng, 3, 2, 2);
  const KernelSpec k = KernelSpec::squared_exponential({1.0, 1.0}, 1.0);
  CHECK_THROWS_AS(MOGPRegressor(data, k, CoregionalizationMatrix::identity(3), 0.1), InputError);
  const MOGPRegressor m(data, k, CoregionalizationMatrix::identity(2), 0.1);
  CHECK_THROWS_AS(m.predict(std::vector<double>{0.0}), InputError);
  CHECK_THROWS_AS(mogp_fit(MultiDataset::empty(2, 2), k, 2, MogpTrainConfig{}), InputError);
  CHECK_THROWS_AS(mogp_fit(data, k, 3, MogpTrainConfig{}), InputError);
}

TEST_CASE("JSON round trip reproduces predictions") {
  Rng rng(6);
  const MultiDataset data = sample_data(rng, 5, 2, 2);
  GpOptions opts;
  opts.standardize_outputs = true;
  opts.input_box = BoxDomain::uniform(2, -1.0, 1.0);
  const MOGPRegressor m(data, KernelSpec::matern32({0.4, 0.8}, 1.0), random_coreg(rng, 2), 0.01, opts);
  const MOGPRegressor back = mogp_from_json(nlohmann::json::parse(to_json(m).dump()));
  const std::vector<double> xs{0.2, -0.3};
  CHECK((m.predict(xs).mean - back.predict(xs).mean).cwiseAbs().maxCoeff() < 1e-10);
  CHECK((m.predict(xs).covariance - back.predict(xs).covariance).cwiseAbs().maxCoeff() < 1e-10);
  CHECK_THROWS_AS(mogp_from_json(nlohmann::json{{"type", "gp"}}), IoError);
}
