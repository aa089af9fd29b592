#include "helpers.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/bsps.hpp"
#include "sparseps/errors.hpp"

#include <boost/math/tools/minima.hpp>
#include <doctest.h>

#include <cmath>

using namespace sparseps;
using sparseps::testing::random_dataset;

namespace {

bool same_samples(const PosteriorSample& a, const PosteriorSample& b) {
  if (a.draws.size() != b.draws.size()) return false;
  for (std::size_t k = 0; k < a.draws.size(); ++k) {
    if (a.draws[k].theta != b.draws[k].theta) return false;
    if (a.draws[k].z != b.draws[k].z) return false;
    if (a.draws[k].phi != b.draws[k].phi) return false;
  }
  return a.failed_iterations == b.failed_iterations;
}

}  // namespace

TEST_CASE("inclusion probability closed forms") {
  CHECK(inclusion_probability(0.0, 0.5, 1e-4, 1e4) ==
        doctest::Approx(0.01 / 100.01).epsilon(1e-12));
  CHECK(inclusion_probability(0.0, 0.5, 1e-4, 1e4) == doctest::Approx(9.999e-5).epsilon(1e-4));
  for (double w : {0.1, 0.5, 0.93})
    for (double phi : {-2.0, 0.0, 0.3, 7.0})
      CHECK(inclusion_probability(phi, w, 2.5, 2.5) == doctest::Approx(w).epsilon(1e-14));
  // The spike density underflows relative to the slab: log ratio ~ -5000.
  CHECK(inclusion_probability(1.0, 0.5, 1e-4, 1e4) == 1.0);
  CHECK(inclusion_probability(-1.0, 0.5, 1e-4, 1e4) == 1.0);
}

TEST_CASE("inclusion probability is increasing in |phi|") {
  double prev = inclusion_probability(0.0, 0.5, 1e-4, 1e4);
  for (double a = 1e-4; a < 0.2; a += 1e-4) {
    const double p = inclusion_probability(a, 0.5, 1e-4, 1e4);
    REQUIRE(p == inclusion_probability(-a, 0.5, 1e-4, 1e4));
    // Strict until the probability is within rounding of 1.
    if (p < 1.0 - 1e-12) REQUIRE(p > prev);
    REQUIRE(p >= prev);
    prev = p;
  }
  CHECK(prev == 1.0);
}

TEST_CASE("draw_model_step keeps the intercept and follows the probabilities") {
  auto priors = PriorConfig::defaults(3);
  Vector phi(3);
  phi << 0.0, 0.0, 1.0;
  Rng rng(3);
  int on1 = 0;
  for (int k = 0; k < 20000; ++k) {
    const auto z = draw_model_step(phi, priors, rng);
    REQUIRE(z[0]);
    REQUIRE(z[2]);
    on1 += z[1] ? 1 : 0;
  }
  CHECK(on1 < 10);  // expected about 2
  priors.nu0 = priors.nu1 = 1.0;
  priors.w[1] = 0.3;
  int hits = 0;
  for (int k = 0; k < 20000; ++k) hits += draw_model_step(phi, priors, rng)[1] ? 1 : 0;
  CHECK(std::abs(hits / 20000.0 - 0.3) < 4.0 * std::sqrt(0.21 / 20000.0));
}

TEST_CASE("penalized mode: spike coordinates shrink and the mode is coordinatewise optimal") {
  const Dataset data = random_dataset(120, 5, 17, 0.8);
  const auto priors = PriorConfig::defaults(5);
  const auto z = ModelIndicator::intercept_only(5);
  const Vector mode = penalized_mode(data, z, priors);
  for (int j = 1; j < 5; ++j) CHECK(std::abs(mode[j]) < 10.0 * std::sqrt(priors.nu0));

  const Vector inv_var = prior_variances(z, priors.nu0, priors.nu1).cwiseInverse();
  for (int j = 0; j < 5; ++j) {
    auto neg_obj = [&](double v) {
      Vector phi = mode;
      phi[j] = v;
      return -(log_likelihood(data, phi) - 0.5 * phi.cwiseAbs2().dot(inv_var));
    };
    const auto [arg, val] = boost::math::tools::brent_find_minima(neg_obj, mode[j] - 1.0,
                                                                  mode[j] + 1.0, 52);
    CAPTURE(j);
    CHECK(std::abs(arg - mode[j]) < 1e-6);
  }
}

TEST_CASE("penalized mode approaches the MLE as the slab widens") {
  const Dataset data = random_dataset(200, 4, 23);
  auto priors = PriorConfig::defaults(4);
  priors.nu1 = 1e12;
  const auto full = ModelIndicator::full(4);
  const Vector mode = penalized_mode(data, full, priors);
  const Vector mle = fit_propensity_mle(data, full).phi;
  CHECK((mode - mle).lpNorm<Eigen::Infinity>() < 1e-3);
}

TEST_CASE("laplace_covariance closed forms") {
  // Intercept only, pi = 0.5 everywhere: n I = 400 * 0.25 = 100.
  const Dataset one(Matrix::Ones(400, 1), Vector::Ones(400), Vector::Ones(400));
  const auto p1 = PriorConfig::defaults(1);
  const Matrix v = laplace_covariance(one, Vector::Zero(1), ModelIndicator::full(1), p1);
  CHECK(v(0, 0) == doctest::Approx(1.0 / (100.0 + 1e-4)).epsilon(1e-13));

  // No information: every probability sits at the clamp.
  const Dataset data = random_dataset(50, 3, 29);
  const auto p3 = PriorConfig::defaults(3);
  Vector phi = Vector::Zero(3);
  phi[0] = 60.0;
  ModelIndicator z = ModelIndicator::intercept_only(3);
  z.set(2, true);
  const Matrix vz = laplace_covariance(data, phi, z, p3);
  CHECK(vz(0, 0) == doctest::Approx(1e4).epsilon(1e-6));
  CHECK(vz(1, 1) == doctest::Approx(1e-4).epsilon(1e-6));
  CHECK(vz(2, 2) == doctest::Approx(1e4).epsilon(1e-6));
}

TEST_CASE("laplace_covariance is SPD and inverts the precision, including p > n") {
  Rng rng(31);
  for (int inst = 0; inst < 100; ++inst) {
    const int n = 5 + static_cast<int>(uniform01(rng) * 45);
    const int d = 2 + static_cast<int>(uniform01(rng) * 78);
    const Dataset data = random_dataset(n, d, 1000 + inst);
    const auto priors = PriorConfig::defaults(d);
    ModelIndicator z = ModelIndicator::intercept_only(d);
    for (int j = 1; j < d; ++j) z.set(j, uniform01(rng) < 0.3);
    const Vector phi = sparseps::testing::random_vector(d, rng, 0.3);
    const Matrix cov = laplace_covariance(data, phi, z, priors);
    CAPTURE(inst);
    REQUIRE((cov - cov.transpose()).cwiseAbs().maxCoeff() == 0.0);
    REQUIRE(cov.llt().info() == Eigen::Success);
    const Vector pi = propensities(data.x(), phi);
    Matrix precision = weighted_gram(data.x(), pi.array() * (1.0 - pi.array()));
    precision.diagonal() += prior_variances(z, priors.nu0, priors.nu1).cwiseInverse();
    CHECK((cov * precision - Matrix::Identity(d, d)).cwiseAbs().maxCoeff() < 1e-8);
  }
}

TEST_CASE("draw_from_laplace moments") {
  const Dataset data = random_dataset(150, 4, 37);
  const auto priors = PriorConfig::defaults(4);
  const auto z = ModelIndicator::full(4);
  const LaplaceApprox approx = laplace_approx(data, z, priors);
  const Matrix cov = laplace_covariance(data, approx.mode, z, priors);
  Rng rng(41);
  const int m = 10000;
  Matrix draws(m, 4);
  for (int k = 0; k < m; ++k) draws.row(k) = draw_from_laplace(approx, rng).transpose();
  const Vector mean = draws.colwise().mean().transpose();
  for (int j = 0; j < 4; ++j) CHECK(std::abs(mean[j] - approx.mode[j]) < 4.0 * std::sqrt(cov(j, j) / m));
  const Matrix centered = draws.rowwise() - mean.transpose();
  const Matrix sample_cov = centered.transpose() * centered / (m - 1);
  CHECK((sample_cov - cov).norm() / cov.norm() < 0.10);

  Rng a(5), b(5);
  for (int k = 0; k < 5; ++k) CHECK(draw_phi_step(data, z, priors, a) == draw_phi_step(data, z, priors, b));
}

TEST_CASE("theta step: constant outcome and exact solve") {
  const Dataset base = random_dataset(80, 4, 43);
  const Dataset constant(base.x(), Vector::Constant(80, 4.25), base.delta());
  Rng rng(47);
  const Vector phi = sparseps::testing::random_vector(4, rng, 0.3);
  for (int k = 0; k < 10; ++k)
    CHECK(draw_theta_step(constant, phi, ModelIndicator::full(4), rng) ==
          doctest::Approx(4.25).epsilon(1e-12));

  const ThetaConditional c = theta_conditional(base, phi, ModelIndicator::full(4));
  CHECK(c.variance >= 0.0);
  for (double v : {-1.3, 0.0, 0.4, 2.2}) {
    const double theta = solve_theta(c, v);
    CHECK(std::abs(normalized_ps_equation(base, phi, theta) - v) < 1e-10);
  }
}

TEST_CASE("theta step under full response follows the law of the sample mean") {
  Rng gen(53);
  const int n = 60;
  Matrix cov(n, 2);
  Vector y(n);
  for (int i = 0; i < n; ++i) {
    cov(i, 0) = standard_normal(gen);
    cov(i, 1) = standard_normal(gen);
    y[i] = 1.0 + 2.0 * cov(i, 0) + standard_normal(gen);
  }
  const Dataset data = Dataset::with_intercept(cov, y, Vector::Ones(n));
  Vector phi = Vector::Zero(3);
  phi[0] = std::log(9.0);  // pi = 0.9 for everyone
  const auto z = ModelIndicator::intercept_only(3);
  Rng rng(59);
  std::vector<double> draws(10000);
  for (double& t : draws) t = draw_theta_step(data, phi, z, rng);
  const double ybar = y.mean();
  const double var = (y.array() - ybar).square().sum() / (n * n);
  const double m = sparseps::testing::mean(draws);
  const double s2 = sparseps::testing::sample_var(draws);
  CHECK(std::abs(m - ybar) < 4.0 * std::sqrt(var / 10000.0));
  CHECK(std::abs(s2 / var - 1.0) < 0.05);
}

TEST_CASE("summarize_posterior") {
  PosteriorSample s;
  for (double t : {1.0, 2.0, 3.0}) s.draws.push_back(ChainState{ModelIndicator::full(3), Vector::Zero(3), t});
  auto r = summarize_posterior(s, 0.95);
  CHECK(r.theta_hat == doctest::Approx(2.0).epsilon(1e-15));
  CHECK(r.se_hat == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(r.ci_low == doctest::Approx(1.05));
  CHECK(r.ci_high == doctest::Approx(2.95));
  CHECK(r.converged);

  PosteriorSample c;
  ModelIndicator z1 = ModelIndicator::intercept_only(3);
  z1.set(1, true);
  for (int k = 0; k < 10; ++k) {
    ModelIndicator z = k < 6 ? z1 : ModelIndicator::full(3);
    c.draws.push_back(ChainState{z, Vector::Zero(3), 2.5});
  }
  r = summarize_posterior(c, 0.9);
  CHECK(r.theta_hat == 2.5);
  CHECK(r.se_hat == 0.0);
  CHECK(r.ci_low == 2.5);
  CHECK(r.ci_high == 2.5);
  CHECK(*r.selected_support == z1);  // x2 in 4 of 10 draws
  CHECK(model_frequency(c, z1) == doctest::Approx(0.6));

  PosteriorSample single;
  single.draws.push_back(ChainState{z1, Vector::Zero(3), 1.0});
  CHECK_THROWS(summarize_posterior(single));
}

TEST_CASE("BSPS chain: length, determinism and single-state chain") {
  const Dataset data = random_dataset(150, 5, 61);
  const auto priors = PriorConfig::defaults(5);
  const auto a = run_bsps_chain(data, priors, ChainOptions{20, 30}, 9);
  const auto b = run_bsps_chain(data, priors, ChainOptions{20, 30}, 9);
  CHECK(a.draws.size() == 30);
  CHECK(a.kept == 30);
  CHECK(a.burn_in == 20);
  CHECK(same_samples(a, b));
  const auto c = run_bsps_chain(data, priors, ChainOptions{20, 30}, 10);
  CHECK_FALSE(same_samples(a, c));

  const auto one = run_bsps_chain(data, priors, ChainOptions{0, 1}, 3);
  REQUIRE(one.draws.size() == 1);
  CHECK(one.draws[0].z[0]);
  CHECK(std::isfinite(one.draws[0].theta));
  CHECK(one.draws[0].phi.size() == 5);

  CHECK_THROWS_AS(run_bsps_chain(data, priors, ChainOptions{10, 0}, 1), ConfigError);
  const Dataset none(data.x(), data.y(), Vector::Zero(150));
  CHECK_THROWS_AS(run_bsps_chain(none, priors, ChainOptions{1, 2}, 1), NoRespondents);
}

TEST_CASE("initial model is dense unless the full fit is separated") {
  const Dataset data = random_dataset(200, 6, 67);
  CHECK(initial_model(data, 1) == ModelIndicator::full(6));
  const Dataset wide = random_dataset(30, 40, 71);
  const auto z = initial_model(wide, 1);
  CHECK(z[0]);
  CHECK(z.count() < 40);
}
