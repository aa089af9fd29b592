#include "helpers.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/simulation.hpp"

#include <boost/math/quadrature/gauss_kronrod.hpp>
#include <doctest.h>

#include <cmath>
#include <numbers>

using namespace sparseps;

namespace {

double corr(const Vector& a, const Vector& b) {
  const Eigen::ArrayXd ca = a.array() - a.mean();
  const Eigen::ArrayXd cb = b.array() - b.mean();
  return (ca * cb).sum() / std::sqrt(ca.square().sum() * cb.square().sum());
}

EstimateReport report(double theta, double se, double lo, double hi,
                      std::optional<ModelIndicator> support = std::nullopt) {
  EstimateReport r;
  r.theta_hat = theta;
  r.se_hat = se;
  r.ci_low = lo;
  r.ci_high = hi;
  r.converged = true;
  r.selected_support = std::move(support);
  return r;
}

ScenarioConfig ps_only(int p, int B, std::uint64_t seed) {
  ScenarioConfig c;
  c.p = p;
  c.B = B;
  c.seed = seed;
  c.methods = {Method::kPs, Method::kTps};
  return c;
}

}  // namespace

TEST_CASE("covariates: independence at rho = 0") {
  Rng rng(1);
  const int n = 20000;
  const Matrix x = gen_covariates(n, 5, 0.0, rng);
  REQUIRE(x.cols() == 6);
  CHECK(x.col(0).isOnes());
  const double tol = 3.0 / std::sqrt(static_cast<double>(n));
  for (int j = 1; j <= 5; ++j) {
    CHECK(std::abs(x.col(j).mean()) < tol);
    CHECK(std::abs((x.col(j).array() - x.col(j).mean()).square().sum() / (n - 1) - 1.0) <
          3.0 * std::sqrt(2.0 / n));
    for (int k = j + 1; k <= 5; ++k) CHECK(std::abs(corr(x.col(j), x.col(k))) < tol);
  }
}

TEST_CASE("covariates: AR(1) correlation") {
  Rng rng(2);
  const Matrix x = gen_covariates(100000, 6, 0.5, rng);
  for (int j = 1; j + 2 <= 6; ++j) {
    CHECK(std::abs(corr(x.col(j), x.col(j + 1)) - 0.5) < 0.01);
    CHECK(std::abs(corr(x.col(j), x.col(j + 2)) - 0.25) < 0.01);
  }
  // Leading columns do not depend on p.
  Rng a(3), b(3);
  const Matrix small = gen_covariates(50, 3, 0.5, a);
  const Matrix big = gen_covariates(50, 20, 0.5, b);
  CHECK(small == big.leftCols(4));
}

TEST_CASE("outcome models have mean 2") {
  for (OutcomeModel m : {OutcomeModel::kM1, OutcomeModel::kM2}) {
    Rng rng(m == OutcomeModel::kM1 ? 5 : 6);
    const Matrix x = gen_covariates(1000000, 3, 0.0, rng);
    const Vector y = gen_outcome(m, x, rng);
    CAPTURE(model_name(m));
    CHECK(std::abs(y.mean() - 2.0) < 0.01);
    CHECK(true_theta(m) == 2.0);
    const Vector f = m == OutcomeModel::kM1
                         ? Vector(2.0 + 2.0 * x.col(2).array())
                         : Vector(1.5 + 0.5 * x.col(2).array().square() + 2.0 * x.col(3).array());
    const Vector e = y - f;
    CHECK(std::abs(e.squaredNorm() / 1e6 - 1.0) < 0.01);
  }
  CHECK(parse_model("m2") == OutcomeModel::kM2);
  CHECK_THROWS_AS(parse_model("M3"), ConfigError);
}

TEST_CASE("response rate") {
  // E[logistic(1 + Z)], Z ~ N(0, 1), by adaptive quadrature.
  auto f = [](double z) {
    return std::exp(-0.5 * z * z) / std::sqrt(2.0 * std::numbers::pi) / (1.0 + std::exp(-1.0 - z));
  };
  const double exact = boost::math::quadrature::gauss_kronrod<double, 31>::integrate(f, -12.0, 12.0);
  CHECK(std::abs(exact - 0.70) < 0.01);

  Rng rng(7);
  const Matrix x = gen_covariates(1000000, 2, 0.0, rng);
  const Vector d = gen_response(x, rng);
  CHECK(std::abs(d.mean() - exact) < 3.0 * std::sqrt(exact * (1 - exact) / 1e6));
  CHECK(std::abs(d.mean() - 0.70) < 0.01);

  Matrix x0 = x.topRows(200000);
  x0.col(1).setZero();
  const double logistic1 = 1.0 / (1.0 + std::exp(-1.0));
  CHECK(std::abs(gen_response(x0, rng).mean() - logistic1) < 3.0 * std::sqrt(0.2 / 2e5));
  CHECK(logistic1 == doctest::Approx(0.7310585786300049));
}

TEST_CASE("generated data are determined by seed and replication") {
  ScenarioConfig c;
  c.seed = 42;
  const Dataset a = generate_dataset(c, 3);
  const Dataset b = generate_dataset(c, 3);
  CHECK(a.x() == b.x());
  CHECK(a.delta() == b.delta());
  CHECK(a.observed_y() == b.observed_y());
  CHECK(a.x() != generate_dataset(c, 4).x());
  c.seed = 43;
  CHECK(a.x() != generate_dataset(c, 3).x());
  CHECK(a.d() == 11);
  CHECK(true_response_support(11).active() == std::vector<Eigen::Index>{0, 1});
  CHECK(true_working_support(OutcomeModel::kM1, 11).active() == std::vector<Eigen::Index>{0, 1, 2});
  CHECK(true_working_support(OutcomeModel::kM2, 11).active() == std::vector<Eigen::Index>{0, 1, 3});
}

TEST_CASE("scenario validation") {
  ScenarioConfig c;
  CHECK_NOTHROW(c.validate());
  CHECK(c.id() == "M1_rho0_p10_n200");
  c.rho = 1.0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.rho = 0.5;
  c.model = OutcomeModel::kM2;
  c.p = 2;
  CHECK_THROWS_AS(c.validate(), ConfigError);
  c.p = 3;
  CHECK_NOTHROW(c.validate());
  CHECK(c.id() == "M2_rho0.5_p3_n200");
  c.B = 0;
  CHECK_THROWS_AS(c.validate(), ConfigError);
}

TEST_CASE("compute_metrics hand examples") {
  std::vector<EstimateReport> exact{report(2.0, 0.1, 1.9, 2.1), report(2.0, 0.3, 1.5, 2.5)};
  auto row = compute_metrics(exact, 2.0, std::nullopt);
  CHECK(*row.rbias == 0.0);
  CHECK(*row.cp == 1.0);
  CHECK(*row.mc_se_of_cp == 0.0);
  CHECK_FALSE(row.tpr.has_value());

  std::vector<EstimateReport> two{report(1.0, 1.0, 0.0, 2.5), report(3.0, 1.0, 2.5, 4.0)};
  row = compute_metrics(two, 2.0, std::nullopt);
  CHECK(*row.rbias == 0.0);
  CHECK(*row.se == doctest::Approx(std::sqrt(2.0)).epsilon(1e-15));

  std::vector<EstimateReport> single{report(2.2, 0.1, 2.0, 2.4)};
  row = compute_metrics(single, 2.0, std::nullopt);
  CHECK(row.n_converged == 1);
  CHECK_FALSE(row.se.has_value());
  CHECK(*row.rbias == doctest::Approx(0.1));
}

TEST_CASE("compute_metrics against a scripted aggregation") {
  auto sup = [](std::vector<Eigen::Index> a) { return ModelIndicator::from_indices(4, a); };
  std::vector<EstimateReport> r{
      report(1.9, 0.1, 1.8, 2.0, sup({0, 1})),       // covers
      report(2.1, 0.2, 1.9, 2.3, sup({0, 1, 2})),    // covers
      report(2.5, 0.3, 2.2, 2.8, sup({0})),          // misses
      report(1.7, 0.2, 1.3, 1.9, sup({0, 1, 2, 3})), // misses
  };
  EstimateReport failed;
  failed.converged = false;
  r.push_back(failed);
  const auto row = compute_metrics(r, 2.0, sup({0, 1}));
  // mean 2.05; deviations -.15, .05, .45, -.35; SS .35.
  CHECK(*row.rbias == doctest::Approx(0.025).epsilon(1e-12));
  CHECK(*row.se == doctest::Approx(std::sqrt(0.35 / 3.0)).epsilon(1e-12));
  CHECK(*row.mean_se_hat == doctest::Approx(0.2).epsilon(1e-12));
  CHECK(*row.cp == 0.5);
  CHECK(*row.mc_se_of_cp == doctest::Approx(0.25));
  // TPR per replication 1, 1, 0, 1; TNR 1, .5, 1, 0.
  CHECK(*row.tpr == doctest::Approx(0.75));
  CHECK(*row.tnr == doctest::Approx(0.625));
  CHECK(row.n_converged == 4);
  CHECK(row.n_failed == 1);
}

TEST_CASE("TPS results do not depend on p") {
  ScenarioConfig a = ps_only(3, 30, 8);
  a.methods = {Method::kTps};
  ScenarioConfig b = a;
  b.p = 25;
  const auto ra = run_monte_carlo(a);
  const auto rb = run_monte_carlo(b);
  for (int k = 0; k < 30; ++k) {
    CHECK(ra.records[0][k].report.theta_hat == rb.records[0][k].report.theta_hat);
    CHECK(ra.records[0][k].report.se_hat == rb.records[0][k].report.se_hat);
  }
  CHECK(*ra.metrics[0].se == *rb.metrics[0].se);
  CHECK(*ra.metrics[0].cp == *rb.metrics[0].cp);
}

TEST_CASE("Monte Carlo output does not depend on the worker count") {
  ScenarioConfig c;
  c.p = 6;
  c.n = 120;
  c.B = 4;
  c.seed = 99;
  c.bsps_chain = ChainOptions{15, 15};
  c.obsps = ObspsOptions{ChainOptions{10, 10}, 3};
  c.workers = 1;
  const auto one = run_monte_carlo(c);
  c.workers = 3;
  int calls = 0;
  const auto three = run_monte_carlo(c, [&](int, int) { ++calls; });
  CHECK(calls == 4);  // once per replication
  REQUIRE(one.records.size() == 5);
  for (std::size_t m = 0; m < 5; ++m) {
    for (int k = 0; k < 4; ++k) {
      CHECK(one.records[m][k].replication == k);
      CHECK(one.records[m][k].report.theta_hat == three.records[m][k].report.theta_hat);
      CHECK(one.records[m][k].report.ci_low == three.records[m][k].report.ci_low);
      CHECK(one.records[m][k].report.selected_support == three.records[m][k].report.selected_support);
    }
  }
}

TEST_CASE("MLE on the true support recovers the response coefficients") {
  ScenarioConfig c;
  c.seed = 17;
  const int B = 500;
  Vector sum = Vector::Zero(2), sq = Vector::Zero(2);
  for (int b = 0; b < B; ++b) {
    const Dataset data = generate_dataset(c, b);
    const Vector phi = fit_propensity_mle(data, true_response_support(data.d())).phi;
    CHECK(phi.tail(data.d() - 2).isZero());
    sum += phi.head(2);
    sq += phi.head(2).cwiseAbs2();
  }
  const Vector mean = sum / B;
  for (int j = 0; j < 2; ++j) {
    const double sd = std::sqrt((sq[j] - B * mean[j] * mean[j]) / (B - 1));
    CAPTURE(j);
    CHECK(std::abs(mean[j] - 1.0) < 3.0 * sd / std::sqrt(static_cast<double>(B)));
  }
}

TEST_CASE("PS variance estimator calibration and TPS efficiency") {
  const auto res = run_monte_carlo(ps_only(10, 200, 23));
  const MetricsRow& ps = res.metrics[0];
  const MetricsRow& tps = res.metrics[1];
  // Reference ratio 2.7 / 3.4 on the variance scale.
  CHECK(std::abs(*ps.mean_se_hat / *ps.se - std::sqrt(2.7 / 3.4)) <= 0.15);

  // With x3 outside the response model the estimating-equation correction
  // vanishes, so Var(TPS) = E[1/pi] Var(y) / n = 5 (1 + e^{-1/2}) / n.
  const auto big = run_monte_carlo(ps_only(10, 1000, 29));
  const double analytic = 5.0 * (1.0 + std::exp(-0.5)) / 200.0;
  const double v_tps = *big.metrics[1].se * *big.metrics[1].se;
  CHECK(std::abs(v_tps / analytic - 1.0) < 3.0 * std::sqrt(2.0 / 999.0));
  CHECK(*tps.cp > 0.9);
}

TEST_CASE("full-model PS degrades from p = 10 to p = 50") {
  double bias10 = 0.0, bias50 = 0.0;
  for (std::uint64_t seed : {1, 2, 3}) {
    ScenarioConfig c10 = ps_only(10, 1000, seed);
    c10.methods = {Method::kPs};
    ScenarioConfig c50 = c10;
    c50.p = 50;
    const auto r10 = run_monte_carlo(c10).metrics[0];
    const auto r50 = run_monte_carlo(c50).metrics[0];
    CAPTURE(seed);
    // Variance scale, as in the reference table (9.4 vs 3.4).
    CHECK(*r50.se * *r50.se >= 2.0 * *r10.se * *r10.se);
    bias10 += std::abs(*r10.rbias);
    bias50 += std::abs(*r50.rbias);
  }
  CHECK(bias50 > bias10);
}

TEST_CASE("run_method reports failures instead of throwing") {
  ScenarioConfig c;
  c.p = 100;
  c.seed = 3;
  const Dataset data = generate_dataset(c, 0);
  const auto r = run_method(data, Method::kPs, c, 1);
  CHECK_FALSE(r.converged);
  CHECK(r.diagnostics.count("singular_information") == 1);

  ScenarioConfig one;
  one.B = 1;
  one.methods = {Method::kPs};
  const auto res = run_monte_carlo(one);
  CHECK(res.metrics[0].n_converged == 1);
  CHECK_FALSE(res.metrics[0].se.has_value());
}
