#include "helpers.hpp"

#include "config.hpp"
#include "sparseps/dataset_io.hpp"
#include "sparseps/errors.hpp"

#include <doctest.h>

#include <cmath>
#include <sstream>
#include <string>

using namespace sparseps;

namespace {

std::string error_of(const std::string& csv) {
  std::istringstream in(csv);
  try {
    read_dataset_csv(in);
  } catch (const DataError& e) {
    return e.what();
  }
  return "";
}

bool contains(const std::string& s, const std::string& part) {
  return s.find(part) != std::string::npos;
}

}  // namespace

TEST_CASE("dataset CSV: reading") {
  std::istringstream in("y,delta,age,income\n1.5,1,30,2.5\n,0,41,3\n-2,1,25,1e3\n");
  const CsvDataset csv = read_dataset_csv(in);
  CHECK(csv.covariate_names == std::vector<std::string>{"age", "income"});
  REQUIRE(csv.data.n() == 3);
  REQUIRE(csv.data.d() == 3);
  CHECK(csv.data.x().col(0).isOnes());
  CHECK(csv.data.x()(2, 2) == 1000.0);
  CHECK(std::isnan(csv.data.y()[1]));
  CHECK(csv.data.delta()[1] == 0.0);
  CHECK(csv.data.y()[2] == -2.0);
}

TEST_CASE("dataset CSV: errors name the line and column") {
  CHECK(contains(error_of(""), "missing header"));
  CHECK(contains(error_of("x,delta,a\n1,1,2\n"), "line 1"));
  CHECK(contains(error_of("y,delta,a\n"), "no data rows"));
  const std::string nonresp = error_of("y,delta,a\n1,1,0\n2.5,0,1\n");
  CHECK(contains(nonresp, "line 3"));
  CHECK(contains(nonresp, "column 'y'"));
  CHECK(contains(nonresp, "empty when delta = 0"));
  CHECK(contains(error_of("y,delta,a\n,1,0\n"), "missing for a respondent"));
  CHECK(contains(error_of("y,delta,a\n1,2,0\n"), "column 'delta'"));
  const std::string bad_x = error_of("y,delta,a,b\n1,1,0,1\n1,1,0,abc\n");
  CHECK(contains(bad_x, "line 3"));
  CHECK(contains(bad_x, "column 'b'"));
  CHECK(contains(error_of("y,delta,a\n1,1\n"), "expected 3 fields"));
  CHECK(contains(error_of("y,delta,a\nnan,1,0\n"), "not a finite number"));
}

TEST_CASE("dataset CSV: write and read back") {
  const Dataset data = sparseps::testing::random_dataset(40, 4, 3);
  std::ostringstream out;
  write_dataset_csv(out, data);
  CHECK(out.str().rfind("y,delta,x2,x3,x4\n", 0) == 0);
  std::istringstream in(out.str());
  const Dataset back = read_dataset_csv(in).data;
  CHECK(back.x() == data.x());
  CHECK(back.delta() == data.delta());
  CHECK(back.observed_y() == data.observed_y());
}

TEST_CASE("metrics CSV round trip keeps absent fields absent") {
  MetricsRow a;
  a.scenario = "M1_rho0_p10_n200";
  a.model = OutcomeModel::kM1;
  a.p = 10;
  a.n = 200;
  a.method = Method::kBsps;
  a.rbias = -0.006;
  a.se = 0.1 + 0.2;  // not exactly representable
  a.mean_se_hat = 0.19;
  a.cp = 0.945;
  a.tpr = 1.0;
  a.tnr = 0.9875;
  a.n_converged = 200;
  a.mc_se_of_cp = std::sqrt(0.945 * 0.055 / 200);
  MetricsRow b;
  b.scenario = "M2_rho0.5_p100_n200";
  b.model = OutcomeModel::kM2;
  b.rho = 0.5;
  b.p = 100;
  b.n = 200;
  b.method = Method::kPs;
  b.n_failed = 200;

  std::ostringstream out;
  write_metrics_csv(out, {a, b});
  const std::string text = out.str();
  CHECK(text.rfind("scenario,model,rho,p,n,method,rbias,se,mean_se_hat,cp,tpr,tnr,n_converged,"
                   "n_failed,mc_se_of_cp\n",
                   0) == 0);
  std::istringstream in(text);
  const auto rows = read_metrics_csv(in);
  REQUIRE(rows.size() == 2);
  CHECK(rows[0].scenario == a.scenario);
  CHECK(rows[0].method == Method::kBsps);
  CHECK(*rows[0].se == *a.se);
  CHECK(*rows[0].mc_se_of_cp == *a.mc_se_of_cp);
  CHECK(*rows[0].tnr == 0.9875);
  CHECK(rows[1].model == OutcomeModel::kM2);
  CHECK(rows[1].rho == 0.5);
  CHECK_FALSE(rows[1].se.has_value());
  CHECK_FALSE(rows[1].cp.has_value());
  CHECK(rows[1].n_failed == 200);

  std::istringstream bad("scenario,model\n");
  CHECK_THROWS_AS(read_metrics_csv(bad), DataError);
}

TEST_CASE("format_double is shortest round trip") {
  CHECK(format_double(0.1) == "0.1");
  CHECK(format_double(2.0) == "2");
  CHECK(std::stod(format_double(0.1 + 0.2)) == 0.1 + 0.2);
  CHECK(format_double(std::nan("")) == "nan");
}

TEST_CASE("chain CSV columns") {
  PosteriorSample s;
  s.burn_in = 5;
  s.draws.push_back(ChainState{ModelIndicator::full(2), Vector::Constant(2, 0.5), 2.25});
  std::ostringstream out;
  write_chain_csv(out, s);
  CHECK(out.str() == "iteration,theta,phi_0,phi_1,z_0,z_1\n5,2.25,0.5,0.5,1,1\n");
  s.working.push_back(WorkingModelState{ModelIndicator::full(2), Vector::Ones(2), 0.75});
  std::ostringstream out2;
  write_chain_csv(out2, s);
  CHECK(out2.str().rfind("iteration,theta,phi_0,phi_1,z_0,z_1,u_0,u_1,beta_0,beta_1,sigma2_e\n", 0) == 0);
}

TEST_CASE("scenario config: defaults, sections and overrides") {
  YAML::Node root = cli::parse_config_text(
      "model: M2\nrho: 0.5\np: 50\nB: 20\nmethods: [ps, bsps]\n"
      "bsps: {burn_in: 100, kept: 200}\npriors: {w: 0.3}\n");
  cli::apply_override(root, "obsps.working_sweeps=7");
  cli::apply_override(root, "seed=11");
  cli::apply_override(root, "lasso.folds=4");
  const ScenarioConfig c = cli::scenario_from_yaml(root);
  CHECK(c.model == OutcomeModel::kM2);
  CHECK(c.rho == 0.5);
  CHECK(c.p == 50);
  CHECK(c.n == 200);
  CHECK(c.B == 20);
  CHECK(c.seed == 11);
  CHECK(c.methods == std::vector<Method>{Method::kPs, Method::kBsps});
  CHECK(c.bsps_chain.burn_in == 100);
  CHECK(c.bsps_chain.kept == 200);
  CHECK(c.obsps.working_sweeps == 7);
  CHECK(c.lasso_folds == 4);
  CHECK(c.priors.w == 0.3);
  CHECK(c.priors.nu1 == 1e4);

  CHECK(cli::parse_method_list("ps, obsps") == std::vector<Method>{Method::kPs, Method::kObsps});
  CHECK_THROWS_AS(cli::parse_method_list("ps,gibbs"), ConfigError);
}

TEST_CASE("scenario config: errors") {
  try {
    cli::parse_config_text("model: M1\np: [10\n");
    FAIL("expected a parse error");
  } catch (const ConfigError& e) {
    CHECK(contains(e.what(), "line"));
  }
  CHECK_THROWS_AS(cli::scenario_from_yaml(cli::parse_config_text("modle: M1\n")), ConfigError);
  CHECK_THROWS_AS(cli::scenario_from_yaml(cli::parse_config_text("bsps: {burnin: 3}\n")), ConfigError);
  CHECK_THROWS_AS(cli::scenario_from_yaml(cli::parse_config_text("p: ten\n")), ConfigError);
  // Range checks run once flags are merged in.
  const ScenarioConfig wide = cli::scenario_from_yaml(cli::parse_config_text("rho: 1.5\n"));
  CHECK_THROWS_AS(wide.validate(), ConfigError);
  YAML::Node root = cli::parse_config_text("p: 10\n");
  CHECK_THROWS_AS(cli::apply_override(root, "no_equals_sign"), ConfigError);
}
