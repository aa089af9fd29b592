#pragma once

#include "sparseps/bsps.hpp"
#include "sparseps/model.hpp"
#include "sparseps/obsps.hpp"
#include "sparseps/report.hpp"
#include "sparseps/rng.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

namespace sparseps {

/// Outcome-generating models. Column 0 is the intercept; columns 1..p are the
/// stochastic covariates x2, x3, ...
///   M1: y = 2 + 2 x3 + e
///   M2: y = 1.5 + 0.5 x3^2 + 2 x4 + e
/// Responses follow logit P(delta = 1) = 1 + x2 in both.
enum class OutcomeModel { kM1, kM2 };

std::string_view model_name(OutcomeModel m) noexcept;
OutcomeModel parse_model(std::string_view name);

/// Scalar hyperparameters, broadcast over columns when the data size is known.
struct PriorSettings {
  double nu0 = 1e-4;
  double nu1 = 1e4;
  double w = 0.5;
  double xi = 0.5;
  double gamma0 = 1e-4;
  double gamma1 = 1e4;
  double c1 = 1e-7;
  double c2 = 1e-7;

  PriorConfig for_dimension(Eigen::Index d) const;
};

struct ScenarioConfig {
  OutcomeModel model = OutcomeModel::kM1;
  double rho = 0.0;
  int p = 10;
  int n = 200;
  int B = 200;
  std::vector<Method> methods{Method::kPs, Method::kTps, Method::kLasso, Method::kBsps,
                              Method::kObsps};
  std::uint64_t seed = 1;
  ChainOptions bsps_chain{500, 500};
  ObspsOptions obsps{ChainOptions{500, 500}, 20};
  PriorSettings priors;
  int lasso_folds = 5;
  int lasso_grid = 50;
  double level = 0.95;
  int workers = 1;

  /// Throws ConfigError on an invalid combination.
  void validate() const;
  /// Stable identifier, e.g. "M1_rho0_p10_n200".
  std::string id() const;
};

/// Intercept column followed by p AR(1)-correlated standard normal columns,
/// generated column by column so the leading columns do not depend on p.
Matrix gen_covariates(int n, int p, double rho, Rng& rng);
/// `x` includes the intercept column.
Vector gen_outcome(OutcomeModel model, const Matrix& x, Rng& rng);
Vector gen_response(const Matrix& x, Rng& rng);

/// Data for replication `replication` of a scenario; fully determined by
/// (seed, replication).
Dataset generate_dataset(const ScenarioConfig& config, int replication);

double true_theta(OutcomeModel model) noexcept;
/// Intercept and x2.
ModelIndicator true_response_support(Eigen::Index d);
/// Response support plus the covariates linearly correlated with y
/// (x3 for M1, x4 for M2).
ModelIndicator true_working_support(OutcomeModel model, Eigen::Index d);

/// Runs one estimator on one dataset. Estimation failures come back as
/// converged = false with a diagnostic flag.
EstimateReport run_method(const Dataset& data, Method method, const ScenarioConfig& config,
                          std::uint64_t method_seed);

struct ReplicationRecord {
  int replication = 0;
  EstimateReport report;
};

struct MetricsRow {
  std::string scenario;
  OutcomeModel model = OutcomeModel::kM1;
  double rho = 0.0;
  int p = 0;
  int n = 0;
  Method method = Method::kPs;
  std::optional<double> rbias;
  std::optional<double> se;           ///< absent with fewer than 2 converged fits
  std::optional<double> mean_se_hat;
  std::optional<double> cp;
  std::optional<double> tpr;          ///< absent for methods without selection
  std::optional<double> tnr;
  int n_converged = 0;
  int n_failed = 0;
  std::optional<double> mc_se_of_cp;
};

/// Aggregates converged reports: relative bias, Monte Carlo SD, mean
/// estimated SE, coverage, and selection rates against `z_true` (intercept
/// excluded) when given.
MetricsRow compute_metrics(std::span<const EstimateReport> results, double theta0,
                           const std::optional<ModelIndicator>& z_true);

struct MonteCarloResult {
  std::vector<MetricsRow> metrics;  ///< one per method, in config order
  /// Per method (config order), per replication (ascending).
  std::vector<std::vector<ReplicationRecord>> records;
  int failed_fits = 0;
};

using ProgressFn = std::function<void(int done, int total)>;

/// Runs every method on B replications over `config.workers` threads. The
/// output does not depend on the worker count.
MonteCarloResult run_monte_carlo(const ScenarioConfig& config, const ProgressFn& progress = {});

}  // namespace sparseps
