#pragma once

#include "sparseps/model.hpp"
#include "sparseps/report.hpp"

#include <cstdint>
#include <span>
#include <vector>

namespace sparseps {

struct LassoOptions {
  int max_sweeps = 10000;    ///< coordinate sweeps allowed per penalty value
  double tolerance = 1e-8;   ///< max coefficient change for convergence
};

/// Smallest penalty at which every non-intercept coefficient is zero:
/// max_j |S_j| at the intercept-only MLE.
double lasso_lambda_max(const Dataset& data);

/// `count` log-spaced penalties from lasso_lambda_max down to ratio * max.
std::vector<double> lasso_lambda_grid(const Dataset& data, int count = 50, double ratio = 1e-3);

/// Minimizer of -loglik(phi) + lambda * sum_{j>=1} |phi_j| by proximal Newton
/// steps with coordinate descent on the quadratic model. The intercept is
/// unpenalized. Throws NoConvergence after opts.max_sweeps sweeps.
Vector lasso_logistic(const Dataset& data, double lambda, const Vector& warm_start,
                      const LassoOptions& opts = {});

/// Solutions along a strictly decreasing penalty grid, warm-started.
std::vector<Vector> lasso_path(const Dataset& data, std::span<const double> lambdas,
                               const LassoOptions& opts = {});

/// Binomial deviance -2 loglik of `phi` on `data`.
double deviance(const Dataset& data, const PropensityParams& phi);

/// Fold index per row: respondents and nonrespondents are each shuffled with
/// the seed and dealt round-robin, so every fold gets a share of both.
std::vector<int> stratified_folds(const Vector& delta, int folds, std::uint64_t seed);

struct LassoFit {
  PropensityParams phi;
  ModelIndicator support;
  double lambda = 0.0;
  std::vector<double> lambdas;
  std::vector<double> cv_deviance;  ///< mean held-out deviance per row, per lambda
};

/// Cross-validated lasso fit. `lambda_grid` must be nonempty and strictly
/// decreasing; `folds` >= 2.
LassoFit fit_lasso_logistic(const Dataset& data, std::span<const double> lambda_grid, int folds,
                            std::uint64_t seed, const LassoOptions& opts = {});

/// Lasso selection followed by the PS estimator refit on the selected support.
EstimateReport estimate_lasso(const Dataset& data, int folds, std::uint64_t seed,
                              int grid_size = 50, double level = 0.95);

}  // namespace sparseps
