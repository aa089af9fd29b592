#pragma once

#include "sparseps/model.hpp"
#include "sparseps/report.hpp"

#include <cstddef>

namespace sparseps {

struct NewtonOptions {
  int max_iterations = 100;
  double tolerance = 1e-8;      ///< max-norm of the restricted score
  int max_halvings = 30;
  double max_condition = 1e12;  ///< information condition number treated as singular
};

struct MleFit {
  PropensityParams phi;  ///< full length d, zeros outside the support
  int iterations = 0;
  std::size_t clamp_events = 0;
};

/// Maximum likelihood fit of the logistic response model on the columns
/// selected by `support`, by damped Newton-Raphson with step halving.
///
/// Throws NoConvergence after `max_iterations`, SingularInformation when the
/// restricted information matrix is numerically singular.
MleFit fit_propensity_mle(const Dataset& data, const ModelIndicator& support,
                          const NewtonOptions& opts = {});

/// Inverse-propensity-weighted mean sum(delta y / pi) / sum(delta / pi).
/// Throws NoRespondents when no unit responded.
double ps_point_estimate(const Dataset& data, const PropensityParams& phi);

/// Linearization (sandwich) variance of the PS estimator with the response
/// model fit on `support`:
///   D^{-2} [n^{-1} sum u_i^2 + C A^{-1} C^T] / n.
/// A negative plug-in is reported as 0 and sets *clamped_to_zero.
double ps_variance_taylor(const Dataset& data, const PropensityParams& phi,
                          const ModelIndicator& support, double theta,
                          bool* clamped_to_zero = nullptr);
/// Full-model variant.
double ps_variance_taylor(const Dataset& data, const PropensityParams& phi, double theta);

/// Two-sided standard-normal quantile for a central interval of mass `level`.
double normal_critical_value(double level);

/// Fits the MLE on `support`, then reports the PS estimate with a Wald
/// interval. Estimation failures are reported as converged = false.
EstimateReport estimate_ps(const Dataset& data, const ModelIndicator& support, Method tag,
                           double level = 0.95);

}  // namespace sparseps
