#pragma once

#include "sparseps/model.hpp"
#include "sparseps/report.hpp"
#include "sparseps/rng.hpp"

#include <cstdint>
#include <optional>
#include <vector>

namespace sparseps {

/// One Gibbs iterate.
struct ChainState {
  ModelIndicator z;
  PropensityParams phi;
  double theta = 0.0;
};

/// Outcome working-model state carried by the optimal sampler.
struct WorkingModelState {
  ModelIndicator u;
  Vector beta;
  double sigma2_e = 1.0;
};

/// Post burn-in draws of a chain. `working` is filled only by the optimal
/// sampler, aligned with `draws`.
struct PosteriorSample {
  std::vector<ChainState> draws;
  std::vector<WorkingModelState> working;
  int burn_in = 0;
  int kept = 0;
  std::uint64_t seed = 0;
  int failed_iterations = 0;
};

struct ChainOptions {
  int burn_in = 2000;
  int kept = 2000;
  /// Maximum fraction of iterations allowed to fail before ChainFailure.
  double max_failure_fraction = 0.01;
};

/// Posterior inclusion probability of a coefficient under a two-component
/// Gaussian mixture prior with prior weight `w` on the slab, computed in log
/// space.
double inclusion_probability(double coef, double w, double spike_var, double slab_var) noexcept;

/// Model step: independent Bernoulli draws of z given phi. z[0] stays 1.
ModelIndicator draw_model_step(const PropensityParams& phi, const PriorConfig& priors, Rng& rng);

/// Prior variances diag(V_z): nu1 where z = 1, nu0 elsewhere.
Vector prior_variances(const ModelIndicator& z, double spike_var, double slab_var);

/// Mode of loglik(phi) - phi^T V_z^{-1} phi / 2 and the posterior precision there.
struct LaplaceApprox {
  PropensityParams mode;
  Matrix precision;  ///< n I(mode) + V_z^{-1}
  int iterations = 0;
};

/// Damped Newton solve of S(phi) - V_z^{-1} phi = 0. Throws NoConvergence
/// after `max_iterations`.
LaplaceApprox laplace_approx(const Dataset& data, const ModelIndicator& z, const PriorConfig& priors,
                             const PropensityParams* warm_start = nullptr, int max_iterations = 200);

PropensityParams penalized_mode(const Dataset& data, const ModelIndicator& z,
                                const PriorConfig& priors);

/// (n I(phi_mode) + V_z^{-1})^{-1}.
Matrix laplace_covariance(const Dataset& data, const PropensityParams& phi_mode,
                          const ModelIndicator& z, const PriorConfig& priors);

/// One draw from N(mode, precision^{-1}).
PropensityParams draw_from_laplace(const LaplaceApprox& approx, Rng& rng);

PropensityParams draw_phi_step(const Dataset& data, const ModelIndicator& z,
                               const PriorConfig& priors, Rng& rng,
                               const PropensityParams* warm_start = nullptr);

/// Normal law of v = n^{-1/2} sum delta_i/pi_i (y_i - theta) given the
/// response-model score, restricted to the columns active in z.
struct ThetaConditional {
  double theta_tilde = 0.0;  ///< PS point estimate at phi
  double mean = 0.0;         ///< Sigma21 Sigma11^{-1} n^{-1/2} S_z(phi)
  double variance = 0.0;     ///< Sigma22 - Sigma21 Sigma11^{-1} Sigma12
  double weight_sum = 0.0;   ///< sum delta_i / pi_i
  double weighted_y = 0.0;   ///< sum delta_i y_i / pi_i
  double n = 0.0;
};

ThetaConditional theta_conditional(const Dataset& data, const PropensityParams& phi,
                                   const ModelIndicator& z);

/// Solves n^{-1/2} sum delta_i/pi_i (y_i - theta) = v for theta.
double solve_theta(const ThetaConditional& cond, double v) noexcept;

/// n^{-1/2} sum delta_i/pi_i (y_i - theta).
double normalized_ps_equation(const Dataset& data, const PropensityParams& phi, double theta);

double draw_theta_step(const Dataset& data, const PropensityParams& phi, const ModelIndicator& z,
                       Rng& rng);

/// Starting model of a chain: every column when the unpenalized full-model
/// fit exists. When it does not (separation, typically p close to n) a dense
/// start never thins out, because slab draws of nearly separating
/// coefficients stay far from the spike; the cross-validated lasso support is
/// used instead.
ModelIndicator initial_model(const Dataset& data, std::uint64_t seed);

PosteriorSample run_bsps_chain(const Dataset& data, const PriorConfig& priors,
                               const ChainOptions& opts, std::uint64_t seed);

/// Linear-interpolation (type 7) sample quantile; `sorted` must be ascending.
double sample_quantile(const std::vector<double>& sorted, double q);

/// Posterior mean, SD and equal-tailed interval of theta. The selected support
/// is the median probability model of z, or of u for optimal-sampler output.
EstimateReport summarize_posterior(const PosteriorSample& sample, double level = 0.95,
                                   Method method = Method::kBsps);

/// Fraction of draws whose z equals `truth`.
double model_frequency(const PosteriorSample& sample, const ModelIndicator& truth);

}  // namespace sparseps
