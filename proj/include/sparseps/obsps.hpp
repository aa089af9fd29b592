#pragma once

#include "sparseps/bsps.hpp"
#include "sparseps/model.hpp"
#include "sparseps/rng.hpp"

#include <cstdint>

namespace sparseps {

/// I-step: u_j = 1 wherever z_j = 1, otherwise a Bernoulli draw with the
/// working-model spike-and-slab inclusion probability of beta_j.
ModelIndicator draw_u_step(const WorkingModelState& state, const ModelIndicator& z,
                           const PriorConfig& priors, Rng& rng);

/// Respondent moments of the working linear model.
struct RespondentMoments {
  Matrix gram;       ///< sum delta_i x_i x_i^T
  Vector xy;         ///< sum delta_i x_i y_i
  double yy = 0.0;   ///< sum delta_i y_i^2
  double count = 0;  ///< number of respondents r
};

RespondentMoments respondent_moments(const Dataset& data);

/// P-step: beta ~ N(mu*, V*) given sigma2_prev, then sigma2_e ~ InvGamma(c1 + r/2,
/// c2 + RSS/2) given the new beta.
WorkingModelState draw_beta_sigma(const Dataset& data, const ModelIndicator& u, double sigma2_prev,
                                  const PriorConfig& priors, Rng& rng);
WorkingModelState draw_beta_sigma(const RespondentMoments& moments, const ModelIndicator& u,
                                  double sigma2_prev, const PriorConfig& priors, Rng& rng);

enum class OptBlocks {
  kFull,             ///< IPW, score calibration and weight calibration blocks
  kJustIdentified,   ///< IPW and score blocks only
};

/// Stacked estimating equations in zeta = (phi_{u*}, theta) for a fixed
/// augmented model u*:
///   sum delta_i/pi_i (y_i - theta)
///   sum (delta_i - pi_i) x_{i,u*}
///   sum (delta_i/pi_i - 1) x_{i,u*}
class OptSystem {
 public:
  OptSystem(const Dataset& data, ModelIndicator u_star, OptBlocks blocks = OptBlocks::kFull);

  const ModelIndicator& u_star() const noexcept { return u_star_; }
  Eigen::Index q() const noexcept { return x_.cols(); }
  Eigen::Index equation_count() const noexcept;
  Eigen::Index parameter_count() const noexcept { return q() + 1; }
  Eigen::Index n() const noexcept { return x_.rows(); }
  OptBlocks blocks() const noexcept { return blocks_; }

  /// Per-unit contributions g_i(zeta), one row per unit.
  Matrix unit_residuals(const Vector& zeta) const;
  /// Sum of the per-unit contributions.
  Vector equations(const Vector& zeta) const;
  /// Derivative of equations() with respect to zeta.
  Matrix jacobian(const Vector& zeta) const;

  /// Covariates restricted to u*.
  const Matrix& x() const noexcept { return x_; }

 private:
  ModelIndicator u_star_;
  OptBlocks blocks_;
  Matrix x_;
  Vector y_obs_;
  Vector delta_;
};

OptSystem build_u_opt(const Dataset& data, const ModelIndicator& u_star,
                      OptBlocks blocks = OptBlocks::kFull);

/// (MLE of phi on u*, PS estimate of theta): the starting point for gmm_solve.
Vector gmm_initial_value(const Dataset& data, const ModelIndicator& u_star);

struct GmmOptions {
  int max_iterations = 200;
  double gradient_tolerance = 1e-6;
  double max_condition = 1e12;
};

struct GmmFit {
  Vector zeta;             ///< minimizer of Q(zeta) = Ubar^T W Ubar, Ubar = U / n
  Matrix weight;           ///< W, inverse of the preliminary residual covariance
  Matrix sigma_opt;        ///< n^{-1} sum g_i g_i^T at zeta
  Matrix gamma;            ///< n^{-1} Jacobian at zeta
  Matrix posterior_cov;    ///< n^{-1} (Gamma^T Sigma^{-1} Gamma)^{-1}
  double objective = 0.0;  ///< Q(zeta)
  int iterations = 0;
  int ridge_events = 0;    ///< covariance matrices regularized by 1e-8 * trace
};

/// GMM objective with the given weight matrix.
double gmm_objective(const OptSystem& system, const Matrix& weight, const Vector& zeta);

/// Two-step GMM: the weight is the inverse residual covariance at `init`,
/// then Gauss-Newton with step halving minimizes Q. Throws NoConvergence
/// after opts.max_iterations.
GmmFit gmm_solve(const OptSystem& system, const Vector& init, const GmmOptions& opts = {});

/// One draw from N(zeta_hat, posterior_cov).
Vector draw_zeta(const GmmFit& fit, Rng& rng);
/// Solves the system from the baseline starting value, then draws.
Vector draw_zeta(const OptSystem& system, const Dataset& data, Rng& rng);

struct ObspsOptions {
  ChainOptions chain;
  int working_sweeps = 20;  ///< I/P sub-iterations per outer iteration
};

PosteriorSample run_obsps_chain(const Dataset& data, const PriorConfig& priors,
                                const ObspsOptions& opts, std::uint64_t seed);

}  // namespace sparseps
