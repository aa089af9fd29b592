#include "sparseps/bsps.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/lasso.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace sparseps {

namespace {

constexpr std::uint64_t kBspsStream = 0xb5b5;
constexpr std::uint64_t kScreenStream = 0x5c4ee7;

double log_normal_density0(double x, double var) noexcept {
  return -0.5 * std::log(2.0 * std::numbers::pi * var) - 0.5 * x * x / var;
}

double penalized_objective(const Dataset& data, const Vector& phi, const Vector& inv_var) {
  return log_likelihood(data, phi) - 0.5 * phi.cwiseAbs2().dot(inv_var);
}

}  // namespace

double inclusion_probability(double coef, double w, double spike_var, double slab_var) noexcept {
  const double log_slab = std::log(w) + log_normal_density0(coef, slab_var);
  const double log_spike = std::log1p(-w) + log_normal_density0(coef, spike_var);
  // slab / (slab + spike) = 1 / (1 + exp(log_spike - log_slab))
  const double diff = log_spike - log_slab;
  if (diff > 0.0) {
    const double e = std::exp(-diff);
    return e / (1.0 + e);
  }
  return 1.0 / (1.0 + std::exp(diff));
}

ModelIndicator draw_model_step(const PropensityParams& phi, const PriorConfig& priors, Rng& rng) {
  ModelIndicator z = ModelIndicator::full(phi.size());
  for (Eigen::Index j = 1; j < phi.size(); ++j) {
    const double prob = inclusion_probability(phi[j], priors.w[j], priors.nu0, priors.nu1);
    z.set(j, bernoulli(rng, prob));
  }
  return z;
}

Vector prior_variances(const ModelIndicator& z, double spike_var, double slab_var) {
  Vector v(z.size());
  for (Eigen::Index j = 0; j < z.size(); ++j) v[j] = z[j] ? slab_var : spike_var;
  return v;
}

LaplaceApprox laplace_approx(const Dataset& data, const ModelIndicator& z,
                             const PriorConfig& priors, const PropensityParams* warm_start,
                             int max_iterations) {
  const Matrix& x = data.x();
  const Vector inv_var = prior_variances(z, priors.nu0, priors.nu1).cwiseInverse();
  Vector phi = warm_start != nullptr && warm_start->size() == data.d()
                   ? *warm_start
                   : Vector::Zero(data.d());
  double obj = penalized_objective(data, phi, inv_var);

  for (int it = 0; it <= max_iterations; ++it) {
    const Vector pi = propensities(x, phi);
    const Vector grad = x.transpose() * (data.delta() - pi) - inv_var.cwiseProduct(phi);
    Matrix precision = weighted_gram(x, pi.array() * (1.0 - pi.array()));
    precision.diagonal() += inv_var;
    if (grad.lpNorm<Eigen::Infinity>() < 1e-8) {
      return LaplaceApprox{std::move(phi), std::move(precision), it};
    }
    if (it == max_iterations) break;
    const Vector step = precision.llt().solve(grad);
    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= 30; ++h, t *= 0.5) {
      const Vector candidate = phi + t * step;
      const double obj_c = penalized_objective(data, candidate, inv_var);
      if (obj_c >= obj - 1e-12 * (1.0 + std::abs(obj))) {
        phi = candidate;
        obj = obj_c;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NoConvergence("penalized mode: step halving failed");
  }
  throw NoConvergence("penalized mode did not converge in " + std::to_string(max_iterations) +
                      " iterations");
}

PropensityParams penalized_mode(const Dataset& data, const ModelIndicator& z,
                                const PriorConfig& priors) {
  return laplace_approx(data, z, priors).mode;
}

Matrix laplace_covariance(const Dataset& data, const PropensityParams& phi_mode,
                          const ModelIndicator& z, const PriorConfig& priors) {
  const Vector pi = propensities(data.x(), phi_mode);
  Matrix precision = weighted_gram(data.x(), pi.array() * (1.0 - pi.array()));
  precision.diagonal() += prior_variances(z, priors.nu0, priors.nu1).cwiseInverse();
  const Eigen::LLT<Matrix> llt(precision);
  if (llt.info() != Eigen::Success) {
    throw std::logic_error("laplace_covariance: precision matrix is not positive definite");
  }
  Matrix cov = llt.solve(Matrix::Identity(data.d(), data.d()));
  return 0.5 * (cov + cov.transpose());
}

PropensityParams draw_from_laplace(const LaplaceApprox& approx, Rng& rng) {
  const Eigen::LLT<Matrix> llt(approx.precision);
  if (llt.info() != Eigen::Success) {
    throw std::logic_error("draw_from_laplace: precision matrix is not positive definite");
  }
  Vector eps(approx.mode.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = standard_normal(rng);
  // L^T x = eps  =>  cov(x) = (L L^T)^{-1}
  return approx.mode + llt.matrixU().solve(eps);
}

PropensityParams draw_phi_step(const Dataset& data, const ModelIndicator& z,
                               const PriorConfig& priors, Rng& rng,
                               const PropensityParams* warm_start) {
  return draw_from_laplace(laplace_approx(data, z, priors, warm_start), rng);
}

ThetaConditional theta_conditional(const Dataset& data, const PropensityParams& phi,
                                   const ModelIndicator& z) {
  if (data.respondents() < 1.0) throw NoRespondents("no respondents in data");
  const Vector pi = propensities(data.x(), phi);
  const Vector w = data.delta().array() / pi.array();

  ThetaConditional c;
  c.n = static_cast<double>(data.n());
  c.weight_sum = w.sum();
  c.weighted_y = w.dot(data.observed_y());
  c.theta_tilde = c.weighted_y / c.weight_sum;

  const auto active = z.active();
  const auto q = static_cast<Eigen::Index>(active.size());
  const Vector resid = data.delta() - pi;
  // Rows are per-unit stacked residuals [s_i; u_i].
  Matrix g(data.n(), q + 1);
  for (Eigen::Index k = 0; k < q; ++k) {
    g.col(k) = resid.cwiseProduct(data.x().col(active[static_cast<std::size_t>(k)]));
  }
  g.col(q) = w.cwiseProduct((data.observed_y().array() - c.theta_tilde).matrix());

  const Matrix sigma = (g.transpose() * g) / c.n;
  const Matrix s11 = sigma.topLeftCorner(q, q);
  const Vector s12 = sigma.topRightCorner(q, 1);
  const double s22 = sigma(q, q);

  Eigen::SelfAdjointEigenSolver<Matrix> eig(s11, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0) || hi / lo > 1e12) {
    throw SingularInformation("score covariance is singular on the active columns");
  }
  const auto ldlt = s11.ldlt();
  const Vector score_active = g.leftCols(q).colwise().sum().transpose();
  c.mean = s12.dot(ldlt.solve(score_active / std::sqrt(c.n)));
  c.variance = std::max(0.0, s22 - s12.dot(ldlt.solve(s12)));
  return c;
}

double solve_theta(const ThetaConditional& cond, double v) noexcept {
  return (cond.weighted_y - std::sqrt(cond.n) * v) / cond.weight_sum;
}

double normalized_ps_equation(const Dataset& data, const PropensityParams& phi, double theta) {
  const Vector pi = propensities(data.x(), phi);
  const Vector w = data.delta().array() / pi.array();
  return (w.dot(data.observed_y()) - theta * w.sum()) / std::sqrt(static_cast<double>(data.n()));
}

double draw_theta_step(const Dataset& data, const PropensityParams& phi, const ModelIndicator& z,
                       Rng& rng) {
  const ThetaConditional c = theta_conditional(data, phi, z);
  const double v = c.mean + std::sqrt(c.variance) * standard_normal(rng);
  return solve_theta(c, v);
}

ModelIndicator initial_model(const Dataset& data, std::uint64_t seed) {
  const ModelIndicator full = ModelIndicator::full(data.d());
  try {
    fit_propensity_mle(data, full);
    return full;
  } catch (const NoConvergence&) {
  } catch (const SingularInformation&) {
  }
  try {
    const auto grid = lasso_lambda_grid(data);
    return fit_lasso_logistic(data, grid, 5, derive_seed(seed, kScreenStream)).support;
  } catch (const Error&) {
    return full;
  }
}

PosteriorSample run_bsps_chain(const Dataset& data, const PriorConfig& priors,
                               const ChainOptions& opts, std::uint64_t seed) {
  if (opts.burn_in < 0 || opts.kept < 1) throw ConfigError("chain needs burn_in >= 0 and kept >= 1");
  priors.validate(data.d());
  if (data.respondents() < 1.0) throw NoRespondents("no respondents in data");

  Rng rng(derive_seed(seed, kBspsStream));
  const int total = opts.burn_in + opts.kept;
  const int allowed = static_cast<int>(std::floor(opts.max_failure_fraction * total));

  ChainState state;
  state.z = initial_model(data, seed);
  LaplaceApprox approx = laplace_approx(data, state.z, priors);
  state.phi = approx.mode;
  state.theta = ps_point_estimate(data, state.phi);
  PropensityParams last_mode = approx.mode;

  PosteriorSample sample;
  sample.burn_in = opts.burn_in;
  sample.kept = opts.kept;
  sample.seed = seed;
  sample.draws.reserve(static_cast<std::size_t>(opts.kept));

  for (int t = 0; t < total; ++t) {
    try {
      ModelIndicator z = draw_model_step(state.phi, priors, rng);
      approx = laplace_approx(data, z, priors, &last_mode);
      PropensityParams phi = draw_from_laplace(approx, rng);
      const double theta = draw_theta_step(data, phi, z, rng);
      state = ChainState{std::move(z), std::move(phi), theta};
      last_mode = approx.mode;
    } catch (const NoConvergence&) {
      if (++sample.failed_iterations > allowed) {
        throw ChainFailure("more than " + std::to_string(allowed) + " failed iterations");
      }
    } catch (const SingularInformation&) {
      if (++sample.failed_iterations > allowed) {
        throw ChainFailure("more than " + std::to_string(allowed) + " failed iterations");
      }
    }
    if (t >= opts.burn_in) sample.draws.push_back(state);
  }
  return sample;
}

double sample_quantile(const std::vector<double>& sorted, double q) {
  if (sorted.empty()) throw std::invalid_argument("quantile of an empty sample");
  const double h = (static_cast<double>(sorted.size()) - 1.0) * q;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, sorted.size() - 1);
  return sorted[lo] + (h - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

EstimateReport summarize_posterior(const PosteriorSample& sample, double level, Method method) {
  const std::size_t m = sample.draws.size();
  if (m < 2) throw std::invalid_argument("posterior summary needs at least 2 draws");

  std::vector<double> theta(m);
  for (std::size_t k = 0; k < m; ++k) theta[k] = sample.draws[k].theta;
  const double mean = std::accumulate(theta.begin(), theta.end(), 0.0) / static_cast<double>(m);
  double ss = 0.0;
  for (double t : theta) ss += (t - mean) * (t - mean);

  EstimateReport r;
  r.method = method;
  r.theta_hat = mean;
  r.se_hat = std::sqrt(ss / static_cast<double>(m - 1));
  std::sort(theta.begin(), theta.end());
  r.ci_low = sample_quantile(theta, 0.5 * (1.0 - level));
  r.ci_high = sample_quantile(theta, 0.5 * (1.0 + level));
  r.converged = true;

  const bool use_working = sample.working.size() == m;
  const Eigen::Index d = use_working ? sample.working.front().u.size() : sample.draws.front().z.size();
  Vector freq = Vector::Zero(d);
  double model_size = 0.0;
  for (std::size_t k = 0; k < m; ++k) {
    const ModelIndicator& ind = use_working ? sample.working[k].u : sample.draws[k].z;
    for (Eigen::Index j = 0; j < d; ++j) freq[j] += ind[j] ? 1.0 : 0.0;
    model_size += static_cast<double>(ind.count());
  }
  freq /= static_cast<double>(m);
  ModelIndicator support = ModelIndicator::intercept_only(d);
  for (Eigen::Index j = 1; j < d; ++j) support.set(j, freq[j] > 0.5);
  r.selected_support = std::move(support);

  r.diagnostics["kept"] = static_cast<double>(m);
  r.diagnostics["burn_in"] = sample.burn_in;
  r.diagnostics["failed_iterations"] = sample.failed_iterations;
  r.diagnostics["mean_model_size"] = model_size / static_cast<double>(m);
  return r;
}

double model_frequency(const PosteriorSample& sample, const ModelIndicator& truth) {
  if (sample.draws.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& s : sample.draws) hits += s.z == truth ? 1 : 0;
  return static_cast<double>(hits) / static_cast<double>(sample.draws.size());
}

}  // namespace sparseps
