#include "sparseps/obsps.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/errors.hpp"

#include <cmath>
#include <map>
#include <optional>
#include <random>
#include <string>

namespace sparseps {

namespace {

constexpr std::uint64_t kObspsStream = 0x0b5b50b5;

// Adds 1e-8 * trace to the diagonal when `m` is numerically singular.
bool regularize(Matrix& m, double max_condition) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(m, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (lo > 0.0 && hi / lo <= max_condition) return false;
  const double ridge = 1e-8 * std::max(m.trace(), 1e-300);
  m.diagonal().array() += ridge;
  return true;
}

Matrix spd_inverse(const Matrix& m) {
  return m.ldlt().solve(Matrix::Identity(m.rows(), m.cols()));
}

double respondent_variance(const Dataset& data) {
  const double r = data.respondents();
  if (r < 2.0) return 1.0;
  const double mean = data.observed_y().sum() / r;
  double ss = 0.0;
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    if (data.delta()[i] != 0.0) ss += (data.y()[i] - mean) * (data.y()[i] - mean);
  }
  const double v = ss / (r - 1.0);
  return v > 0.0 ? v : 1.0;
}

}  // namespace

ModelIndicator draw_u_step(const WorkingModelState& state, const ModelIndicator& z,
                           const PriorConfig& priors, Rng& rng) {
  ModelIndicator u = ModelIndicator::full(z.size());
  for (Eigen::Index j = 1; j < z.size(); ++j) {
    if (z[j]) continue;
    const double prob =
        inclusion_probability(state.beta[j], priors.xi[j], priors.gamma0, priors.gamma1);
    u.set(j, bernoulli(rng, prob));
  }
  return u;
}

RespondentMoments respondent_moments(const Dataset& data) {
  RespondentMoments m;
  m.gram = weighted_gram(data.x(), data.delta());
  m.xy = data.x().transpose() * data.observed_y();
  m.yy = data.observed_y().squaredNorm();
  m.count = data.respondents();
  return m;
}

WorkingModelState draw_beta_sigma(const RespondentMoments& moments, const ModelIndicator& u,
                                  double sigma2_prev, const PriorConfig& priors, Rng& rng) {
  if (moments.count < 1.0) throw NoRespondents("working model needs at least one respondent");
  const Eigen::Index d = u.size();
  Matrix precision = moments.gram / sigma2_prev;
  precision.diagonal() += prior_variances(u, priors.gamma0, priors.gamma1).cwiseInverse();
  const Eigen::LLT<Matrix> llt(precision);
  const Vector mu = llt.solve(moments.xy / sigma2_prev);
  Vector eps(d);
  for (Eigen::Index j = 0; j < d; ++j) eps[j] = standard_normal(rng);

  WorkingModelState s;
  s.u = u;
  s.beta = mu + llt.matrixU().solve(eps);
  const double rss =
      std::max(0.0, moments.yy - 2.0 * s.beta.dot(moments.xy) + s.beta.dot(moments.gram * s.beta));
  const double shape = priors.c1 + 0.5 * moments.count;
  const double scale = priors.c2 + 0.5 * rss;
  std::gamma_distribution<double> gamma(shape, 1.0 / scale);
  s.sigma2_e = 1.0 / gamma(rng);
  return s;
}

WorkingModelState draw_beta_sigma(const Dataset& data, const ModelIndicator& u, double sigma2_prev,
                                  const PriorConfig& priors, Rng& rng) {
  return draw_beta_sigma(respondent_moments(data), u, sigma2_prev, priors, rng);
}

// ---------------------------------------------------------------------------

OptSystem::OptSystem(const Dataset& data, ModelIndicator u_star, OptBlocks blocks)
    : u_star_(std::move(u_star)),
      blocks_(blocks),
      x_(data.x()(Eigen::all, u_star_.active())),
      y_obs_(data.observed_y()),
      delta_(data.delta()) {
  if (u_star_.size() != data.d()) throw DataError("u* size does not match the data");
}

Eigen::Index OptSystem::equation_count() const noexcept {
  return blocks_ == OptBlocks::kFull ? 1 + 2 * q() : 1 + q();
}

Matrix OptSystem::unit_residuals(const Vector& zeta) const {
  const Eigen::Index k = q();
  const Vector pi = propensities(x_, zeta.head(k));
  const Vector w = delta_.array() / pi.array();
  const double theta = zeta[k];
  Matrix g(n(), equation_count());
  g.col(0) = w.cwiseProduct((y_obs_.array() - theta).matrix());
  g.middleCols(1, k) = x_.array().colwise() * (delta_ - pi).array();
  if (blocks_ == OptBlocks::kFull) {
    g.middleCols(1 + k, k) = x_.array().colwise() * (w.array() - 1.0);
  }
  return g;
}

Vector OptSystem::equations(const Vector& zeta) const {
  return unit_residuals(zeta).colwise().sum().transpose();
}

Matrix OptSystem::jacobian(const Vector& zeta) const {
  const Eigen::Index k = q();
  const Vector pi = propensities(x_, zeta.head(k));
  const Vector w = delta_.array() / pi.array();
  const double theta = zeta[k];
  const Vector one_minus_pi = 1.0 - pi.array();

  Matrix jac = Matrix::Zero(equation_count(), k + 1);
  const Vector a = w.cwiseProduct(one_minus_pi).cwiseProduct((y_obs_.array() - theta).matrix());
  jac.block(0, 0, 1, k) = -(x_.transpose() * a).transpose();
  jac(0, k) = -w.sum();
  jac.block(1, 0, k, k) = -weighted_gram(x_, pi.cwiseProduct(one_minus_pi));
  if (blocks_ == OptBlocks::kFull) {
    jac.block(1 + k, 0, k, k) = -weighted_gram(x_, w.cwiseProduct(one_minus_pi));
  }
  return jac;
}

OptSystem build_u_opt(const Dataset& data, const ModelIndicator& u_star, OptBlocks blocks) {
  return OptSystem(data, u_star, blocks);
}

Vector gmm_initial_value(const Dataset& data, const ModelIndicator& u_star) {
  const MleFit fit = fit_propensity_mle(data, u_star);
  const auto active = u_star.active();
  Vector zeta(static_cast<Eigen::Index>(active.size()) + 1);
  zeta.head(zeta.size() - 1) = fit.phi(active);
  zeta[zeta.size() - 1] = ps_point_estimate(data, fit.phi);
  return zeta;
}

double gmm_objective(const OptSystem& system, const Matrix& weight, const Vector& zeta) {
  const Vector ubar = system.equations(zeta) / static_cast<double>(system.n());
  return ubar.dot(weight * ubar);
}

namespace {

Vector gmm_gradient(const OptSystem& system, const Matrix& weight, const Vector& zeta) {
  const double n = static_cast<double>(system.n());
  const Vector ubar = system.equations(zeta) / n;
  return 2.0 * (system.jacobian(zeta) / n).transpose() * (weight * ubar);
}

Matrix gmm_hessian(const OptSystem& system, const Matrix& weight, const Vector& zeta) {
  const Eigen::Index k = zeta.size();
  Matrix h(k, k);
  for (Eigen::Index j = 0; j < k; ++j) {
    const double step = 1e-5 * std::max(1.0, std::abs(zeta[j]));
    Vector up = zeta, down = zeta;
    up[j] += step;
    down[j] -= step;
    h.col(j) = (gmm_gradient(system, weight, up) - gmm_gradient(system, weight, down)) / (2 * step);
  }
  return 0.5 * (h + h.transpose());
}

}  // namespace

GmmFit gmm_solve(const OptSystem& system, const Vector& init, const GmmOptions& opts) {
  const double n = static_cast<double>(system.n());
  GmmFit fit;

  {
    const Matrix g = system.unit_residuals(init);
    Matrix sigma0 = (g.transpose() * g) / n;
    if (regularize(sigma0, opts.max_condition)) ++fit.ridge_events;
    fit.weight = spd_inverse(sigma0);
  }

  Vector zeta = init;
  double q = gmm_objective(system, fit.weight, zeta);
  bool converged = false;
  for (int it = 0; it <= opts.max_iterations; ++it) {
    const Vector ubar = system.equations(zeta) / n;
    const Matrix gamma = system.jacobian(zeta) / n;
    const Vector wu = fit.weight * ubar;
    const Vector grad = 2.0 * gamma.transpose() * wu;
    fit.iterations = it;
    if (grad.lpNorm<Eigen::Infinity>() < opts.gradient_tolerance) {
      converged = true;
      break;
    }
    if (it == opts.max_iterations) break;
    // Newton on Q with the Hessian from central differences of the analytic
    // gradient; Gauss-Newton alone is only linearly convergent when the
    // system is over-identified. Fall back to Gauss-Newton off the convex region.
    Vector step;
    const Matrix h_exact = gmm_hessian(system, fit.weight, zeta);
    const Eigen::LLT<Matrix> h_llt(h_exact);
    if (h_llt.info() == Eigen::Success) {
      step = -h_llt.solve(grad);
    } else {
      const Matrix h = gamma.transpose() * fit.weight * gamma;
      step = -h.ldlt().solve(gamma.transpose() * wu);
    }
    double t = 1.0;
    bool accepted = false;
    for (int k = 0; k <= 30; ++k, t *= 0.5) {
      const Vector candidate = zeta + t * step;
      const double q_c = gmm_objective(system, fit.weight, candidate);
      if (std::isfinite(q_c) && q_c <= q) {
        zeta = candidate;
        q = q_c;
        accepted = true;
        break;
      }
    }
    if (!accepted) throw NoConvergence("GMM line search failed");
  }
  if (!converged) {
    throw NoConvergence("GMM did not converge in " + std::to_string(opts.max_iterations) +
                        " iterations");
  }

  fit.zeta = zeta;
  fit.objective = q;
  const Matrix g = system.unit_residuals(zeta);
  fit.sigma_opt = (g.transpose() * g) / n;
  if (regularize(fit.sigma_opt, opts.max_condition)) ++fit.ridge_events;
  fit.gamma = system.jacobian(zeta) / n;
  const Matrix info = fit.gamma.transpose() * fit.sigma_opt.ldlt().solve(fit.gamma);
  const Eigen::LLT<Matrix> llt(info);
  if (llt.info() != Eigen::Success) {
    throw SingularInformation("GMM information matrix is not positive definite");
  }
  fit.posterior_cov = llt.solve(Matrix::Identity(info.rows(), info.cols())) / n;
  fit.posterior_cov = 0.5 * (fit.posterior_cov + fit.posterior_cov.transpose());
  return fit;
}

Vector draw_zeta(const GmmFit& fit, Rng& rng) {
  const Eigen::LLT<Matrix> llt(fit.posterior_cov);
  if (llt.info() != Eigen::Success) {
    throw SingularInformation("GMM posterior covariance is not positive definite");
  }
  Vector eps(fit.zeta.size());
  for (Eigen::Index j = 0; j < eps.size(); ++j) eps[j] = standard_normal(rng);
  return fit.zeta + llt.matrixL() * eps;
}

Vector draw_zeta(const OptSystem& system, const Dataset& data, Rng& rng) {
  return draw_zeta(gmm_solve(system, gmm_initial_value(data, system.u_star())), rng);
}

// ---------------------------------------------------------------------------

PosteriorSample run_obsps_chain(const Dataset& data, const PriorConfig& priors,
                                const ObspsOptions& opts, std::uint64_t seed) {
  const ChainOptions& chain = opts.chain;
  if (chain.burn_in < 0 || chain.kept < 1) {
    throw ConfigError("chain needs burn_in >= 0 and kept >= 1");
  }
  if (opts.working_sweeps < 1) throw ConfigError("working_sweeps must be >= 1");
  priors.validate(data.d());
  if (data.respondents() < 1.0) throw NoRespondents("no respondents in data");

  Rng rng(derive_seed(seed, kObspsStream));
  const int total = chain.burn_in + chain.kept;
  const int allowed = static_cast<int>(std::floor(chain.max_failure_fraction * total));
  const RespondentMoments moments = respondent_moments(data);

  // Response-model (S1) chain state.
  ModelIndicator z = initial_model(data, seed);
  LaplaceApprox approx = laplace_approx(data, z, priors);
  PropensityParams phi = approx.mode;
  PropensityParams last_mode = approx.mode;

  std::optional<WorkingModelState> working;
  // Posterior of zeta depends only on u*; solve once per distinct u*.
  std::map<ModelIndicator, std::optional<GmmFit>> gmm_cache;

  ChainState state{z, phi, ps_point_estimate(data, phi)};
  PosteriorSample sample;
  sample.burn_in = chain.burn_in;
  sample.kept = chain.kept;
  sample.seed = seed;
  sample.draws.reserve(static_cast<std::size_t>(chain.kept));
  sample.working.reserve(static_cast<std::size_t>(chain.kept));

  auto fail = [&]() {
    if (++sample.failed_iterations > allowed) {
      throw ChainFailure("more than " + std::to_string(allowed) + " failed iterations");
    }
  };

  for (int t = 0; t < total; ++t) {
    try {
      // S1: one model step and phi step of the sparse sampler.
      ModelIndicator z_new = draw_model_step(phi, priors, rng);
      approx = laplace_approx(data, z_new, priors, &last_mode);
      phi = draw_from_laplace(approx, rng);
      z = std::move(z_new);
      last_mode = approx.mode;

      // S2: working-model data augmentation given z*.
      if (!working) {
        working = draw_beta_sigma(moments, z, respondent_variance(data), priors, rng);
      }
      for (int s = 0; s < opts.working_sweeps; ++s) {
        const ModelIndicator u = draw_u_step(*working, z, priors, rng);
        *working = draw_beta_sigma(moments, u, working->sigma2_e, priors, rng);
      }

      // S3: draw zeta* = (phi_{u*}, theta) from the normal approximation.
      const ModelIndicator& u_star = working->u;
      auto it = gmm_cache.find(u_star);
      if (it == gmm_cache.end()) {
        std::optional<GmmFit> solved;
        try {
          const OptSystem system = build_u_opt(data, u_star);
          solved = gmm_solve(system, gmm_initial_value(data, u_star));
        } catch (const NoConvergence&) {
        } catch (const SingularInformation&) {
        }
        it = gmm_cache.emplace(u_star, std::move(solved)).first;
      }
      if (!it->second) {
        fail();
      } else {
        const Vector zeta = draw_zeta(*it->second, rng);
        const auto active = u_star.active();
        PropensityParams phi_u = PropensityParams::Zero(data.d());
        for (std::size_t k = 0; k < active.size(); ++k) {
          phi_u[active[k]] = zeta[static_cast<Eigen::Index>(k)];
        }
        state = ChainState{z, std::move(phi_u), zeta[zeta.size() - 1]};
      }
    } catch (const NoConvergence&) {
      fail();
    } catch (const SingularInformation&) {
      fail();
    }
    if (t >= chain.burn_in) {
      sample.draws.push_back(state);
      sample.working.push_back(working.value_or(WorkingModelState{z, Vector::Zero(data.d()), 1.0}));
    }
  }
  return sample;
}

}  // namespace sparseps
