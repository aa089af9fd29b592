#include "sparseps/baseline.hpp"

#include "sparseps/errors.hpp"

#include <boost/math/distributions/normal.hpp>

#include <cmath>
#include <limits>
#include <string>

namespace sparseps {

namespace {

double condition_number(const Matrix& spd) {
  Eigen::SelfAdjointEigenSolver<Matrix> eig(spd, Eigen::EigenvaluesOnly);
  const double lo = eig.eigenvalues().minCoeff();
  const double hi = eig.eigenvalues().maxCoeff();
  if (!(lo > 0.0)) return std::numeric_limits<double>::infinity();
  return hi / lo;
}

Vector embed(const Vector& sub, const std::vector<Eigen::Index>& active, Eigen::Index d) {
  Vector full = Vector::Zero(d);
  for (std::size_t k = 0; k < active.size(); ++k) full[active[k]] = sub[static_cast<Eigen::Index>(k)];
  return full;
}

}  // namespace

MleFit fit_propensity_mle(const Dataset& data, const ModelIndicator& support,
                          const NewtonOptions& opts) {
  if (support.size() != data.d()) {
    throw DataError("support has " + std::to_string(support.size()) + " entries, data has " +
                    std::to_string(data.d()) + " columns");
  }
  const auto active = support.active();
  const Dataset sub = data.columns(active);
  const Matrix& x = sub.x();

  Vector phi = Vector::Zero(sub.d());
  double ll = log_likelihood(sub, phi);
  MleFit fit;
  for (int it = 0; it < opts.max_iterations; ++it) {
    std::size_t clamped = 0;
    const Vector pi = propensities(x, phi, &clamped);
    fit.clamp_events = clamped;
    const Vector grad = x.transpose() * (sub.delta() - pi);
    const Matrix info = weighted_gram(x, pi.array() * (1.0 - pi.array()));
    if (condition_number(info) > opts.max_condition) {
      throw SingularInformation("information matrix is singular (separation or collinearity) at "
                                "Newton iteration " + std::to_string(it));
    }
    if (grad.lpNorm<Eigen::Infinity>() < opts.tolerance) {
      // A vanishing score with probabilities pinned at the clamp is the
      // signature of separation: the likelihood has no finite maximizer.
      if (clamped > 0) {
        throw SingularInformation("fitted probabilities reached the clamp (" +
                                  std::to_string(clamped) + " units): data are separable");
      }
      fit.phi = embed(phi, active, data.d());
      fit.iterations = it;
      return fit;
    }
    const Vector step = info.ldlt().solve(grad);

    double t = 1.0;
    bool accepted = false;
    for (int h = 0; h <= opts.max_halvings; ++h, t *= 0.5) {
      const Vector candidate = phi + t * step;
      const double ll_c = log_likelihood(sub, candidate);
      if (std::isfinite(ll_c) && ll_c >= ll - 1e-12 * (1.0 + std::abs(ll))) {
        phi = candidate;
        ll = ll_c;
        accepted = true;
        break;
      }
    }
    if (!accepted) {
      throw NoConvergence("step halving failed to increase the log-likelihood");
    }
  }
  throw NoConvergence("Newton-Raphson did not converge in " +
                      std::to_string(opts.max_iterations) + " iterations");
}

double ps_point_estimate(const Dataset& data, const PropensityParams& phi) {
  if (data.respondents() < 1.0) throw NoRespondents("no respondents in data");
  const Vector pi = propensities(data.x(), phi);
  const Vector w = data.delta().array() / pi.array();
  return w.dot(data.observed_y()) / w.sum();
}

double ps_variance_taylor(const Dataset& data, const PropensityParams& phi,
                          const ModelIndicator& support, double theta, bool* clamped_to_zero) {
  if (clamped_to_zero) *clamped_to_zero = false;
  if (data.respondents() < 1.0) throw NoRespondents("no respondents in data");
  const auto active = support.active();
  const Dataset sub = data.columns(active);
  const Matrix& x = sub.x();
  const Vector phi_s = phi(active);
  const double n = static_cast<double>(data.n());

  const Vector pi = propensities(x, phi_s);
  const Vector& delta = sub.delta();
  const Vector resid = sub.observed_y().array() - theta;
  // u_i = delta_i / pi_i (y_i - theta); zero for nonrespondents.
  const Vector u = (delta.array() / pi.array()) * resid.array();

  // info = -A, the per-unit information.
  const Matrix info = weighted_gram(x, pi.array() * (1.0 - pi.array())) / n;
  if (condition_number(info) > 1e12) {
    throw SingularInformation("information matrix is singular in variance estimation");
  }
  const Vector c = -(x.transpose() * (u.array() * (1.0 - pi.array())).matrix()) / n;
  const double d = -(delta.array() / pi.array()).sum() / n;
  const double eu2 = u.squaredNorm() / n;
  // C A^{-1} C^T = -C info^{-1} C^T
  const double correction = -c.dot(info.ldlt().solve(c));
  const double v = (eu2 + correction) / (d * d * n);
  // The plug-in goes negative when the model nearly interpolates the
  // response pattern; report zero and let the caller flag it.
  if (clamped_to_zero) *clamped_to_zero = v < 0.0;
  return std::max(v, 0.0);
}

double ps_variance_taylor(const Dataset& data, const PropensityParams& phi, double theta) {
  return ps_variance_taylor(data, phi, ModelIndicator::full(data.d()), theta, nullptr);
}

double normal_critical_value(double level) {
  return boost::math::quantile(boost::math::normal_distribution<double>(), 0.5 + 0.5 * level);
}

EstimateReport estimate_ps(const Dataset& data, const ModelIndicator& support, Method tag,
                           double level) {
  EstimateReport r;
  r.method = tag;
  r.theta_hat = r.se_hat = r.ci_low = r.ci_high = std::numeric_limits<double>::quiet_NaN();
  r.diagnostics["support_size"] = static_cast<double>(support.count());
  try {
    const MleFit fit = fit_propensity_mle(data, support);
    r.diagnostics["newton_iterations"] = fit.iterations;
    r.diagnostics["clamp_events"] = static_cast<double>(fit.clamp_events);
    r.theta_hat = ps_point_estimate(data, fit.phi);
    bool clamped = false;
    const double v = ps_variance_taylor(data, fit.phi, support, r.theta_hat, &clamped);
    if (clamped) r.diagnostics["variance_clamped"] = 1.0;
    r.se_hat = std::sqrt(v);
    const double z = normal_critical_value(level);
    r.ci_low = r.theta_hat - z * r.se_hat;
    r.ci_high = r.theta_hat + z * r.se_hat;
    r.converged = std::isfinite(r.theta_hat) && std::isfinite(r.se_hat);
  } catch (const SingularInformation&) {
    r.diagnostics["singular_information"] = 1.0;
  } catch (const NoConvergence&) {
    r.diagnostics["no_convergence"] = 1.0;
  } catch (const NoRespondents&) {
    r.diagnostics["no_respondents"] = 1.0;
  }
  return r;
}

}  // namespace sparseps
