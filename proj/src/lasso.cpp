#include "sparseps/lasso.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace sparseps {

namespace {

double soft_threshold(double g, double lambda) {
  if (g > lambda) return g - lambda;
  if (g < -lambda) return g + lambda;
  return 0.0;
}

double penalized_objective(const Dataset& data, const Vector& phi, double lambda) {
  return -log_likelihood(data, phi) + lambda * phi.tail(phi.size() - 1).lpNorm<1>();
}

double logit(double p) { return std::log(p / (1.0 - p)); }

}  // namespace

double lasso_lambda_max(const Dataset& data) {
  const double rate = data.respondents() / static_cast<double>(data.n());
  if (rate <= 0.0 || rate >= 1.0) {
    throw DataError("lasso needs both respondents and nonrespondents");
  }
  Vector phi = Vector::Zero(data.d());
  phi[0] = logit(rate);
  const Vector s = score(data, phi);
  return s.tail(s.size() - 1).lpNorm<Eigen::Infinity>();
}

std::vector<double> lasso_lambda_grid(const Dataset& data, int count, double ratio) {
  if (count < 1) throw ConfigError("lambda grid needs at least one point");
  const double hi = lasso_lambda_max(data);
  std::vector<double> grid(static_cast<std::size_t>(count));
  if (count == 1) {
    grid[0] = hi;
    return grid;
  }
  const double step = std::log(ratio) / static_cast<double>(count - 1);
  for (int k = 0; k < count; ++k) grid[static_cast<std::size_t>(k)] = hi * std::exp(step * k);
  return grid;
}

Vector lasso_logistic(const Dataset& data, double lambda, const Vector& warm_start,
                      const LassoOptions& opts) {
  const Matrix& x = data.x();
  const Eigen::Index n = data.n();
  const Eigen::Index d = data.d();
  Vector phi = warm_start.size() == d ? warm_start : Vector::Zero(d);
  double f = penalized_objective(data, phi, lambda);
  int sweeps = 0;

  Vector beta(d);
  Vector xw2(d);
  Vector r(n);
  Vector w(n);
  std::vector<char> in_active(static_cast<std::size_t>(d));

  while (true) {
    const Vector pi = propensities(x, phi);
    w = (pi.array() * (1.0 - pi.array())).max(1e-10);
    // Working residual z - eta of the quadratic model around phi.
    r = (data.delta() - pi).array() / w.array();
    beta = phi;
    for (Eigen::Index j = 0; j < d; ++j) xw2[j] = w.dot(x.col(j).cwiseAbs2());

    auto sweep = [&](bool active_only) {
      double max_change = 0.0;
      for (Eigen::Index j = 0; j < d; ++j) {
        if (active_only && !in_active[static_cast<std::size_t>(j)]) continue;
        if (xw2[j] <= 0.0) continue;
        const double g = x.col(j).dot(w.cwiseProduct(r)) + xw2[j] * beta[j];
        const double updated = j == 0 ? g / xw2[j] : soft_threshold(g, lambda) / xw2[j];
        const double change = updated - beta[j];
        if (change != 0.0) {
          r.noalias() -= change * x.col(j);
          beta[j] = updated;
          max_change = std::max(max_change, std::abs(change));
        }
      }
      if (++sweeps > opts.max_sweeps) {
        throw NoConvergence("lasso coordinate descent exceeded " +
                            std::to_string(opts.max_sweeps) + " sweeps at lambda " +
                            std::to_string(lambda));
      }
      return max_change;
    };

    // Full sweeps to settle the active set, then cycle on the active set only.
    while (true) {
      const double full_change = sweep(false);
      for (Eigen::Index j = 0; j < d; ++j) in_active[static_cast<std::size_t>(j)] = beta[j] != 0.0;
      if (full_change < opts.tolerance) break;
      while (sweep(true) >= opts.tolerance) {
      }
    }

    const Vector direction = beta - phi;
    double t = 1.0;
    Vector candidate = beta;
    double f_c = penalized_objective(data, candidate, lambda);
    while (f_c > f + 1e-12 * (1.0 + std::abs(f)) && t > 1e-10) {
      t *= 0.5;
      candidate = phi + t * direction;
      f_c = penalized_objective(data, candidate, lambda);
    }
    const double change = (candidate - phi).lpNorm<Eigen::Infinity>();
    phi = candidate;
    f = f_c;
    if (change < opts.tolerance) return phi;
  }
}

std::vector<Vector> lasso_path(const Dataset& data, std::span<const double> lambdas,
                               const LassoOptions& opts) {
  std::vector<Vector> out;
  out.reserve(lambdas.size());
  Vector warm = Vector::Zero(data.d());
  for (double lambda : lambdas) {
    warm = lasso_logistic(data, lambda, warm, opts);
    out.push_back(warm);
  }
  return out;
}

double deviance(const Dataset& data, const PropensityParams& phi) {
  return -2.0 * log_likelihood(data, phi);
}

std::vector<int> stratified_folds(const Vector& delta, int folds, std::uint64_t seed) {
  if (folds < 2) throw ConfigError("cross-validation needs at least 2 folds");
  std::vector<Eigen::Index> resp;
  std::vector<Eigen::Index> nonresp;
  for (Eigen::Index i = 0; i < delta.size(); ++i) (delta[i] != 0.0 ? resp : nonresp).push_back(i);
  Rng rng(derive_seed(seed, 0xf01d));
  std::shuffle(resp.begin(), resp.end(), rng);
  std::shuffle(nonresp.begin(), nonresp.end(), rng);
  std::vector<int> fold(static_cast<std::size_t>(delta.size()));
  int k = 0;
  for (const auto* group : {&resp, &nonresp}) {
    for (Eigen::Index i : *group) {
      fold[static_cast<std::size_t>(i)] = k;
      k = (k + 1) % folds;
    }
  }
  return fold;
}

LassoFit fit_lasso_logistic(const Dataset& data, std::span<const double> lambda_grid, int folds,
                            std::uint64_t seed, const LassoOptions& opts) {
  if (lambda_grid.empty()) throw ConfigError("lambda grid is empty");
  for (std::size_t k = 1; k < lambda_grid.size(); ++k) {
    if (!(lambda_grid[k] < lambda_grid[k - 1])) {
      throw ConfigError("lambda grid must be strictly decreasing");
    }
  }
  const std::vector<int> fold = stratified_folds(data.delta(), folds, seed);
  const std::size_t m = lambda_grid.size();
  std::vector<double> total(m, 0.0);

  for (int k = 0; k < folds; ++k) {
    std::vector<Eigen::Index> train;
    std::vector<Eigen::Index> test;
    for (Eigen::Index i = 0; i < data.n(); ++i) {
      (fold[static_cast<std::size_t>(i)] == k ? test : train).push_back(i);
    }
    if (test.empty()) continue;
    const Dataset train_data = data.rows(train);
    const Dataset test_data = data.rows(test);
    Vector warm = Vector::Zero(data.d());
    bool failed = false;
    for (std::size_t l = 0; l < m; ++l) {
      if (!failed) {
        try {
          warm = lasso_logistic(train_data, lambda_grid[l], warm, opts);
        } catch (const NoConvergence&) {
          failed = true;
        }
      }
      total[l] += failed ? std::numeric_limits<double>::infinity() : deviance(test_data, warm);
    }
  }

  LassoFit fit;
  fit.lambdas.assign(lambda_grid.begin(), lambda_grid.end());
  fit.cv_deviance.resize(m);
  std::size_t best = 0;
  for (std::size_t l = 0; l < m; ++l) {
    fit.cv_deviance[l] = total[l] / static_cast<double>(data.n());
    if (fit.cv_deviance[l] < fit.cv_deviance[best]) best = l;
  }
  fit.lambda = lambda_grid[best];
  const auto path = lasso_path(data, lambda_grid.first(best + 1), opts);
  fit.phi = path.back();
  fit.support = ModelIndicator::from_nonzero(fit.phi);
  return fit;
}

EstimateReport estimate_lasso(const Dataset& data, int folds, std::uint64_t seed, int grid_size,
                              double level) {
  EstimateReport r;
  try {
    const auto grid = lasso_lambda_grid(data, grid_size);
    const LassoFit fit = fit_lasso_logistic(data, grid, folds, seed);
    r = estimate_ps(data, fit.support, Method::kLasso, level);
    r.selected_support = fit.support;
    r.diagnostics["lambda"] = fit.lambda;
    if (fit.support.count() == 1) r.diagnostics["intercept_only_support"] = 1.0;
  } catch (const NoConvergence&) {
    r.method = Method::kLasso;
    r.converged = false;
    r.theta_hat = r.se_hat = r.ci_low = r.ci_high = std::numeric_limits<double>::quiet_NaN();
    r.diagnostics["no_convergence"] = 1.0;
  }
  return r;
}

}  // namespace sparseps
