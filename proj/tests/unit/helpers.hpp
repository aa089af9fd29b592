#pragma once

#include "sparseps/model.hpp"
#include "sparseps/rng.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace sparseps::testing {

/// Intercept plus standard normal covariates, logistic responses with a
/// random coefficient vector, linear outcome.
inline Dataset random_dataset(int n, int d, std::uint64_t seed, double coef_scale = 0.5) {
  Rng rng(seed);
  Matrix x(n, d);
  x.col(0).setOnes();
  for (int j = 1; j < d; ++j)
    for (int i = 0; i < n; ++i) x(i, j) = standard_normal(rng);
  Vector phi(d);
  for (int j = 0; j < d; ++j) phi[j] = coef_scale * standard_normal(rng);
  phi[0] = 0.8;
  Vector y(n), delta(n);
  for (int i = 0; i < n; ++i) {
    y[i] = 1.0 + x.row(i).sum() + standard_normal(rng);
    delta[i] = bernoulli(rng, link_logistic(x.row(i).dot(phi))) ? 1.0 : 0.0;
  }
  if (delta.sum() < 1.0) delta[0] = 1.0;
  return Dataset(std::move(x), std::move(y), std::move(delta));
}

inline Vector random_vector(int d, Rng& rng, double scale = 1.0) {
  Vector v(d);
  for (int j = 0; j < d; ++j) v[j] = scale * standard_normal(rng);
  return v;
}

/// Asymptotic p-value of the two-sample Kolmogorov-Smirnov statistic, with
/// the small-sample correction of Stephens (1970).
inline double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  std::size_t i = 0, j = 0;
  double dstat = 0.0;
  while (i < a.size() && j < b.size()) {
    const double v = std::min(a[i], b[j]);
    while (i < a.size() && a[i] <= v) ++i;
    while (j < b.size() && b[j] <= v) ++j;
    dstat = std::max(dstat, std::abs(i / na - j / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * dstat;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    const double term = 2.0 * ((k % 2) ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    p += term;
    if (std::abs(term) < 1e-12) break;
  }
  return std::clamp(p, 0.0, 1.0);
}

inline double mean(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

inline double sample_var(const std::vector<double>& v) {
  const double m = mean(v);
  double s = 0.0;
  for (double x : v) s += (x - m) * (x - m);
  return s / static_cast<double>(v.size() - 1);
}

}  // namespace sparseps::testing
