#include "sparseps/model.hpp"

#include "sparseps/errors.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

namespace sparseps {

Dataset::Dataset(Matrix x, Vector y, Vector delta)
    : x_(std::move(x)), y_(std::move(y)), delta_(std::move(delta)) {
  const Eigen::Index n = x_.rows();
  if (n < 1 || x_.cols() < 1) {
    throw DataError("dataset needs at least one row and one column");
  }
  if (y_.size() != n || delta_.size() != n) {
    throw DataError("dataset size mismatch: x has " + std::to_string(n) + " rows, y has " +
                    std::to_string(y_.size()) + ", delta has " + std::to_string(delta_.size()));
  }
  if (!x_.allFinite()) {
    throw DataError("covariate matrix contains non-finite values");
  }
  for (Eigen::Index i = 0; i < n; ++i) {
    if (x_(i, 0) != 1.0) {
      throw DataError("column 0 must be the intercept; row " + std::to_string(i) + " has " +
                      std::to_string(x_(i, 0)));
    }
  }
  y_obs_ = Vector::Zero(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double di = delta_[i];
    if (di != 0.0 && di != 1.0) {
      throw DataError("delta must be 0 or 1; row " + std::to_string(i) + " has " +
                      std::to_string(di));
    }
    if (di == 1.0) {
      if (!std::isfinite(y_[i])) {
        throw DataError("respondent row " + std::to_string(i) + " has a non-finite outcome");
      }
      y_obs_[i] = y_[i];
      respondents_ += 1.0;
    } else {
      y_[i] = std::numeric_limits<double>::quiet_NaN();
    }
  }
}

Dataset Dataset::with_intercept(const Matrix& covariates, Vector y, Vector delta) {
  Matrix x(covariates.rows(), covariates.cols() + 1);
  x.col(0).setOnes();
  x.rightCols(covariates.cols()) = covariates;
  return Dataset(std::move(x), std::move(y), std::move(delta));
}

Dataset Dataset::columns(std::span<const Eigen::Index> cols) const {
  if (cols.empty() || cols.front() != 0) {
    throw std::invalid_argument("column subset must start with the intercept");
  }
  Matrix xs(n(), static_cast<Eigen::Index>(cols.size()));
  for (std::size_t k = 0; k < cols.size(); ++k) {
    xs.col(static_cast<Eigen::Index>(k)) = x_.col(cols[k]);
  }
  return Dataset(std::move(xs), y_, delta_);
}

Dataset Dataset::rows(std::span<const Eigen::Index> idx) const {
  const auto m = static_cast<Eigen::Index>(idx.size());
  Matrix xs(m, d());
  Vector ys(m);
  Vector ds(m);
  for (Eigen::Index k = 0; k < m; ++k) {
    const Eigen::Index i = idx[static_cast<std::size_t>(k)];
    xs.row(k) = x_.row(i);
    ys[k] = y_[i];
    ds[k] = delta_[i];
  }
  return Dataset(std::move(xs), std::move(ys), std::move(ds));
}

// ---------------------------------------------------------------------------

ModelIndicator::ModelIndicator(std::vector<std::uint8_t> bits) : bits_(std::move(bits)) {
  if (bits_.empty() || bits_[0] == 0) {
    throw std::invalid_argument("model indicator must include the intercept");
  }
  for (auto& b : bits_) b = b != 0 ? 1 : 0;
}

ModelIndicator ModelIndicator::full(Eigen::Index d) {
  return ModelIndicator(std::vector<std::uint8_t>(static_cast<std::size_t>(d), 1));
}

ModelIndicator ModelIndicator::intercept_only(Eigen::Index d) {
  std::vector<std::uint8_t> bits(static_cast<std::size_t>(d), 0);
  bits[0] = 1;
  return ModelIndicator(std::move(bits));
}

ModelIndicator ModelIndicator::from_indices(Eigen::Index d, std::span<const Eigen::Index> active) {
  auto m = intercept_only(d);
  for (Eigen::Index j : active) {
    if (j < 0 || j >= d) throw std::out_of_range("model index out of range");
    m.bits_[static_cast<std::size_t>(j)] = 1;
  }
  return m;
}

ModelIndicator ModelIndicator::from_nonzero(const Vector& coef) {
  auto m = intercept_only(coef.size());
  for (Eigen::Index j = 1; j < coef.size(); ++j) {
    m.bits_[static_cast<std::size_t>(j)] = coef[j] != 0.0 ? 1 : 0;
  }
  return m;
}

void ModelIndicator::set(Eigen::Index j, bool on) {
  if (j == 0 && !on) throw std::invalid_argument("the intercept cannot be deselected");
  bits_.at(static_cast<std::size_t>(j)) = on ? 1 : 0;
}

Eigen::Index ModelIndicator::count() const noexcept {
  return static_cast<Eigen::Index>(std::count(bits_.begin(), bits_.end(), std::uint8_t{1}));
}

std::vector<Eigen::Index> ModelIndicator::active() const {
  std::vector<Eigen::Index> out;
  out.reserve(bits_.size());
  for (std::size_t j = 0; j < bits_.size(); ++j) {
    if (bits_[j] != 0) out.push_back(static_cast<Eigen::Index>(j));
  }
  return out;
}

bool ModelIndicator::contains(const ModelIndicator& other) const {
  if (other.size() != size()) return false;
  for (std::size_t j = 0; j < bits_.size(); ++j) {
    if (other.bits_[j] != 0 && bits_[j] == 0) return false;
  }
  return true;
}

// ---------------------------------------------------------------------------

PriorConfig PriorConfig::defaults(Eigen::Index d) {
  PriorConfig p;
  p.w = Vector::Constant(d, 0.5);
  p.xi = Vector::Constant(d, 0.5);
  return p;
}

PriorConfig PriorConfig::broadcast(Eigen::Index d, double nu0, double nu1, double w, double xi,
                                   double gamma0, double gamma1, double c1, double c2) {
  PriorConfig p;
  p.nu0 = nu0;
  p.nu1 = nu1;
  p.w = Vector::Constant(d, w);
  p.xi = Vector::Constant(d, xi);
  p.gamma0 = gamma0;
  p.gamma1 = gamma1;
  p.c1 = c1;
  p.c2 = c2;
  return p;
}

void PriorConfig::validate(Eigen::Index d) const {
  if (!(nu0 > 0.0) || !(nu1 > nu0)) throw ConfigError("need 0 < nu0 < nu1");
  if (!(gamma0 > 0.0) || !(gamma1 > gamma0)) throw ConfigError("need 0 < gamma0 < gamma1");
  if (!(c1 > 0.0) || !(c2 > 0.0)) throw ConfigError("need c1 > 0 and c2 > 0");
  if (w.size() != d || xi.size() != d) {
    throw ConfigError("w and xi must have one entry per column (" + std::to_string(d) + ")");
  }
  for (Eigen::Index j = 0; j < d; ++j) {
    if (!(w[j] > 0.0 && w[j] < 1.0)) throw ConfigError("w entries must lie in (0, 1)");
    if (!(xi[j] > 0.0 && xi[j] < 1.0)) throw ConfigError("xi entries must lie in (0, 1)");
  }
}

// ---------------------------------------------------------------------------

namespace {

double logistic_raw(double eta) noexcept {
  if (eta >= 0.0) return 1.0 / (1.0 + std::exp(-eta));
  const double e = std::exp(eta);
  return e / (1.0 + e);
}

}  // namespace

double link_logistic(double eta) noexcept {
  return std::clamp(logistic_raw(eta), kProbClamp, 1.0 - kProbClamp);
}

double propensity(const Vector& x_row, const PropensityParams& phi) {
  if (x_row.size() != phi.size()) {
    throw DataError("propensity: covariate row has " + std::to_string(x_row.size()) +
                    " entries but phi has " + std::to_string(phi.size()));
  }
  return link_logistic(x_row.dot(phi));
}

Vector propensities(const Matrix& x, const PropensityParams& phi, std::size_t* clamped) {
  if (x.cols() != phi.size()) {
    throw DataError("propensities: x has " + std::to_string(x.cols()) + " columns but phi has " +
                    std::to_string(phi.size()));
  }
  const Vector eta = x * phi;
  Vector pi(eta.size());
  std::size_t hits = 0;
  for (Eigen::Index i = 0; i < eta.size(); ++i) {
    const double raw = logistic_raw(eta[i]);
    if (raw < kProbClamp || raw > 1.0 - kProbClamp) ++hits;
    pi[i] = std::clamp(raw, kProbClamp, 1.0 - kProbClamp);
  }
  if (clamped != nullptr) *clamped = hits;
  return pi;
}

double log_likelihood(const Dataset& data, const PropensityParams& phi) {
  const Vector pi = propensities(data.x(), phi);
  const Vector& delta = data.delta();
  double ll = 0.0;
  for (Eigen::Index i = 0; i < pi.size(); ++i) {
    ll += delta[i] != 0.0 ? std::log(pi[i]) : std::log1p(-pi[i]);
  }
  return ll;
}

Vector score(const Dataset& data, const PropensityParams& phi) {
  const Vector pi = propensities(data.x(), phi);
  return data.x().transpose() * (data.delta() - pi);
}

Matrix weighted_gram(const Matrix& x, const Vector& weights) {
  const Matrix xw = x.array().colwise() * weights.array().sqrt();
  Matrix g = Matrix::Zero(x.cols(), x.cols());
  g.selfadjointView<Eigen::Lower>().rankUpdate(xw.transpose());
  return g.selfadjointView<Eigen::Lower>();
}

Matrix fisher_info(const Dataset& data, const PropensityParams& phi) {
  const Vector pi = propensities(data.x(), phi);
  const Vector w = pi.array() * (1.0 - pi.array());
  return weighted_gram(data.x(), w) / static_cast<double>(data.n());
}

}  // namespace sparseps
