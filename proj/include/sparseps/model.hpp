#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace sparseps {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Lower/upper clamp applied to every fitted response probability.
inline constexpr double kProbClamp = 1e-12;

/// Covariates, outcome and response indicators for n units.
///
/// Column 0 of the covariate matrix is the intercept. Outcomes of
/// nonrespondents are undefined (stored as NaN); numerical code should use
/// observed_y(), which holds zeros in their place.
class Dataset {
 public:
  /// Validates the invariants and throws DataError on violation.
  Dataset(Matrix x, Vector y, Vector delta);

  /// Builds a dataset from stochastic covariates only; the intercept column
  /// is prepended.
  static Dataset with_intercept(const Matrix& covariates, Vector y, Vector delta);

  const Matrix& x() const noexcept { return x_; }
  const Vector& y() const noexcept { return y_; }
  const Vector& observed_y() const noexcept { return y_obs_; }
  const Vector& delta() const noexcept { return delta_; }

  Eigen::Index n() const noexcept { return x_.rows(); }
  Eigen::Index d() const noexcept { return x_.cols(); }
  double respondents() const noexcept { return respondents_; }

  /// Copy restricted to a subset of columns (must include column 0).
  Dataset columns(std::span<const Eigen::Index> cols) const;
  /// Copy restricted to a subset of rows.
  Dataset rows(std::span<const Eigen::Index> idx) const;

 private:
  Matrix x_;
  Vector y_;
  Vector y_obs_;
  Vector delta_;
  double respondents_ = 0.0;
};

/// Logistic regression coefficients for the response model, one per column.
using PropensityParams = Vector;

/// Binary inclusion vector over the d columns. The intercept (index 0) is
/// always included.
class ModelIndicator {
 public:
  ModelIndicator() = default;
  /// All columns included.
  static ModelIndicator full(Eigen::Index d);
  /// Only the intercept.
  static ModelIndicator intercept_only(Eigen::Index d);
  static ModelIndicator from_indices(Eigen::Index d, std::span<const Eigen::Index> active);
  /// Nonzero pattern of a coefficient vector (intercept forced on).
  static ModelIndicator from_nonzero(const Vector& coef);
  /// Throws std::invalid_argument if bits[0] == 0.
  explicit ModelIndicator(std::vector<std::uint8_t> bits);

  Eigen::Index size() const noexcept { return static_cast<Eigen::Index>(bits_.size()); }
  bool operator[](Eigen::Index j) const { return bits_[static_cast<std::size_t>(j)] != 0; }
  /// Setting index 0 to false throws std::invalid_argument.
  void set(Eigen::Index j, bool on);

  Eigen::Index count() const noexcept;
  std::vector<Eigen::Index> active() const;
  const std::vector<std::uint8_t>& bits() const noexcept { return bits_; }
  /// True when every included column of `other` is also included here.
  bool contains(const ModelIndicator& other) const;

  friend bool operator==(const ModelIndicator&, const ModelIndicator&) = default;
  friend auto operator<=>(const ModelIndicator& a, const ModelIndicator& b) {
    return a.bits_ <=> b.bits_;
  }

 private:
  std::vector<std::uint8_t> bits_;
};

/// Spike-and-slab and working-model hyperparameters.
struct PriorConfig {
  double nu0 = 1e-4;     ///< spike variance, response model
  double nu1 = 1e4;      ///< slab variance, response model
  Vector w;              ///< prior inclusion probability per column
  Vector xi;             ///< working-model prior inclusion probability per column
  double gamma0 = 1e-4;  ///< spike variance, working model
  double gamma1 = 1e4;   ///< slab variance, working model
  double c1 = 1e-7;      ///< inverse-gamma shape
  double c2 = 1e-7;      ///< inverse-gamma scale

  /// Defaults with w and xi broadcast to 0.5 over d columns.
  static PriorConfig defaults(Eigen::Index d);
  /// Broadcasts scalar w and xi over d columns.
  static PriorConfig broadcast(Eigen::Index d, double nu0, double nu1, double w, double xi,
                               double gamma0, double gamma1, double c1, double c2);

  /// Throws ConfigError if a constraint is violated or sizes differ from d.
  void validate(Eigen::Index d) const;
};

double link_logistic(double eta) noexcept;

/// Response probability for one covariate row. Throws DataError on a size mismatch.
double propensity(const Vector& x_row, const PropensityParams& phi);

/// Response probabilities for every row; `clamped`, when given, receives the
/// number of entries that hit the clamp.
Vector propensities(const Matrix& x, const PropensityParams& phi, std::size_t* clamped = nullptr);

double log_likelihood(const Dataset& data, const PropensityParams& phi);

/// Gradient of log_likelihood: sum_i (delta_i - pi_i) x_i.
Vector score(const Dataset& data, const PropensityParams& phi);

/// Per-unit information n^{-1} sum_i pi_i (1 - pi_i) x_i x_i^T.
Matrix fisher_info(const Dataset& data, const PropensityParams& phi);

/// X^T diag(weights) X, formed through a symmetric rank update.
Matrix weighted_gram(const Matrix& x, const Vector& weights);

}  // namespace sparseps
