#include "sparseps/simulation.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/lasso.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <exception>
#include <mutex>
#include <numeric>
#include <sstream>
#include <thread>

namespace sparseps {

namespace {

// Substream tags. Covariates, noise and responses draw from separate streams
// so that, e.g., adding columns leaves the outcome and response draws alone.
constexpr std::uint64_t kCovariateStream = 0xc0;
constexpr std::uint64_t kOutcomeStream = 0x0c;
constexpr std::uint64_t kResponseStream = 0xde;
constexpr std::uint64_t kMethodStream = 0x3e7;

std::string format_number(double v) {
  std::ostringstream os;
  os << v;
  return os.str();
}

}  // namespace

std::string_view model_name(OutcomeModel m) noexcept {
  return m == OutcomeModel::kM1 ? "M1" : "M2";
}

OutcomeModel parse_model(std::string_view name) {
  std::string up(name);
  for (auto& c : up) c = static_cast<char>(std::toupper(static_cast<unsigned char>(c)));
  if (up == "M1") return OutcomeModel::kM1;
  if (up == "M2") return OutcomeModel::kM2;
  throw ConfigError("unknown outcome model '" + std::string(name) + "' (expected M1 or M2)");
}

PriorConfig PriorSettings::for_dimension(Eigen::Index d) const {
  return PriorConfig::broadcast(d, nu0, nu1, w, xi, gamma0, gamma1, c1, c2);
}

void ScenarioConfig::validate() const {
  if (!(rho >= 0.0 && rho < 1.0)) throw ConfigError("rho must lie in [0, 1)");
  if (p < 2) throw ConfigError("p must be at least 2");
  if (model == OutcomeModel::kM2 && p < 3) throw ConfigError("M2 needs x4, so p >= 3");
  if (n < 2) throw ConfigError("n must be at least 2");
  if (B < 1) throw ConfigError("B must be at least 1");
  if (methods.empty()) throw ConfigError("no methods selected");
  if (bsps_chain.burn_in < 0 || bsps_chain.kept < 2)
    throw ConfigError("BSPS chain needs burn_in >= 0 and kept >= 2");
  if (obsps.chain.burn_in < 0 || obsps.chain.kept < 2)
    throw ConfigError("OBSPS chain needs burn_in >= 0 and kept >= 2");
  if (obsps.working_sweeps < 1) throw ConfigError("working_sweeps must be positive");
  if (lasso_folds < 2) throw ConfigError("lasso_folds must be at least 2");
  if (lasso_grid < 2) throw ConfigError("lasso_grid must be at least 2");
  if (!(level > 0.0 && level < 1.0)) throw ConfigError("level must lie in (0, 1)");
  if (workers < 1) throw ConfigError("workers must be positive");
  priors.for_dimension(p + 1).validate(p + 1);
}

std::string ScenarioConfig::id() const {
  return std::string(model_name(model)) + "_rho" + format_number(rho) + "_p" +
         std::to_string(p) + "_n" + std::to_string(n);
}

Matrix gen_covariates(int n, int p, double rho, Rng& rng) {
  Matrix x(n, p + 1);
  x.col(0).setOnes();
  const double innov = std::sqrt(1.0 - rho * rho);
  for (int j = 1; j <= p; ++j) {
    for (int i = 0; i < n; ++i) {
      const double e = standard_normal(rng);
      x(i, j) = j == 1 ? e : rho * x(i, j - 1) + innov * e;
    }
  }
  return x;
}

Vector gen_outcome(OutcomeModel model, const Matrix& x, Rng& rng) {
  const Eigen::Index n = x.rows();
  Vector y(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double e = standard_normal(rng);
    if (model == OutcomeModel::kM1) {
      y(i) = 2.0 + 2.0 * x(i, 2) + e;
    } else {
      y(i) = 1.5 + 0.5 * x(i, 2) * x(i, 2) + 2.0 * x(i, 3) + e;
    }
  }
  return y;
}

Vector gen_response(const Matrix& x, Rng& rng) {
  const Eigen::Index n = x.rows();
  Vector delta(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double pi = link_logistic(1.0 + x(i, 1));
    delta(i) = bernoulli(rng, pi) ? 1.0 : 0.0;
  }
  return delta;
}

Dataset generate_dataset(const ScenarioConfig& config, int replication) {
  const auto rep = static_cast<std::uint64_t>(replication);
  Rng xr = substream(config.seed, kCovariateStream, rep);
  Rng yr = substream(config.seed, kOutcomeStream, rep);
  Rng dr = substream(config.seed, kResponseStream, rep);
  Matrix x = gen_covariates(config.n, config.p, config.rho, xr);
  Vector y = gen_outcome(config.model, x, yr);
  Vector delta = gen_response(x, dr);
  return Dataset(std::move(x), std::move(y), std::move(delta));
}

double true_theta(OutcomeModel) noexcept { return 2.0; }

ModelIndicator true_response_support(Eigen::Index d) {
  const std::vector<Eigen::Index> idx{0, 1};
  return ModelIndicator::from_indices(d, idx);
}

ModelIndicator true_working_support(OutcomeModel model, Eigen::Index d) {
  const std::vector<Eigen::Index> idx{0, 1, model == OutcomeModel::kM1 ? 2 : 3};
  return ModelIndicator::from_indices(d, idx);
}

namespace {

EstimateReport failed_report(Method method, const std::string& flag) {
  EstimateReport r;
  const double nan = std::numeric_limits<double>::quiet_NaN();
  r.theta_hat = r.se_hat = r.ci_low = r.ci_high = nan;
  r.method = method;
  r.converged = false;
  r.diagnostics[flag] = 1.0;
  return r;
}

double working_frequency(const PosteriorSample& sample, const ModelIndicator& truth) {
  if (sample.working.empty()) return 0.0;
  const auto hits = std::count_if(sample.working.begin(), sample.working.end(),
                                  [&](const WorkingModelState& s) { return s.u == truth; });
  return static_cast<double>(hits) / static_cast<double>(sample.working.size());
}

}  // namespace

EstimateReport run_method(const Dataset& data, Method method, const ScenarioConfig& config,
                          std::uint64_t method_seed) {
  const Eigen::Index d = data.d();
  try {
    switch (method) {
      case Method::kPs:
        return estimate_ps(data, ModelIndicator::full(d), Method::kPs, config.level);
      case Method::kTps:
        return estimate_ps(data, true_response_support(d), Method::kTps, config.level);
      case Method::kLasso:
        return estimate_lasso(data, config.lasso_folds, method_seed, config.lasso_grid,
                              config.level);
      case Method::kBsps: {
        const PriorConfig priors = config.priors.for_dimension(d);
        const PosteriorSample s = run_bsps_chain(data, priors, config.bsps_chain, method_seed);
        EstimateReport r = summarize_posterior(s, config.level, Method::kBsps);
        r.diagnostics["true_model_frequency"] = model_frequency(s, true_response_support(d));
        return r;
      }
      case Method::kObsps: {
        const PriorConfig priors = config.priors.for_dimension(d);
        const PosteriorSample s = run_obsps_chain(data, priors, config.obsps, method_seed);
        EstimateReport r = summarize_posterior(s, config.level, Method::kObsps);
        r.diagnostics["true_model_frequency"] = model_frequency(s, true_response_support(d));
        r.diagnostics["true_working_frequency"] =
            working_frequency(s, true_working_support(config.model, d));
        return r;
      }
    }
  } catch (const ChainFailure&) {
    return failed_report(method, "chain_failure");
  } catch (const NoConvergence&) {
    return failed_report(method, "no_convergence");
  } catch (const SingularInformation&) {
    return failed_report(method, "singular_information");
  } catch (const NoRespondents&) {
    return failed_report(method, "no_respondents");
  } catch (const DataError&) {
    return failed_report(method, "data_error");
  }
  return failed_report(method, "unknown_method");
}

MetricsRow compute_metrics(std::span<const EstimateReport> results, double theta0,
                           const std::optional<ModelIndicator>& z_true) {
  MetricsRow row;
  std::vector<const EstimateReport*> ok;
  for (const auto& r : results) {
    if (r.converged && std::isfinite(r.theta_hat)) ok.push_back(&r);
  }
  row.n_converged = static_cast<int>(ok.size());
  row.n_failed = static_cast<int>(results.size()) - row.n_converged;
  if (!results.empty()) row.method = results.front().method;
  if (ok.empty()) return row;

  const double m = static_cast<double>(ok.size());
  double sum = 0.0;
  for (const auto* r : ok) sum += r->theta_hat;
  const double mean = sum / m;
  row.rbias = (mean - theta0) / theta0;

  if (ok.size() >= 2) {
    double ss = 0.0;
    for (const auto* r : ok) ss += (r->theta_hat - mean) * (r->theta_hat - mean);
    row.se = std::sqrt(ss / (m - 1.0));
  }

  double se_sum = 0.0;
  int se_count = 0;
  int covered = 0;
  int interval_count = 0;
  for (const auto* r : ok) {
    if (std::isfinite(r->se_hat)) {
      se_sum += r->se_hat;
      ++se_count;
    }
    if (std::isfinite(r->ci_low) && std::isfinite(r->ci_high)) {
      ++interval_count;
      if (r->ci_low <= theta0 && theta0 <= r->ci_high) ++covered;
    }
  }
  if (se_count > 0) row.mean_se_hat = se_sum / se_count;
  if (interval_count > 0) {
    const double cp = static_cast<double>(covered) / interval_count;
    row.cp = cp;
    row.mc_se_of_cp = std::sqrt(cp * (1.0 - cp) / interval_count);
  }

  if (z_true) {
    double tpr_sum = 0.0;
    double tnr_sum = 0.0;
    int tpr_count = 0;
    int tnr_count = 0;
    for (const auto* r : ok) {
      if (!r->selected_support || r->selected_support->size() != z_true->size()) continue;
      const ModelIndicator& s = *r->selected_support;
      int pos = 0, tp = 0, neg = 0, tn = 0;
      for (Eigen::Index j = 1; j < z_true->size(); ++j) {
        if ((*z_true)[j]) {
          ++pos;
          tp += s[j] ? 1 : 0;
        } else {
          ++neg;
          tn += s[j] ? 0 : 1;
        }
      }
      if (pos > 0) {
        tpr_sum += static_cast<double>(tp) / pos;
        ++tpr_count;
      }
      if (neg > 0) {
        tnr_sum += static_cast<double>(tn) / neg;
        ++tnr_count;
      }
    }
    if (tpr_count > 0) row.tpr = tpr_sum / tpr_count;
    if (tnr_count > 0) row.tnr = tnr_sum / tnr_count;
  }
  return row;
}

MonteCarloResult run_monte_carlo(const ScenarioConfig& config, const ProgressFn& progress) {
  config.validate();
  const int B = config.B;
  const std::size_t nm = config.methods.size();
  std::vector<std::vector<EstimateReport>> slots(static_cast<std::size_t>(B),
                                                 std::vector<EstimateReport>(nm));

  std::atomic<int> next{0};
  std::atomic<int> done{0};
  std::mutex progress_mutex;
  std::exception_ptr first_error;
  std::mutex error_mutex;

  auto worker = [&] {
    for (;;) {
      const int b = next.fetch_add(1);
      if (b >= B) return;
      try {
        const Dataset data = generate_dataset(config, b);
        for (std::size_t k = 0; k < nm; ++k) {
          const Method m = config.methods[k];
          const std::uint64_t seed =
              derive_seed(config.seed, kMethodStream + static_cast<std::uint64_t>(m),
                          static_cast<std::uint64_t>(b));
          slots[static_cast<std::size_t>(b)][k] = run_method(data, m, config, seed);
        }
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
        next.store(B);
        return;
      }
      const int finished = ++done;
      if (progress) {
        std::lock_guard lock(progress_mutex);
        progress(finished, B);
      }
    }
  };

  const int threads = std::max(1, std::min(config.workers, B));
  if (threads == 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    pool.reserve(static_cast<std::size_t>(threads));
    for (int t = 0; t < threads; ++t) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);

  MonteCarloResult out;
  const Eigen::Index d = config.p + 1;
  for (std::size_t k = 0; k < nm; ++k) {
    const Method m = config.methods[k];
    std::vector<EstimateReport> reports;
    std::vector<ReplicationRecord> records;
    reports.reserve(static_cast<std::size_t>(B));
    for (int b = 0; b < B; ++b) {
      reports.push_back(slots[static_cast<std::size_t>(b)][k]);
      records.push_back({b, slots[static_cast<std::size_t>(b)][k]});
    }
    std::optional<ModelIndicator> truth;
    if (m == Method::kLasso || m == Method::kBsps) truth = true_response_support(d);
    if (m == Method::kObsps) truth = true_working_support(config.model, d);
    MetricsRow row = compute_metrics(reports, true_theta(config.model), truth);
    row.scenario = config.id();
    row.model = config.model;
    row.rho = config.rho;
    row.p = config.p;
    row.n = config.n;
    row.method = m;
    out.failed_fits += row.n_failed;
    out.metrics.push_back(std::move(row));
    out.records.push_back(std::move(records));
  }
  return out;
}

}  // namespace sparseps
