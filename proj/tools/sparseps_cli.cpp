// sparseps: Monte Carlo studies and single-dataset estimation for sparse
// propensity-score estimators.

#include "config.hpp"

#include "sparseps/baseline.hpp"
#include "sparseps/bsps.hpp"
#include "sparseps/dataset_io.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/lasso.hpp"
#include "sparseps/obsps.hpp"
#include "sparseps/report.hpp"
#include "sparseps/simulation.hpp"

#include <CLI11.hpp>
#include <fmt/core.h>
#include <json.hpp>

#include <algorithm>
#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using nlohmann::ordered_json;

namespace {

constexpr int kOk = 0;
constexpr int kUserError = 1;
constexpr int kPartialFailure = 2;

std::string utc_now() {
  const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Written on every exit path once the output directory is known.
struct Manifest {
  std::string command;
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::string started = utc_now();
  std::vector<std::string> overrides;
  std::vector<std::string> outputs;
  ordered_json effective_config;
  std::string error;
  int exit_code = 0;

  void write(const fs::path& dir) {
    ordered_json j;
    j["command"] = command;
    j["config_path"] = config_path.empty() ? ordered_json(nullptr) : ordered_json(config_path);
    j["seed"] = seed ? ordered_json(*seed) : ordered_json(nullptr);
    j["tool_version"] = SPARSEPS_VERSION;
    j["started_at"] = started;
    j["finished_at"] = utc_now();
    j["overrides"] = overrides;
    const fs::path self = dir / "manifest.json";
    std::vector<std::string> all = outputs;
    all.push_back(self.string());
    j["outputs"] = all;
    if (!effective_config.is_null()) j["config"] = effective_config;
    j["exit_code"] = exit_code;
    j["error"] = error.empty() ? ordered_json(nullptr) : ordered_json(error);
    std::ofstream out(self);
    out << j.dump(2) << '\n';
  }
};

ordered_json scenario_json(const sparseps::ScenarioConfig& c) {
  ordered_json j;
  j["scenario"] = c.id();
  j["model"] = std::string(sparseps::model_name(c.model));
  j["rho"] = c.rho;
  j["p"] = c.p;
  j["n"] = c.n;
  j["B"] = c.B;
  j["seed"] = c.seed;
  std::vector<std::string> methods;
  for (auto m : c.methods) methods.emplace_back(sparseps::method_name(m));
  j["methods"] = methods;
  j["level"] = c.level;
  j["bsps"] = {{"burn_in", c.bsps_chain.burn_in}, {"kept", c.bsps_chain.kept}};
  j["obsps"] = {{"burn_in", c.obsps.chain.burn_in},
                {"kept", c.obsps.chain.kept},
                {"working_sweeps", c.obsps.working_sweeps}};
  j["lasso"] = {{"folds", c.lasso_folds}, {"grid", c.lasso_grid}};
  const auto& p = c.priors;
  j["priors"] = {{"nu0", p.nu0},       {"nu1", p.nu1},       {"w", p.w},   {"xi", p.xi},
                 {"gamma0", p.gamma0}, {"gamma1", p.gamma1}, {"c1", p.c1}, {"c2", p.c2}};
  return j;
}

struct CommonFlags {
  std::string config_path;
  std::optional<std::uint64_t> seed;
  std::vector<std::string> overrides;
  std::string methods;
  std::optional<int> burn_in;
  std::optional<int> kept;
  std::optional<int> workers;
};

// Config file, then --set, then the dedicated flags, then the environment
// worker override (an explicit --workers wins over the environment).
sparseps::ScenarioConfig resolve_config(const CommonFlags& f) {
  YAML::Node root = f.config_path.empty() ? YAML::Node(YAML::NodeType::Map)
                                          : sparseps::cli::load_config_file(f.config_path);
  for (const auto& o : f.overrides) sparseps::cli::apply_override(root, o);
  sparseps::ScenarioConfig c = sparseps::cli::scenario_from_yaml(root);
  if (f.seed) c.seed = *f.seed;
  if (!f.methods.empty()) c.methods = sparseps::cli::parse_method_list(f.methods);
  if (f.burn_in) c.bsps_chain.burn_in = c.obsps.chain.burn_in = *f.burn_in;
  if (f.kept) c.bsps_chain.kept = c.obsps.chain.kept = *f.kept;
  if (const char* env = std::getenv("SPARSEPS_WORKERS"); env && *env) {
    try {
      c.workers = std::stoi(env);
    } catch (const std::exception&) {
      throw sparseps::ConfigError(std::string("SPARSEPS_WORKERS is not an integer: ") + env);
    }
  }
  if (f.workers) c.workers = *f.workers;
  return c;
}

int cmd_simulate(const CommonFlags& flags, const fs::path& out_dir) {
  Manifest manifest;
  manifest.command = "simulate";
  manifest.config_path = flags.config_path;
  manifest.overrides = flags.overrides;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << out_dir.string() << "'\n";
    return kUserError;
  }
  try {
    const sparseps::ScenarioConfig config = resolve_config(flags);
    config.validate();
    manifest.seed = config.seed;
    manifest.effective_config = scenario_json(config);

    std::cerr << "simulate " << config.id() << " B=" << config.B
              << " workers=" << config.workers << '\n';
    const auto result = sparseps::run_monte_carlo(config, [](int done, int total) {
      if (done == total || done % 10 == 0) std::cerr << "  replication " << done << '/' << total << '\n';
    });

    const fs::path metrics_path = out_dir / "metrics.csv";
    {
      std::ofstream out(metrics_path);
      sparseps::write_metrics_csv(out, result.metrics);
    }
    manifest.outputs.push_back(metrics_path.string());

    const fs::path reps_path = out_dir / "replications.json";
    {
      ordered_json bundle;
      bundle["scenario"] = scenario_json(config);
      ordered_json per_method = ordered_json::object();
      for (std::size_t k = 0; k < config.methods.size(); ++k) {
        ordered_json list = ordered_json::array();
        for (const auto& rec : result.records[k]) {
          ordered_json item;
          item["replication"] = rec.replication;
          item["report"] = sparseps::to_json(rec.report);
          list.push_back(std::move(item));
        }
        per_method[std::string(sparseps::method_name(config.methods[k]))] = std::move(list);
      }
      bundle["replications"] = std::move(per_method);
      std::ofstream out(reps_path);
      out << bundle.dump(2) << '\n';
    }
    manifest.outputs.push_back(reps_path.string());

    manifest.exit_code = result.failed_fits > 0 ? kPartialFailure : kOk;
    if (result.failed_fits > 0) {
      manifest.error = std::to_string(result.failed_fits) + " method fits did not converge";
      std::cerr << "warning: " << manifest.error << " (recorded in replications.json)\n";
    }
  } catch (const sparseps::ConfigError& e) {
    manifest.exit_code = kUserError;
    manifest.error = e.what();
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const sparseps::Error& e) {
    manifest.exit_code = kPartialFailure;
    manifest.error = e.what();
    std::cerr << "error: " << e.what() << '\n';
  }
  manifest.write(out_dir);
  return manifest.exit_code;
}

int cmd_estimate(const CommonFlags& flags, const std::string& data_path,
                 const std::string& method_name, const fs::path& out_dir, bool write_chain) {
  Manifest manifest;
  manifest.command = "estimate";
  manifest.config_path = flags.config_path;
  manifest.overrides = flags.overrides;
  std::error_code ec;
  fs::create_directories(out_dir, ec);
  if (ec) {
    std::cerr << "error: cannot create output directory '" << out_dir.string() << "'\n";
    return kUserError;
  }
  try {
    const sparseps::Method method = sparseps::parse_method(method_name);
    const sparseps::ScenarioConfig config = resolve_config(flags);
    manifest.seed = config.seed;
    const auto csv = sparseps::read_dataset_csv(data_path);
    const auto& data = csv.data;
    const std::uint64_t seed = sparseps::derive_seed(config.seed, 0xe5, 0);

    sparseps::EstimateReport report;
    std::optional<sparseps::PosteriorSample> sample;
    if (method == sparseps::Method::kBsps || method == sparseps::Method::kObsps) {
      const auto priors = config.priors.for_dimension(data.d());
      priors.validate(data.d());
      try {
        sample = method == sparseps::Method::kBsps
                     ? sparseps::run_bsps_chain(data, priors, config.bsps_chain, seed)
                     : sparseps::run_obsps_chain(data, priors, config.obsps, seed);
        report = sparseps::summarize_posterior(*sample, config.level, method);
      } catch (const sparseps::Error& e) {
        report = sparseps::run_method(data, method, config, seed);
        report.diagnostics["chain_failure"] = 1.0;
        manifest.error = e.what();
      }
    } else if (method == sparseps::Method::kTps) {
      throw sparseps::ConfigError("TPS needs the true support and is only available in simulate");
    } else {
      report = sparseps::run_method(data, method, config, seed);
    }

    ordered_json j = sparseps::to_json(report);
    ordered_json names = ordered_json::array({"(intercept)"});
    for (const auto& n : csv.covariate_names) names.push_back(n);
    j["columns"] = names;
    const fs::path report_path = out_dir / "report.json";
    {
      std::ofstream out(report_path);
      out << j.dump(2) << '\n';
    }
    manifest.outputs.push_back(report_path.string());
    if (write_chain && sample) {
      const fs::path chain_path = out_dir / "chain.csv";
      std::ofstream out(chain_path);
      sparseps::write_chain_csv(out, *sample);
      manifest.outputs.push_back(chain_path.string());
    }

    fmt::print("{} theta_hat={:.6f} se={:.6f} ci=[{:.6f}, {:.6f}] converged={}\n",
               sparseps::method_name(method), report.theta_hat, report.se_hat, report.ci_low,
               report.ci_high, report.converged);
    manifest.exit_code = report.converged ? kOk : kPartialFailure;
    if (!report.converged && manifest.error.empty()) manifest.error = "estimator did not converge";
  } catch (const sparseps::DataError& e) {
    manifest.exit_code = kUserError;
    manifest.error = e.what();
    std::cerr << "data error: " << e.what() << '\n';
  } catch (const sparseps::ConfigError& e) {
    manifest.exit_code = kUserError;
    manifest.error = e.what();
    std::cerr << "config error: " << e.what() << '\n';
  } catch (const sparseps::Error& e) {
    manifest.exit_code = kPartialFailure;
    manifest.error = e.what();
    std::cerr << "error: " << e.what() << '\n';
  }
  manifest.write(out_dir);
  return manifest.exit_code;
}

std::string cell(const std::optional<double>& v, double scale, int digits) {
  return v ? fmt::format("{:.{}f}", *v * scale, digits) : std::string("-");
}

int cmd_report(const fs::path& dir) {
  if (!fs::is_directory(dir)) {
    std::cerr << "error: '" << dir.string() << "' is not a directory\n";
    return kUserError;
  }
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(dir)) {
    if (e.is_regular_file() && e.path().filename() == "metrics.csv") files.push_back(e.path());
  }
  std::sort(files.begin(), files.end());
  if (files.empty()) {
    std::cerr << "error: no metrics.csv under '" << dir.string() << "'\n";
    return kUserError;
  }
  std::vector<sparseps::MetricsRow> rows;
  for (const auto& f : files) {
    std::ifstream in(f);
    try {
      auto part = sparseps::read_metrics_csv(in);
      rows.insert(rows.end(), part.begin(), part.end());
    } catch (const sparseps::DataError& e) {
      std::cerr << "error: " << f.string() << ": " << e.what() << '\n';
      return kUserError;
    }
  }
  if (rows.empty()) {
    std::cerr << "error: metrics files contain no rows\n";
    return kUserError;
  }
  std::stable_sort(rows.begin(), rows.end(), [](const auto& a, const auto& b) {
    return std::tie(a.model, a.n, a.rho, a.p, a.method) <
           std::tie(b.model, b.n, b.rho, b.p, b.method);
  });

  fmt::print("{:<5} {:>5} {:>5} {:>4} {:<6} {:>10} {:>9} {:>12} {:>7} {:>5} {:>5} {:>6}\n",
             "model", "n", "rho", "p", "method", "Rbias*100", "S.E.*100", "E[S.E.]*100",
             "CP*100", "TPR", "TNR", "conv");
  for (const auto& r : rows) {
    fmt::print("{:<5} {:>5} {:>5.2f} {:>4} {:<6} {:>10} {:>9} {:>12} {:>7} {:>5} {:>5} {:>6}\n",
               sparseps::model_name(r.model), r.n, r.rho, r.p, sparseps::method_name(r.method),
               cell(r.rbias, 100, 1), cell(r.se, 100, 1), cell(r.mean_se_hat, 100, 1),
               cell(r.cp, 100, 1), cell(r.tpr, 1, 2), cell(r.tnr, 1, 2),
               fmt::format("{}/{}", r.n_converged, r.n_converged + r.n_failed));
  }
  return kOk;
}

void add_common(CLI::App* cmd, CommonFlags& f) {
  cmd->add_option("--config", f.config_path, "YAML configuration file")->check(CLI::ExistingFile);
  cmd->add_option("--seed", f.seed, "master seed");
  cmd->add_option("--set", f.overrides, "override a config key, key=value (repeatable)");
  cmd->add_option("--burn-in", f.burn_in, "burn-in iterations for both samplers");
  cmd->add_option("--kept", f.kept, "kept iterations for both samplers");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sparse propensity-score estimation of a mean under missing outcomes"};
  app.set_version_flag("--version", SPARSEPS_VERSION);
  app.require_subcommand(1);

  CommonFlags sim_flags;
  std::string sim_out;
  auto* sim = app.add_subcommand("simulate", "run a Monte Carlo scenario");
  add_common(sim, sim_flags);
  sim->add_option("--out", sim_out, "output directory")->required();
  sim->add_option("--methods", sim_flags.methods, "comma-separated, e.g. ps,tps,lasso,bsps,obsps");
  sim->add_option("--workers", sim_flags.workers, "worker threads (env SPARSEPS_WORKERS)");

  CommonFlags est_flags;
  std::string est_data, est_method, est_out;
  bool est_chain = false;
  auto* est = app.add_subcommand("estimate", "estimate the outcome mean from a CSV file");
  add_common(est, est_flags);
  est->add_option("--data", est_data, "CSV with columns y,delta,covariates...")
      ->required()
      ->check(CLI::ExistingFile);
  est->add_option("--method", est_method, "ps, lasso, bsps or obsps")->required();
  est->add_option("--out", est_out, "output directory")->required();
  est->add_flag("--chain", est_chain, "also write the posterior draws to chain.csv");

  std::string report_dir;
  auto* rep = app.add_subcommand("report", "print a table from simulate output");
  rep->add_option("dir", report_dir, "directory searched recursively for metrics.csv")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? kOk : kUserError;
  }

  if (sim->parsed()) return cmd_simulate(sim_flags, sim_out);
  if (est->parsed()) return cmd_estimate(est_flags, est_data, est_method, est_out, est_chain);
  return cmd_report(report_dir);
}
