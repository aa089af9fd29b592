#include "sparseps/baseline.hpp"
#include "sparseps/bsps.hpp"
#include "sparseps/dataset_io.hpp"
#include "sparseps/errors.hpp"
#include "sparseps/lasso.hpp"
#include "sparseps/model.hpp"
#include "sparseps/obsps.hpp"
#include "sparseps/report.hpp"
#include "sparseps/simulation.hpp"

#include <pybind11/eigen.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <sstream>

namespace py = pybind11;
using namespace sparseps;

namespace {

ModelIndicator support_from(const Dataset& data, const std::optional<std::vector<Eigen::Index>>& cols) {
  if (!cols) return ModelIndicator::full(data.d());
  return ModelIndicator::from_indices(data.d(), *cols);
}

py::dict report_dict(const EstimateReport& r) {
  py::module_ json = py::module_::import("json");
  return json.attr("loads")(to_json(r).dump());
}

ScenarioConfig scenario(const std::string& model, double rho, int p, int n, int B,
                        const std::vector<std::string>& methods, std::uint64_t seed, int burn_in,
                        int kept, int workers) {
  ScenarioConfig c;
  c.model = parse_model(model);
  c.rho = rho;
  c.p = p;
  c.n = n;
  c.B = B;
  c.methods.clear();
  for (const auto& m : methods) c.methods.push_back(parse_method(m));
  c.seed = seed;
  c.bsps_chain.burn_in = c.obsps.chain.burn_in = burn_in;
  c.bsps_chain.kept = c.obsps.chain.kept = kept;
  c.workers = workers;
  return c;
}

py::dict metrics_dict(const MetricsRow& r) {
  py::dict d;
  auto opt = [](const std::optional<double>& v) -> py::object {
    return v ? py::cast(*v) : py::none();
  };
  d["scenario"] = r.scenario;
  d["model"] = std::string(model_name(r.model));
  d["rho"] = r.rho;
  d["p"] = r.p;
  d["n"] = r.n;
  d["method"] = std::string(method_name(r.method));
  d["rbias"] = opt(r.rbias);
  d["se"] = opt(r.se);
  d["mean_se_hat"] = opt(r.mean_se_hat);
  d["cp"] = opt(r.cp);
  d["tpr"] = opt(r.tpr);
  d["tnr"] = opt(r.tnr);
  d["n_converged"] = r.n_converged;
  d["n_failed"] = r.n_failed;
  d["mc_se_of_cp"] = opt(r.mc_se_of_cp);
  return d;
}

py::dict chain_dict(const PosteriorSample& s) {
  const auto m = static_cast<Eigen::Index>(s.draws.size());
  const Eigen::Index d = m > 0 ? s.draws.front().phi.size() : 0;
  Vector theta(m);
  Matrix phi(m, d), z(m, d);
  for (Eigen::Index t = 0; t < m; ++t) {
    const auto& st = s.draws[static_cast<std::size_t>(t)];
    theta[t] = st.theta;
    phi.row(t) = st.phi.transpose();
    for (Eigen::Index j = 0; j < d; ++j) z(t, j) = st.z[j] ? 1.0 : 0.0;
  }
  py::dict out;
  out["theta"] = theta;
  out["phi"] = phi;
  out["z"] = z;
  out["failed_iterations"] = s.failed_iterations;
  if (s.working.size() == s.draws.size() && m > 0) {
    Matrix u(m, d), beta(m, d);
    for (Eigen::Index t = 0; t < m; ++t) {
      const auto& w = s.working[static_cast<std::size_t>(t)];
      beta.row(t) = w.beta.transpose();
      for (Eigen::Index j = 0; j < d; ++j) u(t, j) = w.u[j] ? 1.0 : 0.0;
    }
    out["u"] = u;
    out["beta"] = beta;
  }
  return out;
}

}  // namespace

PYBIND11_MODULE(_core, m) {
  m.doc() = "Sparse propensity-score estimators of a mean with missing outcomes";
  m.attr("__version__") = SPARSEPS_VERSION;

  py::register_exception<Error>(m, "SparsePsError", PyExc_RuntimeError);
  py::register_exception<DataError>(m, "DataError", PyExc_ValueError);
  py::register_exception<ConfigError>(m, "ConfigError", PyExc_ValueError);

  py::class_<Dataset>(m, "Dataset")
      .def(py::init<Matrix, Vector, Vector>(), py::arg("x"), py::arg("y"), py::arg("delta"),
           "x must carry the intercept in column 0; y may be NaN where delta = 0.")
      .def_static("with_intercept", &Dataset::with_intercept, py::arg("covariates"),
                  py::arg("y"), py::arg("delta"))
      .def_property_readonly("x", &Dataset::x)
      .def_property_readonly("y", &Dataset::y)
      .def_property_readonly("delta", &Dataset::delta)
      .def_property_readonly("n", &Dataset::n)
      .def_property_readonly("d", &Dataset::d)
      .def_property_readonly("respondents", &Dataset::respondents);

  m.def("link_logistic", &link_logistic, py::arg("eta"));
  m.def("log_likelihood", &log_likelihood, py::arg("data"), py::arg("phi"));
  m.def("score", &score, py::arg("data"), py::arg("phi"));
  m.def("fisher_info", &fisher_info, py::arg("data"), py::arg("phi"));

  m.def(
      "fit_propensity_mle",
      [](const Dataset& data, std::optional<std::vector<Eigen::Index>> support) {
        return fit_propensity_mle(data, support_from(data, support)).phi;
      },
      py::arg("data"), py::arg("support") = py::none(),
      "Logistic MLE on the listed columns (all columns by default).");
  m.def("ps_point_estimate", &ps_point_estimate, py::arg("data"), py::arg("phi"));
  m.def(
      "estimate_ps",
      [](const Dataset& data, std::optional<std::vector<Eigen::Index>> support, double level) {
        return report_dict(estimate_ps(data, support_from(data, support), Method::kPs, level));
      },
      py::arg("data"), py::arg("support") = py::none(), py::arg("level") = 0.95);
  m.def(
      "estimate_lasso",
      [](const Dataset& data, int folds, std::uint64_t seed, double level) {
        return report_dict(estimate_lasso(data, folds, seed, 50, level));
      },
      py::arg("data"), py::arg("folds") = 5, py::arg("seed") = 1, py::arg("level") = 0.95);

  m.def(
      "run_bsps_chain",
      [](const Dataset& data, int burn_in, int kept, std::uint64_t seed) {
        const PosteriorSample s =
            run_bsps_chain(data, PriorConfig::defaults(data.d()), ChainOptions{burn_in, kept}, seed);
        py::dict out = chain_dict(s);
        out["report"] = report_dict(summarize_posterior(s, 0.95, Method::kBsps));
        return out;
      },
      py::arg("data"), py::arg("burn_in") = 500, py::arg("kept") = 500, py::arg("seed") = 1);
  m.def(
      "run_obsps_chain",
      [](const Dataset& data, int burn_in, int kept, std::uint64_t seed) {
        ObspsOptions opts{ChainOptions{burn_in, kept}, 20};
        const PosteriorSample s = run_obsps_chain(data, PriorConfig::defaults(data.d()), opts, seed);
        py::dict out = chain_dict(s);
        out["report"] = report_dict(summarize_posterior(s, 0.95, Method::kObsps));
        return out;
      },
      py::arg("data"), py::arg("burn_in") = 500, py::arg("kept") = 500, py::arg("seed") = 1);

  m.def(
      "generate_dataset",
      [](const std::string& model, double rho, int p, int n, std::uint64_t seed, int replication) {
        ScenarioConfig c;
        c.model = parse_model(model);
        c.rho = rho;
        c.p = p;
        c.n = n;
        c.seed = seed;
        c.validate();
        return generate_dataset(c, replication);
      },
      py::arg("model") = "M1", py::arg("rho") = 0.0, py::arg("p") = 10, py::arg("n") = 200,
      py::arg("seed") = 1, py::arg("replication") = 0);

  m.def(
      "run_monte_carlo",
      [](const std::string& model, double rho, int p, int n, int B,
         const std::vector<std::string>& methods, std::uint64_t seed, int burn_in, int kept,
         int workers) {
        const ScenarioConfig c = scenario(model, rho, p, n, B, methods, seed, burn_in, kept, workers);
        MonteCarloResult res;
        {
          py::gil_scoped_release release;
          res = run_monte_carlo(c);
        }
        py::list rows;
        for (const auto& r : res.metrics) rows.append(metrics_dict(r));
        return rows;
      },
      py::arg("model") = "M1", py::arg("rho") = 0.0, py::arg("p") = 10, py::arg("n") = 200,
      py::arg("B") = 20, py::arg("methods") = std::vector<std::string>{"ps", "tps"},
      py::arg("seed") = 1, py::arg("burn_in") = 500, py::arg("kept") = 500, py::arg("workers") = 1);

  m.def(
      "read_dataset_csv",
      [](const std::string& path) {
        CsvDataset csv = read_dataset_csv(path);
        return py::make_tuple(std::move(csv.data), csv.covariate_names);
      },
      py::arg("path"), "Returns (Dataset, covariate names).");
  m.def(
      "dataset_to_csv",
      [](const Dataset& data) {
        std::ostringstream os;
        write_dataset_csv(os, data);
        return os.str();
      },
      py::arg("data"));
}
