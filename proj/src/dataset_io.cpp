#include "sparseps/dataset_io.hpp"

#include "sparseps/errors.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <string_view>

namespace sparseps {

namespace {

std::vector<std::string_view> split_fields(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string_view::npos) {
      out.push_back(line.substr(start));
      return out;
    }
    out.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r'))
    s.remove_suffix(1);
  return s;
}

bool parse_double(std::string_view s, double& v) {
  s = trim(s);
  if (s.empty()) return false;
  if (s.front() == '+') s.remove_prefix(1);
  const auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  return ec == std::errc() && ptr == s.data() + s.size();
}

[[noreturn]] void fail_at(std::size_t line, const std::string& column, const std::string& what) {
  throw DataError("line " + std::to_string(line) + ", column '" + column + "': " + what);
}

std::string opt_field(const std::optional<double>& v) {
  return v ? format_double(*v) : std::string();
}

std::optional<double> read_opt(std::string_view field, std::size_t line, const char* column) {
  field = trim(field);
  if (field.empty()) return std::nullopt;
  double v = 0.0;
  if (!parse_double(field, v)) fail_at(line, column, "not a number");
  return v;
}

int read_int(std::string_view field, std::size_t line, const char* column) {
  field = trim(field);
  int v = 0;
  const auto [ptr, ec] = std::from_chars(field.data(), field.data() + field.size(), v);
  if (ec != std::errc() || ptr != field.data() + field.size()) fail_at(line, column, "not an integer");
  return v;
}

constexpr const char* kMetricsColumns[] = {"scenario", "model", "rho",  "p",   "n",
                                           "method",   "rbias", "se",   "mean_se_hat",
                                           "cp",       "tpr",   "tnr",  "n_converged",
                                           "n_failed", "mc_se_of_cp"};

}  // namespace

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[64];
  const auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, ptr);
}

CsvDataset read_dataset_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError("empty CSV: missing header row");
  ++lineno;
  const auto header = split_fields(line);
  if (header.size() < 3 || trim(header[0]) != "y" || trim(header[1]) != "delta")
    throw DataError("line 1: header must start with 'y,delta' followed by at least one covariate");
  std::vector<std::string> names;
  for (std::size_t k = 2; k < header.size(); ++k) names.emplace_back(trim(header[k]));
  const std::size_t ncols = header.size();
  const std::size_t p = ncols - 2;

  std::vector<double> xs, ys, ds;
  std::size_t rows = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto fields = split_fields(line);
    if (fields.size() != ncols)
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(ncols) +
                      " fields, found " + std::to_string(fields.size()));
    double delta = 0.0;
    if (!parse_double(fields[1], delta) || (delta != 0.0 && delta != 1.0))
      fail_at(lineno, "delta", "must be 0 or 1");
    const std::string_view yf = trim(fields[0]);
    double y = std::numeric_limits<double>::quiet_NaN();
    if (delta == 1.0) {
      if (yf.empty()) fail_at(lineno, "y", "missing for a respondent (delta = 1)");
      if (!parse_double(yf, y) || !std::isfinite(y)) fail_at(lineno, "y", "not a finite number");
    } else if (!yf.empty()) {
      fail_at(lineno, "y", "must be empty when delta = 0");
    }
    for (std::size_t k = 0; k < p; ++k) {
      double v = 0.0;
      if (!parse_double(fields[k + 2], v) || !std::isfinite(v))
        fail_at(lineno, names[k], "not a finite number");
      xs.push_back(v);
    }
    ys.push_back(y);
    ds.push_back(delta);
    ++rows;
  }
  if (rows == 0) throw DataError("CSV has a header but no data rows");

  const auto n = static_cast<Eigen::Index>(rows);
  Matrix cov(n, static_cast<Eigen::Index>(p));
  for (Eigen::Index i = 0; i < n; ++i)
    for (Eigen::Index j = 0; j < cov.cols(); ++j)
      cov(i, j) = xs[static_cast<std::size_t>(i) * p + static_cast<std::size_t>(j)];
  Vector y = Eigen::Map<const Vector>(ys.data(), n);
  Vector d = Eigen::Map<const Vector>(ds.data(), n);
  return {Dataset::with_intercept(cov, y, d), std::move(names)};
}

CsvDataset read_dataset_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open '" + path + "'");
  return read_dataset_csv(in);
}

void write_dataset_csv(std::ostream& out, const Dataset& data,
                       const std::vector<std::string>& covariate_names) {
  out << "y,delta";
  for (Eigen::Index j = 1; j < data.d(); ++j) {
    const auto k = static_cast<std::size_t>(j - 1);
    out << ',' << (k < covariate_names.size() ? covariate_names[k] : "x" + std::to_string(j + 1));
  }
  out << '\n';
  for (Eigen::Index i = 0; i < data.n(); ++i) {
    const bool resp = data.delta()(i) == 1.0;
    if (resp) out << format_double(data.y()(i));
    out << ',' << (resp ? '1' : '0');
    for (Eigen::Index j = 1; j < data.d(); ++j) out << ',' << format_double(data.x()(i, j));
    out << '\n';
  }
}

void write_chain_csv(std::ostream& out, const PosteriorSample& sample) {
  if (sample.draws.empty()) {
    out << "iteration,theta\n";
    return;
  }
  const Eigen::Index d = sample.draws.front().phi.size();
  const bool working = sample.working.size() == sample.draws.size();
  out << "iteration,theta";
  for (Eigen::Index j = 0; j < d; ++j) out << ",phi_" << j;
  for (Eigen::Index j = 0; j < d; ++j) out << ",z_" << j;
  if (working) {
    for (Eigen::Index j = 0; j < d; ++j) out << ",u_" << j;
    for (Eigen::Index j = 0; j < d; ++j) out << ",beta_" << j;
    out << ",sigma2_e";
  }
  out << '\n';
  for (std::size_t t = 0; t < sample.draws.size(); ++t) {
    const ChainState& s = sample.draws[t];
    out << sample.burn_in + static_cast<int>(t) << ',' << format_double(s.theta);
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double(s.phi(j));
    for (Eigen::Index j = 0; j < d; ++j) out << ',' << (s.z[j] ? 1 : 0);
    if (working) {
      const WorkingModelState& w = sample.working[t];
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << (w.u[j] ? 1 : 0);
      for (Eigen::Index j = 0; j < d; ++j) out << ',' << format_double(w.beta(j));
      out << ',' << format_double(w.sigma2_e);
    }
    out << '\n';
  }
}

void write_metrics_csv(std::ostream& out, const std::vector<MetricsRow>& rows) {
  bool first = true;
  for (const char* c : kMetricsColumns) {
    out << (first ? "" : ",") << c;
    first = false;
  }
  out << '\n';
  for (const auto& r : rows) {
    out << r.scenario << ',' << model_name(r.model) << ',' << format_double(r.rho) << ',' << r.p
        << ',' << r.n << ',' << method_name(r.method) << ',' << opt_field(r.rbias) << ','
        << opt_field(r.se) << ',' << opt_field(r.mean_se_hat) << ',' << opt_field(r.cp) << ','
        << opt_field(r.tpr) << ',' << opt_field(r.tnr) << ',' << r.n_converged << ','
        << r.n_failed << ',' << opt_field(r.mc_se_of_cp) << '\n';
  }
}

std::vector<MetricsRow> read_metrics_csv(std::istream& in) {
  std::string line;
  std::size_t lineno = 0;
  if (!std::getline(in, line)) throw DataError("metrics CSV is empty");
  ++lineno;
  const auto header = split_fields(line);
  constexpr std::size_t ncols = std::size(kMetricsColumns);
  if (header.size() != ncols) throw DataError("line 1: unexpected metrics header");
  for (std::size_t k = 0; k < ncols; ++k)
    if (trim(header[k]) != kMetricsColumns[k])
      throw DataError(std::string("line 1: expected column '") + kMetricsColumns[k] + "'");

  std::vector<MetricsRow> rows;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    const auto f = split_fields(line);
    if (f.size() != ncols)
      throw DataError("line " + std::to_string(lineno) + ": expected " + std::to_string(ncols) +
                      " fields");
    MetricsRow r;
    r.scenario = std::string(trim(f[0]));
    try {
      r.model = parse_model(trim(f[1]));
      r.method = parse_method(trim(f[5]));
    } catch (const ConfigError& e) {
      throw DataError("line " + std::to_string(lineno) + ": " + e.what());
    }
    const auto rho = read_opt(f[2], lineno, "rho");
    if (!rho) fail_at(lineno, "rho", "missing");
    r.rho = *rho;
    r.p = read_int(f[3], lineno, "p");
    r.n = read_int(f[4], lineno, "n");
    r.rbias = read_opt(f[6], lineno, "rbias");
    r.se = read_opt(f[7], lineno, "se");
    r.mean_se_hat = read_opt(f[8], lineno, "mean_se_hat");
    r.cp = read_opt(f[9], lineno, "cp");
    r.tpr = read_opt(f[10], lineno, "tpr");
    r.tnr = read_opt(f[11], lineno, "tnr");
    r.n_converged = read_int(f[12], lineno, "n_converged");
    r.n_failed = read_int(f[13], lineno, "n_failed");
    r.mc_se_of_cp = read_opt(f[14], lineno, "mc_se_of_cp");
    rows.push_back(std::move(r));
  }
  return rows;
}

}  // namespace sparseps
