#include "sparseps/report.hpp"

#include "sparseps/errors.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <limits>
#include <string>

namespace sparseps {

std::string_view method_name(Method m) noexcept {
  switch (m) {
    case Method::kPs: return "PS";
    case Method::kTps: return "TPS";
    case Method::kLasso: return "LASSO";
    case Method::kBsps: return "BSPS";
    case Method::kObsps: return "OBSPS";
  }
  return "?";
}

Method parse_method(std::string_view name) {
  std::string upper(name);
  std::transform(upper.begin(), upper.end(), upper.begin(),
                 [](unsigned char c) { return static_cast<char>(std::toupper(c)); });
  for (Method m : {Method::kPs, Method::kTps, Method::kLasso, Method::kBsps, Method::kObsps}) {
    if (upper == method_name(m)) return m;
  }
  throw ConfigError("unknown method '" + std::string(name) + "' (expected ps, tps, lasso, bsps, obsps)");
}

namespace {

// JSON has no NaN/inf; non-finite numbers are written as null.
nlohmann::ordered_json number(double v) {
  if (std::isfinite(v)) return v;
  return nullptr;
}

double read_number(const nlohmann::json& j) {
  return j.is_null() ? std::numeric_limits<double>::quiet_NaN() : j.get<double>();
}

}  // namespace

nlohmann::ordered_json to_json(const EstimateReport& r) {
  nlohmann::ordered_json j;
  j["theta_hat"] = number(r.theta_hat);
  j["se_hat"] = number(r.se_hat);
  j["ci_low"] = number(r.ci_low);
  j["ci_high"] = number(r.ci_high);
  j["method"] = std::string(method_name(r.method));
  if (r.selected_support) {
    nlohmann::ordered_json bits = nlohmann::ordered_json::array();
    for (auto b : r.selected_support->bits()) bits.push_back(static_cast<int>(b));
    j["selected_support"] = std::move(bits);
  } else {
    j["selected_support"] = nullptr;
  }
  j["converged"] = r.converged;
  nlohmann::ordered_json diag = nlohmann::ordered_json::object();
  for (const auto& [k, v] : r.diagnostics) diag[k] = number(v);
  j["diagnostics"] = std::move(diag);
  return j;
}

EstimateReport report_from_json(const nlohmann::json& j) {
  EstimateReport r;
  r.theta_hat = read_number(j.at("theta_hat"));
  r.se_hat = read_number(j.at("se_hat"));
  r.ci_low = read_number(j.at("ci_low"));
  r.ci_high = read_number(j.at("ci_high"));
  r.method = parse_method(j.at("method").get<std::string>());
  if (!j.at("selected_support").is_null()) {
    r.selected_support = ModelIndicator(j.at("selected_support").get<std::vector<std::uint8_t>>());
  }
  r.converged = j.at("converged").get<bool>();
  for (const auto& [k, v] : j.at("diagnostics").items()) r.diagnostics[k] = read_number(v);
  return r;
}

}  // namespace sparseps
