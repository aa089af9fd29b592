#pragma once

#include "sparseps/model.hpp"

#include <map>
#include <optional>
#include <string>
#include <string_view>

#include <json.hpp>

namespace sparseps {

enum class Method { kPs, kTps, kLasso, kBsps, kObsps };

std::string_view method_name(Method m) noexcept;
/// Accepts upper or lower case ("ps", "BSPS", ...). Throws ConfigError otherwise.
Method parse_method(std::string_view name);

/// Point estimate, standard error and interval of theta from one estimator.
struct EstimateReport {
  double theta_hat = 0.0;
  double se_hat = 0.0;
  double ci_low = 0.0;
  double ci_high = 0.0;
  Method method = Method::kPs;
  std::optional<ModelIndicator> selected_support;
  bool converged = false;
  std::map<std::string, double> diagnostics;
};

nlohmann::ordered_json to_json(const EstimateReport& r);
EstimateReport report_from_json(const nlohmann::json& j);

}  // namespace sparseps
