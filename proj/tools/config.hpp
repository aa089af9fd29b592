#pragma once

#include "sparseps/simulation.hpp"

#include <string>
#include <vector>

#include <yaml-cpp/yaml.h>

namespace sparseps::cli {

/// Parses YAML text. Syntax errors become ConfigError with the line number.
YAML::Node parse_config_text(const std::string& text, const std::string& origin = "<config>");
YAML::Node load_config_file(const std::string& path);

/// Applies `key=value` (dotted keys reach nested sections, e.g.
/// `bsps.burn_in=100`). The value is parsed as YAML.
void apply_override(YAML::Node& root, const std::string& assignment);

/// Maps the document onto a scenario. Unknown keys are rejected.
///
///   model: M1          rho: 0.0     p: 10    n: 200    B: 200
///   seed: 1            level: 0.95  workers: 1
///   methods: [ps, tps, lasso, bsps, obsps]
///   bsps:   {burn_in: 500, kept: 500}
///   obsps:  {burn_in: 500, kept: 500, working_sweeps: 20}
///   lasso:  {folds: 5, grid: 50}
///   priors: {nu0: 1e-4, nu1: 1e4, w: 0.5, xi: 0.5,
///            gamma0: 1e-4, gamma1: 1e4, c1: 1e-7, c2: 1e-7}
ScenarioConfig scenario_from_yaml(const YAML::Node& root);

/// Comma-separated method list, e.g. "ps,bsps".
std::vector<Method> parse_method_list(const std::string& list);

}  // namespace sparseps::cli
