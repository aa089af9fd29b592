#include "config.hpp"

#include "sparseps/errors.hpp"

#include <algorithm>
#include <fstream>
#include <set>
#include <sstream>

namespace sparseps::cli {

namespace {

std::string where(const YAML::Node& node) {
  const auto mark = node.Mark();
  if (mark.line < 0) return "";
  return " (line " + std::to_string(mark.line + 1) + ")";
}

template <class T>
T get(const YAML::Node& node, const std::string& key) {
  try {
    return node.as<T>();
  } catch (const YAML::Exception&) {
    throw ConfigError("bad value for '" + key + "'" + where(node));
  }
}

void check_keys(const YAML::Node& map, const std::set<std::string>& allowed,
                const std::string& section) {
  if (!map.IsMap()) throw ConfigError("'" + section + "' must be a mapping" + where(map));
  for (const auto& kv : map) {
    const auto key = kv.first.as<std::string>();
    if (!allowed.count(key)) {
      throw ConfigError("unknown key '" + (section.empty() ? key : section + "." + key) + "'" +
                        where(kv.first));
    }
  }
}

void read_chain(const YAML::Node& node, const std::string& section, ChainOptions& chain) {
  if (node["burn_in"]) chain.burn_in = get<int>(node["burn_in"], section + ".burn_in");
  if (node["kept"]) chain.kept = get<int>(node["kept"], section + ".kept");
  if (node["max_failure_fraction"])
    chain.max_failure_fraction =
        get<double>(node["max_failure_fraction"], section + ".max_failure_fraction");
}

}  // namespace

YAML::Node parse_config_text(const std::string& text, const std::string& origin) {
  try {
    YAML::Node root = YAML::Load(text);
    if (root.IsNull()) root = YAML::Node(YAML::NodeType::Map);
    return root;
  } catch (const YAML::ParserException& e) {
    throw ConfigError(origin + ": line " + std::to_string(e.mark.line + 1) + ", column " +
                      std::to_string(e.mark.column + 1) + ": " + e.msg);
  }
}

YAML::Node load_config_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read config '" + path + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str(), path);
}

void apply_override(YAML::Node& root, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos || eq == 0)
    throw ConfigError("override '" + assignment + "' is not of the form key=value");
  const std::string key = assignment.substr(0, eq);
  const std::string value = assignment.substr(eq + 1);

  std::vector<std::string> path;
  std::stringstream ks(key);
  for (std::string part; std::getline(ks, part, '.');) {
    if (part.empty()) throw ConfigError("override key '" + key + "' has an empty component");
    path.push_back(part);
  }
  YAML::Node parsed;
  try {
    parsed = YAML::Load(value);
  } catch (const YAML::ParserException&) {
    throw ConfigError("override value for '" + key + "' is not valid YAML");
  }
  // yaml-cpp nodes are handles; reassigning a handle would rebind it, so
  // walk with fresh handles per level.
  if (path.size() == 1) {
    root[path[0]] = parsed;
    return;
  }
  YAML::Node section = root[path[0]];
  if (!section.IsDefined() || section.IsNull()) {
    root[path[0]] = YAML::Node(YAML::NodeType::Map);
    section = root[path[0]];
  }
  for (std::size_t k = 1; k + 1 < path.size(); ++k) {
    YAML::Node child = section[path[k]];
    if (!child.IsDefined() || child.IsNull()) {
      section[path[k]] = YAML::Node(YAML::NodeType::Map);
      child = section[path[k]];
    }
    section.reset(child);
  }
  section[path.back()] = parsed;
}

std::vector<Method> parse_method_list(const std::string& list) {
  std::vector<Method> out;
  std::stringstream ss(list);
  for (std::string item; std::getline(ss, item, ',');) {
    const auto first = item.find_first_not_of(" \t");
    if (first == std::string::npos) continue;
    item = item.substr(first, item.find_last_not_of(" \t") - first + 1);
    const Method m = parse_method(item);
    if (std::find(out.begin(), out.end(), m) == out.end()) out.push_back(m);
  }
  if (out.empty()) throw ConfigError("empty method list");
  return out;
}

ScenarioConfig scenario_from_yaml(const YAML::Node& root) {
  check_keys(root,
             {"model", "rho", "p", "n", "B", "seed", "level", "workers", "methods", "bsps",
              "obsps", "lasso", "priors"},
             "");
  ScenarioConfig c;
  if (root["model"]) {
    try {
      c.model = parse_model(get<std::string>(root["model"], "model"));
    } catch (const ConfigError& e) {
      throw ConfigError(std::string(e.what()) + where(root["model"]));
    }
  }
  if (root["rho"]) c.rho = get<double>(root["rho"], "rho");
  if (root["p"]) c.p = get<int>(root["p"], "p");
  if (root["n"]) c.n = get<int>(root["n"], "n");
  if (root["B"]) c.B = get<int>(root["B"], "B");
  if (root["seed"]) c.seed = get<std::uint64_t>(root["seed"], "seed");
  if (root["level"]) c.level = get<double>(root["level"], "level");
  if (root["workers"]) c.workers = get<int>(root["workers"], "workers");
  if (const auto m = root["methods"]) {
    if (m.IsScalar()) {
      c.methods = parse_method_list(m.as<std::string>());
    } else if (m.IsSequence()) {
      std::string joined;
      for (const auto& item : m) joined += get<std::string>(item, "methods") + ",";
      c.methods = parse_method_list(joined);
    } else {
      throw ConfigError("'methods' must be a list" + where(m));
    }
  }
  if (const auto b = root["bsps"]) {
    check_keys(b, {"burn_in", "kept", "max_failure_fraction"}, "bsps");
    read_chain(b, "bsps", c.bsps_chain);
  }
  if (const auto o = root["obsps"]) {
    check_keys(o, {"burn_in", "kept", "max_failure_fraction", "working_sweeps"}, "obsps");
    read_chain(o, "obsps", c.obsps.chain);
    if (o["working_sweeps"])
      c.obsps.working_sweeps = get<int>(o["working_sweeps"], "obsps.working_sweeps");
  }
  if (const auto l = root["lasso"]) {
    check_keys(l, {"folds", "grid"}, "lasso");
    if (l["folds"]) c.lasso_folds = get<int>(l["folds"], "lasso.folds");
    if (l["grid"]) c.lasso_grid = get<int>(l["grid"], "lasso.grid");
  }
  if (const auto pr = root["priors"]) {
    check_keys(pr, {"nu0", "nu1", "w", "xi", "gamma0", "gamma1", "c1", "c2"}, "priors");
    auto& s = c.priors;
    for (auto [key, field] : {std::pair{"nu0", &s.nu0}, {"nu1", &s.nu1}, {"w", &s.w},
                              {"xi", &s.xi}, {"gamma0", &s.gamma0}, {"gamma1", &s.gamma1},
                              {"c1", &s.c1}, {"c2", &s.c2}}) {
      if (pr[key]) *field = get<double>(pr[key], std::string("priors.") + key);
    }
  }
  return c;
}

}  // namespace sparseps::cli
