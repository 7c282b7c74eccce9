#include "probdr/cli/config.hpp"

#include "probdr/errors.hpp"

#include <fstream>

namespace probdr::cli {

using nlohmann::json;

namespace {

json embed_defaults() {
  return {
      {"input", nullptr},       {"algorithm", "pca"},      {"q", 2},
      {"seed", 0},              {"out", "."},              {"center", true},
      {"k", 10},                {"graph", "knn"},          {"epsilon", 1.0},
      {"laplacian", "normalized"}, {"kernel", "rbf"},      {"kernel_lengthscale", 1.0},
      {"kernel_degree", 2},     {"kernel_offset", 1.0},    {"lle_ridge", 1e-3},
      {"gamma", 1.0},           {"lengthscale", 1.0},      {"steps", 1},
      {"precision_ridge", 1e-8}, {"perplexity", 30.0},     {"n_neighbors", 15},
      {"a", 1.0},               {"b", 1.0},                {"learning_rate", 0.1},
      {"momentum", 0.8},        {"max_iters", 1000},       {"init", "random"},
      {"init_scale", 1e-2},
  };
}

json predict_defaults() {
  return {
      {"train", nullptr},       {"test", nullptr},         {"truth", nullptr},
      {"seed", 0},              {"out", "."},              {"q", 2},
      {"n_neighbors", 15},      {"a", 1.0},                {"b", 1.0},
      {"learning_rate", 0.1},   {"momentum", 0.8},         {"max_iters", 1000},
      {"init", "random"},       {"init_scale", 1e-2},      {"graph_mode", "data"},
      {"kappa", 1.0},           {"sigma_s", 1.0},          {"sigma_n", 0.5},
      {"fit_iters", 500},       {"fit_learning_rate", 0.05}, {"prediction_sigma_n", nullptr},
      {"graph_samples", 0},     {"variances", false},
  };
}

json sample_defaults() {
  return {
      {"seed", 0},     {"out", "."},        {"n", 100},      {"q", 1},
      {"low", -3.0},   {"high", 3.0},       {"family", "umap"}, {"a", 2.0},
      {"b", 1.0},      {"laplacian", "normalized"}, {"nu", "inf"}, {"t", 12.5},
      {"beta", 1.0},   {"columns", 1},
  };
}

json compare_defaults() {
  return {{"first", nullptr}, {"second", nullptr}, {"labels", nullptr}, {"seed", 0}, {"out", "."}, {"scale", true}};
}

bool compatible(const json& def, const json& value) {
  if (def.is_null()) return value.is_null() || value.is_string() || value.is_number();
  if (def.is_boolean()) return value.is_boolean();
  if (def.is_string()) return value.is_string();
  if (def.is_number_integer()) return value.is_number_integer();
  if (def.is_number()) return value.is_number();
  return false;
}

void merge(json& target, const json& layer, Command command, const std::string& source) {
  if (!layer.is_object()) throw ConfigError(source + " must be a JSON object");
  for (const auto& [key, value] : layer.items()) {
    if (!target.contains(key)) {
      throw ConfigError("unknown config key '" + key + "' for command " + to_string(command) + " (from " + source +
                        ")");
    }
    const json def = default_config(command).at(key);
    if (!compatible(def, value)) {
      throw ConfigError("config key '" + key + "' has the wrong type (from " + source + ")");
    }
    target[key] = value;
  }
}

json parse_override(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + text + "' must look like key=value");
  const std::string key = text.substr(0, eq);
  const std::string raw = text.substr(eq + 1);
  json value = json::parse(raw, nullptr, false);
  if (value.is_discarded()) value = raw;
  return {{key, value}};
}

}  // namespace

std::string to_string(Command command) {
  switch (command) {
    case Command::embed: return "embed";
    case Command::predict: return "predict";
    case Command::sample: return "sample";
    case Command::compare: return "compare";
  }
  return "unknown";
}

json default_config(Command command) {
  switch (command) {
    case Command::embed: return embed_defaults();
    case Command::predict: return predict_defaults();
    case Command::sample: return sample_defaults();
    case Command::compare: return compare_defaults();
  }
  return json::object();
}

json preset_config(Command command, const std::string& preset) {
  if (preset == "fig5" && command == Command::sample) {
    return {{"n", 200},         {"q", 1},     {"low", -3.0}, {"high", 3.0},  {"family", "umap"},
            {"a", 2.0},         {"b", 1.0},   {"laplacian", "normalized"},   {"nu", "inf"},
            {"t", 12.5},        {"columns", 200}};
  }
  throw ConfigError("unknown preset '" + preset + "' for command " + to_string(command));
}

json resolve_config(Command command, const ConfigSources& sources) {
  json config = default_config(command);
  if (sources.preset) merge(config, preset_config(command, *sources.preset), command, "preset");
  if (sources.config_path) {
    std::ifstream in(*sources.config_path);
    if (!in) throw ConfigError("cannot open config file '" + *sources.config_path + "'");
    json file = json::parse(in, nullptr, false);
    if (file.is_discarded()) throw ConfigError("config file '" + *sources.config_path + "' is not valid JSON");
    merge(config, file, command, "config file");
  }
  for (const auto& text : sources.overrides) merge(config, parse_override(text), command, "--set");
  if (sources.seed) config["seed"] = *sources.seed;
  if (sources.out_dir) config["out"] = *sources.out_dir;
  return config;
}

}  // namespace probdr::cli
