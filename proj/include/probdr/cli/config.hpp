#pragma once

#include <json.hpp>

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace probdr::cli {

enum class Command { embed, predict, sample, compare };

std::string to_string(Command command);

/// Schema of a command: every accepted key with its default value. A null
/// default marks an optional path or number.
nlohmann::json default_config(Command command);

/// Named parameter bundles applied on top of the defaults.
nlohmann::json preset_config(Command command, const std::string& preset);

struct ConfigSources {
  std::optional<std::string> config_path;
  std::vector<std::string> overrides;  // key=value, value parsed as JSON when possible
  std::optional<std::uint64_t> seed;
  std::optional<std::string> out_dir;
  std::optional<std::string> preset;
};

/// defaults <- preset <- config file <- overrides <- --seed / --out.
/// Unknown keys and type mismatches throw ConfigError.
nlohmann::json resolve_config(Command command, const ConfigSources& sources);

}  // namespace probdr::cli
