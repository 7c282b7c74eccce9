#pragma once

#include "probdr/cli/config.hpp"
#include "probdr/errors.hpp"

#include <string>
#include <vector>

namespace probdr::cli {

inline constexpr const char* kFormatVersion = "1.0";

int exit_code(ErrorKind kind);

/// Runs one command with a fully resolved configuration; throws probdr::Error.
void execute(Command command, const nlohmann::json& config);

/// Full command line (args[0] is the program name). Returns the process exit
/// code; failures print a single `error kind=... code=... message="..."` line
/// on stderr.
int run(const std::vector<std::string>& args);

}  // namespace probdr::cli
