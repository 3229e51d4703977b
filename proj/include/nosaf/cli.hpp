#pragma once

#include <string>
#include <vector>

#include <json.hpp>

namespace nosaf {

// Entry point behind main(): full argv (without the program name).
// Exit codes: 0 success, 1 runtime failure (partial outputs are kept),
// 2 usage or config validation error (nothing is written).
int cli_run(const std::vector<std::string>& args);

// Applies --set dotted.path=value overrides onto a config document.
// The value is parsed as JSON when possible, else taken as a string.
// Paths must address existing keys (unknown keys are a usage error).
nlohmann::json apply_overrides(nlohmann::json config, const std::vector<std::string>& sets);

// Fills defaults, rejects unknown keys / out-of-domain values (UsageError).
nlohmann::json resolve_config(const nlohmann::json& given);

}  // namespace nosaf
