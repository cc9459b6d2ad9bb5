#pragma once

#include <json.hpp>
#include <string>

#include "phaselock/config.hpp"

namespace phaselock {

nlohmann::json to_json(const ScenarioConfig& cfg);

/// Strict parse: unknown keys, wrong types and a missing or mismatched
/// schema_version are all reported (as ConfigError) with their JSON path.
/// Keys that are absent keep the values of `base`.
ScenarioConfig config_from_json(const nlohmann::json& j, const ScenarioConfig& base = default_config());

/// Parses text; syntax errors are reported with line and column.
ScenarioConfig config_from_text(const std::string& text, const ScenarioConfig& base = default_config());

/// Sets one value by dotted path ("reference_lsd.mu_out"). Throws ConfigError
/// for paths that do not exist in the schema.
void set_config_value(ScenarioConfig& cfg, const std::string& path, const nlohmann::json& value);

/// FNV-1a of the canonical JSON form, as 16 hex digits.
std::string config_hash(const ScenarioConfig& cfg);

}  // namespace phaselock
