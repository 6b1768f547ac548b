#pragma once

#include <string>

#include "needleforge/dataset.hpp"
#include "needleforge/elm.hpp"
#include "needleforge/inverse_controller.hpp"
#include "needleforge/scene_config.hpp"

namespace needleforge {

/// Everything a run needs, parsed from one `key = value` config file.
/// All quantities carry their unit in the key suffix; internally stored SI.
struct CliConfig {
    SceneConfig scene;
    ControlGains gains;
    ElmTrainConfig train;
    DataGenParams data;
};

CliConfig default_cli_config();

/// Parses `key = value` lines ('#' starts a comment). Unknown keys, wrong
/// arity, or invalid values raise ConfigError naming the key and line.
CliConfig parse_config_text(const std::string& text, const std::string& origin);
CliConfig parse_config_file(const std::string& path);

/// Canonical, reparseable form: fixed key order, full-precision values.
std::string serialize_config(const CliConfig& cfg);

/// FNV-1a hash of the canonical serialization, as 16 hex digits.
std::string config_hash_hex(const CliConfig& cfg);

}  // namespace needleforge
