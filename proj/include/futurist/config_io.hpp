#pragma once

#include <filesystem>
#include <string>

#include "futurist/core_types.hpp"

namespace futurist {

// Flat `key = value` text, one field path per line, `#` starts a comment.
// Reals are written in shortest round-trip form so parse(serialize(c)) == c bit for bit.
std::string serialize_config(const ModelConfig& cfg);

// Keys absent from `text` keep their value from `base`. If any `modalities.<i>.*` key is
// present the modality list is rebuilt from the file alone. Throws ConfigError.
ModelConfig parse_config(const std::string& text, const ModelConfig& base = desk_config());

ModelConfig load_config(const std::filesystem::path& path, const ModelConfig& base = desk_config());
void save_config(const ModelConfig& cfg, const std::filesystem::path& path);

// Sets one field path (same keys as the file format) on an existing config.
void apply_setting(ModelConfig& cfg, const std::string& key, const std::string& value);

}  // namespace futurist
