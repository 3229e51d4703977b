#pragma once

#include <filesystem>
#include <utility>

#include <json.hpp>

#include "nosaf/model.hpp"

namespace nosaf {

// Strict round-trip: every ModelConfig field, nothing else.
nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);  // rejects unknown keys

// Single JSON document: tool version, the resolved model config,
// feature_dim / num_classes, and every parameter field as
// {"shape": [r, c], "values": [row-major doubles]} keyed by its path.
// Values are written with 17 significant digits and round-trip exactly.
void save_checkpoint(const std::filesystem::path& path, const ModelConfig& cfg,
                     const ModelParams& params);

// Rejects (IntegrityError) any missing / unknown parameter path and any
// shape that disagrees with what the stored config implies.
std::pair<ModelConfig, ModelParams> load_checkpoint(const std::filesystem::path& path);

}  // namespace nosaf
