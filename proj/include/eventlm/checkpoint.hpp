#pragma once

#include "eventlm/model.hpp"

#include <filesystem>

#include <nlohmann/json.hpp>

namespace eventlm {

inline constexpr const char* kCheckpointFormat = "eventlm-checkpoint/1";

// JSON container: format tag, model config, vocabulary, type table, optional
// adapter config and every parameter tensor (column-major data).
[[nodiscard]] nlohmann::json checkpoint_to_json(const Model& model);
[[nodiscard]] Model checkpoint_from_json(const nlohmann::json& j);

void save_checkpoint(const Model& model, const std::filesystem::path& path);
[[nodiscard]] Model load_checkpoint(const std::filesystem::path& path);

[[nodiscard]] nlohmann::json model_config_to_json(const ModelConfig& cfg);
[[nodiscard]] ModelConfig model_config_from_json(const nlohmann::json& j);

}  // namespace eventlm
