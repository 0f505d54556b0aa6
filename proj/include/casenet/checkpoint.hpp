#pragma once
#include <filesystem>
#include <optional>
#include <string>

#include <json.hpp>

#include "casenet/data.hpp"
#include "casenet/layers.hpp"

namespace casenet {

nlohmann::json model_config_to_json(const ModelConfig& cfg);
ModelConfig model_config_from_json(const nlohmann::json& j);

/// A checkpoint is a directory: manifest.json (config, normalization stats,
/// parameter names + shapes) plus one raw little-endian f64 blob per
/// parameter. Written atomically (temp dir + rename).
void save_checkpoint(const std::filesystem::path& path, const ParameterStore& params,
                     const ModelConfig& cfg,
                     const std::optional<ChannelStats>& stats = std::nullopt);

struct Checkpoint {
    ParameterStore params;
    ModelConfig cfg;
    std::optional<ChannelStats> stats;
};

Checkpoint load_checkpoint(const std::filesystem::path& path);

/// Write-then-rename so readers never observe a partial file.
void write_text_atomic(const std::filesystem::path& path, const std::string& content);

}  // namespace casenet
