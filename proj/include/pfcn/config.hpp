#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "json.hpp"
#include "pfcn/inference.hpp"
#include "pfcn/model.hpp"
#include "pfcn/position_targets.hpp"
#include "pfcn/trainer.hpp"

namespace pfcn {

/// Fully resolved run configuration.
struct RunConfig {
    nlohmann::json effective;  // the merged JSON tree, as echoed to disk
    uint64_t seed = 0;
    std::string train_dir;
    std::string val_dir;
    std::string points_file;
    ModelConfig model;
    StageGeometry geometry;
    TrainConfig train;
    InferenceConfig inference;
};

/// Every recognised key with its default value.
nlohmann::json default_config();

/// Defaults, then the JSON file (if any), then "a.b=value" overrides, then
/// PFCN_SEED from the environment when use_env. Unknown keys and type
/// mismatches raise ConfigError.
RunConfig load_run_config(const std::optional<std::filesystem::path>& file, const std::vector<std::string>& overrides,
                          bool use_env = true);

RunConfig config_from_json(const nlohmann::json& tree);

/// Merges src into dst, rejecting keys absent from dst. `where` prefixes error paths.
void merge_config(nlohmann::json& dst, const nlohmann::json& src, const std::string& where = "");

void apply_override(nlohmann::json& tree, const std::string& assignment);

void write_effective_config(const RunConfig& cfg, const std::filesystem::path& path);

}  // namespace pfcn
