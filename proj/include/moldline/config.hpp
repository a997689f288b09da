#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>

#include <nlohmann/json.hpp>

#include "moldline/descriptors.hpp"
#include "moldline/synth.hpp"

namespace moldline {

inline constexpr const char* kConfigEnvVar = "MOLDLINE_CONFIG";

/// The full shipped configuration; config/default.json is a copy of it.
nlohmann::json default_config();

/// Deep-merges `overrides` onto `base`. Keys absent from `base` raise
/// BadConfig, except model and grid entries, which are checked against the
/// model registry.
nlohmann::json merge_config(const nlohmann::json& base, const nlohmann::json& overrides);

/// Explicit path, else $MOLDLINE_CONFIG, else none.
std::optional<std::filesystem::path> resolve_config_path(const std::optional<std::string>& flag);

/// Defaults merged with the resolved config file, if any.
nlohmann::json load_config(const std::optional<std::string>& flag);

DescriptorConfig descriptor_config(const nlohmann::json& cfg);
synth::SynthConfig synth_config(const nlohmann::json& cfg);

/// Registry defaults, then cfg.models[kind], then a seed derived from the
/// run seed and the kind.
nlohmann::json model_hyperparameters(const nlohmann::json& cfg, const std::string& kind, std::uint64_t seed);

}  // namespace moldline
