#pragma once

#include <filesystem>
#include <optional>

#include <json.hpp>

#include "p2p/ktu/model.hpp"

namespace p2p::ktu {

void to_json(nlohmann::json& j, const KtuConfig& c);
void from_json(const nlohmann::json& j, KtuConfig& c);

/// Binary artifact: magic, version, config JSON, then every named tensor.
void save_checkpoint(const std::filesystem::path& path, const KtuParameters& params);

/// When `expected` is given, a checkpoint trained under a different
/// architecture is rejected with CheckpointError.
KtuParameters load_checkpoint(const std::filesystem::path& path, const std::optional<KtuConfig>& expected = std::nullopt);

/// True when two configs describe the same tensor layout.
bool same_architecture(const KtuConfig& a, const KtuConfig& b);

}  // namespace p2p::ktu
