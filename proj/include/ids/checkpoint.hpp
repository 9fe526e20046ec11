#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "ids/data.hpp"
#include "ids/model.hpp"

namespace ids {

/// Binary checkpoint layout (little endian):
///   magic "IDSCKPT\0" | u32 version | u64 n, n bytes of metadata JSON |
///   u64 tensor count | per tensor: u32 name length, name, u32 rank,
///   rank x u64 dims, float64 values (row-major).
/// Tensors are written in named_parameters() order and always as float64,
/// so a file is readable by either floating width.
inline constexpr std::uint32_t kCheckpointVersion = 1;

/// Everything needed to rebuild the inference pipeline.
struct Checkpoint {
  ModelConfig config;
  FeatureSchema schema;
  Standardizer standardizer;
  nlohmann::json extra = nlohmann::json::object();
};

void save_checkpoint(const std::string& path, const Model& model, const Checkpoint& meta);

struct LoadedCheckpoint {
  Checkpoint meta;
  Model model;
};

/// Throws IoError for unreadable or malformed files and ConfigError when the
/// stored tensors do not match the architecture in the metadata.
LoadedCheckpoint load_checkpoint(const std::string& path);

nlohmann::json to_json(const FeatureSchema& schema);
FeatureSchema feature_schema_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Standardizer& s);
Standardizer standardizer_from_json(const nlohmann::json& j);

/// Lower-case hex SHA-256.
std::string sha256_hex(std::span<const std::uint8_t> bytes);
std::string sha256_file(const std::string& path);

}  // namespace ids
