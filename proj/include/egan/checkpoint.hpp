#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include <json.hpp>

#include "egan/dataset.hpp"
#include "egan/models.hpp"

namespace egan {

inline constexpr int kCheckpointFormatVersion = 1;

/// Named float32 tensors in a portable little-endian layout:
///   "EGANPAR1" u32 count { u32 name_len, name, u32 rank, u32 dims[rank], f32 data[] }*
struct ParameterBlob {
  std::vector<std::string> names;
  std::vector<Tensor<float>> tensors;
};

std::vector<std::uint8_t> encode_blob(const ParameterBlob& blob);
ParameterBlob decode_blob(const std::vector<std::uint8_t>& bytes);
void write_blob(const std::filesystem::path& path, const ParameterBlob& blob);
ParameterBlob read_blob(const std::filesystem::path& path);

nlohmann::json to_json(const NetworkConfig& config);
NetworkConfig network_config_from_json(const nlohmann::json& j);

struct Checkpoint {
  ModelState state;
  AttributeSchema schema;
  nlohmann::json manifest;
  std::filesystem::path path;

  /// Stable identifier: directory name plus a digest of the manifest.
  std::string id() const;
};

/// Writes one checkpoint directory: manifest.json plus a parameter blob and an
/// optimizer blob per network. `metrics` is stored verbatim in the manifest.
void save_checkpoint(const ModelState& state, const AttributeSchema& schema, const std::filesystem::path& dir,
                     const nlohmann::json& metrics = nlohmann::json::object(),
                     const nlohmann::json& extra = nlohmann::json::object());

/// Accepts a checkpoint directory or a checkpoint root holding a "latest" pointer.
Checkpoint load_checkpoint(const std::filesystem::path& path);
std::filesystem::path resolve_checkpoint(const std::filesystem::path& path);

/// root/ckpt-<step, 8 digits>
std::filesystem::path numbered_checkpoint(const std::filesystem::path& root, std::int64_t step);
void write_latest_pointer(const std::filesystem::path& root, const std::filesystem::path& checkpoint);

/// Hex BLAKE2b digest of arbitrary bytes (16-byte output).
std::string short_digest(std::string_view bytes);
std::string schema_hash(const AttributeSchema& schema);

/// Bitwise equality of parameters, optimizer moments, step counters and RNG.
bool states_identical(const ModelState& a, const ModelState& b);

}  // namespace egan
