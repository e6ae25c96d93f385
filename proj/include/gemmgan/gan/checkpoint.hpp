#pragma once

#include "gemmgan/gan/model.hpp"

#include <nlohmann/json.hpp>

#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

namespace gemmgan::gan {

inline constexpr std::uint32_t kCheckpointVersion = 1;

// Layout: "GMGANCKP" | u32 version | u64 metadata length | metadata JSON |
// u32 tensor count | per tensor (u32 name length, name, u64 rows, u64 cols,
// f32 row-major data) | u32 CRC-32 of everything before it. Little-endian.
struct CheckpointData {
  nlohmann::json metadata;  // {format_version, kind, variant, step, seed, g, d, config, shape, optimizer_steps, extra}
  std::vector<std::pair<std::string, FloatMatrix>> tensors;

  const FloatMatrix* find(const std::string& name) const;
};

// Written to a temporary file and renamed into place.
void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& extra = nlohmann::json::object());

CheckpointData read_checkpoint(const std::filesystem::path& path);  // kCorruptCheckpoint, kVersionMismatch, kIoError

// Shapes and names must match the model exactly, otherwise kVersionMismatch.
void restore_checkpoint(Model& model, const CheckpointData& data);

// Rebuilds the model described by the metadata and restores its state.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path);

}  // namespace gemmgan::gan
