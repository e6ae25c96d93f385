#pragma once

#include "gemmgan/core/types.hpp"

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>

namespace gemmgan::encoders {

struct EmbeddingEntryInfo {
  Index n_rows = 0;
  Index dim = 0;
  std::string dtype = "f32";
  std::string encoder;
  std::uint32_t checksum = 0;  // CRC-32 of the payload bytes
};

// Directory of entries: <key>.bin holds little-endian float32 rows,
// <key>.json the sidecar {n_rows, dim, dtype, encoder, checksum}.
// Writes go through a temporary file and an atomic rename.
class EmbeddingStore {
 public:
  explicit EmbeddingStore(std::filesystem::path root);

  void save(const std::string& key, const FloatMatrix& values, const std::string& encoder) const;
  FloatMatrix load(const std::string& key) const;  // kKeyNotFound / kCorruptEntry
  EmbeddingEntryInfo info(const std::string& key) const;
  bool contains(const std::string& key) const;

  const std::filesystem::path& root() const { return root_; }

 private:
  std::filesystem::path root_;
};

// "<encoder>-<16 hex digits>" from a 64-bit FNV-1a hash of the content.
std::string content_key(const std::string& encoder, std::span<const std::uint8_t> content);

}  // namespace gemmgan::encoders
