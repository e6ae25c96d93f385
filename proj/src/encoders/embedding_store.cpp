#include "gemmgan/encoders/embedding_store.hpp"

#include "gemmgan/core/error.hpp"

#include <nlohmann/json.hpp>
#include <zlib.h>

#include <bit>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <mutex>

namespace gemmgan::encoders {
namespace {

static_assert(std::endian::native == std::endian::little, "embedding store assumes a little-endian host");

void validate_key(const std::string& key) {
  if (key.empty()) throw Error(ErrorCode::kInvalidArgument, "empty embedding key");
  for (char c : key) {
    const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '-' ||
                    c == '_' || c == '.';
    if (!ok) throw Error(ErrorCode::kInvalidArgument, "embedding key '" + key + "' has unsupported characters");
  }
}

std::mutex& key_mutex(const std::filesystem::path& path) {
  static std::mutex table_mutex;
  static std::map<std::string, std::mutex> table;
  std::lock_guard lock(table_mutex);
  return table[path.string()];
}

std::uint32_t crc_of(const void* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, static_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

void write_atomically(const std::filesystem::path& path, const void* data, std::size_t n) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(static_cast<const char*>(data), static_cast<std::streamsize>(n));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace

EmbeddingStore::EmbeddingStore(std::filesystem::path root) : root_(std::move(root)) {
  std::filesystem::create_directories(root_);
}

void EmbeddingStore::save(const std::string& key, const FloatMatrix& values, const std::string& encoder) const {
  validate_key(key);
  const auto bin = root_ / (key + ".bin");
  const auto bytes = static_cast<std::size_t>(values.size()) * sizeof(float);
  nlohmann::ordered_json side;
  side["n_rows"] = values.rows();
  side["dim"] = values.cols();
  side["dtype"] = "f32";
  side["encoder"] = encoder;
  side["checksum"] = crc_of(values.data(), bytes);
  const std::string sidecar = side.dump(2) + "\n";

  std::lock_guard lock(key_mutex(bin));
  write_atomically(bin, values.data(), bytes);
  write_atomically(root_ / (key + ".json"), sidecar.data(), sidecar.size());
}

EmbeddingEntryInfo EmbeddingStore::info(const std::string& key) const {
  validate_key(key);
  const auto path = root_ / (key + ".json");
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kKeyNotFound, "no embedding entry '" + key + "'");
  try {
    const auto j = nlohmann::json::parse(in);
    EmbeddingEntryInfo info;
    info.n_rows = j.at("n_rows").get<Index>();
    info.dim = j.at("dim").get<Index>();
    info.dtype = j.at("dtype").get<std::string>();
    info.encoder = j.at("encoder").get<std::string>();
    info.checksum = j.at("checksum").get<std::uint32_t>();
    if (info.dtype != "f32") throw Error(ErrorCode::kCorruptEntry, "unsupported dtype " + info.dtype);
    return info;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptEntry, "bad sidecar for '" + key + "': " + e.what());
  }
}

bool EmbeddingStore::contains(const std::string& key) const {
  validate_key(key);
  return std::filesystem::exists(root_ / (key + ".json")) && std::filesystem::exists(root_ / (key + ".bin"));
}

FloatMatrix EmbeddingStore::load(const std::string& key) const {
  const EmbeddingEntryInfo meta = info(key);
  const auto bin = root_ / (key + ".bin");
  std::ifstream in(bin, std::ios::binary);
  if (!in) throw Error(ErrorCode::kKeyNotFound, "no embedding payload for '" + key + "'");
  const auto expected = static_cast<std::uintmax_t>(meta.n_rows * meta.dim) * sizeof(float);
  if (std::filesystem::file_size(bin) != expected) {
    throw Error(ErrorCode::kCorruptEntry, "payload size mismatch for '" + key + "'");
  }
  FloatMatrix values(meta.n_rows, meta.dim);
  in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(expected));
  if (!in) throw Error(ErrorCode::kCorruptEntry, "short read for '" + key + "'");
  if (crc_of(values.data(), static_cast<std::size_t>(expected)) != meta.checksum) {
    throw Error(ErrorCode::kCorruptEntry, "checksum mismatch for '" + key + "'");
  }
  return values;
}

std::string content_key(const std::string& encoder, std::span<const std::uint8_t> content) {
  std::uint64_t h = 1469598103934665603ull;
  for (auto b : content) {
    h ^= b;
    h *= 1099511628211ull;
  }
  char hex[17];
  std::snprintf(hex, sizeof(hex), "%016llx", static_cast<unsigned long long>(h));
  return encoder + "-" + hex;
}

}  // namespace gemmgan::encoders
