#include "gemmgan/gan/checkpoint.hpp"

#include "gemmgan/core/error.hpp"

#include <zlib.h>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

namespace gemmgan::gan {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint format assumes a little-endian host");

constexpr char kMagic[8] = {'G', 'M', 'G', 'A', 'N', 'C', 'K', 'P'};

template <typename T>
void put(std::string& buf, T v) {
  buf.append(reinterpret_cast<const char*>(&v), sizeof(T));
}

class Reader {
 public:
  Reader(const std::string& buf, std::size_t end) : buf_(buf), end_(end) {}

  template <typename T>
  T get() {
    T v;
    std::memcpy(&v, take(sizeof(T)), sizeof(T));
    return v;
  }
  const char* take(std::size_t n) {
    if (n > end_ - pos_) throw Error(ErrorCode::kCorruptCheckpoint, "checkpoint truncated");
    const char* p = buf_.data() + pos_;
    pos_ += n;
    return p;
  }
  bool done() const { return pos_ == end_; }

 private:
  const std::string& buf_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

std::uint32_t crc_of(const char* data, std::size_t n) {
  return static_cast<std::uint32_t>(crc32(0L, reinterpret_cast<const Bytef*>(data), static_cast<uInt>(n)));
}

}  // namespace

const FloatMatrix* CheckpointData::find(const std::string& name) const {
  for (const auto& [k, v] : tensors) {
    if (k == name) return &v;
  }
  return nullptr;
}

void save_checkpoint(Model& model, const std::filesystem::path& path, const nlohmann::json& extra) {
  const auto& config = model.config();
  nlohmann::ordered_json meta;
  meta["format_version"] = kCheckpointVersion;
  meta["kind"] = kind_name(config.kind);
  meta["variant"] = fusion::variant_name(config.fusion.variant);
  meta["step"] = model.step();
  meta["seed"] = config.seed;
  meta["g"] = model.shape().genes;
  meta["d"] = config.fusion.dim;
  meta["config"] = to_json(config);
  meta["shape"] = {{"disease_types", model.shape().disease_types}, {"primary_sites", model.shape().primary_sites}};
  nlohmann::ordered_json steps = nlohmann::ordered_json::object();
  for (auto& [name, adam] : model.optimizers()) steps[name] = adam->steps();
  meta["optimizer_steps"] = steps;
  meta["extra"] = extra;
  const std::string meta_text = meta.dump();

  std::string buf(kMagic, sizeof(kMagic));
  put<std::uint32_t>(buf, kCheckpointVersion);
  put<std::uint64_t>(buf, meta_text.size());
  buf += meta_text;
  const auto tensors = model.state_tensors();
  put<std::uint32_t>(buf, static_cast<std::uint32_t>(tensors.size()));
  for (const auto& t : tensors) {
    put<std::uint32_t>(buf, static_cast<std::uint32_t>(t.name.size()));
    buf += t.name;
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value->rows()));
    put<std::uint64_t>(buf, static_cast<std::uint64_t>(t.value->cols()));
    const FloatMatrix f = to_float(*t.value);
    buf.append(reinterpret_cast<const char*>(f.data()), static_cast<std::size_t>(f.size()) * sizeof(float));
  }
  put<std::uint32_t>(buf, crc_of(buf.data(), buf.size()));

  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw Error(ErrorCode::kIoError, "cannot write " + tmp.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw Error(ErrorCode::kIoError, "short write to " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

CheckpointData read_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::kIoError, "cannot open checkpoint " + path.string());
  const std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  const std::size_t header = sizeof(kMagic) + sizeof(std::uint32_t);
  if (buf.size() < header + sizeof(std::uint32_t) || std::memcmp(buf.data(), kMagic, sizeof(kMagic)) != 0) {
    throw Error(ErrorCode::kCorruptCheckpoint, path.string() + " is not a checkpoint");
  }
  const std::size_t body = buf.size() - sizeof(std::uint32_t);
  std::uint32_t stored_crc;
  std::memcpy(&stored_crc, buf.data() + body, sizeof(stored_crc));
  if (crc_of(buf.data(), body) != stored_crc) {
    throw Error(ErrorCode::kCorruptCheckpoint, "checksum mismatch in " + path.string());
  }

  Reader r(buf, body);
  r.take(sizeof(kMagic));
  const auto version = r.get<std::uint32_t>();
  if (version != kCheckpointVersion) {
    throw Error(ErrorCode::kVersionMismatch, "checkpoint format version " + std::to_string(version) +
                                                 ", expected " + std::to_string(kCheckpointVersion));
  }
  CheckpointData data;
  const auto meta_len = r.get<std::uint64_t>();
  const char* meta = r.take(meta_len);
  try {
    data.metadata = nlohmann::json::parse(meta, meta + meta_len);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("bad checkpoint metadata: ") + e.what());
  }
  const auto count = r.get<std::uint32_t>();
  for (std::uint32_t i = 0; i < count; ++i) {
    const auto name_len = r.get<std::uint32_t>();
    std::string name(r.take(name_len), name_len);
    const auto rows = r.get<std::uint64_t>();
    const auto cols = r.get<std::uint64_t>();
    if (cols != 0 && rows > (body / sizeof(float)) / cols) throw Error(ErrorCode::kCorruptCheckpoint, "bad tensor shape");
    FloatMatrix m(static_cast<Index>(rows), static_cast<Index>(cols));
    const std::size_t n = static_cast<std::size_t>(rows * cols) * sizeof(float);
    if (n > 0) std::memcpy(m.data(), r.take(n), n);
    data.tensors.emplace_back(std::move(name), std::move(m));
  }
  if (!r.done()) throw Error(ErrorCode::kCorruptCheckpoint, "trailing bytes in checkpoint");
  return data;
}

void restore_checkpoint(Model& model, const CheckpointData& data) {
  const auto& meta = data.metadata;
  try {
    const auto g = meta.at("g").get<Index>();
    const auto d = meta.at("d").get<Index>();
    const auto kind = meta.at("kind").get<std::string>();
    if (g != model.shape().genes || d != model.config().fusion.dim || kind != kind_name(model.kind())) {
      throw Error(ErrorCode::kVersionMismatch,
                  "checkpoint is for kind " + kind + " with g=" + std::to_string(g) + ", d=" + std::to_string(d) +
                      "; model is " + std::string(kind_name(model.kind())) +
                      " with g=" + std::to_string(model.shape().genes) +
                      ", d=" + std::to_string(model.config().fusion.dim));
    }
    for (auto& t : model.state_tensors()) {
      const FloatMatrix* stored = data.find(t.name);
      if (stored == nullptr) throw Error(ErrorCode::kVersionMismatch, "checkpoint lacks tensor " + t.name);
      if (stored->rows() != t.value->rows() || stored->cols() != t.value->cols()) {
        throw Error(ErrorCode::kVersionMismatch, "tensor " + t.name + " has a different shape in the checkpoint");
      }
      *t.value = to_double(*stored);
    }
    const auto& steps = meta.at("optimizer_steps");
    for (auto& [name, adam] : model.optimizers()) adam->set_steps(steps.at(name).get<std::int64_t>());
    model.set_step(meta.at("step").get<std::int64_t>());
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("incomplete checkpoint metadata: ") + e.what());
  }
}

std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path) {
  const CheckpointData data = read_checkpoint(path);
  std::unique_ptr<Model> model;
  try {
    const auto& meta = data.metadata;
    TrainConfig config = train_config_from_json(meta.at("config"));
    config.seed = meta.at("seed").get<std::uint64_t>();
    ModelShape shape;
    shape.genes = meta.at("g").get<Index>();
    shape.disease_types = meta.at("shape").at("disease_types").get<std::vector<std::string>>();
    shape.primary_sites = meta.at("shape").at("primary_sites").get<std::vector<std::string>>();
    model = make_model(config, shape);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::kCorruptCheckpoint, std::string("incomplete checkpoint metadata: ") + e.what());
  }
  restore_checkpoint(*model, data);
  return model;
}

}  // namespace gemmgan::gan
