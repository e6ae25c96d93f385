#pragma once

#include "gemmgan/core/error.hpp"
#include "gemmgan/data/image.hpp"
#include "gemmgan/nn/modules.hpp"

#include <memory>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace gemmgan::encoders {

inline constexpr Index kDefaultDim = 256;
inline constexpr Index kDefaultTokenCap = 256;
inline constexpr Index kDefaultPatchCount = 256;

// Frozen per-tile feature extractor. Implementations are immutable after
// construction and safe to call concurrently.
class ImageEncoder {
 public:
  virtual ~ImageEncoder() = default;
  virtual std::string name() const = 0;
  virtual Index native_dim() const = 0;
  virtual RowVector encode(const data::RgbImage& tile) const = 0;
  // Values of the pretrained (non-trainable) layers.
  virtual std::vector<double> frozen_parameters() const = 0;
};

// Frozen token embedder. Row 0 of the result is the CLS token.
class TextEncoder {
 public:
  virtual ~TextEncoder() = default;
  virtual std::string name() const = 0;
  virtual Index native_dim() const = 0;
  virtual Matrix encode(const std::string& text, Index max_tokens) const = 0;
  virtual std::vector<double> frozen_parameters() const = 0;
};

// 12 color/texture statistics per tile, all in [0, 1]:
// mean RGB, std RGB, mean saturation, mean value, mean gray,
// mean |horizontal gradient|, mean |vertical gradient|, dark-pixel fraction.
class StubImageEncoder final : public ImageEncoder {
 public:
  static constexpr Index kNativeDim = 12;
  std::string name() const override { return "stub-image"; }
  Index native_dim() const override { return kNativeDim; }
  RowVector encode(const data::RgbImage& tile) const override;
  std::vector<double> frozen_parameters() const override;
};

// Hashed bag-of-words: each token is the one-hot of its bucket; the CLS row
// is the L2-normalized bucket histogram of the kept tokens.
class StubTextEncoder final : public TextEncoder {
 public:
  static constexpr Index kNativeDim = 64;
  std::string name() const override { return "stub-text"; }
  Index native_dim() const override { return kNativeDim; }
  Matrix encode(const std::string& text, Index max_tokens) const override;
  std::vector<double> frozen_parameters() const override;

  static std::vector<std::string> tokenize(const std::string& text);
  static Index bucket(std::string_view token);
};

std::shared_ptr<const ImageEncoder> make_image_encoder(std::string_view name);
std::shared_ptr<const TextEncoder> make_text_encoder(std::string_view name);

// Frozen encoder plus its trainable native_dim -> d linear projection.
template <typename Encoder>
class EncoderAdapter {
  std::shared_ptr<const Encoder> encoder_;

 public:
  EncoderAdapter() = default;
  EncoderAdapter(std::shared_ptr<const Encoder> encoder, Index dim, const std::string& param_prefix, Rng& rng)
      : encoder_(std::move(encoder)),
        projection(param_prefix + ".projection", encoder_->native_dim(), dim, rng) {}

  const Encoder& encoder() const { return *encoder_; }
  std::string name() const { return encoder_->name(); }
  Index native_dim() const { return encoder_->native_dim(); }
  Index dim() const { return projection.out_dim(); }
  static constexpr bool frozen() { return true; }

  nn::Var project(nn::Tape& tape, const nn::Var& native) { return projection.forward(tape, native); }
  Matrix project(const Matrix& native) const { return projection.apply(native); }
  void collect(nn::ParameterList& out) { projection.collect(out); }

  nn::Linear projection;
};

using ImageAdapter = EncoderAdapter<ImageEncoder>;
using TextAdapter = EncoderAdapter<TextEncoder>;

struct PatchEmbeddingMatrix {
  Matrix values;  // N x d
  std::string slide_id;
  std::vector<std::string> patch_refs;
};

struct TextEmbeddingMatrix {
  Matrix values;  // M x d, row 0 = CLS
  static constexpr Index cls_index = 0;
};

// Native features for each tile, row i from tile i only.
Matrix encode_native(const ImageEncoder& encoder, std::span<const data::RgbImage> tiles);

PatchEmbeddingMatrix encode_patches(const ImageAdapter& adapter, std::span<const data::RgbImage> tiles,
                                    const std::string& slide_id = {}, std::vector<std::string> patch_refs = {});

TextEmbeddingMatrix encode_text(const TextAdapter& adapter, const std::string& text,
                                Index max_tokens = kDefaultTokenCap);

// Indices of N tiles: without replacement if available >= N, else with.
std::vector<Index> sample_patch_indices(Index available, Index n, Rng& rng);

template <typename T>
std::vector<T> sample_patches(std::span<const T> tiles, Index n, std::uint64_t seed) {
  Rng rng = derive_rng(seed, {0x7a7c});
  std::vector<T> out;
  for (auto i : sample_patch_indices(static_cast<Index>(tiles.size()), n, rng)) {
    out.push_back(tiles[static_cast<std::size_t>(i)]);
  }
  return out;
}

}  // namespace gemmgan::encoders
