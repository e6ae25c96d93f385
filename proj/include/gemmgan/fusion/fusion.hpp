#pragma once

#include "gemmgan/encoders/encoders.hpp"
#include "gemmgan/nn/modules.hpp"

#include <array>
#include <memory>
#include <string>
#include <string_view>

namespace gemmgan::fusion {

enum class FusionVariant {
  kFull,
  kMeanImage,
  kTextClsOnly,
  kPatchTransformerOnly,
  kFilmOnly,
  kCrossAttentionOnly,
};

std::string_view variant_name(FusionVariant v);
FusionVariant parse_variant(std::string_view name);  // throws kUnknownVariant
const std::array<FusionVariant, 6>& all_variants();

struct FusionConfig {
  Index dim = 256;
  int heads = 4;
  int depth = 2;
  int ffn_multiplier = 4;
  double dropout = 0.1;
  FusionVariant variant = FusionVariant::kFull;
};

// gamma(c) = 1 + c Wg + bg and beta(c) = c Wb + bb with zero-initialized
// weights, so a fresh head is the identity.
class FilmHead {
 public:
  FilmHead() = default;
  FilmHead(const std::string& name, Index dim);

  // Each sample's gamma/beta (one row of text_cls) scales its own patch rows.
  nn::Var modulate(nn::Tape& tape, const nn::Var& patches, const nn::Var& text_cls,
                   const Segments& patch_segments);
  void collect(nn::ParameterList& out);

  nn::Linear gamma_residual;
  nn::Linear beta;
};

// Single-sample FiLM: out[i, c] = gamma(cls)[c] * patches[i, c] + beta(cls)[c].
Matrix film_modulate(FilmHead& head, const Matrix& patches, const RowVector& text_cls);

// Learnable CLS token prepended to each sample's patches, L pre-norm encoder
// blocks without positional encodings, and a final normalization.
class PatchTransformer {
 public:
  PatchTransformer() = default;
  PatchTransformer(const std::string& name, Index dim, int heads, int depth, Index ffn_width, Rng& rng);

  // Output rows per sample: [cls', patch'_1 .. patch'_N]; out_segments gets that grouping.
  nn::Var forward(nn::Tape& tape, const nn::Var& patches, const Segments& patch_segments,
                  Segments& out_segments, const nn::Dropout& drop);
  void collect(nn::ParameterList& out);

  nn::Parameter cls_token;
  std::vector<nn::TransformerBlock> blocks;
  nn::LayerNorm final_norm;
};

// Single-sample transformer pass: (N+1) x d, row 0 is the updated CLS.
Matrix patch_transformer_forward(PatchTransformer& transformer, const Matrix& patches);

// Single-query-set attention: q x d output (evaluation mode).
Matrix multi_head_attention(nn::MultiHeadAttention& mha, const Matrix& query, const Matrix& key,
                            const Matrix& value, nn::AttentionWeights* weights_out = nullptr);

// Intermediate values of one forward pass, for inspection and tests.
struct FusionTrace {
  Matrix text_cls;
  Matrix modulated_patches;
  Matrix encoded;
  Matrix patch_cls;
  Matrix e_img;
  Matrix e_text;
  nn::AttentionWeights t2i_weights;
  nn::AttentionWeights i2t_weights;
};

// Multimodal fusion over projected patch (E_img) and token (E_text) embeddings.
// Only the sub-networks the variant needs are allocated.
class FusionNetwork {
 public:
  FusionNetwork() = default;
  FusionNetwork(const std::string& name, const FusionConfig& config, Rng& rng);

  // patches: sum(N_b) x d grouped by patch_segments; tokens: sum(M_b) x d with
  // each sample's CLS first. Returns B x d.
  nn::Var forward(nn::Tape& tape, const nn::Var& patches, const Segments& patch_segments,
                  const nn::Var& tokens, const Segments& token_segments, const nn::Dropout& drop = {},
                  FusionTrace* trace = nullptr);
  void collect(nn::ParameterList& out);

  const FusionConfig& config() const { return config_; }

  FilmHead film;
  PatchTransformer transformer;
  nn::MultiHeadAttention text_to_image;
  nn::MultiHeadAttention image_to_text;
  nn::Linear output_map;  // mean_image and text_cls_only

 private:
  FusionConfig config_;
};

// Single-sample fusion in evaluation mode: N x d and M x d in, d-vector out.
RowVector fuse(FusionNetwork& network, const Matrix& patch_embeddings, const Matrix& token_embeddings,
               FusionTrace* trace = nullptr);

// Native (pre-projection) features of a ragged batch of cases.
struct ConditioningBatch {
  Matrix patch_features;
  Segments patches;
  Matrix token_features;
  Segments tokens;

  Index size() const { return patches.count(); }
};

// One side's conditioning path: its own projections of both frozen encoders'
// outputs followed by a fusion network.
class ConditioningNetwork {
 public:
  ConditioningNetwork() = default;
  ConditioningNetwork(const std::string& name, const FusionConfig& config,
                      std::shared_ptr<const encoders::ImageEncoder> image_encoder,
                      std::shared_ptr<const encoders::TextEncoder> text_encoder, Rng& rng);

  nn::Var forward(nn::Tape& tape, const ConditioningBatch& batch, const nn::Dropout& drop = {});
  Matrix evaluate(const ConditioningBatch& batch);
  void collect(nn::ParameterList& out);

  encoders::ImageAdapter image;
  encoders::TextAdapter text;
  FusionNetwork fusion;
};

}  // namespace gemmgan::fusion
