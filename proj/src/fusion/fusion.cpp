#include "gemmgan/fusion/fusion.hpp"

#include "gemmgan/core/error.hpp"

namespace gemmgan::fusion {

using nn::Tape;
using nn::Var;

std::string_view variant_name(FusionVariant v) {
  switch (v) {
    case FusionVariant::kFull: return "full";
    case FusionVariant::kMeanImage: return "mean_image";
    case FusionVariant::kTextClsOnly: return "text_cls_only";
    case FusionVariant::kPatchTransformerOnly: return "patch_transformer_only";
    case FusionVariant::kFilmOnly: return "film_only";
    case FusionVariant::kCrossAttentionOnly: return "cross_attention_only";
  }
  return "unknown";
}

FusionVariant parse_variant(std::string_view name) {
  for (auto v : all_variants()) {
    if (variant_name(v) == name) return v;
  }
  throw Error(ErrorCode::kUnknownVariant, "unknown fusion variant '" + std::string(name) + "'");
}

const std::array<FusionVariant, 6>& all_variants() {
  static const std::array<FusionVariant, 6> v = {
      FusionVariant::kMeanImage,   FusionVariant::kTextClsOnly,        FusionVariant::kPatchTransformerOnly,
      FusionVariant::kFilmOnly,    FusionVariant::kCrossAttentionOnly, FusionVariant::kFull};
  return v;
}

FilmHead::FilmHead(const std::string& name, Index dim)
    : gamma_residual(nn::Linear::zeros(name + ".gamma", dim, dim)),
      beta(nn::Linear::zeros(name + ".beta", dim, dim)) {}

Var FilmHead::modulate(Tape& tape, const Var& patches, const Var& text_cls, const Segments& patch_segments) {
  if (patches.cols() != text_cls.cols() || text_cls.rows() != patch_segments.count() ||
      patch_segments.total() != patches.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "FiLM: patch/text shapes do not agree");
  }
  Var gamma = nn::add_scalar(gamma_residual.forward(tape, text_cls), 1.0);
  Var shift = beta.forward(tape, text_cls);
  std::vector<Index> owner(static_cast<std::size_t>(patches.rows()));
  for (Index b = 0; b < patch_segments.count(); ++b) {
    for (Index i = 0; i < patch_segments.length(b); ++i) {
      owner[static_cast<std::size_t>(patch_segments.begin(b) + i)] = b;
    }
  }
  Var gamma_rows = nn::gather_rows(gamma, owner);
  Var shift_rows = nn::gather_rows(shift, std::move(owner));
  return nn::add(nn::hadamard(gamma_rows, patches), shift_rows);
}

void FilmHead::collect(nn::ParameterList& out) {
  gamma_residual.collect(out);
  beta.collect(out);
}

Matrix film_modulate(FilmHead& head, const Matrix& patches, const RowVector& text_cls) {
  if (patches.cols() != text_cls.size()) throw Error(ErrorCode::kDimensionMismatch, "FiLM: width mismatch");
  Tape tape(false);
  Matrix cls = text_cls;
  return head
      .modulate(tape, tape.constant(patches), tape.constant(cls), Segments::uniform(1, patches.rows()))
      .value();
}

PatchTransformer::PatchTransformer(const std::string& name, Index dim, int heads, int depth, Index ffn_width,
                                   Rng& rng)
    : final_norm(name + ".final_norm", dim) {
  std::normal_distribution<double> normal(0.0, 0.02);
  Matrix cls(1, dim);
  for (Index i = 0; i < dim; ++i) cls(0, i) = normal(rng);
  round_to_float(cls);
  cls_token = nn::Parameter(name + ".cls_token", std::move(cls));
  for (int l = 0; l < depth; ++l) {
    blocks.emplace_back(name + ".block" + std::to_string(l), dim, heads, ffn_width, rng);
  }
}

Var PatchTransformer::forward(Tape& tape, const Var& patches, const Segments& patch_segments,
                              Segments& out_segments, const nn::Dropout& drop) {
  if (patches.cols() != cls_token.value.cols() || patch_segments.total() != patches.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "patch transformer: input shape mismatch");
  }
  const Index batch = patch_segments.count();
  Var cls = nn::gather_rows(tape.param(cls_token), std::vector<Index>(static_cast<std::size_t>(batch), 0));
  Var stacked = nn::vstack(cls, patches);  // rows 0..B-1 are CLS copies
  std::vector<Index> order;
  order.reserve(static_cast<std::size_t>(batch + patches.rows()));
  std::vector<Index> lengths;
  for (Index b = 0; b < batch; ++b) {
    if (patch_segments.length(b) < 1) throw Error(ErrorCode::kDimensionMismatch, "sample without patches");
    order.push_back(b);
    for (Index i = 0; i < patch_segments.length(b); ++i) order.push_back(batch + patch_segments.begin(b) + i);
    lengths.push_back(patch_segments.length(b) + 1);
  }
  out_segments = Segments::from_lengths(lengths);
  Var h = nn::gather_rows(stacked, std::move(order));
  for (auto& block : blocks) h = block.forward(tape, h, out_segments, drop);
  return final_norm.forward(tape, h);
}

void PatchTransformer::collect(nn::ParameterList& out) {
  out.push_back(&cls_token);
  for (auto& b : blocks) b.collect(out);
  final_norm.collect(out);
}

Matrix patch_transformer_forward(PatchTransformer& transformer, const Matrix& patches) {
  if (patches.rows() < 1) throw Error(ErrorCode::kDimensionMismatch, "patch transformer needs N >= 1");
  Tape tape(false);
  Segments out;
  return transformer.forward(tape, tape.constant(patches), Segments::uniform(1, patches.rows()), out, {}).value();
}

Matrix multi_head_attention(nn::MultiHeadAttention& mha, const Matrix& query, const Matrix& key,
                            const Matrix& value, nn::AttentionWeights* weights_out) {
  Tape tape(false);
  return mha
      .forward(tape, tape.constant(query), tape.constant(key), tape.constant(value),
               Segments::uniform(1, query.rows()), Segments::uniform(1, key.rows()), {}, weights_out)
      .value();
}

namespace {

bool uses_film(FusionVariant v) { return v == FusionVariant::kFull || v == FusionVariant::kFilmOnly; }

bool uses_transformer(FusionVariant v) {
  return v == FusionVariant::kFull || v == FusionVariant::kFilmOnly || v == FusionVariant::kPatchTransformerOnly ||
         v == FusionVariant::kCrossAttentionOnly;
}

bool uses_cross_attention(FusionVariant v) {
  return v == FusionVariant::kFull || v == FusionVariant::kCrossAttentionOnly;
}

bool uses_output_map(FusionVariant v) {
  return v == FusionVariant::kMeanImage || v == FusionVariant::kTextClsOnly;
}

std::vector<Index> segment_starts(const Segments& s) {
  return std::vector<Index>(s.offsets.begin(), s.offsets.end() - 1);
}

}  // namespace

FusionNetwork::FusionNetwork(const std::string& name, const FusionConfig& config, Rng& rng) : config_(config) {
  if (config.heads <= 0 || config.dim % config.heads != 0) {
    throw Error(ErrorCode::kHeadsDontDivide, "fusion dim not divisible by heads");
  }
  const auto v = config.variant;
  if (uses_film(v)) film = FilmHead(name + ".film", config.dim);
  if (uses_transformer(v)) {
    transformer = PatchTransformer(name + ".transformer", config.dim, config.heads, config.depth,
                                   config.dim * config.ffn_multiplier, rng);
  }
  if (uses_cross_attention(v)) {
    text_to_image = nn::MultiHeadAttention(name + ".t2i", config.dim, config.heads, rng);
    image_to_text = nn::MultiHeadAttention(name + ".i2t", config.dim, config.heads, rng);
  }
  if (uses_output_map(v)) output_map = nn::Linear(name + ".output_map", config.dim, config.dim, rng);
}

Var FusionNetwork::forward(Tape& tape, const Var& patches, const Segments& patch_segments, const Var& tokens,
                           const Segments& token_segments, const nn::Dropout& drop, FusionTrace* trace) {
  if (patches.cols() != config_.dim || tokens.cols() != config_.dim) {
    throw Error(ErrorCode::kDimensionMismatch, "fusion inputs must have width " + std::to_string(config_.dim));
  }
  if (patch_segments.count() != token_segments.count() || patch_segments.total() != patches.rows() ||
      token_segments.total() != tokens.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "fusion: segments do not match inputs");
  }
  const Index batch = patch_segments.count();
  for (Index b = 0; b < batch; ++b) {
    if (token_segments.length(b) < 1) throw Error(ErrorCode::kDimensionMismatch, "sample without text tokens");
  }
  const auto v = config_.variant;
  Var text_cls = nn::gather_rows(tokens, segment_starts(token_segments));
  if (trace != nullptr) trace->text_cls = text_cls.value();

  if (v == FusionVariant::kMeanImage) {
    return output_map.forward(tape, nn::segment_mean(patches, patch_segments));
  }
  if (v == FusionVariant::kTextClsOnly) return output_map.forward(tape, text_cls);

  Var image_rows = patches;
  if (uses_film(v)) image_rows = film.modulate(tape, patches, text_cls, patch_segments);
  if (trace != nullptr) trace->modulated_patches = image_rows.value();

  Segments encoded_segments;
  Var encoded = transformer.forward(tape, image_rows, patch_segments, encoded_segments, drop);
  Var patch_cls = nn::gather_rows(encoded, segment_starts(encoded_segments));
  if (trace != nullptr) {
    trace->encoded = encoded.value();
    trace->patch_cls = patch_cls.value();
  }
  if (!uses_cross_attention(v)) return patch_cls;

  const Segments one_each = Segments::uniform(batch, 1);
  Var e_img = text_to_image.forward(tape, text_cls, encoded, encoded, one_each, encoded_segments, drop,
                                    trace ? &trace->t2i_weights : nullptr);
  Var e_text = image_to_text.forward(tape, patch_cls, tokens, tokens, one_each, token_segments, drop,
                                     trace ? &trace->i2t_weights : nullptr);
  if (trace != nullptr) {
    trace->e_img = e_img.value();
    trace->e_text = e_text.value();
  }
  return nn::add(e_text, e_img);
}

void FusionNetwork::collect(nn::ParameterList& out) {
  const auto v = config_.variant;
  if (uses_film(v)) film.collect(out);
  if (uses_transformer(v)) transformer.collect(out);
  if (uses_cross_attention(v)) {
    text_to_image.collect(out);
    image_to_text.collect(out);
  }
  if (uses_output_map(v)) output_map.collect(out);
}

RowVector fuse(FusionNetwork& network, const Matrix& patch_embeddings, const Matrix& token_embeddings,
               FusionTrace* trace) {
  if (patch_embeddings.rows() < 1 || token_embeddings.rows() < 1) {
    throw Error(ErrorCode::kDimensionMismatch, "fuse needs at least one patch and one token");
  }
  Tape tape(false);
  Var out = network.forward(tape, tape.constant(patch_embeddings), Segments::uniform(1, patch_embeddings.rows()),
                            tape.constant(token_embeddings), Segments::uniform(1, token_embeddings.rows()), {},
                            trace);
  return out.value().row(0);
}

ConditioningNetwork::ConditioningNetwork(const std::string& name, const FusionConfig& config,
                                         std::shared_ptr<const encoders::ImageEncoder> image_encoder,
                                         std::shared_ptr<const encoders::TextEncoder> text_encoder, Rng& rng)
    : image(std::move(image_encoder), config.dim, name + ".image", rng),
      text(std::move(text_encoder), config.dim, name + ".text", rng),
      fusion(name + ".fusion", config, rng) {}

Var ConditioningNetwork::forward(Tape& tape, const ConditioningBatch& batch, const nn::Dropout& drop) {
  if (batch.patch_features.cols() != image.native_dim() || batch.token_features.cols() != text.native_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "conditioning batch feature widths do not match the encoders");
  }
  Var patches = image.project(tape, tape.constant(batch.patch_features));
  Var tokens = text.project(tape, tape.constant(batch.token_features));
  return fusion.forward(tape, patches, batch.patches, tokens, batch.tokens, drop);
}

Matrix ConditioningNetwork::evaluate(const ConditioningBatch& batch) {
  Tape tape(false);
  return forward(tape, batch).value();
}

void ConditioningNetwork::collect(nn::ParameterList& out) {
  image.collect(out);
  text.collect(out);
  fusion.collect(out);
}

}  // namespace gemmgan::fusion
