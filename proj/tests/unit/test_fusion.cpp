#include "gemmgan/core/error.hpp"
#include "gemmgan/fusion/fusion.hpp"
#include "gemmgan/nn/ops.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

namespace gemmgan::fusion {
namespace {

using nn::Tape;
using testing::random_matrix;

FusionConfig small_config(FusionVariant v = FusionVariant::kFull, Index d = 8) {
  FusionConfig c;
  c.dim = d;
  c.heads = 2;
  c.depth = 2;
  c.ffn_multiplier = 2;
  c.dropout = 0.0;
  c.variant = v;
  return c;
}

void set_identity(nn::Linear& l) {
  l.weight.value = Matrix::Identity(l.in_dim(), l.out_dim());
  l.bias.value.setZero();
}

TEST(Film, ZeroInitIsBitExactIdentity) {
  Rng rng = derive_rng(1, {});
  FilmHead head("film", 6);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix e = random_matrix(5, 6, rng, 10.0);
    const RowVector cls = random_matrix(1, 6, rng);
    EXPECT_TRUE(film_modulate(head, e, cls) == e);
  }
}

TEST(Film, ForcedGammaBeta) {
  FilmHead head("film", 2);
  head.gamma_residual.bias.value << 1.0, -0.5;  // gamma = 1 + residual = [2, 0.5]
  head.beta.bias.value << 1.0, -1.0;
  Matrix e(1, 2);
  e << 1, 2;
  const Matrix out = film_modulate(head, e, RowVector::Zero(2));
  EXPECT_EQ(out(0, 0), 3.0);
  EXPECT_EQ(out(0, 1), 0.0);
}

TEST(Film, RowwiseAffineAgainstScalarLoop) {
  Rng rng = derive_rng(2, {});
  FilmHead head("film", 4);
  head.gamma_residual.weight.value = random_matrix(4, 4, rng);
  head.gamma_residual.bias.value = random_matrix(1, 4, rng);
  head.beta.weight.value = random_matrix(4, 4, rng);
  head.beta.bias.value = random_matrix(1, 4, rng);
  const Matrix e = random_matrix(7, 4, rng);
  const RowVector cls = random_matrix(1, 4, rng);
  const Matrix out = film_modulate(head, e, cls);
  for (Index i = 0; i < 7; ++i) {
    for (Index c = 0; c < 4; ++c) {
      double g = 1.0 + head.gamma_residual.bias.value(0, c), b = head.beta.bias.value(0, c);
      for (Index k = 0; k < 4; ++k) {
        g += cls(k) * head.gamma_residual.weight.value(k, c);
        b += cls(k) * head.beta.weight.value(k, c);
      }
      EXPECT_NEAR(out(i, c), g * e(i, c) + b, 1e-12);
    }
  }
  EXPECT_THROW(film_modulate(head, e, RowVector::Zero(3)), Error);
}

TEST(PatchTransformer, SingleRowShape) {
  Rng rng = derive_rng(3, {});
  PatchTransformer t("pt", 8, 2, 2, 16, rng);
  const Matrix out = patch_transformer_forward(t, random_matrix(1, 8, rng));
  EXPECT_EQ(out.rows(), 2);
  EXPECT_EQ(out.cols(), 8);
  EXPECT_TRUE(out.allFinite());
  EXPECT_THROW(patch_transformer_forward(t, Matrix(0, 8)), Error);
}

TEST(PatchTransformer, PermutationEquivariance) {
  Rng rng = derive_rng(4, {});
  PatchTransformer t("pt", 8, 2, 2, 16, rng);
  const Matrix e = random_matrix(6, 8, rng);
  std::vector<Index> perm{3, 0, 5, 1, 4, 2};
  Matrix p(6, 8);
  for (Index i = 0; i < 6; ++i) p.row(i) = e.row(perm[std::size_t(i)]);
  const Matrix a = patch_transformer_forward(t, e);
  const Matrix b = patch_transformer_forward(t, p);
  EXPECT_LT((a.row(0) - b.row(0)).cwiseAbs().maxCoeff(), 1e-10);
  for (Index i = 0; i < 6; ++i) {
    EXPECT_LT((b.row(i + 1) - a.row(perm[std::size_t(i)] + 1)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(PatchTransformer, ResidualOnlyReducesToFinalNorm) {
  Rng rng = derive_rng(5, {});
  PatchTransformer t("pt", 8, 2, 2, 16, rng);
  for (auto& blk : t.blocks) {
    blk.attn.out_proj.weight.value.setZero();
    blk.attn.out_proj.bias.value.setZero();
    blk.ffn_out.weight.value.setZero();
    blk.ffn_out.bias.value.setZero();
  }
  const Matrix e = random_matrix(4, 8, rng, 3.0);
  const Matrix out = patch_transformer_forward(t, e);
  Tape tape(false);
  const Matrix normed = nn::layer_norm(tape.constant(e), nn::LayerNorm::kEps).value();
  EXPECT_LT((out.bottomRows(4) - normed).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, SingleKeyReturnsValue) {
  Rng rng = derive_rng(6, {});
  nn::MultiHeadAttention mha("a", 4, 2, rng);
  set_identity(mha.q_proj);
  set_identity(mha.k_proj);
  set_identity(mha.v_proj);
  set_identity(mha.out_proj);
  const Matrix v = random_matrix(1, 4, rng);
  const Matrix out = multi_head_attention(mha, random_matrix(3, 4, rng), random_matrix(1, 4, rng), v);
  for (Index i = 0; i < 3; ++i) EXPECT_LT((out.row(i) - v.row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, ZeroQueryAveragesValues) {
  Rng rng = derive_rng(7, {});
  nn::MultiHeadAttention mha("a", 2, 1, rng);
  set_identity(mha.q_proj);
  set_identity(mha.k_proj);
  set_identity(mha.v_proj);
  set_identity(mha.out_proj);
  const Matrix kv = random_matrix(2, 2, rng);
  const Matrix out = multi_head_attention(mha, Matrix::Zero(1, 2), kv, kv);
  EXPECT_LT((out.row(0) - kv.colwise().mean()).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Attention, MatchesOracleWithProjectionsAndRowsSumToOne) {
  Rng rng = derive_rng(8, {});
  nn::MultiHeadAttention mha("a", 8, 2, rng);
  const Matrix q = random_matrix(4, 8, rng), k = random_matrix(4, 8, rng), v = random_matrix(4, 8, rng);
  nn::AttentionWeights w;
  const Matrix out = multi_head_attention(mha, q, k, v, &w);
  const Matrix expected =
      mha.out_proj.apply(testing::attention_oracle(mha.q_proj.apply(q), mha.k_proj.apply(k), mha.v_proj.apply(v), 2));
  EXPECT_LT((out - expected).cwiseAbs().maxCoeff(), 1e-6);
  ASSERT_EQ(w.size(), 1u);
  ASSERT_EQ(w[0].size(), 2u);
  for (const auto& head : w[0]) {
    for (Index r = 0; r < head.rows(); ++r) EXPECT_NEAR(head.row(r).sum(), 1.0, 1e-12);
  }
}

TEST(Attention, HeadsMustDivide) {
  Rng rng = derive_rng(9, {});
  auto cfg = small_config();
  cfg.heads = 3;
  try {
    FusionNetwork net("f", cfg, rng);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kHeadsDontDivide);
  }
}

TEST(Fuse, EveryVariantGivesFiniteVector) {
  Rng rng = derive_rng(10, {});
  const Matrix img = random_matrix(5, 8, rng), txt = random_matrix(3, 8, rng);
  for (auto v : all_variants()) {
    FusionNetwork net("f", small_config(v), rng);
    const RowVector e = fuse(net, img, txt);
    EXPECT_EQ(e.size(), 8) << variant_name(v);
    EXPECT_TRUE(e.allFinite()) << variant_name(v);
  }
}

TEST(Fuse, VariantNamesRoundTrip) {
  for (auto v : all_variants()) EXPECT_EQ(parse_variant(variant_name(v)), v);
  try {
    parse_variant("ours");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kUnknownVariant);
  }
}

TEST(Fuse, MeanImageOfIdenticalRows) {
  Rng rng = derive_rng(11, {});
  FusionNetwork net("f", small_config(FusionVariant::kMeanImage), rng);
  const Matrix r = random_matrix(1, 8, rng);
  const Matrix img = r.replicate(4, 1);
  const RowVector e = fuse(net, img, random_matrix(2, 8, rng));
  EXPECT_LT((e - net.output_map.apply(r).row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, TextClsOnlyIgnoresImage) {
  Rng rng = derive_rng(12, {});
  FusionNetwork net("f", small_config(FusionVariant::kTextClsOnly), rng);
  const Matrix txt = random_matrix(3, 8, rng);
  const RowVector a = fuse(net, random_matrix(4, 8, rng), txt);
  const RowVector b = fuse(net, random_matrix(2, 8, rng), txt);
  EXPECT_TRUE(a == b);
  EXPECT_LT((a - net.output_map.apply(txt.topRows(1)).row(0)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, FullEqualsSumOfBranches) {
  Rng rng = derive_rng(13, {});
  FusionNetwork net("f", small_config(), rng);
  FusionTrace trace;
  const RowVector e = fuse(net, random_matrix(3, 8, rng), random_matrix(4, 8, rng), &trace);
  EXPECT_LT((e - (trace.e_img + trace.e_text).row(0)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_EQ(trace.encoded.rows(), 4);
}

TEST(Fuse, FullIsPatchPermutationInvariant) {
  Rng rng = derive_rng(14, {});
  FusionNetwork net("f", small_config(), rng);
  for (int trial = 0; trial < 20; ++trial) {
    const Matrix img = random_matrix(6, 8, rng), txt = random_matrix(3, 8, rng);
    std::vector<Index> perm{0, 1, 2, 3, 4, 5};
    std::shuffle(perm.begin(), perm.end(), rng);
    Matrix p(6, 8);
    for (Index i = 0; i < 6; ++i) p.row(i) = img.row(perm[std::size_t(i)]);
    EXPECT_LT((fuse(net, img, txt) - fuse(net, p, txt)).cwiseAbs().maxCoeff(), 1e-10);
  }
}

TEST(Fuse, FullGradientMatchesFiniteDifferences) {
  Rng rng = derive_rng(15, {});
  FusionNetwork net("f", small_config(), rng);
  nn::ParameterList params;
  net.collect(params);
  for (auto* p : params) p->value += random_matrix(p->value.rows(), p->value.cols(), rng, 0.1);
  nn::Parameter img{"img", random_matrix(3, 8, rng)};
  nn::Parameter txt{"txt", random_matrix(4, 8, rng)};
  params.push_back(&img);
  params.push_back(&txt);
  const double err = testing::gradient_check(params, [&](Tape& t) {
    return net.forward(t, t.param(img), Segments::uniform(1, 3), t.param(txt), Segments::uniform(1, 4));
  });
  EXPECT_LT(err, 1e-6);
}

TEST(Fuse, BatchedSegmentsMatchPerSample) {
  Rng rng = derive_rng(16, {});
  FusionNetwork net("f", small_config(), rng);
  const Matrix i1 = random_matrix(3, 8, rng), i2 = random_matrix(5, 8, rng);
  const Matrix t1 = random_matrix(2, 8, rng), t2 = random_matrix(4, 8, rng);
  Matrix imgs(8, 8), txts(6, 8);
  imgs << i1, i2;
  txts << t1, t2;
  Tape tape(false);
  const Matrix both = net.forward(tape, tape.constant(imgs), Segments::from_lengths({3, 5}), tape.constant(txts),
                                  Segments::from_lengths({2, 4}))
                          .value();
  EXPECT_LT((both.row(0) - fuse(net, i1, t1)).cwiseAbs().maxCoeff(), 1e-12);
  EXPECT_LT((both.row(1) - fuse(net, i2, t2)).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Fuse, DimensionErrors) {
  Rng rng = derive_rng(17, {});
  FusionNetwork net("f", small_config(), rng);
  EXPECT_THROW(fuse(net, random_matrix(3, 6, rng), random_matrix(2, 8, rng)), Error);
  EXPECT_THROW(fuse(net, Matrix(0, 8), random_matrix(2, 8, rng)), Error);
}

TEST(Conditioning, FilmIdentityInsideFullNetwork) {
  Rng rng = derive_rng(18, {});
  FusionNetwork net("f", small_config(), rng);
  FusionTrace trace;
  const Matrix img = random_matrix(5, 8, rng);
  fuse(net, img, random_matrix(3, 8, rng), &trace);
  EXPECT_TRUE(trace.modulated_patches == img);
}

TEST(Conditioning, NetworkCollectsProjectionsAndFusion) {
  Rng rng = derive_rng(19, {});
  ConditioningNetwork cond("c", small_config(), encoders::make_image_encoder("stub-image"),
                           encoders::make_text_encoder("stub-text"), rng);
  nn::ParameterList params;
  cond.collect(params);
  EXPECT_EQ(params[0]->name, "c.image.projection.weight");
  ConditioningBatch batch{random_matrix(5, 12, rng), Segments::from_lengths({2, 3}), random_matrix(4, 64, rng),
                          Segments::from_lengths({1, 3})};
  const Matrix e = cond.evaluate(batch);
  EXPECT_EQ(e.rows(), 2);
  EXPECT_EQ(e.cols(), 8);
  batch.patch_features = random_matrix(5, 11, rng);
  EXPECT_THROW(cond.evaluate(batch), Error);
}

}  // namespace
}  // namespace gemmgan::fusion
