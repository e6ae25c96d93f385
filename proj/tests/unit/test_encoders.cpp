#include "gemmgan/core/error.hpp"
#include "gemmgan/encoders/embedding_store.hpp"
#include "gemmgan/encoders/encoders.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <set>

namespace gemmgan::encoders {
namespace {

using testing::TempDir;

data::RgbImage solid(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  data::RgbImage img(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      auto* p = img.at(x, y);
      p[0] = r;
      p[1] = g;
      p[2] = b;
    }
  }
  return img;
}

TEST(StubImage, AllRedTileMatchesAnalyticFeatures) {
  Rng rng = derive_rng(1, {});
  ImageAdapter adapter(make_image_encoder("stub-image"), 16, "img", rng);
  const std::vector<data::RgbImage> tiles{solid(8, 8, 255, 0, 0)};
  RowVector f(12);
  f << 1, 0, 0, 0, 0, 0, 1, 1, 0.299, 0, 0, 1;
  const auto out = encode_patches(adapter, tiles);
  const RowVector expected = f * adapter.projection.weight.value + adapter.projection.bias.value;
  ASSERT_EQ(out.values.rows(), 1);
  EXPECT_LT((out.values.row(0) - expected).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(StubImage, RowsAreIndependentOfOrder) {
  Rng rng = derive_rng(2, {});
  ImageAdapter adapter(make_image_encoder("stub-image"), 8, "img", rng);
  std::vector<data::RgbImage> tiles{solid(4, 4, 10, 200, 30), solid(4, 4, 250, 250, 250), solid(4, 4, 90, 0, 90)};
  const auto a = encode_patches(adapter, tiles).values;
  std::swap(tiles[0], tiles[2]);
  const auto b = encode_patches(adapter, tiles).values;
  EXPECT_TRUE(a.row(0) == b.row(2));
  EXPECT_TRUE(a.row(1) == b.row(1));
  EXPECT_TRUE(a.row(2) == b.row(0));
}

TEST(StubImage, FullScaleShapeIsFinite) {
  Rng rng = derive_rng(3, {});
  ImageAdapter adapter(make_image_encoder("stub-image"), kDefaultDim, "img", rng);
  std::vector<data::RgbImage> tiles;
  for (int i = 0; i < 256; ++i) tiles.push_back(solid(4, 4, std::uint8_t(i), std::uint8_t(255 - i), 77));
  const auto out = encode_patches(adapter, tiles);
  EXPECT_EQ(out.values.rows(), 256);
  EXPECT_EQ(out.values.cols(), 256);
  EXPECT_TRUE(out.values.allFinite());
}

TEST(StubImage, EmptyInputsFail) {
  StubImageEncoder enc;
  EXPECT_THROW(enc.encode(data::RgbImage()), Error);
  EXPECT_THROW(encode_native(enc, {}), Error);
  EXPECT_THROW(make_image_encoder("uni"), Error);
}

TEST(StubText, DeterministicAndTruncated) {
  Rng rng = derive_rng(4, {});
  TextAdapter adapter(make_text_encoder("stub-text"), 16, "txt", rng);
  const auto a = encode_text(adapter, "lung adenocarcinoma", 32);
  const auto b = encode_text(adapter, "lung adenocarcinoma", 32);
  EXPECT_TRUE(a.values == b.values);
  EXPECT_EQ(a.values.rows(), 3);
  std::string long_text;
  for (int i = 0; i < 100; ++i) long_text += "word" + std::to_string(i) + " ";
  EXPECT_EQ(encode_text(adapter, long_text, 32).values.rows(), 32);
}

TEST(StubText, OneWordChangesCls) {
  Rng rng = derive_rng(5, {});
  TextAdapter adapter(make_text_encoder("stub-text"), 16, "txt", rng);
  const auto a = encode_text(adapter, "lung adenocarcinoma stage two", 32);
  const auto b = encode_text(adapter, "lung melanoma stage two", 32);
  EXPECT_FALSE(a.values.row(TextEmbeddingMatrix::cls_index) == b.values.row(TextEmbeddingMatrix::cls_index));
}

TEST(StubText, RejectsEmptyText) {
  Rng rng = derive_rng(5, {});
  TextAdapter adapter(make_text_encoder("stub-text"), 16, "txt", rng);
  EXPECT_THROW(encode_text(adapter, "", 32), Error);
  EXPECT_THROW(encode_text(adapter, "  ,, ", 32), Error);
  EXPECT_THROW(make_text_encoder("modernbert"), Error);
}

TEST(Adapter, OnlyProjectionIsTrainable) {
  Rng rng = derive_rng(6, {});
  ImageAdapter adapter(make_image_encoder("stub-image"), 8, "img", rng);
  nn::ParameterList params;
  adapter.collect(params);
  ASSERT_EQ(params.size(), 2u);
  EXPECT_EQ(params[0]->name, "img.projection.weight");
  EXPECT_TRUE(ImageAdapter::frozen());
  EXPECT_EQ(adapter.native_dim(), StubImageEncoder::kNativeDim);
  EXPECT_EQ(adapter.dim(), 8);
}

TEST(Sampling, DistinctWhenEnoughTiles) {
  std::vector<int> tiles(300);
  std::iota(tiles.begin(), tiles.end(), 0);
  const auto picked = sample_patches<int>(tiles, 256, 11);
  EXPECT_EQ(picked.size(), 256u);
  EXPECT_EQ(std::set<int>(picked.begin(), picked.end()).size(), 256u);
  EXPECT_EQ(picked, sample_patches<int>(tiles, 256, 11));
  EXPECT_NE(picked, sample_patches<int>(tiles, 256, 12));
}

TEST(Sampling, ReplacementWhenTooFew) {
  std::vector<int> tiles(100);
  std::iota(tiles.begin(), tiles.end(), 0);
  const auto picked = sample_patches<int>(tiles, 256, 3);
  EXPECT_EQ(picked.size(), 256u);
  for (int t : picked) {
    EXPECT_GE(t, 0);
    EXPECT_LT(t, 100);
  }
  Rng rng = derive_rng(1, {});
  EXPECT_THROW(sample_patch_indices(0, 4, rng), Error);
}

TEST(Store, RoundTripIsBitIdentical) {
  TempDir dir("store");
  EmbeddingStore store(dir.path());
  Rng rng = derive_rng(7, {});
  const FloatMatrix m = to_float(standard_normal(256, 256, rng));
  store.save("k1", m, "stub-image");
  EXPECT_TRUE(store.contains("k1"));
  const FloatMatrix back = store.load("k1");
  ASSERT_EQ(back.rows(), 256);
  EXPECT_EQ(std::memcmp(back.data(), m.data(), sizeof(float) * 256 * 256), 0);
  const auto info = store.info("k1");
  EXPECT_EQ(info.n_rows, 256);
  EXPECT_EQ(info.encoder, "stub-image");
}

TEST(Store, UnknownKeyAndCorruption) {
  TempDir dir("store");
  EmbeddingStore store(dir.path());
  try {
    store.load("missing");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kKeyNotFound);
  }
  FloatMatrix m = FloatMatrix::Ones(4, 3);
  store.save("k", m, "x");
  std::filesystem::resize_file(dir / "k.bin", 20);
  try {
    store.load("k");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptEntry);
  }
  store.save("k", m, "x");
  {
    std::fstream f(dir / "k.bin", std::ios::in | std::ios::out | std::ios::binary);
    f.seekp(5);
    f.put('\x7f');
  }
  try {
    store.load("k");
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kCorruptEntry);
  }
}

TEST(Store, ContentKeyDependsOnEncoderAndBytes) {
  const std::vector<std::uint8_t> a{1, 2, 3}, b{1, 2, 4};
  EXPECT_EQ(content_key("e", a), content_key("e", a));
  EXPECT_NE(content_key("e", a), content_key("e", b));
  EXPECT_NE(content_key("e", a), content_key("f", a));
}

}  // namespace
}  // namespace gemmgan::encoders
