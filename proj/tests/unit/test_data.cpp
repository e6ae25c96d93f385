#include "gemmgan/core/error.hpp"
#include "gemmgan/data/clinical.hpp"
#include "gemmgan/data/expression.hpp"
#include "gemmgan/data/image.hpp"
#include "gemmgan/data/split.hpp"
#include "gemmgan/data/synthetic.hpp"
#include "gemmgan/data/tissue.hpp"
#include "test_support.hpp"

#include <gtest/gtest.h>

#include <numeric>
#include <set>

namespace gemmgan::data {
namespace {

using testing::TempDir;

// Exact argmin of within-class scatter, which is the argmax of between-class variance.
int otsu_oracle(const Histogram& h) {
  using i128 = __int128;
  i128 best_num = -1, best_den = 1;
  int best = -1;
  for (int t = 1; t < 256; ++t) {
    i128 w0 = 0, w1 = 0, s0 = 0, s1 = 0;
    for (int i = 0; i < 256; ++i) {
      if (i < t) {
        w0 += h[i];
        s0 += static_cast<i128>(i) * h[i];
      } else {
        w1 += h[i];
        s1 += static_cast<i128>(i) * h[i];
      }
    }
    if (w0 == 0 || w1 == 0) continue;
    // maximise s0^2/w0 + s1^2/w1
    const i128 num = s0 * s0 * w1 + s1 * s1 * w0;
    const i128 den = w0 * w1;
    if (best < 0 || num * best_den > best_num * den) {
      best_num = num;
      best_den = den;
      best = t;
    }
  }
  return best;
}

TEST(Otsu, TwoSpikesPickSmallestSeparatingThreshold) {
  Histogram h{};
  h[0] = 100;
  h[255] = 100;
  EXPECT_EQ(otsu_threshold(h), 1);
}

TEST(Otsu, SingleBinThrows) {
  Histogram h{};
  h[128] = 1000;
  try {
    otsu_threshold(h);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::kSingleClassHistogram);
  }
  EXPECT_THROW(otsu_threshold(Histogram{}), Error);
}

TEST(Otsu, MatchesExactOracleOnRandomHistograms) {
  Rng rng = derive_rng(2024, {});
  std::uniform_int_distribution<int> occupied(2, 256), count(0, 1000), bin(0, 255);
  int checked = 0;
  for (int trial = 0; trial < 300; ++trial) {
    Histogram h{};
    const int k = occupied(rng);
    for (int i = 0; i < k; ++i) h[bin(rng)] = static_cast<std::uint64_t>(count(rng)) + 1;
    if (std::count_if(h.begin(), h.end(), [](auto v) { return v > 0; }) < 2) continue;
    ASSERT_EQ(otsu_threshold(h), otsu_oracle(h)) << "trial " << trial;
    ++checked;
  }
  EXPECT_GT(checked, 250);
}

TEST(Otsu, ThresholdSeparatesBimodalMass) {
  Histogram h{};
  for (int i = 20; i < 40; ++i) h[i] = 50;
  for (int i = 180; i < 200; ++i) h[i] = 50;
  const int t = otsu_threshold(h);
  EXPECT_GT(t, 39);
  EXPECT_LE(t, 180);
}

SlideImage split_slide(int w, int h) {
  SlideImage s{"s", RgbImage(w, h, 255), std::nullopt};
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w / 2; ++x) {
      auto* p = s.pixels.at(x, y);
      p[0] = 255;
      p[1] = 0;
      p[2] = 255;
    }
  }
  return s;
}

TEST(Tissue, MagentaLeftHalfIsExactlyTheMask) {
  const auto slide = split_slide(64, 32);
  const auto mask = segment_tissue(slide, 2048);
  ASSERT_EQ(mask.width, 64);
  ASSERT_EQ(mask.height, 32);
  for (int y = 0; y < 32; ++y) {
    for (int x = 0; x < 64; ++x) EXPECT_EQ(mask.at(x, y), x < 32 ? 1 : 0);
  }
}

TEST(Tissue, UniformWhiteSlideThrows) {
  SlideImage s{"w", RgbImage(32, 32, 255), std::nullopt};
  EXPECT_THROW(segment_tissue(s, 2048), Error);
}

TEST(Tissue, ThumbnailKeepsAspectRatio) {
  for (auto [w, h] : std::vector<std::pair<int, int>>{{4000, 1000}, {1000, 3000}, {2049, 2049}, {100, 50}}) {
    const auto [tw, th] = thumbnail_size(w, h, 2048);
    EXPECT_LE(std::max(tw, th), 2048);
    EXPECT_NEAR(static_cast<double>(tw) / th, static_cast<double>(w) / h, 2.0 / std::min(tw, th));
  }
  const auto slide = split_slide(300, 100);
  const auto mask = segment_tissue(slide, 60);
  EXPECT_EQ(mask.width, 60);
  EXPECT_EQ(mask.height, 20);
}

TissueMask full_mask(int w, int h, std::uint8_t v) { return {w, h, std::vector<std::uint8_t>(std::size_t(w) * h, v)}; }

TEST(Tiles, FullCoverageGivesEveryTile) {
  SlideImage s{"s", RgbImage(512, 512), std::nullopt};
  const auto tiles = extract_tiles(s, full_mask(512, 512, 1), 256, 0.2);
  ASSERT_EQ(tiles.size(), 4u);
  for (const auto& t : tiles) {
    EXPECT_EQ(t.tissue_fraction, 1.0);
    EXPECT_EQ(t.size, 256);
  }
  EXPECT_TRUE(extract_tiles(s, full_mask(512, 512, 0), 256, 0.2).empty());
}

TEST(Tiles, HalfSplitKeepsTissueSide) {
  SlideImage s{"s", RgbImage(512, 512), std::nullopt};
  auto mask = full_mask(512, 512, 0);
  for (int y = 0; y < 512; ++y) {
    for (int x = 0; x < 256; ++x) mask.values[std::size_t(y) * 512 + x] = 1;
  }
  const auto tiles = extract_tiles(s, mask, 256, 0.2);
  ASSERT_EQ(tiles.size(), 2u);
  for (const auto& t : tiles) EXPECT_EQ(t.origin_x, 0);
}

TEST(Tiles, RetentionIsStrictAgainstPixelCounting) {
  Rng rng = derive_rng(31, {});
  std::bernoulli_distribution on(0.25);
  SlideImage s{"s", RgbImage(64, 48), std::nullopt};
  for (int trial = 0; trial < 30; ++trial) {
    auto mask = full_mask(64, 48, 0);
    for (auto& v : mask.values) v = on(rng);
    const auto tiles = extract_tiles(s, mask, 8, 0.25);
    std::set<std::pair<int, int>> kept;
    for (const auto& t : tiles) kept.insert({t.origin_x, t.origin_y});
    for (int ty = 0; ty < 6; ++ty) {
      for (int tx = 0; tx < 8; ++tx) {
        int covered = 0;
        for (int y = 0; y < 8; ++y) {
          for (int x = 0; x < 8; ++x) covered += mask.at(tx * 8 + x, ty * 8 + y);
        }
        EXPECT_EQ(kept.count({tx * 8, ty * 8}) == 1, covered / 64.0 > 0.25);
      }
    }
  }
}

TEST(Tiles, ExactlyMinTissueIsDropped) {
  SlideImage s{"s", RgbImage(10, 10), std::nullopt};
  auto mask = full_mask(10, 10, 0);
  for (int i = 0; i < 20; ++i) mask.values[std::size_t(i)] = 1;
  EXPECT_TRUE(extract_tiles(s, mask, 10, 0.2).empty());
  mask.values[20] = 1;
  EXPECT_EQ(extract_tiles(s, mask, 10, 0.2).size(), 1u);
}

TEST(Tiles, ManifestRoundTrip) {
  TempDir dir("tiles");
  std::vector<Tile> tiles{{"a", 0, 256, 256, 0.5}, {"b", 512, 0, 256, 1.0}};
  write_tile_manifest(dir / "m.ndjson", tiles);
  const auto back = read_tile_manifest(dir / "m.ndjson");
  ASSERT_EQ(back.size(), 2u);
  EXPECT_EQ(back[1].slide_id, "b");
  EXPECT_EQ(back[0].origin_y, 256);
  EXPECT_EQ(back[0].tissue_fraction, 0.5);
  EXPECT_EQ(back[1].file_name(), "b_512_0.png");
}

TEST(Image, PngRoundTripAndCrop) {
  TempDir dir("png");
  Rng rng = derive_rng(5, {});
  RgbImage img(7, 5);
  for (auto& p : img.pixels) p = static_cast<std::uint8_t>(rng() & 0xff);
  write_png(dir / "x.png", img);
  const auto back = read_png(dir / "x.png");
  EXPECT_EQ(back.width, 7);
  EXPECT_EQ(back.pixels, img.pixels);
  const auto c = img.crop(2, 1, 3, 2);
  EXPECT_EQ(c.at(0, 0)[1], img.at(2, 1)[1]);
  EXPECT_EQ(c.at(2, 1)[2], img.at(4, 2)[2]);
}

ExpressionMatrix make_matrix(const Matrix& values) {
  ExpressionMatrix m;
  for (Index i = 0; i < values.rows(); ++i) m.sample_ids.push_back("S" + std::to_string(i));
  for (Index j = 0; j < values.cols(); ++j) m.gene_ids.push_back("G" + std::to_string(j));
  m.values = values;
  m.missing = MissingMask::Constant(values.rows(), values.cols(), false);
  for (Index i = 0; i < values.size(); ++i) {
    if (std::isnan(values.data()[i])) m.missing.data()[i] = true;
  }
  return m;
}

TEST(Expression, FilterGenesMissingThreshold) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix v = Matrix::Ones(20, 3);
  for (int i = 0; i < 19; ++i) v(i, 0) = nan;  // 95%
  for (int i = 0; i < 18; ++i) v(i, 1) = nan;  // exactly 90%
  const auto out = filter_genes(make_matrix(v));
  ASSERT_EQ(out.genes(), 2);
  EXPECT_EQ(out.gene_ids[0], "G1");
  EXPECT_EQ(out.gene_ids[1], "G2");
  const auto twice = filter_genes(out);
  EXPECT_EQ(twice.gene_ids, out.gene_ids);
  EXPECT_TRUE((twice.missing == out.missing).all());
}

TEST(Expression, FullyObservedIsIdentity) {
  Rng rng = derive_rng(1, {});
  const auto m = make_matrix(testing::random_matrix(6, 4, rng));
  const auto out = filter_genes(m);
  EXPECT_EQ(out.gene_ids, m.gene_ids);
  EXPECT_TRUE(out.values == m.values);
}

TEST(Expression, AllDroppedThrows) {
  Matrix v = Matrix::Constant(3, 2, std::numeric_limits<double>::quiet_NaN());
  EXPECT_THROW(filter_genes(make_matrix(v)), Error);
}

TEST(Expression, ZScoreHandComputed) {
  Matrix v(3, 2);
  v << 1, 5, 2, 5, 3, 5;
  const std::vector<Index> rows{0, 1, 2};
  const auto r = zscore_fit_transform(make_matrix(v), rows);
  EXPECT_NEAR(r.matrix.values(0, 0), -1.224744871391589, 1e-12);
  EXPECT_NEAR(r.matrix.values(1, 0), 0.0, 1e-12);
  EXPECT_NEAR(r.matrix.values(2, 0), 1.224744871391589, 1e-12);
  EXPECT_EQ(r.matrix.values.col(1), Vector::Zero(3));
  EXPECT_EQ(r.stats.stddev(1), 0.0);
}

TEST(Expression, ZScoreTrainColumnsAreStandardAndIdempotent) {
  Rng rng = derive_rng(2, {});
  Matrix v = testing::random_matrix(40, 6, rng, 4.0).array() + 10.0;
  std::vector<Index> train;
  for (Index i = 0; i < 30; ++i) train.push_back(i);
  const auto r = zscore_fit_transform(make_matrix(v), train);
  for (Index j = 0; j < 6; ++j) {
    const Vector col = r.matrix.values.col(j).head(30);
    const double mean = col.mean();
    EXPECT_LT(std::abs(mean), 1e-8);
    EXPECT_LT(std::abs(std::sqrt((col.array() - mean).square().mean()) - 1.0), 1e-8);
  }
  const auto again = zscore_fit_transform(make_matrix(r.matrix.values), train);
  EXPECT_LT((again.matrix.values - r.matrix.values).cwiseAbs().maxCoeff(), 1e-8);
  const Matrix applied = zscore_apply(make_matrix(v), r.stats);
  EXPECT_LT((applied - r.matrix.values).cwiseAbs().maxCoeff(), 1e-12);
}

TEST(Expression, MissingImputedWithTrainMedian) {
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix v(5, 1);
  v << 1, 2, 10, nan, 100;
  const std::vector<Index> train{0, 1, 2, 3};
  const auto r = zscore_fit_transform(make_matrix(v), train);
  EXPECT_EQ(r.stats.median(0), 2.0);
  EXPECT_FALSE(r.matrix.missing.any());
  EXPECT_NEAR(r.matrix.values(3, 0), r.matrix.values(1, 0), 1e-12);
}

TEST(Expression, TsvRoundTripKeepsMissing) {
  TempDir dir("tsv");
  const double nan = std::numeric_limits<double>::quiet_NaN();
  Matrix v(2, 3);
  v << 1.5, nan, -3, 0.125, 7, 1e-20;
  const auto m = make_matrix(v);
  write_expression_tsv(dir / "e.tsv", m);
  const auto back = read_expression_tsv(dir / "e.tsv");
  EXPECT_EQ(back.gene_ids, m.gene_ids);
  EXPECT_EQ(back.sample_ids, m.sample_ids);
  EXPECT_TRUE(back.missing(0, 1));
  EXPECT_EQ(back.values(1, 2), 1e-20);
  EXPECT_EQ(back.values(0, 0), 1.5);
}

TEST(Expression, MatchCasePrefersExactThenLongestPrefix) {
  const std::vector<std::string> cases{"TCGA-AB", "TCGA-AB-01", "X"};
  EXPECT_EQ(match_case("TCGA-AB-01", cases), "TCGA-AB-01");
  EXPECT_EQ(match_case("TCGA-AB-01-11A", cases), "TCGA-AB-01");
  EXPECT_EQ(match_case("TCGA-AB-02", cases), "TCGA-AB");
  EXPECT_EQ(match_case("TCGA-ABC", cases), "");
}

TEST(Clinical, SummaryContainsFieldsAndIsDeterministic) {
  ClinicalRecord r;
  r.case_id = "C1";
  r.disease_type = "LUAD";
  r.primary_site = "Lung";
  r.demographics = {{"age", "61"}, {"sex", "F"}};
  const auto a = serialize_clinical_summary(r);
  EXPECT_NE(a.find("LUAD"), std::string::npos);
  EXPECT_NE(a.find("Lung"), std::string::npos);
  EXPECT_NE(a.find("61"), std::string::npos);
  EXPECT_EQ(a, serialize_clinical_summary(r));
  EXPECT_GE(word_count(a), 50u);
  EXPECT_LE(word_count(a), 300u);
}

TEST(Clinical, IdentifiersAndPathsExcludedAndLengthBounded) {
  ClinicalRecord r;
  r.case_id = "C1";
  r.disease_type = "BRCA";
  r.primary_site = "Breast";
  r.free_fields["slide_file"] = "/data/slides/C1.svs";
  r.free_fields["patient_id"] = "P-0001";
  for (int i = 0; i < 80; ++i) r.free_fields["note_" + std::to_string(i)] = "observation value " + std::to_string(i);
  const auto s = serialize_clinical_summary(r);
  EXPECT_EQ(s.find(".svs"), std::string::npos);
  EXPECT_EQ(s.find("P-0001"), std::string::npos);
  EXPECT_LE(word_count(s), 300u);
}

TEST(Clinical, JsonlRoundTrip) {
  TempDir dir("clin");
  ClinicalRecord r{"C9", "KIRC", "Kidney", {{"age", "50"}}, {{"stage", "II"}}};
  write_clinical_jsonl(dir / "c.jsonl", {r});
  const auto back = read_clinical_jsonl(dir / "c.jsonl");
  ASSERT_EQ(back.size(), 1u);
  EXPECT_EQ(back[0].disease_type, "KIRC");
  EXPECT_EQ(back[0].demographics.at("age"), "50");
  EXPECT_EQ(back[0].free_fields.at("stage"), "II");
}

TEST(Split, TenCasesGiveEightTwo) {
  std::vector<std::string> ids;
  for (int i = 0; i < 10; ++i) ids.push_back("c" + std::to_string(i));
  const auto s = make_split(ids, 0.2, 1);
  EXPECT_EQ(s.train_ids.size(), 8u);
  EXPECT_EQ(s.test_ids.size(), 2u);
  const auto t = make_split(ids, 0.2, 1);
  EXPECT_EQ(s.test_ids, t.test_ids);
}

TEST(Split, PartitionPropertyOverSizes) {
  for (int n : {5, 6, 7, 13, 50, 99, 100, 257, 1000}) {
    std::vector<std::string> ids;
    for (int i = 0; i < n; ++i) ids.push_back("c" + std::to_string(i));
    const auto s = make_split(ids, 0.2, static_cast<std::uint64_t>(n));
    std::set<std::string> seen(s.train_ids.begin(), s.train_ids.end());
    for (const auto& t : s.test_ids) EXPECT_TRUE(seen.insert(t).second);
    EXPECT_EQ(seen.size(), static_cast<std::size_t>(n));
    EXPECT_LE(std::abs(static_cast<double>(s.test_ids.size()) - 0.2 * n), 1.0);
  }
}

TEST(Split, SeedsDiffer) {
  std::vector<std::string> ids;
  for (int i = 0; i < 100; ++i) ids.push_back("c" + std::to_string(i));
  EXPECT_NE(make_split(ids, 0.2, 1).test_ids, make_split(ids, 0.2, 2).test_ids);
}

TEST(Split, RejectsTooFewAndBadFraction) {
  EXPECT_THROW(make_split({"a", "b", "c", "d"}, 0.2, 1), Error);
  EXPECT_THROW(make_split({"a", "b", "c", "d", "e"}, 1.0, 1), Error);
}

TEST(Split, FileRoundTrip) {
  TempDir dir("split");
  std::vector<std::string> ids{"a", "b", "c", "d", "e", "f"};
  const auto s = make_split(ids, 0.2, 3);
  write_split(dir / "s.json", s);
  const auto back = read_split(dir / "s.json");
  EXPECT_EQ(back.train_ids, s.train_ids);
  EXPECT_EQ(back.test_ids, s.test_ids);
  EXPECT_EQ(back.seed, 3u);
}

TEST(Synthetic, MarkerSeparationAndDeterminism) {
  const auto ds = make_synthetic_dataset(200, 16, 2, 7);
  ASSERT_EQ(ds.labels.size(), 200u);
  EXPECT_EQ(ds.slides.size(), 200u);
  EXPECT_EQ(ds.expression.genes(), 16);
  std::vector<Index> all(200);
  std::iota(all.begin(), all.end(), 0);
  const auto z = zscore_fit_transform(ds.expression, all).matrix.values;
  // Cohen's d: class-mean gap over pooled within-class sd.
  for (int k = 0; k < 2; ++k) {
    for (auto j : ds.marker_genes[static_cast<std::size_t>(k)]) {
      std::vector<double> in, out;
      for (int i = 0; i < 200; ++i) (ds.labels[std::size_t(i)] == k ? in : out).push_back(z(i, j));
      auto mean = [](const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / v.size(); };
      auto ss = [&](const std::vector<double>& v) {
        const double m = mean(v);
        double s = 0;
        for (double x : v) s += (x - m) * (x - m);
        return s;
      };
      const double pooled = std::sqrt((ss(in) + ss(out)) / static_cast<double>(in.size() + out.size() - 2));
      EXPECT_GE((mean(in) - mean(out)) / pooled, 2.0) << "gene " << j;
    }
  }
  const auto again = make_synthetic_dataset(200, 16, 2, 7);
  EXPECT_TRUE((again.expression.missing == ds.expression.missing).all());
  EXPECT_TRUE((again.expression.missing.select(0.0, again.expression.values).array() ==
               ds.expression.missing.select(0.0, ds.expression.values).array())
                  .all());
  EXPECT_EQ(again.slides[5].pixels.pixels, ds.slides[5].pixels.pixels);
  EXPECT_EQ(serialize_clinical_summary(again.records[9]), serialize_clinical_summary(ds.records[9]));
  EXPECT_TRUE((again.latent_expression.array() == ds.latent_expression.array()).all());
}

TEST(Synthetic, LatentSeparationIsAtLeastTwo) {
  const auto ds = make_synthetic_dataset(200, 16, 2, 7);
  for (int k = 0; k < 2; ++k) {
    for (auto j : ds.marker_genes[static_cast<std::size_t>(k)]) {
      double diff = 0;
      for (int i = 0; i < 200; ++i) diff += (ds.labels[std::size_t(i)] == k ? 1.0 : -1.0) * ds.latent_expression(i, j);
      EXPECT_GE(diff / 100.0, 2.0);
    }
  }
}

TEST(Synthetic, Preconditions) {
  EXPECT_THROW(make_synthetic_dataset(10, 16, 1, 1), Error);
  EXPECT_THROW(make_synthetic_dataset(10, 3, 2, 1), Error);
}

TEST(Synthetic, ClassesHaveDistinctLabelsAndSlides) {
  const auto ds = make_synthetic_dataset(6, 8, 3, 4);
  EXPECT_NE(ds.records[0].disease_type, ds.records[1].disease_type);
  EXPECT_NE(ds.records[1].disease_type, ds.records[2].disease_type);
  EXPECT_EQ(ds.records[0].disease_type, ds.records[3].disease_type);
  const auto mask = segment_tissue(ds.slides[0], 2048);
  const auto tiles = extract_tiles(ds.slides[0], mask, 16, 0.2);
  EXPECT_FALSE(tiles.empty());
}

}  // namespace
}  // namespace gemmgan::data
