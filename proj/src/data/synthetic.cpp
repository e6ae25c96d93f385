#include "gemmgan/data/synthetic.hpp"

#include "gemmgan/core/error.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <limits>

namespace gemmgan::data {
namespace {

struct ClassInfo {
  std::string disease;
  std::string site;
  std::array<double, 3> color;
};

ClassInfo class_info(int k) {
  static const std::array<ClassInfo, 8> known = {{
      {"LUAD", "Lung", {214, 96, 168}},
      {"BRCA", "Breast", {110, 60, 170}},
      {"KIRC", "Kidney", {200, 70, 70}},
      {"COAD", "Colon", {90, 120, 190}},
      {"SKCM", "Skin", {180, 140, 60}},
      {"GBM", "Brain", {80, 160, 120}},
      {"PRAD", "Prostate", {160, 90, 60}},
      {"THCA", "Thyroid", {150, 150, 210}},
  }};
  if (k < static_cast<int>(known.size())) return known[static_cast<std::size_t>(k)];
  const double hue = std::fmod(k * 47.0, 360.0) / 60.0;
  const double x = 1.0 - std::abs(std::fmod(hue, 2.0) - 1.0);
  std::array<double, 3> rgb{};
  switch (static_cast<int>(hue)) {
    case 0: rgb = {1, x, 0}; break;
    case 1: rgb = {x, 1, 0}; break;
    case 2: rgb = {0, 1, x}; break;
    case 3: rgb = {0, x, 1}; break;
    case 4: rgb = {x, 0, 1}; break;
    default: rgb = {1, 0, x}; break;
  }
  for (auto& c : rgb) c = 60 + 150 * c;
  return {"TYPE" + std::to_string(k), "Site" + std::to_string(k), rgb};
}

double texture(int motif, int x, int y) {
  switch (motif % 4) {
    case 0: return (y % 4) < 2 ? 1.0 : 0.8;
    case 1: return ((x % 6) < 2 && (y % 6) < 2) ? 0.65 : 1.0;
    case 2: return (x % 4) < 2 ? 1.0 : 0.8;
    default: return ((x / 3 + y / 3) % 2) ? 1.0 : 0.85;
  }
}

std::uint8_t clamp_byte(double v) { return static_cast<std::uint8_t>(std::clamp(std::lround(v), 0L, 255L)); }

}  // namespace

SyntheticDataset make_synthetic_dataset(int n_cases, int n_genes, int n_classes, std::uint64_t seed,
                                        const SyntheticOptions& options) {
  if (n_classes < 2) throw Error(ErrorCode::kInvalidArgument, "synthetic dataset needs at least 2 classes");
  if (n_genes < 4) throw Error(ErrorCode::kInvalidArgument, "synthetic dataset needs at least 4 genes");
  if (n_cases < 1) throw Error(ErrorCode::kInvalidArgument, "synthetic dataset needs at least 1 case");

  Rng rng = derive_rng(seed, {0xda7a});
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unit(0.0, 1.0);

  SyntheticDataset ds;
  ds.marker_genes.resize(static_cast<std::size_t>(n_classes));
  Matrix class_mean = Matrix::Zero(n_classes, n_genes);
  for (int j = 0; j < n_genes / 2; ++j) {
    const int k = j % n_classes;
    ds.marker_genes[static_cast<std::size_t>(k)].push_back(j);
    class_mean(k, j) = options.marker_shift;
  }
  Matrix loadings(n_genes, 2);
  for (int j = 0; j < n_genes; ++j) {
    loadings(j, 0) = (j % 4 < 2 ? 0.8 : -0.8);
    loadings(j, 1) = ((j / 4) % 2 ? 0.5 : -0.5);
  }

  ds.expression.gene_ids.reserve(static_cast<std::size_t>(n_genes));
  for (int j = 0; j < n_genes; ++j) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "GENE%04d", j + 1);
    ds.expression.gene_ids.emplace_back(buf);
  }
  ds.expression.values.resize(n_cases, n_genes);
  ds.expression.missing = MissingMask::Constant(n_cases, n_genes, false);
  ds.latent_expression.resize(n_cases, n_genes);

  const int size = options.slide_size;
  for (int i = 0; i < n_cases; ++i) {
    const int k = i % n_classes;
    const ClassInfo info = class_info(k);
    char id[32];
    std::snprintf(id, sizeof(id), "CASE-%04d", i + 1);
    const std::string case_id = id;
    ds.labels.push_back(k);

    const double f0 = normal(rng), f1 = normal(rng);
    for (int j = 0; j < n_genes; ++j) {
      const double x = class_mean(k, j) + loadings(j, 0) * f0 + loadings(j, 1) * f1 + options.noise_sd * normal(rng);
      ds.latent_expression(i, j) = x;
      const double offset = 5.0 + (j % 7);
      const double scale = 1.0 + 0.25 * (j % 3);
      ds.expression.values(i, j) = offset + scale * x;
      if (unit(rng) < options.missing_rate) {
        ds.expression.values(i, j) = std::numeric_limits<double>::quiet_NaN();
        ds.expression.missing(i, j) = true;
      }
    }
    ds.expression.sample_ids.push_back(case_id);

    SlideImage slide{case_id, RgbImage(size, size), std::nullopt};
    const double cx = size / 2.0 + (unit(rng) - 0.5) * size * 0.2;
    const double cy = size / 2.0 + (unit(rng) - 0.5) * size * 0.2;
    const double rx = size * (0.3 + 0.15 * unit(rng));
    const double ry = size * (0.3 + 0.15 * unit(rng));
    const double brightness = 1.0 + 0.15 * std::tanh(f0);
    for (int y = 0; y < size; ++y) {
      for (int x = 0; x < size; ++x) {
        auto* p = slide.pixels.at(x, y);
        const double dx = (x + 0.5 - cx) / rx, dy = (y + 0.5 - cy) / ry;
        if (dx * dx + dy * dy <= 1.0) {
          const double tex = texture(k, x, y);
          for (int c = 0; c < 3; ++c) p[c] = clamp_byte(info.color[static_cast<std::size_t>(c)] * brightness * tex + 10.0 * normal(rng));
        } else {
          for (int c = 0; c < 3; ++c) p[c] = clamp_byte(245.0 + 4.0 * normal(rng));
        }
      }
    }
    ds.slides.push_back(std::move(slide));

    ClinicalRecord r;
    r.case_id = case_id;
    r.disease_type = info.disease;
    r.primary_site = info.site;
    const int age = 35 + static_cast<int>(unit(rng) * 50.0);
    r.demographics["age"] = std::to_string(age);
    std::string sex = unit(rng) < 0.5 ? "female" : "male";
    if (info.disease == "BRCA") sex = "female";
    if (info.disease == "PRAD") sex = "male";
    r.demographics["sex"] = sex;
    static const std::array<const char*, 3> races = {"white", "asian", "black or african american"};
    r.demographics["race"] = races[static_cast<std::size_t>(unit(rng) * 3.0) % 3];
    static const std::array<const char*, 4> stages = {"Stage I", "Stage II", "Stage III", "Stage IV"};
    r.free_fields["tumor_stage"] = stages[static_cast<std::size_t>(unit(rng) * 4.0) % 4];
    r.free_fields["prior_treatment"] = unit(rng) < 0.3 ? "yes" : "no";
    r.free_fields["slide_file"] = case_id + ".svs";
    ds.records.push_back(std::move(r));
  }
  return ds;
}

void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDataset& dataset) {
  std::filesystem::create_directories(dir / "slides");
  for (const auto& s : dataset.slides) write_png(dir / "slides" / (s.slide_id + ".png"), s.pixels);
  write_expression_tsv(dir / "expression.tsv", dataset.expression);
  write_clinical_jsonl(dir / "clinical.jsonl", dataset.records);
}

}  // namespace gemmgan::data
