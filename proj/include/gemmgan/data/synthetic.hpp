#pragma once

#include "gemmgan/data/clinical.hpp"
#include "gemmgan/data/expression.hpp"
#include "gemmgan/data/image.hpp"

#include <cstdint>
#include <filesystem>
#include <vector>

namespace gemmgan::data {

struct SyntheticOptions {
  int slide_size = 64;
  double missing_rate = 0.01;
  double marker_shift = 3.0;  // class-mean offset on marker genes, in latent units
  double noise_sd = 0.3;
};

// Toy multimodal cohort. Class k has its own expression mean on marker genes,
// its own slide color/texture motif, and disease_type/primary_site labels;
// two shared latent factors induce gene-gene correlation and also modulate
// slide brightness.
struct SyntheticDataset {
  std::vector<SlideImage> slides;
  std::vector<ClinicalRecord> records;
  ExpressionMatrix expression;            // raw scale, with sparse missing entries
  Matrix latent_expression;               // noise-free standardized-scale values before raw mapping
  std::vector<int> labels;
  std::vector<std::vector<Index>> marker_genes;  // per class
};

SyntheticDataset make_synthetic_dataset(int n_cases, int n_genes, int n_classes, std::uint64_t seed,
                                        const SyntheticOptions& options = {});

// slides/<case>.png, expression.tsv, clinical.jsonl under `dir`.
void write_synthetic_dataset(const std::filesystem::path& dir, const SyntheticDataset& dataset);

}  // namespace gemmgan::data
