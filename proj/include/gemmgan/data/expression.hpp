#pragma once

#include "gemmgan/core/types.hpp"

#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace gemmgan::data {

struct DatasetSplit;

using MissingMask = Eigen::Array<bool, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

// Samples x genes table. Missing entries hold NaN in `values` and true in
// `missing`.
struct ExpressionMatrix {
  std::vector<std::string> sample_ids;
  std::vector<std::string> gene_ids;
  Matrix values;
  MissingMask missing;

  Index samples() const { return values.rows(); }
  Index genes() const { return values.cols(); }
  Index row_of(const std::string& sample_id) const;  // -1 if absent
};

// Tab-separated: header "sample_id<TAB>gene...", empty field = missing.
ExpressionMatrix read_expression_tsv(const std::filesystem::path& path);
void write_expression_tsv(const std::filesystem::path& path, const ExpressionMatrix& m);
void write_expression_tsv(const std::filesystem::path& path, const std::vector<std::string>& sample_ids,
                          const std::vector<std::string>& gene_ids, const Matrix& values);

inline constexpr double kDefaultMaxMissing = 0.9;

// Keeps genes whose missing fraction is <= max_missing, in original order.
ExpressionMatrix filter_genes(const ExpressionMatrix& m, double max_missing = kDefaultMaxMissing);

struct ZScoreStats {
  std::vector<std::string> gene_ids;
  RowVector mean;
  RowVector stddev;  // population; 0 marks a constant gene
  RowVector median;  // imputation value
  bool log1p = false;
};

struct ZScoreResult {
  ExpressionMatrix matrix;  // all samples, no missing entries left
  ZScoreStats stats;
};

// Imputes missing entries with the fit-row median, then standardizes every
// gene with mean/std from the fit rows only. Constant genes become zeros.
ZScoreResult zscore_fit_transform(const ExpressionMatrix& m, std::span<const Index> fit_rows,
                                  bool log1p = false);
// Fit rows are the samples belonging to split.train_ids.
ZScoreResult zscore_fit_transform(const ExpressionMatrix& m, const DatasetSplit& split,
                                  bool log1p = false);

// Applies previously fitted statistics (genes matched by position).
Matrix zscore_apply(const ExpressionMatrix& m, const ZScoreStats& stats);

void write_zscore_stats(const std::filesystem::path& path, const ZScoreStats& stats);

// The case a sample belongs to: exact id match, or the longest case id that
// prefixes the sample id followed by '-'. Empty if none.
std::string match_case(const std::string& sample_id, std::span<const std::string> case_ids);

}  // namespace gemmgan::data
