#include "gemmgan/data/expression.hpp"

#include "gemmgan/core/error.hpp"
#include "gemmgan/data/split.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <sstream>
#include <unordered_set>

namespace gemmgan::data {
namespace {

std::vector<std::string> split_tabs(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find('\t', start);
    fields.push_back(line.substr(start, pos == std::string::npos ? std::string::npos : pos - start));
    if (pos == std::string::npos) break;
    start = pos + 1;
  }
  if (!fields.empty() && !fields.back().empty() && fields.back().back() == '\r') fields.back().pop_back();
  return fields;
}

std::string format_value(double v) {
  char buf[32];
  auto res = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, res.ptr);
}

double median_of(std::vector<double>& v) {
  const std::size_t n = v.size();
  std::sort(v.begin(), v.end());
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace

Index ExpressionMatrix::row_of(const std::string& sample_id) const {
  const auto it = std::find(sample_ids.begin(), sample_ids.end(), sample_id);
  return it == sample_ids.end() ? -1 : static_cast<Index>(it - sample_ids.begin());
}

ExpressionMatrix read_expression_tsv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw Error(ErrorCode::kIoError, "cannot read expression table " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw Error(ErrorCode::kIoError, "empty expression table " + path.string());
  auto header = split_tabs(line);
  if (header.size() < 2) throw Error(ErrorCode::kIoError, "expression table has no gene columns");
  ExpressionMatrix m;
  m.gene_ids.assign(header.begin() + 1, header.end());
  const std::size_t g = m.gene_ids.size();

  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty() || line == "\r") continue;
    auto fields = split_tabs(line);
    if (fields.size() != g + 1) {
      throw Error(ErrorCode::kIoError, "row for " + fields[0] + " has " + std::to_string(fields.size() - 1) +
                                           " values, expected " + std::to_string(g));
    }
    m.sample_ids.push_back(fields[0]);
    std::vector<double> row(g);
    for (std::size_t j = 0; j < g; ++j) {
      const auto& f = fields[j + 1];
      if (f.empty() || f == "NA" || f == "NaN" || f == "nan") {
        row[j] = std::numeric_limits<double>::quiet_NaN();
        continue;
      }
      double v = 0.0;
      auto res = std::from_chars(f.data(), f.data() + f.size(), v);
      if (res.ec != std::errc() || res.ptr != f.data() + f.size()) {
        throw Error(ErrorCode::kIoError, "non-numeric value '" + f + "' in " + path.string());
      }
      row[j] = v;
    }
    rows.push_back(std::move(row));
  }
  m.values.resize(static_cast<Index>(rows.size()), static_cast<Index>(g));
  m.missing.resize(m.values.rows(), m.values.cols());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < g; ++j) {
      const double v = rows[i][j];
      m.values(static_cast<Index>(i), static_cast<Index>(j)) = v;
      m.missing(static_cast<Index>(i), static_cast<Index>(j)) = std::isnan(v);
    }
  }
  return m;
}

void write_expression_tsv(const std::filesystem::path& path, const std::vector<std::string>& sample_ids,
                          const std::vector<std::string>& gene_ids, const Matrix& values) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << "sample_id";
  for (const auto& g : gene_ids) out << '\t' << g;
  out << '\n';
  for (Index i = 0; i < values.rows(); ++i) {
    out << sample_ids[static_cast<std::size_t>(i)];
    for (Index j = 0; j < values.cols(); ++j) {
      out << '\t';
      if (!std::isnan(values(i, j))) out << format_value(values(i, j));
    }
    out << '\n';
  }
}

void write_expression_tsv(const std::filesystem::path& path, const ExpressionMatrix& m) {
  write_expression_tsv(path, m.sample_ids, m.gene_ids, m.values);
}

ExpressionMatrix filter_genes(const ExpressionMatrix& m, double max_missing) {
  if (m.samples() < 1) throw Error(ErrorCode::kInvalidArgument, "expression matrix has no samples");
  std::vector<Index> keep;
  const double n = static_cast<double>(m.samples());
  for (Index j = 0; j < m.genes(); ++j) {
    const double missing_fraction = static_cast<double>(m.missing.col(j).count()) / n;
    if (missing_fraction <= max_missing) keep.push_back(j);
  }
  if (keep.empty()) throw Error(ErrorCode::kAllGenesDropped, "every gene exceeds the missing-value limit");
  ExpressionMatrix out;
  out.sample_ids = m.sample_ids;
  out.values.resize(m.samples(), static_cast<Index>(keep.size()));
  out.missing.resize(m.samples(), static_cast<Index>(keep.size()));
  for (std::size_t k = 0; k < keep.size(); ++k) {
    out.gene_ids.push_back(m.gene_ids[static_cast<std::size_t>(keep[k])]);
    out.values.col(static_cast<Index>(k)) = m.values.col(keep[k]);
    out.missing.col(static_cast<Index>(k)) = m.missing.col(keep[k]);
  }
  return out;
}

ZScoreResult zscore_fit_transform(const ExpressionMatrix& m, std::span<const Index> fit_rows, bool log1p) {
  if (fit_rows.empty()) throw Error(ErrorCode::kInvalidArgument, "no rows to fit z-score statistics");
  const Index g = m.genes();
  Matrix values = m.values;
  if (log1p) {
    for (Index i = 0; i < values.size(); ++i) {
      double& v = values.data()[i];
      if (!std::isnan(v)) {
        if (v <= -1.0) throw Error(ErrorCode::kInvalidArgument, "log1p on a value <= -1");
        v = std::log1p(v);
      }
    }
  }

  ZScoreStats stats;
  stats.gene_ids = m.gene_ids;
  stats.log1p = log1p;
  stats.mean.resize(g);
  stats.stddev.resize(g);
  stats.median.resize(g);
  for (Index j = 0; j < g; ++j) {
    std::vector<double> observed;
    for (auto r : fit_rows) {
      if (!m.missing(r, j)) observed.push_back(values(r, j));
    }
    if (observed.empty()) {
      for (Index r = 0; r < m.samples(); ++r) {
        if (!m.missing(r, j)) observed.push_back(values(r, j));
      }
    }
    stats.median(j) = observed.empty() ? 0.0 : median_of(observed);
    for (Index r = 0; r < m.samples(); ++r) {
      if (m.missing(r, j)) values(r, j) = stats.median(j);
    }
    double mu = 0.0;
    for (auto r : fit_rows) mu += values(r, j);
    mu /= static_cast<double>(fit_rows.size());
    double var = 0.0;
    for (auto r : fit_rows) var += (values(r, j) - mu) * (values(r, j) - mu);
    var /= static_cast<double>(fit_rows.size());
    const double sd = std::sqrt(var);
    stats.mean(j) = mu;
    stats.stddev(j) = sd <= 1e-12 * std::max(1.0, std::abs(mu)) ? 0.0 : sd;
  }

  ZScoreResult result;
  result.matrix.sample_ids = m.sample_ids;
  result.matrix.gene_ids = m.gene_ids;
  result.matrix.values.resize(m.samples(), g);
  for (Index j = 0; j < g; ++j) {
    if (stats.stddev(j) == 0.0) {
      result.matrix.values.col(j).setZero();
    } else {
      result.matrix.values.col(j) = (values.col(j).array() - stats.mean(j)) / stats.stddev(j);
    }
  }
  result.matrix.missing = MissingMask::Constant(m.samples(), g, false);
  result.stats = std::move(stats);
  return result;
}

ZScoreResult zscore_fit_transform(const ExpressionMatrix& m, const DatasetSplit& split, bool log1p) {
  std::vector<Index> rows;
  for (Index i = 0; i < m.samples(); ++i) {
    const auto c = match_case(m.sample_ids[static_cast<std::size_t>(i)], split.train_ids);
    if (!c.empty()) rows.push_back(i);
  }
  return zscore_fit_transform(m, rows, log1p);
}

Matrix zscore_apply(const ExpressionMatrix& m, const ZScoreStats& stats) {
  if (m.genes() != stats.mean.size()) throw Error(ErrorCode::kDimensionMismatch, "z-score stats gene count differs");
  Matrix out(m.samples(), m.genes());
  for (Index j = 0; j < m.genes(); ++j) {
    for (Index i = 0; i < m.samples(); ++i) {
      double v = m.missing(i, j) ? stats.median(j) : m.values(i, j);
      if (stats.log1p && !m.missing(i, j)) v = std::log1p(v);
      out(i, j) = stats.stddev(j) == 0.0 ? 0.0 : (v - stats.mean(j)) / stats.stddev(j);
    }
  }
  return out;
}

void write_zscore_stats(const std::filesystem::path& path, const ZScoreStats& stats) {
  nlohmann::ordered_json j;
  j["log1p"] = stats.log1p;
  j["gene_ids"] = stats.gene_ids;
  j["mean"] = std::vector<double>(stats.mean.data(), stats.mean.data() + stats.mean.size());
  j["std"] = std::vector<double>(stats.stddev.data(), stats.stddev.data() + stats.stddev.size());
  j["median"] = std::vector<double>(stats.median.data(), stats.median.data() + stats.median.size());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorCode::kIoError, "cannot write " + path.string());
  out << j.dump(2) << '\n';
}

std::string match_case(const std::string& sample_id, std::span<const std::string> case_ids) {
  std::string best;
  for (const auto& c : case_ids) {
    if (sample_id == c) return c;
    if (sample_id.size() > c.size() && sample_id.compare(0, c.size(), c) == 0 && sample_id[c.size()] == '-' &&
        c.size() > best.size()) {
      best = c;
    }
  }
  return best;
}

}  // namespace gemmgan::data
