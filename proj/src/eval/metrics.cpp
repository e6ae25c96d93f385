#include "gemmgan/eval/metrics.hpp"

#include "gemmgan/core/error.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gemmgan::eval {
namespace {

// Columns centered and scaled so that Z^T Z is the correlation matrix;
// constant columns are left as zeros.
Matrix standardized_columns(const Matrix& x, Index* constant_count) {
  Matrix z = x.rowwise() - x.colwise().mean();
  Index constants = 0;
  for (Index j = 0; j < z.cols(); ++j) {
    if (x.col(j).maxCoeff() == x.col(j).minCoeff()) {
      z.col(j).setZero();
      ++constants;
    } else {
      z.col(j) /= z.col(j).norm();
    }
  }
  if (constant_count != nullptr) *constant_count = constants;
  return z;
}

Matrix correlation_block(const Matrix& z, Index r0, Index rn, Index c0, Index cn) {
  Matrix block = z.middleCols(r0, rn).transpose() * z.middleCols(c0, cn);
  for (Index i = 0; i < rn; ++i) {
    for (Index j = 0; j < cn; ++j) {
      if (r0 + i == c0 + j) block(i, j) = 1.0;
    }
  }
  return block;
}

Matrix select_columns(const Matrix& x, std::span<const Index> columns) {
  Matrix out(x.rows(), static_cast<Index>(columns.size()));
  for (std::size_t k = 0; k < columns.size(); ++k) {
    if (columns[k] < 0 || columns[k] >= x.cols()) {
      throw Error(ErrorCode::kInvalidArgument, "gene subset index out of range");
    }
    out.col(static_cast<Index>(k)) = x.col(columns[k]);
  }
  return out;
}

void check_samples(const Matrix& real, const Matrix& generated) {
  if (real.rows() < 2 || generated.rows() < 2) {
    throw Error(ErrorCode::kTooFewSamples, "correlation_mse needs at least 2 samples on each side");
  }
  if (real.cols() != generated.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "real and generated profiles have different gene counts");
  }
}

}  // namespace

double euclidean_distance(const double* a, const double* b, Index dim) {
  double s = 0.0;
  for (Index k = 0; k < dim; ++k) {
    const double d = a[k] - b[k];
    s += d * d;
  }
  return std::sqrt(s);
}

Vector manifold_radii(const Matrix& points, int t) {
  if (t < 1) throw Error(ErrorCode::kInvalidArgument, "neighbor order t must be >= 1");
  const Index n = points.rows();
  if (n <= t) {
    throw Error(ErrorCode::kTooFewPoints,
                "manifold needs more than t=" + std::to_string(t) + " points, got " + std::to_string(n));
  }
  Vector radii(n);
  std::vector<double> dist(static_cast<std::size_t>(n - 1));
  for (Index i = 0; i < n; ++i) {
    std::size_t k = 0;
    for (Index j = 0; j < n; ++j) {
      if (j == i) continue;
      dist[k++] = euclidean_distance(points.row(i).data(), points.row(j).data(), points.cols());
    }
    std::nth_element(dist.begin(), dist.begin() + (t - 1), dist.end());
    radii(i) = dist[static_cast<std::size_t>(t - 1)];
  }
  return radii;
}

bool in_manifold(const RowVector& h, const Matrix& centers, const Vector& radii) {
  if (h.size() != centers.cols() || radii.size() != centers.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "in_manifold: shapes disagree");
  }
  for (Index i = 0; i < centers.rows(); ++i) {
    if (euclidean_distance(h.data(), centers.row(i).data(), h.size()) <= radii(i)) return true;
  }
  return false;
}

PrecisionRecall precision_recall(const Matrix& real, const Matrix& generated, int t) {
  if (real.cols() != generated.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "real and generated profiles have different gene counts");
  }
  const Vector real_radii = manifold_radii(real, t);
  const Vector gen_radii = manifold_radii(generated, t);
  Index inside_real = 0, inside_gen = 0;
  for (Index i = 0; i < generated.rows(); ++i) inside_real += in_manifold(generated.row(i), real, real_radii);
  for (Index i = 0; i < real.rows(); ++i) inside_gen += in_manifold(real.row(i), generated, gen_radii);
  return {static_cast<double>(inside_real) / static_cast<double>(generated.rows()),
          static_cast<double>(inside_gen) / static_cast<double>(real.rows())};
}

Matrix correlation_matrix(const Matrix& x) {
  if (x.rows() < 2) throw Error(ErrorCode::kTooFewSamples, "correlation needs at least 2 samples");
  const Matrix z = standardized_columns(x, nullptr);
  return correlation_block(z, 0, z.cols(), 0, z.cols());
}

double correlation_mse(const Matrix& real, const Matrix& generated, std::optional<std::span<const Index>> gene_subset,
                       Index block_size, CorrelationDiagnostics* diagnostics) {
  check_samples(real, generated);
  if (block_size <= 0) throw Error(ErrorCode::kInvalidArgument, "block size must be positive");
  CorrelationDiagnostics diag;
  Matrix zr, zg;
  if (gene_subset) {
    zr = standardized_columns(select_columns(real, *gene_subset), &diag.constant_genes_real);
    zg = standardized_columns(select_columns(generated, *gene_subset), &diag.constant_genes_generated);
  } else {
    zr = standardized_columns(real, &diag.constant_genes_real);
    zg = standardized_columns(generated, &diag.constant_genes_generated);
  }
  if (diagnostics != nullptr) *diagnostics = diag;
  const Index g = zr.cols();
  if (g == 0) return 0.0;
  double total = 0.0;
  for (Index r0 = 0; r0 < g; r0 += block_size) {
    const Index rn = std::min(block_size, g - r0);
    for (Index c0 = 0; c0 < g; c0 += block_size) {
      const Index cn = std::min(block_size, g - c0);
      total += (correlation_block(zr, r0, rn, c0, cn) - correlation_block(zg, r0, rn, c0, cn)).squaredNorm();
    }
  }
  return total / (static_cast<double>(g) * static_cast<double>(g));
}

double correlation_mse_dense(const Matrix& real, const Matrix& generated) {
  check_samples(real, generated);
  const Matrix diff = correlation_matrix(real) - correlation_matrix(generated);
  return diff.squaredNorm() / static_cast<double>(diff.size());
}

std::vector<Index> top_variance_genes(const Matrix& x, Index k) {
  const RowVector var = (x.rowwise() - x.colwise().mean()).colwise().squaredNorm();
  std::vector<Index> order(static_cast<std::size_t>(x.cols()));
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) { return var(a) > var(b); });
  order.resize(static_cast<std::size_t>(std::min(k, x.cols())));
  std::sort(order.begin(), order.end());
  return order;
}

}  // namespace gemmgan::eval
