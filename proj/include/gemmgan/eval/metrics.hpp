#pragma once

#include "gemmgan/core/types.hpp"

#include <optional>
#include <span>
#include <vector>

namespace gemmgan::eval {

inline constexpr int kDefaultNeighbor = 10;

// sqrt of the sum of squared coordinate differences, accumulated in index order.
double euclidean_distance(const double* a, const double* b, Index dim);

// Distance from each row to its t-th nearest other row. Needs rows > t.
Vector manifold_radii(const Matrix& points, int t);

// 1 iff some center lies within its own radius of h (boundary inclusive).
bool in_manifold(const RowVector& h, const Matrix& centers, const Vector& radii);

struct PrecisionRecall {
  double precision = 0.0;
  double recall = 0.0;
};

PrecisionRecall precision_recall(const Matrix& real, const Matrix& generated, int t = kDefaultNeighbor);

struct CorrelationDiagnostics {
  Index constant_genes_real = 0;
  Index constant_genes_generated = 0;
};

// Gene-gene Pearson correlation; constant genes get 0 off the diagonal, and
// the diagonal is 1.
Matrix correlation_matrix(const Matrix& x);

// Mean over all g^2 entries of the squared difference of correlation
// matrices, accumulated block by block over gene tiles.
double correlation_mse(const Matrix& real, const Matrix& generated,
                       std::optional<std::span<const Index>> gene_subset = std::nullopt, Index block_size = 512,
                       CorrelationDiagnostics* diagnostics = nullptr);

// Reference computation through two full g x g matrices.
double correlation_mse_dense(const Matrix& real, const Matrix& generated);

// Indices of the k highest-variance columns of x, in column order.
std::vector<Index> top_variance_genes(const Matrix& x, Index k);

}  // namespace gemmgan::eval
