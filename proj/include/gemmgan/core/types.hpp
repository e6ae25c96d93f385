#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace gemmgan {

using Index = Eigen::Index;
using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using FloatMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

using Rng = std::mt19937_64;

// Derives an independent generator from a base seed and a path of integers
// (e.g. {seed, step, phase}). Same path, same stream.
Rng derive_rng(std::uint64_t seed, std::initializer_list<std::uint64_t> path);

Matrix standard_normal(Index rows, Index cols, Rng& rng);

// Row ranges of a ragged batch: sample b owns rows [offsets[b], offsets[b+1]).
struct Segments {
  std::vector<Index> offsets{0};

  static Segments uniform(Index count, Index length);
  static Segments from_lengths(const std::vector<Index>& lengths);

  Index count() const { return static_cast<Index>(offsets.size()) - 1; }
  Index begin(Index b) const { return offsets[static_cast<std::size_t>(b)]; }
  Index length(Index b) const {
    return offsets[static_cast<std::size_t>(b) + 1] - offsets[static_cast<std::size_t>(b)];
  }
  Index total() const { return offsets.back(); }
};

// Rounds every entry to the nearest representable float.
void round_to_float(Matrix& m);

FloatMatrix to_float(const Matrix& m);
Matrix to_double(const FloatMatrix& m);

}  // namespace gemmgan
