#pragma once

#include "gemmgan/nn/tape.hpp"

#include <vector>

namespace gemmgan::nn {

struct Dropout {
  double rate = 0.0;
  Rng* rng = nullptr;

  bool active() const { return rng != nullptr && rate > 0.0; }
};

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);

// a (r x c) + row (1 x c), broadcast over rows.
Var add_row(const Var& a, const Var& row);
// a (r x c) .* row (1 x c), broadcast over rows.
Var mul_row(const Var& a, const Var& row);
// x W + b with W (in x out) and b (1 x out).
Var affine(const Var& x, const Var& weight, const Var& bias);

Var relu(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var exp(const Var& a);
Var square(const Var& a);

// Row-wise standardization without affine terms.
Var layer_norm(const Var& x, double eps);

// out.row(i) = x.row(index[i]); backward scatters.
Var gather_rows(const Var& x, std::vector<Index> index);
Var vstack(const Var& top, const Var& bottom);
Var hstack(const Var& left, const Var& right);
// One row per segment: the mean of that segment's rows.
Var segment_mean(const Var& x, const Segments& segments);

Var sum(const Var& a);
Var mean(const Var& a);
// Column of per-row Euclidean norms.
Var row_norm(const Var& a);

Var dropout(const Var& a, const Dropout& spec);

// Per-sample, per-head softmax attention weights, [sample][head] -> q_len x kv_len.
using AttentionWeights = std::vector<std::vector<Matrix>>;

// Scaled dot-product attention over a ragged batch. q rows are grouped by
// q_segments, k/v rows by kv_segments; each query attends only to keys of its
// own sample. Head h uses feature columns [h*dh, (h+1)*dh).
Var attention(const Var& q, const Var& k, const Var& v, int heads, const Segments& q_segments,
              const Segments& kv_segments, const Dropout& drop = {},
              AttentionWeights* weights_out = nullptr);

}  // namespace gemmgan::nn
