#pragma once

#include "gemmgan/nn/ops.hpp"

#include <string>
#include <vector>

namespace gemmgan::nn {

// Dense layer y = x W + b, W stored (in x out).
class Linear {
 public:
  Linear() = default;
  // PyTorch-style uniform(-1/sqrt(in), 1/sqrt(in)) initialization.
  Linear(const std::string& name, Index in, Index out, Rng& rng);
  static Linear zeros(const std::string& name, Index in, Index out);

  Var forward(Tape& tape, const Var& x);
  Matrix apply(const Matrix& x) const;
  void collect(ParameterList& out);

  Index in_dim() const { return weight.value.rows(); }
  Index out_dim() const { return weight.value.cols(); }

  Parameter weight;
  Parameter bias;
};

// Row-wise layer normalization with learnable gain and bias.
class LayerNorm {
 public:
  LayerNorm() = default;
  LayerNorm(const std::string& name, Index dim);

  Var forward(Tape& tape, const Var& x);
  void collect(ParameterList& out);

  static constexpr double kEps = 1e-5;
  Parameter gain;
  Parameter bias;
};

enum class Activation { kRelu, kLeakyRelu };

// Fully connected network; hidden layers use `activation`, the output is linear.
class Mlp {
 public:
  Mlp() = default;
  Mlp(const std::string& name, const std::vector<Index>& widths, Activation activation, Rng& rng,
      double leaky_slope = 0.2);

  Var forward(Tape& tape, const Var& x);
  void collect(ParameterList& out);

  // Graph for d(output)/d(input[:, 0:n_cols]) of a scalar-output network
  // evaluated at `input`. Exact for piecewise-linear activations: the
  // activation slopes enter as constants, every weight stays differentiable,
  // so the result can itself be backpropagated (gradient penalties).
  Var input_gradient(Tape& tape, const Matrix& input, Index n_cols);

  Index in_dim() const { return layers.front().in_dim(); }
  Index out_dim() const { return layers.back().out_dim(); }

  std::vector<Linear> layers;
  Activation activation = Activation::kRelu;
  double leaky_slope = 0.2;

 private:
  Var activate(const Var& x) const;
};

class MultiHeadAttention {
 public:
  MultiHeadAttention() = default;
  MultiHeadAttention(const std::string& name, Index dim, int heads, Rng& rng);

  Var forward(Tape& tape, const Var& query, const Var& key, const Var& value,
              const Segments& query_segments, const Segments& kv_segments, const Dropout& drop = {},
              AttentionWeights* weights_out = nullptr);
  void collect(ParameterList& out);

  int heads = 1;
  Linear q_proj, k_proj, v_proj, out_proj;
};

// Pre-normalization encoder block: x + MHA(LN(x)), then + FFN(LN(x)).
class TransformerBlock {
 public:
  TransformerBlock() = default;
  TransformerBlock(const std::string& name, Index dim, int heads, Index ffn_width, Rng& rng);

  Var forward(Tape& tape, const Var& x, const Segments& segments, const Dropout& drop);
  void collect(ParameterList& out);

  LayerNorm norm1, norm2;
  MultiHeadAttention attn;
  Linear ffn_in, ffn_out;
};

struct AdamConfig {
  double lr = 1e-4;
  double beta1 = 0.0;
  double beta2 = 0.9;
  double eps = 1e-8;
};

// Adam with parameters and moments kept on the float grid, so a float32
// snapshot of the state is exact.
class Adam {
 public:
  Adam() = default;
  Adam(ParameterList params, AdamConfig config);

  void zero_grad();
  void step();

  const ParameterList& params() const { return params_; }
  std::vector<Matrix>& first_moments() { return m_; }
  std::vector<Matrix>& second_moments() { return v_; }
  std::int64_t steps() const { return t_; }
  void set_steps(std::int64_t t) { t_ = t; }

 private:
  ParameterList params_;
  AdamConfig config_;
  std::vector<Matrix> m_, v_;
  std::int64_t t_ = 0;
};

// Order-sensitive digest of parameter values (for freeze/isolation checks).
std::uint64_t hash_parameters(const ParameterList& params);

}  // namespace gemmgan::nn
