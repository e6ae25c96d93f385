#include "gemmgan/nn/modules.hpp"

#include "gemmgan/core/error.hpp"

#include <cmath>
#include <cstring>

namespace gemmgan::nn {

Linear::Linear(const std::string& name, Index in, Index out, Rng& rng) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(in));
  std::uniform_real_distribution<double> uni(-bound, bound);
  Matrix w(in, out);
  for (Index i = 0; i < w.size(); ++i) w.data()[i] = uni(rng);
  Matrix b(1, out);
  for (Index i = 0; i < b.size(); ++i) b.data()[i] = uni(rng);
  round_to_float(w);
  round_to_float(b);
  weight = Parameter(name + ".weight", std::move(w));
  bias = Parameter(name + ".bias", std::move(b));
}

Linear Linear::zeros(const std::string& name, Index in, Index out) {
  Linear l;
  l.weight = Parameter(name + ".weight", Matrix::Zero(in, out));
  l.bias = Parameter(name + ".bias", Matrix::Zero(1, out));
  return l;
}

Var Linear::forward(Tape& tape, const Var& x) {
  return affine(x, tape.param(weight), tape.param(bias));
}

Matrix Linear::apply(const Matrix& x) const {
  Matrix y = x * weight.value;
  y.rowwise() += bias.value.row(0);
  return y;
}

void Linear::collect(ParameterList& out) {
  out.push_back(&weight);
  out.push_back(&bias);
}

LayerNorm::LayerNorm(const std::string& name, Index dim)
    : gain(name + ".gain", Matrix::Ones(1, dim)), bias(name + ".bias", Matrix::Zero(1, dim)) {}

Var LayerNorm::forward(Tape& tape, const Var& x) {
  return add_row(mul_row(layer_norm(x, kEps), tape.param(gain)), tape.param(bias));
}

void LayerNorm::collect(ParameterList& out) {
  out.push_back(&gain);
  out.push_back(&bias);
}

Mlp::Mlp(const std::string& name, const std::vector<Index>& widths, Activation act, Rng& rng,
         double slope)
    : activation(act), leaky_slope(slope) {
  if (widths.size() < 2) throw Error(ErrorCode::kInvalidArgument, "Mlp needs at least two widths");
  for (std::size_t i = 0; i + 1 < widths.size(); ++i) {
    layers.emplace_back(name + ".layer" + std::to_string(i), widths[i], widths[i + 1], rng);
  }
}

Var Mlp::activate(const Var& x) const {
  return activation == Activation::kRelu ? relu(x) : leaky_relu(x, leaky_slope);
}

Var Mlp::forward(Tape& tape, const Var& x) {
  Var h = x;
  for (std::size_t i = 0; i < layers.size(); ++i) {
    h = layers[i].forward(tape, h);
    if (i + 1 < layers.size()) h = activate(h);
  }
  return h;
}

void Mlp::collect(ParameterList& out) {
  for (auto& l : layers) l.collect(out);
}

Var Mlp::input_gradient(Tape& tape, const Matrix& input, Index n_cols) {
  if (out_dim() != 1) throw Error(ErrorCode::kDimensionMismatch, "input_gradient needs a scalar output");
  if (input.cols() != in_dim() || n_cols > in_dim()) {
    throw Error(ErrorCode::kDimensionMismatch, "input_gradient: input width mismatch");
  }
  const double low = activation == Activation::kRelu ? 0.0 : leaky_slope;
  // Activation slopes at every hidden pre-activation.
  std::vector<Matrix> slopes;
  Matrix h = input;
  for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
    Matrix pre = layers[i].apply(h);
    slopes.push_back((pre.array() > 0.0).select(Matrix::Ones(pre.rows(), pre.cols()), low));
    h = (pre.array() > 0.0).select(pre, pre * low);
  }

  std::vector<Index> input_rows(static_cast<std::size_t>(n_cols));
  for (Index r = 0; r < n_cols; ++r) input_rows[static_cast<std::size_t>(r)] = r;
  auto weight = [&](std::size_t i) {
    Var w = tape.param(layers[i].weight);
    return i == 0 ? gather_rows(w, input_rows) : w;
  };

  const Index batch = input.rows();
  // Row vector W_last^T broadcast over the batch.
  Var upstream = gather_rows(transpose(weight(layers.size() - 1)),
                             std::vector<Index>(static_cast<std::size_t>(batch), 0));
  for (std::size_t i = layers.size() - 1; i-- > 0;) {
    upstream = hadamard(upstream, tape.constant(slopes[i]));
    upstream = matmul(upstream, transpose(weight(i)));
  }
  return upstream;
}

MultiHeadAttention::MultiHeadAttention(const std::string& name, Index dim, int h, Rng& rng)
    : heads(h),
      q_proj(name + ".q", dim, dim, rng),
      k_proj(name + ".k", dim, dim, rng),
      v_proj(name + ".v", dim, dim, rng),
      out_proj(name + ".out", dim, dim, rng) {
  if (h <= 0 || dim % h != 0) {
    throw Error(ErrorCode::kHeadsDontDivide,
                "dim " + std::to_string(dim) + " not divisible by " + std::to_string(h) + " heads");
  }
  q_proj.bias.value.setZero();
  k_proj.bias.value.setZero();
  v_proj.bias.value.setZero();
  out_proj.bias.value.setZero();
}

Var MultiHeadAttention::forward(Tape& tape, const Var& query, const Var& key, const Var& value,
                                const Segments& query_segments, const Segments& kv_segments,
                                const Dropout& drop, AttentionWeights* weights_out) {
  Var q = q_proj.forward(tape, query);
  Var k = k_proj.forward(tape, key);
  Var v = v_proj.forward(tape, value);
  Var mixed = attention(q, k, v, heads, query_segments, kv_segments, drop, weights_out);
  return out_proj.forward(tape, mixed);
}

void MultiHeadAttention::collect(ParameterList& out) {
  q_proj.collect(out);
  k_proj.collect(out);
  v_proj.collect(out);
  out_proj.collect(out);
}

TransformerBlock::TransformerBlock(const std::string& name, Index dim, int heads, Index ffn_width,
                                   Rng& rng)
    : norm1(name + ".norm1", dim),
      norm2(name + ".norm2", dim),
      attn(name + ".attn", dim, heads, rng),
      ffn_in(name + ".ffn_in", dim, ffn_width, rng),
      ffn_out(name + ".ffn_out", ffn_width, dim, rng) {}

Var TransformerBlock::forward(Tape& tape, const Var& x, const Segments& segments, const Dropout& drop) {
  Var normed = norm1.forward(tape, x);
  Var y = add(x, attn.forward(tape, normed, normed, normed, segments, segments, drop));
  Var hidden = dropout(relu(ffn_in.forward(tape, norm2.forward(tape, y))), drop);
  return add(y, ffn_out.forward(tape, hidden));
}

void TransformerBlock::collect(ParameterList& out) {
  norm1.collect(out);
  attn.collect(out);
  norm2.collect(out);
  ffn_in.collect(out);
  ffn_out.collect(out);
}

Adam::Adam(ParameterList params, AdamConfig config) : params_(std::move(params)), config_(config) {
  for (auto* p : params_) {
    m_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
    v_.push_back(Matrix::Zero(p->value.rows(), p->value.cols()));
  }
}

void Adam::zero_grad() {
  for (auto* p : params_) p->zero_grad();
}

void Adam::step() {
  ++t_;
  const double bc1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
  const double bc2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
  for (std::size_t i = 0; i < params_.size(); ++i) {
    auto* p = params_[i];
    if (p->grad.size() == 0) continue;
    m_[i] = config_.beta1 * m_[i] + (1.0 - config_.beta1) * p->grad;
    v_[i] = config_.beta2 * v_[i] + (1.0 - config_.beta2) * p->grad.cwiseAbs2();
    round_to_float(m_[i]);
    round_to_float(v_[i]);
    p->value.array() -= config_.lr * (m_[i].array() / bc1) /
                        ((v_[i].array() / bc2).sqrt() + config_.eps);
    round_to_float(p->value);
  }
}

std::uint64_t hash_parameters(const ParameterList& params) {
  std::uint64_t h = 1469598103934665603ull;
  auto mix = [&](const void* data, std::size_t n) {
    const auto* bytes = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      h ^= bytes[i];
      h *= 1099511628211ull;
    }
  };
  for (const auto* p : params) {
    mix(p->name.data(), p->name.size());
    mix(p->value.data(), static_cast<std::size_t>(p->value.size()) * sizeof(double));
  }
  return h;
}

}  // namespace gemmgan::nn
