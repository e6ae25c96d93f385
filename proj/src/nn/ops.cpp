#include "gemmgan/nn/ops.hpp"

#include "gemmgan/core/error.hpp"

#include <cmath>
#include <memory>
#include <string>

namespace gemmgan::nn {
namespace {

std::string shape(const Matrix& m) {
  return std::to_string(m.rows()) + "x" + std::to_string(m.cols());
}

void require_same_shape(const Var& a, const Var& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(op) + ": " + shape(a.value()) + " vs " + shape(b.value()));
  }
}

void require_row(const Var& a, const Var& row, const char* op) {
  if (row.rows() != 1 || row.cols() != a.cols()) {
    throw Error(ErrorCode::kDimensionMismatch,
                std::string(op) + ": row " + shape(row.value()) + " vs " + shape(a.value()));
  }
}

}  // namespace

Var matmul(const Var& a, const Var& b) {
  if (a.cols() != b.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "matmul: " + shape(a.value()) + " * " + shape(b.value()));
  }
  Matrix out = a.value() * b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().emit(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) t.accumulate_expr(ia, g * t.value(ib).transpose());
    if (t.needs_grad(ib)) t.accumulate_expr(ib, t.value(ia).transpose() * g);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.grad(self).transpose());
  });
}

Var add(const Var& a, const Var& b) {
  require_same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().emit(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate(ib, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  require_same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  const int ia = a.id(), ib = b.id();
  return a.tape().emit(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate_expr(ib, -t.grad(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  require_same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  const int ia = a.id(), ib = b.id();
  return a.tape().emit(std::move(out), {a, b}, [ia, ib](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate_expr(ia, g.cwiseProduct(t.value(ib)));
    t.accumulate_expr(ib, g.cwiseProduct(t.value(ia)));
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia, s](Tape& t, int self) {
    t.accumulate_expr(ia, t.grad(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
  });
}

Var add_row(const Var& a, const Var& row) {
  require_row(a, row, "add_row");
  Matrix out = a.value().rowwise() + row.value().row(0);
  const int ia = a.id(), ir = row.id();
  return a.tape().emit(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    t.accumulate(ia, t.grad(self));
    t.accumulate_expr(ir, t.grad(self).colwise().sum());
  });
}

Var mul_row(const Var& a, const Var& row) {
  require_row(a, row, "mul_row");
  Matrix out = a.value().array().rowwise() * row.value().row(0).array();
  const int ia = a.id(), ir = row.id();
  return a.tape().emit(std::move(out), {a, row}, [ia, ir](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(ia)) {
      t.accumulate_expr(ia, (g.array().rowwise() * t.value(ir).row(0).array()).matrix());
    }
    if (t.needs_grad(ir)) {
      t.accumulate_expr(ir, g.cwiseProduct(t.value(ia)).colwise().sum());
    }
  });
}

Var affine(const Var& x, const Var& weight, const Var& bias) {
  if (x.cols() != weight.rows()) {
    throw Error(ErrorCode::kDimensionMismatch,
                "affine: input " + shape(x.value()) + " vs weight " + shape(weight.value()));
  }
  require_row(weight, bias, "affine");
  return add_row(matmul(x, weight), bias);
}

Var relu(const Var& a) {
  Matrix out = a.value().cwiseMax(0.0);
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, (t.value(ia).array() > 0.0).select(t.grad(self), 0.0).matrix());
  });
}

Var leaky_relu(const Var& a, double slope) {
  Matrix out = (a.value().array() > 0.0).select(a.value(), a.value() * slope);
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia, slope](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    t.accumulate_expr(ia, (t.value(ia).array() > 0.0).select(g, g * slope).matrix());
  });
}

Var exp(const Var& a) {
  Matrix out = a.value().array().exp();
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, t.grad(self).cwiseProduct(t.value(self)));
  });
}

Var square(const Var& a) {
  Matrix out = a.value().array().square();
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    t.accumulate_expr(ia, 2.0 * t.grad(self).cwiseProduct(t.value(ia)));
  });
}

Var layer_norm(const Var& x, double eps) {
  const Matrix& in = x.value();
  const Index n = in.cols();
  auto inv_std = std::make_shared<Vector>(in.rows());
  Matrix out(in.rows(), n);
  for (Index r = 0; r < in.rows(); ++r) {
    const double mu = in.row(r).mean();
    const double var = (in.row(r).array() - mu).square().mean();
    const double is = 1.0 / std::sqrt(var + eps);
    (*inv_std)(r) = is;
    out.row(r) = (in.row(r).array() - mu) * is;
  }
  const int ix = x.id();
  return x.tape().emit(std::move(out), {x}, [ix, inv_std, n](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& xhat = t.value(self);
    Matrix dx(g.rows(), g.cols());
    for (Index r = 0; r < g.rows(); ++r) {
      const double mean_g = g.row(r).mean();
      const double mean_gx = g.row(r).dot(xhat.row(r)) / static_cast<double>(n);
      dx.row(r) = (*inv_std)(r) * (g.row(r).array() - mean_g - xhat.row(r).array() * mean_gx);
    }
    t.accumulate(ix, dx);
  });
}

Var gather_rows(const Var& x, std::vector<Index> index) {
  const Matrix& in = x.value();
  Matrix out(static_cast<Index>(index.size()), in.cols());
  for (std::size_t i = 0; i < index.size(); ++i) {
    if (index[i] < 0 || index[i] >= in.rows()) {
      throw Error(ErrorCode::kDimensionMismatch, "gather_rows: index out of range");
    }
    out.row(static_cast<Index>(i)) = in.row(index[i]);
  }
  const int ix = x.id();
  const Index rows = in.rows();
  auto idx = std::make_shared<std::vector<Index>>(std::move(index));
  return x.tape().emit(std::move(out), {x}, [ix, idx, rows](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix dx = Matrix::Zero(rows, g.cols());
    for (std::size_t i = 0; i < idx->size(); ++i) dx.row((*idx)[i]) += g.row(static_cast<Index>(i));
    t.accumulate(ix, dx);
  });
}

Var vstack(const Var& top, const Var& bottom) {
  if (top.cols() != bottom.cols()) {
    throw Error(ErrorCode::kDimensionMismatch, "vstack: column counts differ");
  }
  Matrix out(top.rows() + bottom.rows(), top.cols());
  out << top.value(), bottom.value();
  const int it = top.id(), ib = bottom.id();
  const Index split = top.rows();
  return top.tape().emit(std::move(out), {top, bottom}, [it, ib, split](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(it)) t.accumulate_expr(it, g.topRows(split));
    if (t.needs_grad(ib)) t.accumulate_expr(ib, g.bottomRows(g.rows() - split));
  });
}

Var hstack(const Var& left, const Var& right) {
  if (left.rows() != right.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "hstack: row counts differ");
  }
  Matrix out(left.rows(), left.cols() + right.cols());
  out << left.value(), right.value();
  const int il = left.id(), ir = right.id();
  const Index split = left.cols();
  return left.tape().emit(std::move(out), {left, right}, [il, ir, split](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    if (t.needs_grad(il)) t.accumulate_expr(il, g.leftCols(split));
    if (t.needs_grad(ir)) t.accumulate_expr(ir, g.rightCols(g.cols() - split));
  });
}

Var segment_mean(const Var& x, const Segments& segments) {
  if (segments.total() != x.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "segment_mean: segments do not cover the rows");
  }
  Matrix out(segments.count(), x.cols());
  for (Index b = 0; b < segments.count(); ++b) {
    if (segments.length(b) == 0) throw Error(ErrorCode::kDimensionMismatch, "segment_mean: empty segment");
    out.row(b) = x.value().middleRows(segments.begin(b), segments.length(b)).colwise().mean();
  }
  const int ix = x.id();
  return x.tape().emit(std::move(out), {x}, [ix, segments](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    Matrix dx(segments.total(), g.cols());
    for (Index b = 0; b < segments.count(); ++b) {
      const double w = 1.0 / static_cast<double>(segments.length(b));
      dx.middleRows(segments.begin(b), segments.length(b)).rowwise() = g.row(b) * w;
    }
    t.accumulate(ix, dx);
  });
}

Var sum(const Var& a) {
  Matrix out(1, 1);
  out(0, 0) = a.value().sum();
  const int ia = a.id();
  const Index r = a.rows(), c = a.cols();
  return a.tape().emit(std::move(out), {a}, [ia, r, c](Tape& t, int self) {
    t.accumulate_expr(ia, Matrix::Constant(r, c, t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  return scale(sum(a), 1.0 / n);
}

Var row_norm(const Var& a) {
  Matrix out = a.value().rowwise().norm();
  const int ia = a.id();
  return a.tape().emit(std::move(out), {a}, [ia](Tape& t, int self) {
    const Matrix& g = t.grad(self);
    const Matrix& norms = t.value(self);
    const Matrix& x = t.value(ia);
    Matrix dx(x.rows(), x.cols());
    for (Index r = 0; r < x.rows(); ++r) {
      const double n = norms(r, 0);
      if (n > 0.0) {
        dx.row(r) = x.row(r) * (g(r, 0) / n);
      } else {
        dx.row(r).setZero();
      }
    }
    t.accumulate(ia, dx);
  });
}

Var dropout(const Var& a, const Dropout& spec) {
  if (!spec.active()) return a;
  std::bernoulli_distribution keep(1.0 - spec.rate);
  const double inv = 1.0 / (1.0 - spec.rate);
  Matrix mask(a.rows(), a.cols());
  for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*spec.rng) ? inv : 0.0;
  return hadamard(a, a.tape().constant(std::move(mask)));
}

namespace {

struct AttentionCache {
  Index dh = 0;
  double inv_sqrt = 1.0;
  // [sample * heads + head]
  std::vector<Matrix> probs;
  std::vector<Matrix> masks;
};

}  // namespace

Var attention(const Var& q, const Var& k, const Var& v, int heads, const Segments& q_segments,
              const Segments& kv_segments, const Dropout& drop, AttentionWeights* weights_out) {
  const Index width = q.cols();
  if (heads <= 0 || width % heads != 0) {
    throw Error(ErrorCode::kHeadsDontDivide,
                "width " + std::to_string(width) + " not divisible by " + std::to_string(heads) + " heads");
  }
  if (k.cols() != width || v.cols() != width || k.rows() != v.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "attention: q/k/v widths or k/v rows differ");
  }
  if (q_segments.count() != kv_segments.count() || q_segments.total() != q.rows() ||
      kv_segments.total() != k.rows()) {
    throw Error(ErrorCode::kDimensionMismatch, "attention: segments do not match inputs");
  }

  auto cache = std::make_shared<AttentionCache>();
  cache->dh = width / heads;
  cache->inv_sqrt = 1.0 / std::sqrt(static_cast<double>(cache->dh));
  const Index samples = q_segments.count();
  cache->probs.resize(static_cast<std::size_t>(samples * heads));
  if (drop.active()) cache->masks.resize(cache->probs.size());
  if (weights_out != nullptr) weights_out->assign(static_cast<std::size_t>(samples), {});

  std::bernoulli_distribution keep(1.0 - drop.rate);
  const double keep_scale = drop.active() ? 1.0 / (1.0 - drop.rate) : 1.0;

  const Matrix& Q = q.value();
  const Matrix& K = k.value();
  const Matrix& V = v.value();
  Matrix out(Q.rows(), width);
  for (Index b = 0; b < samples; ++b) {
    const Index q0 = q_segments.begin(b), nq = q_segments.length(b);
    const Index k0 = kv_segments.begin(b), nk = kv_segments.length(b);
    if (nq == 0) continue;
    if (nk == 0) throw Error(ErrorCode::kDimensionMismatch, "attention: sample with no keys");
    for (int h = 0; h < heads; ++h) {
      const Index c0 = h * cache->dh;
      Matrix scores = Q.block(q0, c0, nq, cache->dh) * K.block(k0, c0, nk, cache->dh).transpose();
      scores *= cache->inv_sqrt;
      for (Index r = 0; r < nq; ++r) {
        const double mx = scores.row(r).maxCoeff();
        scores.row(r) = (scores.row(r).array() - mx).exp();
        scores.row(r) /= scores.row(r).sum();
      }
      const auto slot = static_cast<std::size_t>(b * heads + h);
      Matrix effective = scores;
      if (drop.active()) {
        Matrix mask(nq, nk);
        for (Index i = 0; i < mask.size(); ++i) mask.data()[i] = keep(*drop.rng) ? keep_scale : 0.0;
        effective = scores.cwiseProduct(mask);
        cache->masks[slot] = std::move(mask);
      }
      out.block(q0, c0, nq, cache->dh) = effective * V.block(k0, c0, nk, cache->dh);
      if (weights_out != nullptr) (*weights_out)[static_cast<std::size_t>(b)].push_back(scores);
      cache->probs[slot] = std::move(scores);
    }
  }

  const int iq = q.id(), ik = k.id(), iv = v.id();
  return q.tape().emit(
      std::move(out), {q, k, v},
      [iq, ik, iv, heads, q_segments, kv_segments, cache](Tape& t, int self) {
        const Matrix& G = t.grad(self);
        const Matrix& Q = t.value(iq);
        const Matrix& K = t.value(ik);
        const Matrix& V = t.value(iv);
        Matrix dQ = Matrix::Zero(Q.rows(), Q.cols());
        Matrix dK = Matrix::Zero(K.rows(), K.cols());
        Matrix dV = Matrix::Zero(V.rows(), V.cols());
        const Index dh = cache->dh;
        for (Index b = 0; b < q_segments.count(); ++b) {
          const Index q0 = q_segments.begin(b), nq = q_segments.length(b);
          const Index k0 = kv_segments.begin(b), nk = kv_segments.length(b);
          if (nq == 0) continue;
          for (int h = 0; h < heads; ++h) {
            const Index c0 = h * dh;
            const auto slot = static_cast<std::size_t>(b * heads + h);
            const Matrix& P = cache->probs[slot];
            const bool masked = !cache->masks.empty();
            auto g = G.block(q0, c0, nq, dh);
            auto vb = V.block(k0, c0, nk, dh);
            Matrix dP = g * vb.transpose();
            if (masked) {
              dV.block(k0, c0, nk, dh) += P.cwiseProduct(cache->masks[slot]).transpose() * g;
              dP = dP.cwiseProduct(cache->masks[slot]);
            } else {
              dV.block(k0, c0, nk, dh) += P.transpose() * g;
            }
            Matrix dS(nq, nk);
            for (Index r = 0; r < nq; ++r) {
              const double inner = dP.row(r).dot(P.row(r));
              dS.row(r) = P.row(r).array() * (dP.row(r).array() - inner);
            }
            dS *= cache->inv_sqrt;
            dQ.block(q0, c0, nq, dh) += dS * K.block(k0, c0, nk, dh);
            dK.block(k0, c0, nk, dh) += dS.transpose() * Q.block(q0, c0, nq, dh);
          }
        }
        t.accumulate(iq, dQ);
        t.accumulate(ik, dK);
        t.accumulate(iv, dV);
      });
}

}  // namespace gemmgan::nn
