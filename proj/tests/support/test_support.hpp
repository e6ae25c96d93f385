#pragma once

#include "gemmgan/core/types.hpp"
#include "gemmgan/nn/ops.hpp"
#include "gemmgan/nn/tape.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iterator>
#include <random>
#include <string>
#include <vector>

namespace gemmgan::testing {

inline Matrix random_matrix(Index rows, Index cols, Rng& rng, double scale = 1.0) {
  return standard_normal(rows, cols, rng) * scale;
}

// Central differences of f over every entry of each parameter.
inline std::vector<Matrix> finite_difference(const nn::ParameterList& params, const std::function<double()>& f,
                                             double h = 1e-6) {
  std::vector<Matrix> out;
  for (auto* p : params) {
    Matrix g(p->value.rows(), p->value.cols());
    for (Index i = 0; i < p->value.size(); ++i) {
      double& x = p->value.data()[i];
      const double saved = x;
      x = saved + h;
      const double up = f();
      x = saved - h;
      const double down = f();
      x = saved;
      g.data()[i] = (up - down) / (2.0 * h);
    }
    out.push_back(std::move(g));
  }
  return out;
}

// ||a - b|| / max(||a|| + ||b||, floor), over the concatenation of all tensors.
inline double relative_error(const std::vector<Matrix>& a, const std::vector<Matrix>& b, double floor = 1e-12) {
  double diff = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]).squaredNorm();
    na += a[i].squaredNorm();
    nb += b[i].squaredNorm();
  }
  return std::sqrt(diff) / std::max(std::sqrt(na) + std::sqrt(nb), floor);
}

inline std::vector<Matrix> gradients_of(const nn::ParameterList& params) {
  std::vector<Matrix> out;
  for (auto* p : params) {
    out.push_back(p->grad.size() ? p->grad : Matrix::Zero(p->value.rows(), p->value.cols()));
  }
  return out;
}

// Analytic vs numeric gradient of sum(build(tape) .* weights).
inline double gradient_check(const nn::ParameterList& params, const std::function<nn::Var(nn::Tape&)>& build,
                             std::uint64_t seed = 99) {
  Rng rng = derive_rng(seed, {1});
  Matrix weights;
  {
    nn::Tape probe(false);
    const Matrix v = build(probe).value();
    weights = standard_normal(v.rows(), v.cols(), rng);
  }
  auto loss = [&](nn::Tape& tape) {
    nn::Var out = build(tape);
    return out.value().cwiseProduct(weights).sum();
  };
  for (auto* p : params) p->zero_grad();
  {
    nn::Tape tape;
    nn::Var out = build(tape);
    nn::Var w = tape.constant(weights);
    tape.backward(nn::sum(nn::hadamard(out, w)));
  }
  const auto analytic = gradients_of(params);
  const auto numeric = finite_difference(params, [&] {
    nn::Tape tape(false);
    return loss(tape);
  });
  return relative_error(analytic, numeric);
}

class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("gemmgan-" + tag + "-" + std::to_string(rd()) + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& child) const { return path_ / child; }

 private:
  std::filesystem::path path_;
};

inline std::string read_bytes(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  return std::string(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

// Scaled dot-product multi-head attention with plain loops; no projections.
inline Matrix attention_oracle(const Matrix& q, const Matrix& k, const Matrix& v, int heads) {
  const Index d = q.cols(), dh = d / heads;
  Matrix out = Matrix::Zero(q.rows(), d);
  for (int h = 0; h < heads; ++h) {
    for (Index i = 0; i < q.rows(); ++i) {
      std::vector<double> logits(static_cast<std::size_t>(k.rows()));
      double mx = -INFINITY;
      for (Index j = 0; j < k.rows(); ++j) {
        double s = 0.0;
        for (Index c = 0; c < dh; ++c) s += q(i, h * dh + c) * k(j, h * dh + c);
        logits[static_cast<std::size_t>(j)] = s / std::sqrt(static_cast<double>(dh));
        mx = std::max(mx, logits[static_cast<std::size_t>(j)]);
      }
      double z = 0.0;
      for (auto& l : logits) z += (l = std::exp(l - mx));
      for (Index j = 0; j < k.rows(); ++j) {
        for (Index c = 0; c < dh; ++c) out(i, h * dh + c) += logits[static_cast<std::size_t>(j)] / z * v(j, h * dh + c);
      }
    }
  }
  return out;
}

}  // namespace gemmgan::testing
