#include "gemmgan/nn/tape.hpp"

#include "gemmgan/core/error.hpp"

namespace gemmgan::nn {

Var Tape::constant(Matrix value) {
  Node node;
  node.value = std::move(value);
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

Var Tape::param(Parameter& p) {
  Node node;
  node.value = p.value;
  if (record_ && !frozen_.contains(&p)) {
    node.param = &p;
    node.needs_grad = true;
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::freeze(const ParameterList& params) {
  for (const auto* p : params) frozen_.insert(p);
}

Var Tape::emit(Matrix value, std::initializer_list<Var> inputs, Backprop backprop) {
  Node node;
  node.value = std::move(value);
  if (record_) {
    for (const auto& in : inputs) {
      if (needs_grad(in.id())) {
        node.needs_grad = true;
        break;
      }
    }
    if (node.needs_grad) node.backprop = std::move(backprop);
  }
  nodes_.push_back(std::move(node));
  return Var(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::accumulate(int id, const Matrix& g) { accumulate_expr(id, g); }

void Tape::backward(const Var& loss) {
  if (!record_) throw Error(ErrorCode::kInvalidArgument, "backward on a non-recording tape");
  if (loss.rows() != 1 || loss.cols() != 1) {
    throw Error(ErrorCode::kDimensionMismatch, "backward requires a 1x1 loss");
  }
  if (!needs_grad(loss.id())) return;
  nodes_[static_cast<std::size_t>(loss.id())].grad = Matrix::Ones(1, 1);
  for (int id = loss.id(); id >= 0; --id) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad || node.grad.size() == 0) continue;
    if (node.backprop) node.backprop(*this, id);
    if (node.param != nullptr) {
      if (node.param->grad.size() == 0) {
        node.param->grad = node.grad;
      } else {
        node.param->grad += node.grad;
      }
    }
  }
}

}  // namespace gemmgan::nn
