#pragma once

#include "gemmgan/core/types.hpp"

#include <functional>
#include <string>
#include <unordered_set>
#include <vector>

namespace gemmgan::nn {

// A named trainable tensor. `grad` accumulates across backward passes until
// zero_grad() is called.
struct Parameter {
  std::string name;
  Matrix value;
  Matrix grad;

  Parameter() = default;
  Parameter(std::string n, Matrix v) : name(std::move(n)), value(std::move(v)) {}

  void zero_grad() { grad.setZero(value.rows(), value.cols()); }
};

using ParameterList = std::vector<Parameter*>;

class Tape;

// Handle to a node on a Tape. Cheap to copy; only valid while the tape lives.
class Var {
 public:
  Var() = default;
  Var(Tape* tape, int id) : tape_(tape), id_(id) {}

  const Matrix& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  Tape& tape() const { return *tape_; }
  int id() const { return id_; }
  bool valid() const { return tape_ != nullptr; }

 private:
  Tape* tape_ = nullptr;
  int id_ = -1;
};

// Reverse-mode recorder. Nodes are appended in topological order; backward()
// walks them in reverse. A non-recording tape computes values only.
class Tape {
 public:
  using Backprop = std::function<void(Tape&, int self)>;

  explicit Tape(bool record = true) : record_(record) { nodes_.reserve(256); }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  bool recording() const { return record_; }

  Var constant(Matrix value);
  // Trainable leaf unless the tape is not recording or `p` was frozen.
  Var param(Parameter& p);
  void freeze(const ParameterList& params);
  void freeze(const Parameter& p) { frozen_.insert(&p); }

  // Appends a computed node. `backprop` runs only if some input needs a gradient.
  Var emit(Matrix value, std::initializer_list<Var> inputs, Backprop backprop);

  // Seeds d(loss)/d(loss) = 1 and accumulates into every reachable Parameter::grad.
  void backward(const Var& loss);

  const Matrix& value(int id) const { return nodes_[static_cast<std::size_t>(id)].value; }
  const Matrix& grad(int id) const { return nodes_[static_cast<std::size_t>(id)].grad; }
  bool needs_grad(int id) const { return nodes_[static_cast<std::size_t>(id)].needs_grad; }
  void accumulate(int id, const Matrix& g);
  template <typename Expr>
  void accumulate_expr(int id, const Expr& g) {
    auto& node = nodes_[static_cast<std::size_t>(id)];
    if (!node.needs_grad) return;
    if (node.grad.size() == 0) {
      node.grad = g;
    } else {
      node.grad += g;
    }
  }

  std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    Backprop backprop;
    Parameter* param = nullptr;
    bool needs_grad = false;
  };

  bool record_;
  std::vector<Node> nodes_;
  std::unordered_set<const Parameter*> frozen_;
};

inline const Matrix& Var::value() const { return tape_->value(id_); }

}  // namespace gemmgan::nn
