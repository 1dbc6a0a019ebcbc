// Copyright (C) 2026 The CAM Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <functional>
#include <initializer_list>
#include <string>
#include <utility>
#include <vector>

#include "cam/core/error.hpp"
#include "cam/core/tensor.hpp"

namespace cam::nn {

/// A named learnable tensor with its accumulated gradient.
template <class T>
struct Parameter {
  std::string name;
  Mat<T> value;
  Mat<T> grad;
  bool decay = true;  // AdamW weight decay applies

  void zero_grad() {
    if (grad.size() != value.size()) grad.resize(value.rows(), value.cols());
    grad.setZero();
  }
};

/// Handle to a value recorded on a Tape.
struct Var {
  int id = -1;
};

/// Reverse-mode recording of matrix-valued operations.
///
/// With gradients disabled the tape only stores forward values, which is how
/// inference reuses the training forward pass.
template <class T>
class Tape {
 public:
  using Backward = std::function<void(Tape&, Var self)>;

  explicit Tape(bool grad_enabled = true) : grad_enabled_(grad_enabled) { nodes_.reserve(256); }

  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  [[nodiscard]] bool grad_enabled() const { return grad_enabled_; }

  Var constant(Mat<T> value) { return push(std::move(value), false, nullptr); }

  /// Records a parameter by reference. Gradients land in `p.grad` after backward().
  Var parameter(Parameter<T>& p) {
    Node n;
    n.ref = &p.value;
    n.param = &p;
    n.requires_grad = grad_enabled_;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  /// Records an externally owned value without copying it. Never differentiated.
  Var constant_ref(const Mat<T>& value) {
    Node n;
    n.ref = &value;
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  Var push(Mat<T> value, bool requires_grad, Backward backward) {
    Node n;
    n.value = std::move(value);
    n.requires_grad = grad_enabled_ && requires_grad;
    if (n.requires_grad) n.backward = std::move(backward);
    nodes_.push_back(std::move(n));
    return Var{static_cast<int>(nodes_.size()) - 1};
  }

  [[nodiscard]] const Mat<T>& value(Var v) const {
    const Node& n = node(v);
    return n.ref != nullptr ? *n.ref : n.value;
  }

  [[nodiscard]] bool requires_grad(Var v) const { return node(v).requires_grad; }

  [[nodiscard]] bool any_requires_grad(std::initializer_list<Var> vs) const {
    if (!grad_enabled_) return false;
    for (Var v : vs) {
      if (node(v).requires_grad) return true;
    }
    return false;
  }

  /// Gradient buffer of `v`, zero-initialized on first access.
  Mat<T>& grad(Var v) {
    Node& n = node(v);
    if (n.grad.size() == 0) {
      const Mat<T>& val = n.ref != nullptr ? *n.ref : n.value;
      n.grad = Mat<T>::Zero(val.rows(), val.cols());
    }
    return n.grad;
  }

  [[nodiscard]] bool has_grad(Var v) const { return node(v).grad.size() != 0; }

  /// Adds `g` into the gradient of `v` when `v` participates in differentiation.
  template <class Expr>
  void accumulate(Var v, const Expr& g) {
    Node& n = node(v);
    if (!n.requires_grad) return;
    if (n.grad.size() == 0) {
      n.grad = g;
    } else {
      n.grad += g;
    }
  }

  /// Backpropagates from a scalar (1x1) node with seed gradient 1.
  void backward(Var loss) {
    if (!grad_enabled_) throw Error("Tape::backward called on a tape without gradients");
    const Mat<T>& lv = value(loss);
    if (lv.rows() != 1 || lv.cols() != 1) throw ShapeError("Tape::backward: loss must be 1x1");
    grad(loss)(0, 0) += T(1);
    for (int i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<std::size_t>(i)];
      if (n.grad.size() == 0) continue;
      if (n.backward) n.backward(*this, Var{i});
      if (n.param != nullptr) {
        if (n.param->grad.size() != n.grad.size()) {
          n.param->grad = n.grad;
        } else {
          n.param->grad += n.grad;
        }
      }
    }
  }

  [[nodiscard]] std::size_t size() const { return nodes_.size(); }

 private:
  struct Node {
    Mat<T> value;
    const Mat<T>* ref = nullptr;
    Mat<T> grad;
    Parameter<T>* param = nullptr;
    bool requires_grad = false;
    Backward backward;
  };

  Node& node(Var v) { return nodes_.at(static_cast<std::size_t>(v.id)); }
  [[nodiscard]] const Node& node(Var v) const { return nodes_.at(static_cast<std::size_t>(v.id)); }

  bool grad_enabled_;
  std::vector<Node> nodes_;
};

}  // namespace cam::nn
