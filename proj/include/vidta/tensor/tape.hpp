// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Reverse-mode gradient recording. A Tape owns every intermediate
//!       tensor of one forward pass; Var is a lightweight handle into it.

#pragma once

#include <cstddef>
#include <deque>
#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "vidta/tensor/tensor.hpp"

namespace vidta {

template <typename T>
class Tape;

template <typename T>
class Var {
 public:
  Var() = default;
  Var(Tape<T>* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape<T>& tape() const { return *tape_; }
  std::size_t id() const noexcept { return id_; }
  bool valid() const noexcept { return tape_ != nullptr; }

  const Tensor<T>& value() const { return tape_->value(id_); }
  const Shape& shape() const { return value().shape(); }
  bool requires_grad() const { return tape_->requires_grad(id_); }

  //! Gradient buffer; allocated (zero) on first access.
  Tensor<T>& grad() const { return tape_->grad(id_); }

 private:
  Tape<T>* tape_ = nullptr;
  std::size_t id_ = 0;
};

template <typename T>
class Tape {
 public:
  //! Receives d(loss)/d(output) and accumulates into the inputs' grads.
  using BackwardFn = std::function<void(Tape&, const Tensor<T>&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<T> constant(Tensor<T> value) { return push(std::move(value), nullptr, nullptr, false, {}); }

  Var<T> variable(Tensor<T> value) { return push(std::move(value), nullptr, nullptr, true, {}); }

  //! Leaf backed by external storage; gradients accumulate straight into `grad`.
  Var<T> parameter(const Tensor<T>& value, Tensor<T>& grad) {
    if (grad.shape() != value.shape()) grad = Tensor<T>(value.shape());
    return push(Tensor<T>{}, &value, &grad, true, {});
  }

  //! Leaf backed by external storage that never receives gradients.
  Var<T> frozen(const Tensor<T>& value) { return push(Tensor<T>{}, &value, nullptr, false, {}); }

  Var<T> record(Tensor<T> value, std::initializer_list<Var<T>> inputs, BackwardFn fn) {
    return record(std::move(value), std::span<const Var<T>>(inputs.begin(), inputs.size()), std::move(fn));
  }

  Var<T> record(Tensor<T> value, std::span<const Var<T>> inputs, BackwardFn fn) {
    bool needs = false;
    for (const auto& in : inputs) needs = needs || in.requires_grad();
    return push(std::move(value), nullptr, nullptr, needs, needs ? std::move(fn) : BackwardFn{});
  }

  const Tensor<T>& value(std::size_t id) const {
    const Node& n = nodes_[id];
    return n.external ? *n.external : n.value;
  }

  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }

  Tensor<T>& grad(std::size_t id) {
    Node& n = nodes_[id];
    if (n.sink) return *n.sink;
    if (n.grad.shape() != value(id).shape() || n.grad.size() != value(id).size()) {
      n.grad = Tensor<T>(value(id).shape());
    }
    n.touched = true;
    return n.grad;
  }

  //! Populates grads of every tape tensor with d(loss)/d(tensor).
  void backward(const Var<T>& loss) {
    if (loss.value().size() != 1) {
      throw NotScalarLoss("backward() needs a scalar loss, got shape " + shape_str(loss.shape()));
    }
    if (!requires_grad(loss.id())) return;
    grad(loss.id())[0] += T(1);
    nodes_[loss.id()].touched = true;
    for (std::size_t id = loss.id() + 1; id-- > 0;) {
      Node& n = nodes_[id];
      if (!n.backward || !n.touched) continue;
      n.backward(*this, n.grad);
    }
  }

  std::size_t size() const noexcept { return nodes_.size(); }

  void clear() { nodes_.clear(); }

 private:
  struct Node {
    Tensor<T> value;
    const Tensor<T>* external = nullptr;
    Tensor<T>* sink = nullptr;
    Tensor<T> grad;
    bool requires_grad = false;
    bool touched = false;
    BackwardFn backward;
  };

  Var<T> push(Tensor<T> value, const Tensor<T>* external, Tensor<T>* sink, bool needs_grad, BackwardFn fn) {
    nodes_.push_back(Node{std::move(value), external, sink, Tensor<T>{}, needs_grad, false, std::move(fn)});
    return Var<T>(this, nodes_.size() - 1);
  }

  std::deque<Node> nodes_;
};

}  // namespace vidta
