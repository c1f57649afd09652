// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <optional>
#include <span>
#include <string>
#include <unordered_map>
#include <vector>

#include "vidta/tensor/random.hpp"
#include "vidta/tensor/tape.hpp"
#include "vidta/tensor/tensor.hpp"

namespace vidta {

template <typename T>
struct Parameter {
  std::string name;
  Tensor<T> value;
  Tensor<T> grad;
};

//! Learnable arrays addressable by stable names, kept in registration order.
template <typename T>
class ParamStore {
 public:
  //! Registers a zero-initialized parameter and returns its index.
  std::size_t add(const std::string& name, Shape shape) {
    if (index_.contains(name)) throw Error("duplicate parameter name: " + name);
    params_.push_back(Parameter<T>{name, Tensor<T>(shape), Tensor<T>(shape)});
    index_.emplace(name, params_.size() - 1);
    return params_.size() - 1;
  }

  std::size_t size() const noexcept { return params_.size(); }

  Parameter<T>& operator[](std::size_t i) { return params_[i]; }
  const Parameter<T>& operator[](std::size_t i) const { return params_[i]; }

  std::optional<std::size_t> find(const std::string& name) const {
    auto it = index_.find(name);
    if (it == index_.end()) return std::nullopt;
    return it->second;
  }

  Parameter<T>& at(const std::string& name) {
    auto i = find(name);
    if (!i) throw Error("unknown parameter: " + name);
    return params_[*i];
  }

  auto begin() { return params_.begin(); }
  auto end() { return params_.end(); }
  auto begin() const { return params_.begin(); }
  auto end() const { return params_.end(); }

  std::size_t scalar_count() const {
    std::size_t n = 0;
    for (const auto& p : params_) n += p.value.size();
    return n;
  }

  void zero_grad() {
    for (auto& p : params_) p.grad = Tensor<T>(p.value.shape());
  }

  //! Puts every parameter on `tape`; the result is indexed like the store.
  std::vector<Var<T>> bind(Tape<T>& tape) {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (auto& p : params_) vars.push_back(tape.parameter(p.value, p.grad));
    return vars;
  }

  //! Like bind(), but nothing is recorded for backward; safe from many threads.
  std::vector<Var<T>> bind_frozen(Tape<T>& tape) const {
    std::vector<Var<T>> vars;
    vars.reserve(params_.size());
    for (const auto& p : params_) vars.push_back(tape.frozen(p.value));
    return vars;
  }

 private:
  std::deque<Parameter<T>> params_;
  std::unordered_map<std::string, std::size_t> index_;
};

//! Uniform in +-sqrt(6 / (fan_in + fan_out)).
template <typename T>
void glorot_uniform(Tensor<T>& weights, std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  for (auto& w : weights.values()) w = static_cast<T>(uniform(rng, -bound, bound));
}

struct AdamHyper {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

template <typename T>
struct AdamMoments {
  Tensor<T> first;
  Tensor<T> second;
};

//! One bias-corrected Adam update; `step` counts from 1.
template <typename T>
void adam_step(std::span<T> params, std::span<const T> grads, AdamMoments<T>& moments, long step,
               const AdamHyper& hyper) {
  if (params.size() != grads.size() || moments.first.size() != params.size() ||
      moments.second.size() != params.size()) {
    throw ShapeMismatch("adam_step: parameter, gradient and moment sizes differ");
  }
  const double c1 = 1.0 - std::pow(hyper.beta1, static_cast<double>(step));
  const double c2 = 1.0 - std::pow(hyper.beta2, static_cast<double>(step));
  const T b1 = T(hyper.beta1), b2 = T(hyper.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grads[i];
    T& m = moments.first[i];
    T& v = moments.second[i];
    m = b1 * m + (T(1) - b1) * g;
    v = b2 * v + (T(1) - b2) * g * g;
    const double m_hat = static_cast<double>(m) / c1;
    const double v_hat = static_cast<double>(v) / c2;
    params[i] -= static_cast<T>(hyper.lr * m_hat / (std::sqrt(v_hat) + hyper.eps));
  }
}

//! Adam over every parameter of a store.
template <typename T>
class Adam {
 public:
  explicit Adam(AdamHyper hyper = {}) : hyper_(hyper) {}

  void step(ParamStore<T>& store, double lr) {
    if (moments_.size() != store.size()) {
      moments_.clear();
      for (const auto& p : store) moments_.push_back({Tensor<T>(p.value.shape()), Tensor<T>(p.value.shape())});
    }
    ++steps_;
    AdamHyper h = hyper_;
    h.lr = lr;
    for (std::size_t i = 0; i < store.size(); ++i) {
      adam_step<T>(store[i].value.values(), store[i].grad.values(), moments_[i], steps_, h);
    }
  }

  long steps() const noexcept { return steps_; }
  void set_steps(long steps) { steps_ = steps; }
  std::vector<AdamMoments<T>>& moments() { return moments_; }
  const std::vector<AdamMoments<T>>& moments() const { return moments_; }
  const AdamHyper& hyper() const noexcept { return hyper_; }

 private:
  AdamHyper hyper_;
  std::vector<AdamMoments<T>> moments_;
  long steps_ = 0;
};

}  // namespace vidta
