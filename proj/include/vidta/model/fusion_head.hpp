// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Attention-based linear feature fusion with a gated skip connection,
//!       and the four-layer affinity head.
//!
//!   w1  = sigmoid(lin(lin(e_d + e_t)))       e1  = w1 * e_d + (1 - w1) * e_t
//!   w2  = sigmoid(lin'(lin'(e1)))            e2  = w2 * e_d + (1 - w2) * e_t
//!   w3  = sigmoid(e2)                        out = w3 * e2 + (1 - w3) * (e_d + e_t)

#pragma once

#include <array>
#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "vidta/error.hpp"
#include "vidta/model/common.hpp"
#include "vidta/model/config.hpp"

namespace vidta::model {

//! b + w * (a - b); exactly b when a == b.
template <typename T>
Var<T> gate(const Var<T>& w, const Var<T>& a, const Var<T>& b) {
  return add(b, mul(w, sub(a, b)));
}

template <typename T>
class FusionHead {
 public:
  //! Intermediate fusion tensors, exposed for inspection.
  struct Stages {
    Var<T> first;   // e1
    Var<T> second;  // e2
    Var<T> fused;   // final fused representation
  };

  FusionHead(const ModelConfig& config, ParamStore<T>& store, Rng& rng) : cfg_(config) {
    const std::size_t d = cfg_.d_model;
    for (std::size_t b = 0; b < 2; ++b) {
      const std::string name = "fusion.block" + std::to_string(b);
      blocks_[b] = {add_affine(store, name + ".lin0", d, d, rng), add_affine(store, name + ".lin1", d, d, rng)};
    }
    const std::array<std::size_t, 5> widths{cfg_.head_input(), cfg_.head_widths[0], cfg_.head_widths[1],
                                            cfg_.head_widths[2], 1};
    for (std::size_t l = 0; l < 4; ++l) {
      head_[l] = add_affine(store, "head.fc" + std::to_string(l), widths[l], widths[l + 1], rng);
    }
    for (std::size_t l = 0; l < 3; ++l) {
      norms_[l] = add_norm(store, "head.bn" + std::to_string(l), widths[l + 1]);
      bn_state_[l] = BatchNormState<T>(widths[l + 1]);
    }
  }

  Stages fuse_stages(const Var<T>& drug, const Var<T>& protein, const Bound<T>& p) const {
    if (drug.value().size() != protein.value().size() || drug.value().size() != cfg_.d_model) {
      throw DimensionMismatch("fusion needs equal " + std::to_string(cfg_.d_model) + "-wide embeddings, got " +
                              shape_str(drug.shape()) + " and " + shape_str(protein.shape()));
    }
    Var<T> both = add(drug, protein);
    Var<T> w1 = sigmoid(block(0, both, p));
    Var<T> e1 = gate(w1, drug, protein);
    Var<T> w2 = sigmoid(block(1, e1, p));
    Var<T> e2 = gate(w2, drug, protein);
    Var<T> w3 = sigmoid(e2);
    return {e1, e2, gate(w3, e2, both)};
  }

  Var<T> fuse(const Var<T>& drug, const Var<T>& protein, const Bound<T>& p) const {
    return fuse_stages(drug, protein, p).fused;
  }

  //! Combines the two embeddings with the requested strategy.
  Var<T> combine(const Var<T>& drug, const Var<T>& protein, const Bound<T>& p, FusionMode mode) const {
    switch (mode) {
      case FusionMode::kAdd: return add(drug, protein);
      case FusionMode::kConcat: return concat(drug, protein);
      case FusionMode::kAttention: break;
    }
    return fuse(drug, protein, p);
  }

  //! fused [batch x head_input] -> predictions [batch]. Batch normalization uses
  //! batch statistics (and updates running stats) only in train mode.
  Var<T> predict(const Var<T>& fused, const Bound<T>& p, bool train_mode) {
    if (fused.value().rank() != 2 || fused.value().cols() != cfg_.head_input()) {
      throw DimensionMismatch("head expects [batch x " + std::to_string(cfg_.head_input()) + "], got " +
                              shape_str(fused.shape()));
    }
    Var<T> x = fused;
    for (std::size_t l = 0; l < 3; ++l) {
      x = apply(head_[l], p, x);
      x = relu(batch_norm(x, p[norms_[l].gain], p[norms_[l].bias], bn_state_[l], train_mode));
    }
    x = apply(head_[3], p, x);
    return reshape(x, Shape{fused.value().dim(0)});
  }

  std::array<BatchNormState<T>, 3>& batch_norm_states() { return bn_state_; }
  const std::array<BatchNormState<T>, 3>& batch_norm_states() const { return bn_state_; }

 private:
  Var<T> block(std::size_t b, const Var<T>& x, const Bound<T>& p) const {
    return apply(blocks_[b][1], p, apply(blocks_[b][0], p, x));
  }

  ModelConfig cfg_;
  std::array<std::array<AffineIds, 2>, 2> blocks_{};
  std::array<AffineIds, 4> head_{};
  std::array<NormIds, 3> norms_{};
  std::array<BatchNormState<T>, 3> bn_state_{};
};

}  // namespace vidta::model
