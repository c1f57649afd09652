// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "vidta/tensor/ops.hpp"
#include "vidta/tensor/params.hpp"
#include "vidta/tensor/random.hpp"

namespace vidta::model {

//! Parameters of the current model placed on one tape, indexed like the store.
template <typename T>
using Bound = std::vector<Var<T>>;

//! Train mode enables dropout, batch statistics and PE sign flips; all of them
//! draw from `rng`, which must then be non-null.
struct ForwardMode {
  bool train = false;
  Rng* rng = nullptr;
};

//! Indices of one affine map's weight [in x out] and bias [out].
struct AffineIds {
  std::size_t weight = 0;
  std::size_t bias = 0;
};

struct NormIds {
  std::size_t gain = 0;
  std::size_t bias = 0;
};

template <typename T>
AffineIds add_affine(ParamStore<T>& store, const std::string& name, std::size_t in, std::size_t out, Rng& rng) {
  AffineIds ids{store.add(name + ".weight", Shape{in, out}), store.add(name + ".bias", Shape{out})};
  glorot_uniform(store[ids.weight].value, in, out, rng);
  return ids;
}

template <typename T>
NormIds add_norm(ParamStore<T>& store, const std::string& name, std::size_t width) {
  NormIds ids{store.add(name + ".gain", Shape{width}), store.add(name + ".bias", Shape{width})};
  store[ids.gain].value.fill(T(1));
  return ids;
}

template <typename T>
Var<T> apply(const AffineIds& ids, const Bound<T>& p, const Var<T>& x) {
  return linear(x, p[ids.weight], p[ids.bias]);
}

template <typename T>
Var<T> apply(const NormIds& ids, const Bound<T>& p, const Var<T>& x) {
  return layer_norm(x, p[ids.gain], p[ids.bias]);
}

template <typename T>
Tensor<T> to_tensor(const Tensor<double>& t) {
  return t.template cast<T>();
}

}  // namespace vidta::model
