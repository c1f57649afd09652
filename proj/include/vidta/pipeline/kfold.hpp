// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "vidta/error.hpp"
#include "vidta/tensor/random.hpp"

namespace vidta::pipeline {

struct Fold {
  std::vector<std::size_t> train;  // ascending
  std::vector<std::size_t> valid;  // ascending
};

//! Seeded shuffle, then contiguous validation blocks whose sizes differ by at most one.
inline std::vector<Fold> kfold_split(std::size_t n, std::size_t folds, std::uint64_t seed) {
  if (folds < 2) throw Error("k-fold split needs at least 2 folds, got " + std::to_string(folds));
  if (folds > n) {
    throw TooFewRecords("cannot split " + std::to_string(n) + " records into " + std::to_string(folds) + " folds");
  }
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(seed);
  shuffle(order, rng);

  std::vector<Fold> out(folds);
  for (std::size_t f = 0; f < folds; ++f) {
    const std::size_t lo = f * n / folds, hi = (f + 1) * n / folds;
    for (std::size_t i = 0; i < n; ++i) {
      (i >= lo && i < hi ? out[f].valid : out[f].train).push_back(order[i]);
    }
    std::sort(out[f].valid.begin(), out[f].valid.end());
    std::sort(out[f].train.begin(), out[f].train.end());
  }
  return out;
}

}  // namespace vidta::pipeline
