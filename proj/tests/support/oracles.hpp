// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <fstream>
#include <functional>
#include <sstream>
#include <string>
#include <vector>

#include "vidta/gradcheck.hpp"
#include "vidta/tensor/ops.hpp"
#include "vidta/tensor/params.hpp"
#include "vidta/tensor/random.hpp"

#ifndef VIDTA_DATA_DIR
#define VIDTA_DATA_DIR "data"
#endif

namespace vidta::testing {

inline std::string data_path(const std::string& name) { return std::string(VIDTA_DATA_DIR) + "/" + name; }

struct CorpusEntry {
  std::string name;
  std::string smiles;
  std::size_t heavy_atoms = 0;
  std::size_t bonds = 0;
};

//! Reference drug SMILES with independently counted heavy atoms and bonds.
inline std::vector<CorpusEntry> load_corpus() {
  std::ifstream in(data_path("smiles_corpus.tsv"));
  if (!in) throw FileUnreadable("missing smiles_corpus.tsv");
  std::vector<CorpusEntry> out;
  for (std::string line; std::getline(in, line);) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream fields(line);
    CorpusEntry e;
    std::getline(fields, e.name, '\t');
    std::getline(fields, e.smiles, '\t');
    fields >> e.heavy_atoms >> e.bonds;
    out.push_back(e);
  }
  return out;
}

inline Tensor<double> random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor<double> t(std::move(shape));
  for (auto& v : t.values()) v = uniform(rng, lo, hi);
  return t;
}

using OpUnderTest = std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

//! Finite-difference check of `op` with respect to every entry of every input.
//! The output is contracted with fixed random weights so every output
//! component contributes to the scalar loss.
inline GradCheckReport check_op(const std::vector<Tensor<double>>& inputs, const OpUnderTest& op,
                                std::uint64_t seed = 99) {
  ParamStore<double> store;
  for (std::size_t i = 0; i < inputs.size(); ++i) {
    const auto id = store.add("in" + std::to_string(i), inputs[i].shape());
    store[id].value = inputs[i];
  }
  Tensor<double> weights;
  auto loss = [&](Tape<double>& tape, const std::vector<Var<double>>& p) {
    Var<double> out = op(tape, p);
    if (weights.empty() || weights.shape() != out.shape()) {
      Rng rng(seed);
      weights = random_tensor(rng, out.shape());
    }
    return sum(mul(out, tape.constant(weights)));
  };
  return check_gradients(store, loss);
}

}  // namespace vidta::testing
