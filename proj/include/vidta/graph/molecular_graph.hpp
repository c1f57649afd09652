// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <optional>
#include <utility>
#include <vector>

#include "vidta/chem/features.hpp"
#include "vidta/chem/smiles.hpp"
#include "vidta/error.hpp"
#include "vidta/tensor/tensor.hpp"

namespace vidta::graph {

//! Model-facing molecular graph. Edges are directed (source, target) pairs and
//! every bond contributes both directions. The optional virtual node is the
//! last node and is linked in both directions to every atom.
struct MolecularGraph {
  std::size_t n_atoms = 0;
  Tensor<double> node_features;  // [n_nodes x 44]
  std::vector<std::pair<std::size_t, std::size_t>> edge_list;
  Tensor<double> edge_features;  // [n_edges x 10]
  std::optional<std::size_t> virtual_node_index;
  Tensor<double> positional_encoding;  // [n_nodes x k_pe], eval-mode sign convention

  std::size_t n_nodes() const noexcept { return n_atoms + (virtual_node_index ? 1 : 0); }
  std::size_t n_edges() const noexcept { return edge_list.size(); }

  std::vector<std::size_t> sources() const {
    std::vector<std::size_t> out;
    out.reserve(edge_list.size());
    for (const auto& e : edge_list) out.push_back(e.first);
    return out;
  }

  std::vector<std::size_t> targets() const {
    std::vector<std::size_t> out;
    out.reserve(edge_list.size());
    for (const auto& e : edge_list) out.push_back(e.second);
    return out;
  }
};

inline MolecularGraph build_graph(const chem::Molecule& molecule, bool use_virtual_node) {
  if (molecule.atoms.empty()) throw EmptyMolecule("cannot build a graph from a molecule without atoms");
  MolecularGraph g;
  g.n_atoms = molecule.atoms.size();
  if (use_virtual_node) g.virtual_node_index = g.n_atoms;
  const std::size_t n = g.n_nodes();
  const std::size_t m = 2 * molecule.bonds.size() + (use_virtual_node ? 2 * g.n_atoms : 0);

  g.node_features = Tensor<double>(Shape{n, chem::kAtomFeatureDim});
  for (std::size_t a = 0; a < g.n_atoms; ++a) {
    const auto f = chem::atom_features<double>(molecule.atoms[a]);
    std::copy(f.begin(), f.end(), g.node_features.row(a).begin());
  }

  g.edge_list.reserve(m);
  g.edge_features = Tensor<double>(Shape{m, chem::kBondFeatureDim});
  for (const auto& bond : molecule.bonds) {
    const auto f = chem::bond_features<double>(bond);
    for (auto [s, t] : {std::pair{bond.begin, bond.end}, std::pair{bond.end, bond.begin}}) {
      std::copy(f.begin(), f.end(), g.edge_features.row(g.edge_list.size()).begin());
      g.edge_list.emplace_back(s, t);
    }
  }
  if (use_virtual_node) {
    const std::size_t vn = *g.virtual_node_index;
    for (std::size_t a = 0; a < g.n_atoms; ++a) {
      g.edge_list.emplace_back(a, vn);
      g.edge_list.emplace_back(vn, a);
    }
  }
  return g;
}

//! Same graph with atoms relabeled: new index of old atom i is perm[i].
//! The virtual node stays last; edge order follows the original edge order.
inline MolecularGraph relabel_atoms(const MolecularGraph& g, const std::vector<std::size_t>& perm) {
  MolecularGraph out = g;
  auto map = [&](std::size_t v) { return v < g.n_atoms ? perm.at(v) : v; };
  for (std::size_t a = 0; a < g.n_atoms; ++a) {
    std::copy(g.node_features.row(a).begin(), g.node_features.row(a).end(), out.node_features.row(perm[a]).begin());
  }
  for (auto& [s, t] : out.edge_list) {
    s = map(s);
    t = map(t);
  }
  if (!g.positional_encoding.empty()) {
    for (std::size_t a = 0; a < g.n_atoms; ++a) {
      std::copy(g.positional_encoding.row(a).begin(), g.positional_encoding.row(a).end(),
                out.positional_encoding.row(perm[a]).begin());
    }
  }
  return out;
}

}  // namespace vidta::graph
