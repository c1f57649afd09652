// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Graph Transformer drug encoder with edge features and a virtual-node
//!       readout.
//!
//! Per layer and head, for a directed edge j -> i:
//!   score_ij  = (Q h_i) * (K h_j) / sqrt(d_h) * (E e_ij)      (elementwise, d_h wide)
//!   w_ij      = softmax over incoming edges of i of sum(score_ij)
//!   msg_i     = sum_j w_ij V h_j
//!   edge_ij'  = score_ij
//! Heads are concatenated, projected back to d_model and added to the layer
//! input, then pass a pre-normalized FFN with an outer residual and norm.

#pragma once

#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "vidta/chem/features.hpp"
#include "vidta/error.hpp"
#include "vidta/graph/molecular_graph.hpp"
#include "vidta/graph/spectral.hpp"
#include "vidta/model/common.hpp"
#include "vidta/model/config.hpp"

namespace vidta::model {

template <typename T>
class DrugEncoder {
 public:
  struct States {
    Var<T> nodes;  // [n_nodes x d_model]
    Var<T> edges;  // [n_edges x d_model]
  };

  struct Attention {
    Var<T> scores;   // [n_edges x heads * d_head], the new edge messages
    Var<T> weights;  // [n_edges x heads], normalized over each target's incoming edges
  };

  //! Per-layer attention weights recorded by encode() when requested.
  struct Trace {
    std::vector<Tensor<T>> weights;
  };

  DrugEncoder(const ModelConfig& config, ParamStore<T>& store, Rng& rng) : cfg_(config) {
    const std::size_t d = cfg_.d_model, hw = cfg_.heads * cfg_.d_head;
    atom_in_ = add_affine(store, "drug.atom_in", chem::kAtomFeatureDim, d, rng);
    bond_in_ = add_affine(store, "drug.bond_in", chem::kBondFeatureDim, d, rng);
    pe_in_ = add_affine(store, "drug.pe_in", cfg_.k_pe, d, rng);
    for (std::size_t l = 0; l < cfg_.layers; ++l) {
      const std::string prefix = "drug.layer" + std::to_string(l);
      LayerIds ids;
      auto head_maps = [&](const std::string& name) {
        const std::size_t id = store.add(prefix + "." + name, Shape{d, hw});
        // Each head's slice is its own d -> d_head map.
        glorot_uniform(store[id].value, d, cfg_.d_head, rng);
        return id;
      };
      ids.query = head_maps("w_q");
      ids.key = head_maps("w_k");
      ids.value = head_maps("w_v");
      ids.edge = head_maps("w_e");
      ids.out_h = add_affine(store, prefix + ".o_h", hw, d, rng);
      ids.out_e = add_affine(store, prefix + ".o_e", hw, d, rng);
      ids.norm_h_in = add_norm(store, prefix + ".norm_h_in", d);
      ids.norm_e_in = add_norm(store, prefix + ".norm_e_in", d);
      ids.ffn_h1 = add_affine(store, prefix + ".ffn_h1", d, d, rng);
      ids.ffn_h2 = add_affine(store, prefix + ".ffn_h2", d, d, rng);
      ids.ffn_e1 = add_affine(store, prefix + ".ffn_e1", d, d, rng);
      ids.ffn_e2 = add_affine(store, prefix + ".ffn_e2", d, d, rng);
      ids.norm_h_out = add_norm(store, prefix + ".norm_h_out", d);
      ids.norm_e_out = add_norm(store, prefix + ".norm_e_out", d);
      layers_.push_back(ids);
    }
  }

  //! h0 = atom_in(x) + pe_in(pe), e0 = bond_in(edge features).
  States embed_inputs(Tape<T>& tape, const graph::MolecularGraph& g, const Bound<T>& p, const ForwardMode& mode) const {
    if (g.node_features.cols() != chem::kAtomFeatureDim || g.node_features.rows() != g.n_nodes()) {
      throw DimensionMismatch("node features " + shape_str(g.node_features.shape()) + " do not match graph with " +
                              std::to_string(g.n_nodes()) + " nodes");
    }
    if (g.edge_features.rows() != g.n_edges() ||
        (g.n_edges() > 0 && g.edge_features.cols() != chem::kBondFeatureDim)) {
      throw DimensionMismatch("edge features " + shape_str(g.edge_features.shape()) + " do not match graph");
    }
    Var<T> nodes = apply(atom_in_, p, tape.constant(to_tensor<T>(g.node_features)));
    if (cfg_.positional_encoding) {
      Tensor<double> pe = g.positional_encoding;
      if (pe.empty()) pe = graph::positional_encoding(graph::eigendecompose(graph::normalized_laplacian(g)), cfg_.k_pe, false);
      if (pe.rows() != g.n_nodes() || pe.cols() != cfg_.k_pe) {
        throw DimensionMismatch("positional encoding " + shape_str(pe.shape()) + " does not match k_pe " +
                                std::to_string(cfg_.k_pe));
      }
      if (mode.train) {
        if (mode.rng == nullptr) throw Error("train mode needs a random generator");
        graph::random_sign_flip(pe, *mode.rng);
      }
      nodes = add(nodes, apply(pe_in_, p, tape.constant(to_tensor<T>(pe))));
    }
    Tensor<T> edge_in = g.n_edges() > 0 ? to_tensor<T>(g.edge_features) : Tensor<T>(Shape{0, chem::kBondFeatureDim});
    Var<T> edges = apply(bond_in_, p, tape.constant(std::move(edge_in)));
    return {nodes, edges};
  }

  Attention attention_scores(const graph::MolecularGraph& g, const States& s, const Bound<T>& p,
                             std::size_t layer) const {
    const auto& ids = layers_.at(layer);
    const auto src = g.sources();
    const auto dst = g.targets();
    Var<T> q = gather_rows(matmul(s.nodes, p[ids.query]), std::span<const std::size_t>(dst));
    Var<T> k = gather_rows(matmul(s.nodes, p[ids.key]), std::span<const std::size_t>(src));
    Var<T> e = matmul(s.edges, p[ids.edge]);
    Var<T> scores = mul(scale(mul(q, k), T(1) / std::sqrt(T(cfg_.d_head))), e);
    Var<T> weights = segment_softmax(block_sum(scores, cfg_.d_head), std::span<const std::size_t>(dst), g.n_nodes());
    return {scores, weights};
  }

  States layer_forward(const graph::MolecularGraph& g, const States& s, const Bound<T>& p, std::size_t layer,
                       const ForwardMode& mode, Trace* trace = nullptr) const {
    const auto& ids = layers_.at(layer);
    const auto src = g.sources();
    const auto dst = g.targets();
    const Attention att = attention_scores(g, s, p, layer);
    if (trace) trace->weights.push_back(att.weights.value());

    // Nodes without incoming edges receive a zero message and keep their state.
    Var<T> values = gather_rows(matmul(s.nodes, p[ids.value]), std::span<const std::size_t>(src));
    Var<T> messages = weighted_scatter(att.weights, values, std::span<const std::size_t>(dst), g.n_nodes());

    Var<T> nodes = add(apply(ids.out_h, p, messages), s.nodes);
    Var<T> edges = add(apply(ids.out_e, p, att.scores), s.edges);

    nodes = feed_forward(nodes, ids.norm_h_in, ids.ffn_h1, ids.ffn_h2, ids.norm_h_out, p);
    edges = feed_forward(edges, ids.norm_e_in, ids.ffn_e1, ids.ffn_e2, ids.norm_e_out, p);

    if (mode.train && cfg_.dropout > 0.0) {
      nodes = dropout(nodes, cfg_.dropout, *mode.rng);
      edges = dropout(edges, cfg_.dropout, *mode.rng);
    }
    return {nodes, edges};
  }

  //! Final virtual-node state, or the mean over final node states when the
  //! model is configured without a virtual node.
  Var<T> encode(Tape<T>& tape, const graph::MolecularGraph& g, const Bound<T>& p, const ForwardMode& mode,
                Trace* trace = nullptr) const {
    if (cfg_.virtual_node && !g.virtual_node_index) {
      throw MissingVirtualNode("virtual-node readout requested on a graph without a virtual node");
    }
    States s = embed_inputs(tape, g, p, mode);
    for (std::size_t l = 0; l < cfg_.layers; ++l) s = layer_forward(g, s, p, l, mode, trace);
    if (cfg_.virtual_node) return select_row(s.nodes, *g.virtual_node_index);
    return mean_rows(s.nodes);
  }

 private:
  struct LayerIds {
    std::size_t query = 0, key = 0, value = 0, edge = 0;
    AffineIds out_h, out_e, ffn_h1, ffn_h2, ffn_e1, ffn_e2;
    NormIds norm_h_in, norm_e_in, norm_h_out, norm_e_out;
  };

  // Norm(x + W2 relu(W1 Norm(x)))
  static Var<T> feed_forward(const Var<T>& x, const NormIds& inner, const AffineIds& w1, const AffineIds& w2,
                             const NormIds& outer, const Bound<T>& p) {
    Var<T> hidden = relu(apply(w1, p, apply(inner, p, x)));
    return apply(outer, p, add(x, apply(w2, p, hidden)));
  }

  ModelConfig cfg_;
  AffineIds atom_in_, bond_in_, pe_in_;
  std::vector<LayerIds> layers_;
};

}  // namespace vidta::model
