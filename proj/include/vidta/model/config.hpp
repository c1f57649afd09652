// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "vidta/error.hpp"

namespace vidta::model {

enum class FusionMode { kAttention, kAdd, kConcat };

inline std::string to_string(FusionMode mode) {
  switch (mode) {
    case FusionMode::kAttention: return "attention";
    case FusionMode::kAdd: return "add";
    case FusionMode::kConcat: return "concat";
  }
  return "attention";
}

inline FusionMode parse_fusion_mode(const std::string& text) {
  if (text == "attention") return FusionMode::kAttention;
  if (text == "add") return FusionMode::kAdd;
  if (text == "concat") return FusionMode::kConcat;
  throw Error("unknown fusion mode '" + text + "' (expected attention, add or concat)");
}

//! Every architectural hyperparameter, with full-size defaults.
struct ModelConfig {
  std::size_t d_model = 128;  // drug encoder input/output width, protein output width
  std::size_t d_head = 16;    // per-head hidden width (edge heads share it)
  std::size_t heads = 8;
  std::size_t layers = 10;
  std::size_t k_pe = 8;  // eigenvectors fed to the positional projection
  double dropout = 0.2;  // applied to node and edge states after every layer
  bool virtual_node = true;
  bool positional_encoding = true;

  std::size_t protein_length = 1000;
  std::size_t protein_embed = 128;
  std::size_t protein_hidden = 256;
  std::array<std::size_t, 3> protein_kernels{2, 3, 5};
  std::array<std::size_t, 3> protein_padding{5, 7, 11};

  FusionMode fusion = FusionMode::kAttention;
  std::array<std::size_t, 3> head_widths{1024, 512, 128};

  //! Small dimensions used by gradient checks and smoke training.
  static ModelConfig toy() {
    ModelConfig c;
    c.d_model = 8;
    c.d_head = 2;
    c.heads = 2;
    c.layers = 2;
    c.protein_length = 12;
    c.protein_embed = 4;
    c.protein_hidden = 4;
    c.head_widths = {64, 32, 16};
    c.dropout = 0.0;
    return c;
  }

  std::size_t head_input() const { return fusion == FusionMode::kConcat ? 2 * d_model : d_model; }

  void validate() const {
    if (d_model == 0 || d_head == 0 || heads == 0 || layers == 0 || k_pe == 0 || protein_length == 0 ||
        protein_embed == 0 || protein_hidden == 0) {
      throw Error("model dimensions must be positive");
    }
    if (dropout < 0.0 || dropout >= 1.0) throw Error("dropout must lie in [0, 1)");
  }

  std::map<std::string, std::string> to_map() const {
    auto triple = [](const std::array<std::size_t, 3>& a) {
      return std::to_string(a[0]) + "," + std::to_string(a[1]) + "," + std::to_string(a[2]);
    };
    std::ostringstream drop;
    drop.precision(17);
    drop << dropout;
    return {
        {"d_model", std::to_string(d_model)},
        {"d_head", std::to_string(d_head)},
        {"heads", std::to_string(heads)},
        {"layers", std::to_string(layers)},
        {"k_pe", std::to_string(k_pe)},
        {"dropout", drop.str()},
        {"virtual_node", virtual_node ? "1" : "0"},
        {"positional_encoding", positional_encoding ? "1" : "0"},
        {"protein_length", std::to_string(protein_length)},
        {"protein_embed", std::to_string(protein_embed)},
        {"protein_hidden", std::to_string(protein_hidden)},
        {"protein_kernels", triple(protein_kernels)},
        {"protein_padding", triple(protein_padding)},
        {"fusion", to_string(fusion)},
        {"head_widths", triple(head_widths)},
    };
  }

  static ModelConfig from_map(const std::map<std::string, std::string>& kv) {
    auto get = [&](const std::string& key) -> const std::string& {
      auto it = kv.find(key);
      if (it == kv.end()) throw VersionMismatch("model config is missing key '" + key + "'");
      return it->second;
    };
    auto size = [&](const std::string& key) { return static_cast<std::size_t>(std::stoull(get(key))); };
    auto triple = [&](const std::string& key) {
      std::array<std::size_t, 3> out{};
      std::istringstream in(get(key));
      std::string part;
      for (auto& v : out) {
        if (!std::getline(in, part, ',')) throw VersionMismatch("malformed triple for '" + key + "'");
        v = static_cast<std::size_t>(std::stoull(part));
      }
      return out;
    };
    ModelConfig c;
    c.d_model = size("d_model");
    c.d_head = size("d_head");
    c.heads = size("heads");
    c.layers = size("layers");
    c.k_pe = size("k_pe");
    c.dropout = std::stod(get("dropout"));
    c.virtual_node = get("virtual_node") == "1";
    c.positional_encoding = get("positional_encoding") == "1";
    c.protein_length = size("protein_length");
    c.protein_embed = size("protein_embed");
    c.protein_hidden = size("protein_hidden");
    c.protein_kernels = triple("protein_kernels");
    c.protein_padding = triple("protein_padding");
    c.fusion = parse_fusion_mode(get("fusion"));
    c.head_widths = triple("head_widths");
    return c;
  }

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

}  // namespace vidta::model
