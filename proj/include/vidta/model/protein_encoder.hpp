// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <array>
#include <cctype>
#include <cstddef>
#include <cstdint>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vidta/error.hpp"
#include "vidta/model/common.hpp"
#include "vidta/model/config.hpp"

namespace vidta::model {

inline constexpr std::size_t kDefaultProteinLength = 1000;
inline constexpr std::size_t kResidueVocabulary = 26;  // pad + 25 letters

//! Residue letters in code order 1..25. The first three are fixed (A, C, B);
//! the rest follow alphabetically. J is not a residue letter.
inline constexpr std::string_view kResidueOrder = "ACBDEFGHIKLMNOPQRSTUVWXYZ";

inline int residue_code(char letter) {
  const char upper = static_cast<char>(std::toupper(static_cast<unsigned char>(letter)));
  const auto at = kResidueOrder.find(upper);
  return at == std::string_view::npos ? -1 : static_cast<int>(at) + 1;
}

//! FNV-1a over the residue order; stored in checkpoints.
inline std::uint64_t residue_table_hash() {
  std::uint64_t h = 1469598103934665603ull;
  for (char c : kResidueOrder) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

struct ProteinSequenceEncoding {
  std::vector<std::size_t> codes;  // length l_p, 0 = pad
  std::size_t original_length = 0;

  friend bool operator==(const ProteinSequenceEncoding&, const ProteinSequenceEncoding&) = default;
};

//! Accepts raw residue text or a single FASTA record (header lines starting
//! with '>' are dropped, whitespace ignored). Truncates to `length`, pads with 0.
inline ProteinSequenceEncoding encode_sequence(std::string_view text, std::size_t length = kDefaultProteinLength) {
  std::string residues;
  std::istringstream lines{std::string(text)};
  for (std::string line; std::getline(lines, line);) {
    if (!line.empty() && line.front() == '>') continue;
    for (char c : line)
      if (!std::isspace(static_cast<unsigned char>(c))) residues += c;
  }
  if (residues.empty()) throw EmptySequence();
  ProteinSequenceEncoding enc;
  enc.codes.assign(length, 0);
  enc.original_length = residues.size();
  for (std::size_t i = 0; i < residues.size(); ++i) {
    const int code = residue_code(residues[i]);
    if (code < 0) throw UnknownResidue(residues[i], i);
    if (i < length) enc.codes[i] = static_cast<std::size_t>(code);
  }
  return enc;
}

//! Embedding lookup, three conv + ReLU blocks, global max over length.
template <typename T>
class ProteinEncoder {
 public:
  ProteinEncoder(const ModelConfig& config, ParamStore<T>& store, Rng& rng) : cfg_(config) {
    embedding_ = store.add("protein.embedding", Shape{kResidueVocabulary, cfg_.protein_embed});
    glorot_uniform(store[embedding_].value, kResidueVocabulary, cfg_.protein_embed, rng);
    const std::array<std::size_t, 4> channels{cfg_.protein_embed, cfg_.protein_hidden, cfg_.protein_hidden,
                                              cfg_.d_model};
    for (std::size_t b = 0; b < 3; ++b) {
      const std::string name = "protein.conv" + std::to_string(b);
      const std::size_t k = cfg_.protein_kernels[b];
      Block block;
      block.kernels = store.add(name + ".weight", Shape{channels[b + 1], channels[b], k});
      block.bias = store.add(name + ".bias", Shape{channels[b + 1]});
      block.padding = cfg_.protein_padding[b];
      glorot_uniform(store[block.kernels].value, channels[b] * k, channels[b + 1] * k, rng);
      blocks_[b] = block;
    }
  }

  Var<T> encode(const ProteinSequenceEncoding& enc, const Bound<T>& p) const {
    if (enc.codes.size() != cfg_.protein_length) {
      throw DimensionMismatch("protein encoding has length " + std::to_string(enc.codes.size()) + ", model expects " +
                              std::to_string(cfg_.protein_length));
    }
    // [l_p x d_p] -> [d_p x l_p] so convolutions run along the sequence.
    Var<T> x = transpose(embedding_lookup(p[embedding_], std::span<const std::size_t>(enc.codes)));
    for (const auto& block : blocks_) x = relu(conv1d(x, p[block.kernels], p[block.bias], block.padding));
    return maxpool_global(x);
  }

 private:
  struct Block {
    std::size_t kernels = 0;
    std::size_t bias = 0;
    std::size_t padding = 0;
  };

  ModelConfig cfg_;
  std::size_t embedding_ = 0;
  std::array<Block, 3> blocks_{};
};

}  // namespace vidta::model
