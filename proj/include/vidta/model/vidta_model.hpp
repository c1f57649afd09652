// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <map>
#include <memory>
#include <span>
#include <thread>
#include <vector>

#include "vidta/graph/molecular_graph.hpp"
#include "vidta/model/common.hpp"
#include "vidta/model/config.hpp"
#include "vidta/model/drug_encoder.hpp"
#include "vidta/model/fusion_head.hpp"
#include "vidta/model/protein_encoder.hpp"

namespace vidta::model {

//! One drug-target pair, borrowed from featurization caches.
struct Sample {
  const graph::MolecularGraph* graph = nullptr;
  const ProteinSequenceEncoding* protein = nullptr;
};

//! Runs `work(i)` for i in [0, count) over up to `workers` threads.
template <typename Work>
void parallel_for(std::size_t count, std::size_t workers, Work&& work) {
  workers = std::clamp<std::size_t>(workers, 1, std::max<std::size_t>(count, 1));
  if (workers == 1) {
    for (std::size_t i = 0; i < count; ++i) work(i);
    return;
  }
  std::vector<std::thread> pool;
  for (std::size_t w = 0; w < workers; ++w) {
    pool.emplace_back([&, w] {
      for (std::size_t i = w; i < count; i += workers) work(i);
    });
  }
  for (auto& t : pool) t.join();
}

//! Drug encoder + protein encoder + fusion + affinity head.
template <typename T>
class VidtaModel {
 public:
  VidtaModel(const ModelConfig& config, std::uint64_t seed) : cfg_((config.validate(), config)), init_rng_(seed) {
    drug_ = std::make_unique<DrugEncoder<T>>(cfg_, params_, init_rng_);
    protein_ = std::make_unique<ProteinEncoder<T>>(cfg_, params_, init_rng_);
    head_ = std::make_unique<FusionHead<T>>(cfg_, params_, init_rng_);
  }

  const ModelConfig& config() const noexcept { return cfg_; }
  ParamStore<T>& params() noexcept { return params_; }
  const ParamStore<T>& params() const noexcept { return params_; }
  const DrugEncoder<T>& drug() const { return *drug_; }
  const ProteinEncoder<T>& protein() const { return *protein_; }
  FusionHead<T>& head() { return *head_; }
  const FusionHead<T>& head() const { return *head_; }

  //! Records the forward pass of a batch; returns predictions [batch].
  //! Repeated proteins inside the batch share one encoder pass.
  Var<T> forward(Tape<T>& tape, const Bound<T>& p, std::span<const Sample> batch, const ForwardMode& mode) {
    if (batch.empty()) throw Error("forward() on an empty batch");
    std::map<const ProteinSequenceEncoding*, Var<T>> proteins;
    std::vector<Var<T>> fused;
    fused.reserve(batch.size());
    for (const auto& s : batch) {
      auto it = proteins.find(s.protein);
      if (it == proteins.end()) it = proteins.emplace(s.protein, protein_->encode(*s.protein, p)).first;
      Var<T> drug = drug_->encode(tape, *s.graph, p, mode);
      fused.push_back(head_->combine(drug, it->second, p, cfg_.fusion));
    }
    return head_->predict(stack_rows(std::span<const Var<T>>(fused)), p, mode.train);
  }

  //! Eval-mode predictions. Unique graphs and proteins are encoded once, in
  //! parallel across `workers`; results do not depend on batching or workers.
  std::vector<T> predict(std::span<const Sample> samples, std::size_t workers = 1) {
    if (samples.empty()) return {};
    std::map<const graph::MolecularGraph*, std::size_t> graph_slot;
    std::map<const ProteinSequenceEncoding*, std::size_t> protein_slot;
    std::vector<const graph::MolecularGraph*> graphs;
    std::vector<const ProteinSequenceEncoding*> proteins;
    for (const auto& s : samples) {
      if (graph_slot.emplace(s.graph, graphs.size()).second) graphs.push_back(s.graph);
      if (protein_slot.emplace(s.protein, proteins.size()).second) proteins.push_back(s.protein);
    }
    std::vector<Tensor<T>> drug_emb(graphs.size()), protein_emb(proteins.size());
    const ForwardMode eval{};
    parallel_for(graphs.size() + proteins.size(), workers, [&](std::size_t i) {
      Tape<T> tape;
      const Bound<T> p = params_.bind_frozen(tape);
      if (i < graphs.size()) {
        drug_emb[i] = drug_->encode(tape, *graphs[i], p, eval).value();
      } else {
        protein_emb[i - graphs.size()] = protein_->encode(*proteins[i - graphs.size()], p).value();
      }
    });

    Tape<T> tape;
    const Bound<T> p = params_.bind_frozen(tape);
    std::vector<Var<T>> fused;
    fused.reserve(samples.size());
    for (const auto& s : samples) {
      fused.push_back(head_->combine(tape.constant(drug_emb[graph_slot[s.graph]]),
                                     tape.constant(protein_emb[protein_slot[s.protein]]), p, cfg_.fusion));
    }
    const auto out = head_->predict(stack_rows(std::span<const Var<T>>(fused)), p, false).value();
    return {out.values().begin(), out.values().end()};
  }

 private:
  ModelConfig cfg_;
  Rng init_rng_;
  ParamStore<T> params_;
  std::unique_ptr<DrugEncoder<T>> drug_;
  std::unique_ptr<ProteinEncoder<T>> protein_;
  std::unique_ptr<FusionHead<T>> head_;
};

}  // namespace vidta::model
