// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Central finite-difference checks of reverse-mode gradients.

#pragma once

#include <chrono>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "vidta/chem/smiles.hpp"
#include "vidta/graph/molecular_graph.hpp"
#include "vidta/graph/spectral.hpp"
#include "vidta/model/vidta_model.hpp"
#include "vidta/tensor/ops.hpp"
#include "vidta/tensor/params.hpp"

namespace vidta {

struct GradCheckReport {
  double max_rel_error = 0.0;
  std::string worst_param;
  std::size_t worst_index = 0;
  double analytic = 0.0;  // at the worst entry
  double numeric = 0.0;
  std::size_t checked = 0;
  double seconds = 0.0;
};

//! Central differences at eps = 1e-5 cannot resolve gradients below this.
inline constexpr double kDifferenceResolution = 1e-9;

//! |a - n| / max(|a|, |n|, floor); zero when both lie below the resolution.
inline double relative_error(double analytic, double numeric, double floor = 1e-6) {
  if (std::abs(analytic) <= kDifferenceResolution && std::abs(numeric) <= kDifferenceResolution) return 0.0;
  return std::abs(analytic - numeric) / std::max({std::abs(analytic), std::abs(numeric), floor});
}

//! Compares every entry of every parameter in `store` against central
//! differences of `loss`, which must rebuild the whole computation on the
//! tape it is given and be deterministic.
inline GradCheckReport check_gradients(ParamStore<double>& store,
                                       const std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>& loss,
                                       double eps = 1e-5, double floor = 1e-6) {
  const auto start = std::chrono::steady_clock::now();
  store.zero_grad();
  {
    Tape<double> tape;
    const auto p = store.bind(tape);
    tape.backward(loss(tape, p));
  }
  auto evaluate = [&] {
    Tape<double> tape;
    const auto p = store.bind_frozen(tape);
    return loss(tape, p).value().item();
  };
  GradCheckReport report;
  for (auto& param : store) {
    for (std::size_t i = 0; i < param.value.size(); ++i) {
      const double saved = param.value[i];
      param.value[i] = saved + eps;
      const double up = evaluate();
      param.value[i] = saved - eps;
      const double down = evaluate();
      param.value[i] = saved;
      const double numeric = (up - down) / (2.0 * eps);
      const double err = relative_error(param.grad[i], numeric, floor);
      ++report.checked;
      if (err > report.max_rel_error || report.worst_param.empty()) {
        report.max_rel_error = err;
        report.worst_param = param.name;
        report.worst_index = i;
        report.analytic = param.grad[i];
        report.numeric = numeric;
      }
    }
  }
  report.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  return report;
}

//! Gradient check of the assembled model (both encoders, fusion, head with
//! batch statistics) at small dimensions in double precision.
inline GradCheckReport gradcheck_model(model::ModelConfig cfg = model::ModelConfig::toy(), std::uint64_t seed = 1,
                                       double eps = 1e-5, double floor = 1e-6) {
  cfg.dropout = 0.0;
  model::VidtaModel<double> m(cfg, seed);
  Rng rng(seed + 1);
  // Nonzero biases keep ReLUs and max pooling away from exact ties.
  for (auto& p : m.params()) {
    if (p.name.ends_with(".bias")) {
      for (auto& v : p.value.values()) v = uniform(rng, -0.2, 0.2);
    }
  }
  const std::vector<std::string> smiles{"CC(=O)Oc1ccccc1C(=O)O", "C1CC1[NH3+]", "c1ccncc1Cl"};
  std::vector<graph::MolecularGraph> graphs;
  for (const auto& s : smiles) {
    graphs.push_back(graph::build_graph(chem::parse_smiles(s), cfg.virtual_node));
    if (cfg.positional_encoding) graph::attach_positional_encoding(graphs.back(), cfg.k_pe);
  }
  std::vector<model::ProteinSequenceEncoding> proteins{model::encode_sequence("MKTAYIAKQRQ", cfg.protein_length),
                                                       model::encode_sequence("GSHMWLLE", cfg.protein_length)};
  const std::vector<model::Sample> batch{{&graphs[0], &proteins[0]}, {&graphs[1], &proteins[1]},
                                         {&graphs[2], &proteins[0]}};
  const Tensor<double> target(Shape{3}, std::vector<double>{0.5, -1.0, 2.0});
  auto loss = [&](Tape<double>& tape, const std::vector<Var<double>>& p) {
    Rng flips(seed + 2);
    Var<double> pred = m.forward(tape, p, std::span<const model::Sample>(batch), {true, &flips});
    return mse_loss(pred, tape.constant(target));
  };
  return check_gradients(m.params(), loss, eps, floor);
}

}  // namespace vidta
