// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Dataset ingestion and the featurization cache.
//!
//! CSV layout (UTF-8, LF):
//!   smiles,protein,affinity,space
//!   CC(=O)Nc1ccc(O)cc1,MKV...,7.2,pKd
//!
//! `space` is one of pKd, kiba, metz_native, raw_Kd_nM.

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <fstream>
#include <istream>
#include <map>
#include <memory>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "vidta/chem/smiles.hpp"
#include "vidta/error.hpp"
#include "vidta/graph/molecular_graph.hpp"
#include "vidta/graph/spectral.hpp"
#include "vidta/model/config.hpp"
#include "vidta/model/protein_encoder.hpp"
#include "vidta/model/vidta_model.hpp"

namespace vidta::pipeline {

enum class AffinitySpace { kPKd, kKiba, kMetzNative, kRawKdNm };

inline std::string to_string(AffinitySpace space) {
  switch (space) {
    case AffinitySpace::kPKd: return "pKd";
    case AffinitySpace::kKiba: return "kiba";
    case AffinitySpace::kMetzNative: return "metz_native";
    case AffinitySpace::kRawKdNm: return "raw_Kd_nM";
  }
  return "pKd";
}

inline AffinitySpace parse_affinity_space(std::string_view text) {
  if (text == "pKd") return AffinitySpace::kPKd;
  if (text == "kiba") return AffinitySpace::kKiba;
  if (text == "metz_native") return AffinitySpace::kMetzNative;
  if (text == "raw_Kd_nM") return AffinitySpace::kRawKdNm;
  throw Error("unknown affinity space '" + std::string(text) + "'");
}

//! Raw K_d in nM becomes pK_d = -log10(K_d / 1e9); other spaces pass through.
inline double transform_affinity(double value, AffinitySpace space) {
  if (space != AffinitySpace::kRawKdNm) return value;
  if (!(value > 0.0)) throw NonPositiveKd("K_d must be positive, got " + std::to_string(value));
  return 9.0 - std::log10(value);
}

struct DatasetRecord {
  std::string smiles;
  std::string protein_seq;
  double affinity = 0.0;  // as read, in `affinity_space`
  AffinitySpace affinity_space = AffinitySpace::kPKd;
  std::size_t row = 0;  // 1-based data row in the source file, 0 if synthetic

  //! Regression target in model space.
  double target() const { return transform_affinity(affinity, affinity_space); }
};

struct QuarantinedRow {
  std::size_t row = 0;
  std::string kind;    // e.g. UnmatchedRingClosure, UnknownResidue, MalformedRow
  std::string reason;  // full single-line message
};

struct Dataset {
  std::vector<DatasetRecord> records;
  std::vector<QuarantinedRow> quarantine;
  std::size_t rows = 0;  // non-empty data lines read
};

inline constexpr std::string_view kDatasetHeader = "smiles,protein,affinity,space";

namespace detail {

inline std::vector<std::string> split_csv(const std::string& line) {
  std::vector<std::string> fields;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, ',')) fields.push_back(field);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  return fields;
}

inline std::string trim(std::string s) {
  while (!s.empty() && (s.back() == '\r' || s.back() == ' ' || s.back() == '\t')) s.pop_back();
  std::size_t start = 0;
  while (start < s.size() && (s[start] == ' ' || s[start] == '\t')) ++start;
  return s.substr(start);
}

// Returns an empty kind when the row is accepted.
inline QuarantinedRow check_row(const std::vector<std::string>& fields, std::size_t row, DatasetRecord& out) {
  if (fields.size() != 4) {
    return {row, "MalformedRow", "expected 4 fields, found " + std::to_string(fields.size())};
  }
  out.smiles = trim(fields[0]);
  out.protein_seq = trim(fields[1]);
  out.row = row;
  try {
    std::size_t used = 0;
    const std::string value = trim(fields[2]);
    out.affinity = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument("trailing text");
  } catch (const std::exception&) {
    return {row, "MalformedAffinity", "affinity '" + fields[2] + "' is not a number"};
  }
  if (!std::isfinite(out.affinity)) return {row, "MalformedAffinity", "affinity is not finite"};
  try {
    out.affinity_space = parse_affinity_space(trim(fields[3]));
  } catch (const Error& e) {
    return {row, "UnknownSpace", e.what()};
  }
  try {
    chem::parse_smiles(out.smiles);
  } catch (const chem::SmilesError& e) {
    return {row, chem::to_string(e.kind()), e.what()};
  }
  try {
    model::encode_sequence(out.protein_seq, 1);
  } catch (const UnknownResidue& e) {
    return {row, "UnknownResidue", e.what()};
  } catch (const EmptySequence& e) {
    return {row, "EmptySequence", e.what()};
  }
  try {
    out.target();
  } catch (const NonPositiveKd& e) {
    return {row, "NonPositiveKd", e.what()};
  }
  return {};
}

}  // namespace detail

//! Reads a dataset; rows that fail validation land in `quarantine` with their
//! row number and reason. Blank lines are not rows.
inline Dataset read_dataset(std::istream& in) {
  std::string header;
  if (!std::getline(in, header)) throw HeaderMismatch("dataset is empty; expected header '" +
                                                     std::string(kDatasetHeader) + "'");
  if (header.size() >= 3 && header.compare(0, 3, "\xEF\xBB\xBF") == 0) header.erase(0, 3);
  if (detail::trim(header) != kDatasetHeader) {
    throw HeaderMismatch("expected header '" + std::string(kDatasetHeader) + "', found '" + detail::trim(header) +
                         "'");
  }
  Dataset data;
  std::size_t row = 0;
  for (std::string line; std::getline(in, line);) {
    if (detail::trim(line).empty()) continue;
    ++row;
    ++data.rows;
    DatasetRecord record;
    QuarantinedRow bad = detail::check_row(detail::split_csv(line), row, record);
    if (bad.kind.empty()) {
      data.records.push_back(std::move(record));
    } else {
      data.quarantine.push_back(std::move(bad));
    }
  }
  return data;
}

inline Dataset load_dataset(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileUnreadable("cannot open dataset '" + path + "'");
  return read_dataset(in);
}

//! Featurized graphs and protein encodings, one per unique SMILES or sequence.
//! Entries have stable addresses, so Samples built from them stay valid.
class FeatureCache {
 public:
  explicit FeatureCache(const model::ModelConfig& config) : cfg_(config) {}

  //! Featurizes anything not yet cached, fanning out over `workers`.
  //! A failing record aborts with its row (or index) in the message.
  void add(const std::vector<DatasetRecord>& records, std::size_t workers = 1) {
    std::vector<std::pair<const DatasetRecord*, std::string>> new_smiles;
    std::vector<std::pair<const DatasetRecord*, std::string>> new_proteins;
    for (const auto& r : records) {
      if (!graphs_.contains(r.smiles)) {
        graphs_.emplace(r.smiles, nullptr);
        new_smiles.emplace_back(&r, r.smiles);
      }
      if (!proteins_.contains(r.protein_seq)) {
        proteins_.emplace(r.protein_seq, nullptr);
        new_proteins.emplace_back(&r, r.protein_seq);
      }
    }
    std::vector<std::unique_ptr<graph::MolecularGraph>> graphs(new_smiles.size());
    std::vector<std::unique_ptr<model::ProteinSequenceEncoding>> proteins(new_proteins.size());
    std::vector<std::string> failures(new_smiles.size() + new_proteins.size());
    model::parallel_for(failures.size(), workers, [&](std::size_t i) {
      const DatasetRecord* source = i < graphs.size() ? new_smiles[i].first : new_proteins[i - graphs.size()].first;
      try {
        if (i < graphs.size()) {
          graphs[i] = std::make_unique<graph::MolecularGraph>(featurize_smiles(new_smiles[i].second));
        } else {
          proteins[i - graphs.size()] = std::make_unique<model::ProteinSequenceEncoding>(
              model::encode_sequence(new_proteins[i - graphs.size()].second, cfg_.protein_length));
        }
      } catch (const std::exception& e) {
        failures[i] = describe(*source) + ": " + e.what();
      }
    });
    for (std::size_t i = 0; i < failures.size(); ++i) {
      if (!failures[i].empty()) {
        for (const auto& [rec, s] : new_smiles) graphs_.erase(s);
        for (const auto& [rec, s] : new_proteins) proteins_.erase(s);
        throw Error(failures[i]);
      }
    }
    for (std::size_t i = 0; i < graphs.size(); ++i) graphs_[new_smiles[i].second] = std::move(graphs[i]);
    for (std::size_t i = 0; i < proteins.size(); ++i) proteins_[new_proteins[i].second] = std::move(proteins[i]);
  }

  model::Sample sample(const DatasetRecord& r) const {
    auto g = graphs_.find(r.smiles);
    auto p = proteins_.find(r.protein_seq);
    if (g == graphs_.end() || p == proteins_.end()) throw Error(describe(r) + " was never featurized");
    return {g->second.get(), p->second.get()};
  }

  std::vector<model::Sample> samples(const std::vector<DatasetRecord>& records) const {
    std::vector<model::Sample> out;
    out.reserve(records.size());
    for (const auto& r : records) out.push_back(sample(r));
    return out;
  }

  std::size_t graph_count() const { return graphs_.size(); }
  std::size_t protein_count() const { return proteins_.size(); }

  graph::MolecularGraph featurize_smiles(const std::string& smiles) const {
    graph::MolecularGraph g = graph::build_graph(chem::parse_smiles(smiles), cfg_.virtual_node);
    if (cfg_.positional_encoding) graph::attach_positional_encoding(g, cfg_.k_pe);
    return g;
  }

 private:
  static std::string describe(const DatasetRecord& r) {
    return r.row > 0 ? "record at row " + std::to_string(r.row) : "record '" + r.smiles + "'";
  }

  model::ModelConfig cfg_;
  std::map<std::string, std::unique_ptr<graph::MolecularGraph>> graphs_;
  std::map<std::string, std::unique_ptr<model::ProteinSequenceEncoding>> proteins_;
};

}  // namespace vidta::pipeline
