// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Checkpoint archive: a text manifest terminated by a line "end",
//!       then raw little-endian float32 arrays in manifest order.
//!
//!   VIDTA-CHECKPOINT
//!   format_version=1
//!   feature_layout=atom44-bond10-v1
//!   residue_table_hash=...
//!   model.d_model=128
//!   ...
//!   array param/drug.atom_in.weight 44x128 0 5632
//!   end
//!   <bytes>
//!
//! Array offsets and counts are in float elements from the start of the data.

#pragma once

#include <bit>
#include <charconv>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <fstream>
#include <istream>
#include <limits>
#include <map>
#include <ostream>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "vidta/chem/features.hpp"
#include "vidta/error.hpp"
#include "vidta/model/config.hpp"
#include "vidta/model/protein_encoder.hpp"
#include "vidta/model/vidta_model.hpp"
#include "vidta/tensor/params.hpp"

namespace vidta::pipeline {

inline constexpr int kCheckpointFormatVersion = 1;
inline constexpr std::string_view kCheckpointMagic = "VIDTA-CHECKPOINT";

struct NamedArray {
  std::string name;
  Tensor<float> values;
};

struct Checkpoint {
  int format_version = kCheckpointFormatVersion;
  std::string feature_layout{chem::kFeatureLayoutVersion};
  std::uint64_t residue_table_hash = model::residue_table_hash();
  model::ModelConfig config;
  std::size_t epoch = 0;
  double best_valid_mse = std::numeric_limits<double>::infinity();
  long adam_steps = 0;
  std::string rng_state;
  std::vector<NamedArray> arrays;

  const NamedArray* find(const std::string& name) const {
    for (const auto& a : arrays)
      if (a.name == name) return &a;
    return nullptr;
  }
};

//! Throws VersionMismatch unless the checkpoint was written with this build's
//! format, feature layout and residue table.
inline void check_compatible(const Checkpoint& ckpt) {
  if (ckpt.format_version != kCheckpointFormatVersion) {
    throw VersionMismatch("checkpoint format " + std::to_string(ckpt.format_version) + ", expected " +
                          std::to_string(kCheckpointFormatVersion));
  }
  if (ckpt.feature_layout != chem::kFeatureLayoutVersion) {
    throw VersionMismatch("checkpoint feature layout '" + ckpt.feature_layout + "', expected '" +
                          std::string(chem::kFeatureLayoutVersion) + "'");
  }
  if (ckpt.residue_table_hash != model::residue_table_hash()) {
    throw VersionMismatch("checkpoint residue table differs from this build");
  }
}

namespace detail {

inline const char* kBnFields[2] = {"running_mean", "running_var"};

inline std::string hexfloat(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%a", v);
  return buf;
}

inline double parse_hexfloat(const std::string& s) {
  if (s == "inf") return std::numeric_limits<double>::infinity();
  return std::strtod(s.c_str(), nullptr);
}

}  // namespace detail

//! Snapshot of a model, optionally with optimizer moments and the trainer's RNG.
inline Checkpoint make_checkpoint(const model::VidtaModel<float>& m, const Adam<float>* adam = nullptr,
                                  std::size_t epoch = 0,
                                  double best_valid_mse = std::numeric_limits<double>::infinity(),
                                  const std::string& rng_state = {}) {
  Checkpoint c;
  c.config = m.config();
  c.epoch = epoch;
  c.best_valid_mse = best_valid_mse;
  c.rng_state = rng_state;
  for (const auto& p : m.params()) c.arrays.push_back({"param/" + p.name, p.value});
  const auto& bn = m.head().batch_norm_states();
  for (std::size_t l = 0; l < bn.size(); ++l) {
    const std::string base = "bn/head.bn" + std::to_string(l) + ".";
    c.arrays.push_back({base + detail::kBnFields[0], bn[l].running_mean});
    c.arrays.push_back({base + detail::kBnFields[1], bn[l].running_var});
  }
  if (adam != nullptr) {
    c.adam_steps = adam->steps();
    const auto& moments = adam->moments();
    std::size_t i = 0;
    for (const auto& p : m.params()) {
      if (i >= moments.size()) break;
      c.arrays.push_back({"adam.first/" + p.name, moments[i].first});
      c.arrays.push_back({"adam.second/" + p.name, moments[i].second});
      ++i;
    }
  }
  return c;
}

namespace detail {

inline const Tensor<float>& require_array(const Checkpoint& c, const std::string& name, const Shape& shape) {
  const NamedArray* a = c.find(name);
  if (a == nullptr) throw VersionMismatch("checkpoint lacks array '" + name + "'");
  if (a->values.shape() != shape) {
    throw VersionMismatch("checkpoint array '" + name + "' has shape " + shape_str(a->values.shape()) +
                          ", model expects " + shape_str(shape));
  }
  return a->values;
}

}  // namespace detail

//! Rebuilds the model stored in a checkpoint.
inline model::VidtaModel<float> restore_model(const Checkpoint& c) {
  check_compatible(c);
  model::VidtaModel<float> m(c.config, 0);
  for (auto& p : m.params()) p.value = detail::require_array(c, "param/" + p.name, p.value.shape());
  auto& bn = m.head().batch_norm_states();
  for (std::size_t l = 0; l < bn.size(); ++l) {
    const std::string base = "bn/head.bn" + std::to_string(l) + ".";
    bn[l].running_mean = detail::require_array(c, base + detail::kBnFields[0], bn[l].running_mean.shape());
    bn[l].running_var = detail::require_array(c, base + detail::kBnFields[1], bn[l].running_var.shape());
  }
  return m;
}

//! Restores optimizer moments and step count; leaves `adam` fresh when the
//! checkpoint carries none.
inline void restore_optimizer(const Checkpoint& c, const model::VidtaModel<float>& m, Adam<float>& adam) {
  adam.moments().clear();
  adam.set_steps(c.adam_steps);
  if (c.find("adam.first/" + m.params()[0].name) == nullptr) return;
  for (const auto& p : m.params()) {
    adam.moments().push_back({detail::require_array(c, "adam.first/" + p.name, p.value.shape()),
                              detail::require_array(c, "adam.second/" + p.name, p.value.shape())});
  }
}

inline void write_checkpoint(const Checkpoint& c, std::ostream& out) {
  out << kCheckpointMagic << '\n';
  out << "format_version=" << c.format_version << '\n';
  out << "feature_layout=" << c.feature_layout << '\n';
  out << "residue_table_hash=" << c.residue_table_hash << '\n';
  for (const auto& [key, value] : c.config.to_map()) out << "model." << key << '=' << value << '\n';
  out << "epoch=" << c.epoch << '\n';
  out << "best_valid_mse=" << detail::hexfloat(c.best_valid_mse) << '\n';
  out << "adam_steps=" << c.adam_steps << '\n';
  out << "rng_state=" << c.rng_state << '\n';
  std::size_t offset = 0;
  for (const auto& a : c.arrays) {
    std::string dims;
    for (std::size_t d : a.values.shape()) dims += (dims.empty() ? "" : "x") + std::to_string(d);
    if (dims.empty()) dims = "scalar";
    out << "array " << a.name << ' ' << dims << ' ' << offset << ' ' << a.values.size() << '\n';
    offset += a.values.size();
  }
  out << "end\n";
  std::vector<char> bytes;
  for (const auto& a : c.arrays) {
    bytes.resize(a.values.size() * 4);
    for (std::size_t i = 0; i < a.values.size(); ++i) {
      const auto bits = std::bit_cast<std::uint32_t>(a.values[i]);
      for (int b = 0; b < 4; ++b) bytes[i * 4 + b] = static_cast<char>((bits >> (8 * b)) & 0xFFu);
    }
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
  }
  if (!out) throw Error("failed to write checkpoint");
}

inline Checkpoint read_checkpoint(std::istream& in) {
  std::string line;
  if (!std::getline(in, line) || line != kCheckpointMagic) throw VersionMismatch("not a checkpoint file");
  Checkpoint c;
  std::map<std::string, std::string> model_keys;
  struct Entry {
    std::string name;
    Shape shape;
    std::size_t offset = 0, count = 0;
  };
  std::vector<Entry> entries;
  bool ended = false;
  while (std::getline(in, line)) {
    if (line == "end") {
      ended = true;
      break;
    }
    if (line.rfind("array ", 0) == 0) {
      std::istringstream fields(line.substr(6));
      Entry e;
      std::string dims;
      if (!(fields >> e.name >> dims >> e.offset >> e.count)) throw VersionMismatch("malformed array line: " + line);
      if (dims != "scalar") {
        std::istringstream parts(dims);
        for (std::string part; std::getline(parts, part, 'x');) e.shape.push_back(std::stoull(part));
      }
      if (shape_size(e.shape) != e.count) throw VersionMismatch("array '" + e.name + "' count disagrees with shape");
      entries.push_back(std::move(e));
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw VersionMismatch("malformed manifest line: " + line);
    const std::string key = line.substr(0, eq), value = line.substr(eq + 1);
    if (key.rfind("model.", 0) == 0) {
      model_keys[key.substr(6)] = value;
    } else if (key == "format_version") {
      c.format_version = std::stoi(value);
    } else if (key == "feature_layout") {
      c.feature_layout = value;
    } else if (key == "residue_table_hash") {
      c.residue_table_hash = std::stoull(value);
    } else if (key == "epoch") {
      c.epoch = std::stoull(value);
    } else if (key == "best_valid_mse") {
      c.best_valid_mse = detail::parse_hexfloat(value);
    } else if (key == "adam_steps") {
      c.adam_steps = std::stol(value);
    } else if (key == "rng_state") {
      c.rng_state = value;
    }
  }
  if (!ended) throw VersionMismatch("checkpoint manifest is truncated");
  check_compatible(c);
  c.config = model::ModelConfig::from_map(model_keys);

  std::size_t expected = 0;
  std::vector<char> bytes;
  for (auto& e : entries) {
    if (e.offset != expected) throw VersionMismatch("array '" + e.name + "' is out of order");
    expected += e.count;
    bytes.resize(e.count * 4);
    in.read(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (static_cast<std::size_t>(in.gcount()) != bytes.size()) throw VersionMismatch("checkpoint data is truncated");
    Tensor<float> t(e.shape);
    for (std::size_t i = 0; i < e.count; ++i) {
      std::uint32_t bits = 0;
      for (int b = 0; b < 4; ++b) bits |= std::uint32_t(static_cast<unsigned char>(bytes[i * 4 + b])) << (8 * b);
      t[i] = std::bit_cast<float>(bits);
    }
    c.arrays.push_back({std::move(e.name), std::move(t)});
  }
  return c;
}

inline void save_checkpoint(const Checkpoint& c, const std::string& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw FileUnreadable("cannot write checkpoint '" + path + "'");
  write_checkpoint(c, out);
}

inline Checkpoint load_checkpoint(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw FileUnreadable("cannot open checkpoint '" + path + "'");
  return read_checkpoint(in);
}

}  // namespace vidta::pipeline
