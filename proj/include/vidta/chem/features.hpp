// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Fixed-width atom (44) and bond (10) feature vectors.
//!
//! Atom layout:
//!   [0, 25)  element one-hot over kAtomSymbols, slot 24 = other
//!   [25, 33) degree one-hot 0..6, slot 32 = other
//!   33       formal charge (signed)
//!   34       aromatic flag
//!   [35, 39) hybridization sp / sp2 / sp3 / other
//!   [39, 43) chirality none / CW / CCW / other
//!   43       explicit hydrogen count clamped to [0, 1]
//!
//! Bond layout:
//!   [0, 4)   single / double / triple / aromatic
//!   4        conjugated
//!   5        in ring
//!   [6, 10)  stereo none / up / down / other

#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <string_view>

#include "vidta/chem/smiles.hpp"

namespace vidta::chem {

inline constexpr std::size_t kAtomFeatureDim = 44;
inline constexpr std::size_t kBondFeatureDim = 10;

//! Bumped whenever either layout changes; stored in checkpoints.
inline constexpr std::string_view kFeatureLayoutVersion = "atom44-bond10-v1";

inline constexpr std::array<std::string_view, 24> kAtomSymbols = {
    "C", "N", "O", "S", "F", "Si", "P", "Cl", "Br", "Mg", "Na", "Ca",
    "Fe", "As", "Al", "I", "B", "V", "K", "Tl", "Yb", "Sb", "Sn", "Ag"};

namespace atom_slot {
inline constexpr std::size_t kElement = 0;
inline constexpr std::size_t kElementOther = 24;
inline constexpr std::size_t kDegree = 25;
inline constexpr std::size_t kDegreeOther = 32;
inline constexpr std::size_t kCharge = 33;
inline constexpr std::size_t kAromatic = 34;
inline constexpr std::size_t kHybridization = 35;
inline constexpr std::size_t kChirality = 39;
inline constexpr std::size_t kHydrogens = 43;
}  // namespace atom_slot

namespace bond_slot {
inline constexpr std::size_t kOrder = 0;
inline constexpr std::size_t kConjugated = 4;
inline constexpr std::size_t kInRing = 5;
inline constexpr std::size_t kStereo = 6;
}  // namespace bond_slot

template <typename T = float>
std::array<T, kAtomFeatureDim> atom_features(const Atom& atom) {
  std::array<T, kAtomFeatureDim> f{};
  const auto sym = std::find(kAtomSymbols.begin(), kAtomSymbols.end(), atom.element);
  f[sym == kAtomSymbols.end() ? atom_slot::kElementOther
                              : atom_slot::kElement + static_cast<std::size_t>(sym - kAtomSymbols.begin())] = T(1);
  f[atom.degree >= 0 && atom.degree <= 6 ? atom_slot::kDegree + static_cast<std::size_t>(atom.degree)
                                         : atom_slot::kDegreeOther] = T(1);
  f[atom_slot::kCharge] = static_cast<T>(atom.formal_charge);
  f[atom_slot::kAromatic] = atom.is_aromatic ? T(1) : T(0);
  f[atom_slot::kHybridization + static_cast<std::size_t>(atom.hybridization)] = T(1);
  f[atom_slot::kChirality + static_cast<std::size_t>(atom.chirality)] = T(1);
  f[atom_slot::kHydrogens] = static_cast<T>(std::clamp(atom.explicit_h_count, 0, 1));
  return f;
}

template <typename T = float>
std::array<T, kBondFeatureDim> bond_features(const Bond& bond) {
  std::array<T, kBondFeatureDim> f{};
  f[bond_slot::kOrder + static_cast<std::size_t>(bond.order)] = T(1);
  f[bond_slot::kConjugated] = bond.is_conjugated ? T(1) : T(0);
  f[bond_slot::kInRing] = bond.is_in_ring ? T(1) : T(0);
  f[bond_slot::kStereo + static_cast<std::size_t>(bond.stereo)] = T(1);
  return f;
}

}  // namespace vidta::chem
