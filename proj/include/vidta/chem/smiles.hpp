// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file SMILES front end: a practical subset covering drug-like molecules.
//!       Organic-subset and bracket atoms, bonds - = # : / \, branches,
//!       ring closures 1-9 and %nn, and '.'-separated fragments.
//!       Implicit hydrogens are not materialized as atoms.

#pragma once

#include <algorithm>
#include <array>
#include <cctype>
#include <cstddef>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "vidta/error.hpp"

namespace vidta::chem {

enum class Chirality { kNone, kClockwise, kCounterclockwise, kOther };
enum class Hybridization { kSP, kSP2, kSP3, kOther };
enum class BondOrder { kSingle, kDouble, kTriple, kAromatic };
enum class BondStereo { kNone, kUp, kDown, kOther };

struct Atom {
  std::string element;
  int formal_charge = 0;
  bool is_aromatic = false;
  Chirality chirality = Chirality::kNone;
  int explicit_h_count = 0;
  int degree = 0;  // heavy-atom neighbors
  Hybridization hybridization = Hybridization::kSP3;
  int isotope = 0;
  bool bracket = false;

  friend bool operator==(const Atom&, const Atom&) = default;
};

struct Bond {
  std::size_t begin = 0;
  std::size_t end = 0;
  BondOrder order = BondOrder::kSingle;
  bool is_conjugated = false;
  bool is_in_ring = false;
  BondStereo stereo = BondStereo::kNone;

  friend bool operator==(const Bond&, const Bond&) = default;
};

struct Molecule {
  std::vector<Atom> atoms;
  std::vector<Bond> bonds;
  std::string source_smiles;

  friend bool operator==(const Molecule&, const Molecule&) = default;
};

enum class SmilesErrorKind { kEmptyInput, kUnbalancedParenthesis, kUnmatchedRingClosure, kUnsupportedElement, kInvalidSyntax };

inline const char* to_string(SmilesErrorKind kind) {
  switch (kind) {
    case SmilesErrorKind::kEmptyInput: return "EmptyInput";
    case SmilesErrorKind::kUnbalancedParenthesis: return "UnbalancedParenthesis";
    case SmilesErrorKind::kUnmatchedRingClosure: return "UnmatchedRingClosure";
    case SmilesErrorKind::kUnsupportedElement: return "UnsupportedElement";
    case SmilesErrorKind::kInvalidSyntax: return "InvalidSyntax";
  }
  return "?";
}

//! Parse failure; `offset` is the byte position in the source text.
class SmilesError : public Error {
 public:
  SmilesError(SmilesErrorKind kind, std::size_t offset, const std::string& detail)
      : Error(std::string(to_string(kind)) + " at offset " + std::to_string(offset) + ": " + detail),
        kind_(kind),
        offset_(offset) {}

  SmilesErrorKind kind() const noexcept { return kind_; }
  std::size_t offset() const noexcept { return offset_; }

 private:
  SmilesErrorKind kind_;
  std::size_t offset_;
};

inline constexpr std::array<std::string_view, 118> kPeriodicTable = {
    "H",  "He", "Li", "Be", "B",  "C",  "N",  "O",  "F",  "Ne", "Na", "Mg", "Al", "Si", "P",  "S",  "Cl", "Ar",
    "K",  "Ca", "Sc", "Ti", "V",  "Cr", "Mn", "Fe", "Co", "Ni", "Cu", "Zn", "Ga", "Ge", "As", "Se", "Br", "Kr",
    "Rb", "Sr", "Y",  "Zr", "Nb", "Mo", "Tc", "Ru", "Rh", "Pd", "Ag", "Cd", "In", "Sn", "Sb", "Te", "I",  "Xe",
    "Cs", "Ba", "La", "Ce", "Pr", "Nd", "Pm", "Sm", "Eu", "Gd", "Tb", "Dy", "Ho", "Er", "Tm", "Yb", "Lu", "Hf",
    "Ta", "W",  "Re", "Os", "Ir", "Pt", "Au", "Hg", "Tl", "Pb", "Bi", "Po", "At", "Rn", "Fr", "Ra", "Ac", "Th",
    "Pa", "U",  "Np", "Pu", "Am", "Cm", "Bk", "Cf", "Es", "Fm", "Md", "No", "Lr", "Rf", "Db", "Sg", "Bh", "Hs",
    "Mt", "Ds", "Rg", "Cn", "Nh", "Fl", "Mc", "Lv", "Ts", "Og"};

inline bool is_element(std::string_view symbol) {
  return std::find(kPeriodicTable.begin(), kPeriodicTable.end(), symbol) != kPeriodicTable.end();
}

inline bool is_organic_subset(std::string_view symbol) {
  static constexpr std::array<std::string_view, 10> kOrganic = {"B", "C", "N", "O", "P", "S", "F", "Cl", "Br", "I"};
  return std::find(kOrganic.begin(), kOrganic.end(), symbol) != kOrganic.end();
}

namespace detail {

class SmilesParser {
 public:
  explicit SmilesParser(std::string_view text) : text_(text) {}

  Molecule run() {
    mol_.source_smiles = std::string(text_);
    // Text after the first whitespace is a title, not structure.
    const std::size_t stop = std::min(text_.find_first_of(" \t\r\n"), text_.size());
    if (stop == 0) throw SmilesError(SmilesErrorKind::kEmptyInput, 0, "no atoms");
    while (pos_ < stop) step();
    if (pending_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pending_->offset, "bond symbol without a following atom");
    if (!branches_.empty()) {
      throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, branches_.back().offset, "'(' is never closed");
    }
    if (!rings_.empty()) {
      const auto& open = *std::min_element(rings_.begin(), rings_.end(), [](const auto& a, const auto& b) {
        return a.second.offset < b.second.offset;
      });
      throw SmilesError(SmilesErrorKind::kUnmatchedRingClosure, open.second.offset,
                        "ring bond " + std::to_string(open.first) + " is never closed");
    }
    if (mol_.atoms.empty()) throw SmilesError(SmilesErrorKind::kEmptyInput, 0, "no atoms");
    return std::move(mol_);
  }

  //! Marks which bonds were inferred aromatic from two lowercase atoms.
  std::vector<bool> take_implicit_aromatic() { return std::move(implicit_aromatic_); }

 private:
  struct PendingBond {
    char symbol;
    std::size_t offset;
  };
  struct OpenRing {
    std::size_t atom;
    std::optional<char> symbol;
    std::size_t offset;
  };
  struct OpenBranch {
    std::optional<std::size_t> atom;
    std::size_t offset;
  };

  void step() {
    const char c = text_[pos_];
    switch (c) {
      case '(':
        if (!prev_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, "branch without a preceding atom");
        if (pending_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pending_->offset, "bond symbol before '('");
        branches_.push_back({prev_, pos_});
        ++pos_;
        return;
      case ')':
        if (branches_.empty()) throw SmilesError(SmilesErrorKind::kUnbalancedParenthesis, pos_, "')' without '('");
        if (pending_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pending_->offset, "bond symbol before ')'");
        prev_ = branches_.back().atom;
        branches_.pop_back();
        ++pos_;
        return;
      case '-':
      case '=':
      case '#':
      case ':':
      case '/':
      case '\\':
        if (pending_ || !prev_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, "misplaced bond symbol");
        pending_ = PendingBond{c, pos_};
        ++pos_;
        return;
      case '.':
        if (pending_ || !prev_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, "misplaced '.'");
        prev_.reset();
        ++pos_;
        return;
      case '%': {
        const std::size_t start = pos_;
        if (pos_ + 2 >= text_.size() || !std::isdigit(static_cast<unsigned char>(text_[pos_ + 1])) ||
            !std::isdigit(static_cast<unsigned char>(text_[pos_ + 2]))) {
          throw SmilesError(SmilesErrorKind::kInvalidSyntax, start, "'%' must be followed by two digits");
        }
        const int number = (text_[pos_ + 1] - '0') * 10 + (text_[pos_ + 2] - '0');
        pos_ += 3;
        ring_closure(number, start);
        return;
      }
      case '[':
        bracket_atom();
        return;
      default:
        break;
    }
    if (std::isdigit(static_cast<unsigned char>(c))) {
      ring_closure(c - '0', pos_);
      ++pos_;
      return;
    }
    if (std::isalpha(static_cast<unsigned char>(c))) {
      organic_atom();
      return;
    }
    throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, std::string("unexpected character '") + c + "'");
  }

  void organic_atom() {
    const std::size_t start = pos_;
    Atom atom;
    auto two = text_.substr(pos_, 2);
    if (two == "Cl" || two == "Br") {
      atom.element = std::string(two);
      pos_ += 2;
    } else {
      const char c = text_[pos_];
      switch (c) {
        case 'B': case 'C': case 'N': case 'O': case 'P': case 'S': case 'F': case 'I':
          atom.element = std::string(1, c);
          break;
        case 'b': case 'c': case 'n': case 'o': case 'p': case 's':
          atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(c))));
          atom.is_aromatic = true;
          break;
        default:
          throw SmilesError(SmilesErrorKind::kUnsupportedElement, start,
                            std::string("'") + c + "' is not an organic-subset atom (use brackets)");
      }
      ++pos_;
    }
    add_atom(std::move(atom));
  }

  void bracket_atom() {
    const std::size_t open = pos_;
    const std::size_t close = text_.find(']', pos_);
    if (close == std::string_view::npos) throw SmilesError(SmilesErrorKind::kInvalidSyntax, open, "'[' is never closed");
    ++pos_;
    Atom atom;
    atom.bracket = true;
    auto peek = [&]() -> char { return pos_ < close ? text_[pos_] : '\0'; };
    auto digits = [&]() {
      int value = 0;
      bool any = false;
      while (std::isdigit(static_cast<unsigned char>(peek()))) {
        value = value * 10 + (text_[pos_] - '0');
        ++pos_;
        any = true;
      }
      return any ? std::optional<int>(value) : std::nullopt;
    };

    if (auto iso = digits()) atom.isotope = *iso;

    const std::size_t sym_at = pos_;
    const char first = peek();
    if (std::islower(static_cast<unsigned char>(first))) {
      // Aromatic bracket symbols: b c n o p s se as te.
      auto two = text_.substr(pos_, 2);
      if (two == "se" || two == "as" || two == "te") {
        atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(two[0])))) + two[1];
        pos_ += 2;
      } else if (std::string_view("bcnops").find(first) != std::string_view::npos) {
        atom.element = std::string(1, static_cast<char>(std::toupper(static_cast<unsigned char>(first))));
        ++pos_;
      } else {
        throw SmilesError(SmilesErrorKind::kUnsupportedElement, sym_at, "unknown aromatic symbol");
      }
      atom.is_aromatic = true;
    } else if (std::isupper(static_cast<unsigned char>(first))) {
      std::string one(1, first);
      std::string two = one;
      if (pos_ + 1 < close && std::islower(static_cast<unsigned char>(text_[pos_ + 1]))) two += text_[pos_ + 1];
      if (two.size() == 2 && is_element(two)) {
        atom.element = two;
        pos_ += 2;
      } else if (is_element(one)) {
        atom.element = one;
        ++pos_;
      } else {
        throw SmilesError(SmilesErrorKind::kUnsupportedElement, sym_at, "unknown element '" + two + "'");
      }
    } else {
      throw SmilesError(SmilesErrorKind::kUnsupportedElement, sym_at, "bracket atom without element symbol");
    }

    if (peek() == '@') {
      ++pos_;
      if (peek() == '@') {
        ++pos_;
        atom.chirality = Chirality::kClockwise;
      } else if (std::isupper(static_cast<unsigned char>(peek())) && peek() != 'H') {
        // @TH1, @AL2, @SP3, @TB12, @OH20 ...
        while (std::isupper(static_cast<unsigned char>(peek()))) ++pos_;
        digits();
        atom.chirality = Chirality::kOther;
      } else {
        atom.chirality = Chirality::kCounterclockwise;
      }
    }

    if (peek() == 'H') {
      ++pos_;
      atom.explicit_h_count = digits().value_or(1);
    }

    if (peek() == '+' || peek() == '-') {
      const char sign = peek();
      const int unit = sign == '+' ? 1 : -1;
      ++pos_;
      if (auto mag = digits()) {
        atom.formal_charge = unit * *mag;
      } else {
        int count = 1;
        while (peek() == sign) {
          ++count;
          ++pos_;
        }
        atom.formal_charge = unit * count;
      }
    }

    if (peek() == ':') {
      ++pos_;
      if (!digits()) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, "atom class needs digits");
    }

    if (pos_ != close) throw SmilesError(SmilesErrorKind::kInvalidSyntax, pos_, "unexpected text inside bracket atom");
    pos_ = close + 1;
    add_atom(std::move(atom));
  }

  void add_atom(Atom atom) {
    mol_.atoms.push_back(std::move(atom));
    const std::size_t idx = mol_.atoms.size() - 1;
    if (prev_) {
      const auto symbol = pending_ ? std::optional<char>(pending_->symbol) : std::nullopt;
      add_bond(*prev_, idx, symbol, pending_ ? pending_->offset : pos_);
    } else if (pending_) {
      throw SmilesError(SmilesErrorKind::kInvalidSyntax, pending_->offset, "bond symbol without a preceding atom");
    }
    pending_.reset();
    prev_ = idx;
  }

  void ring_closure(int number, std::size_t offset) {
    if (!prev_) throw SmilesError(SmilesErrorKind::kInvalidSyntax, offset, "ring bond without a preceding atom");
    const auto symbol = pending_ ? std::optional<char>(pending_->symbol) : std::nullopt;
    pending_.reset();
    auto it = rings_.find(number);
    if (it == rings_.end()) {
      rings_.emplace(number, OpenRing{*prev_, symbol, offset});
      return;
    }
    const OpenRing open = it->second;
    rings_.erase(it);
    if (symbol && open.symbol && *symbol != *open.symbol && !is_direction(*symbol) && !is_direction(*open.symbol)) {
      throw SmilesError(SmilesErrorKind::kInvalidSyntax, offset, "conflicting ring bond symbols");
    }
    add_bond(open.atom, *prev_, symbol ? symbol : open.symbol, offset);
  }

  static bool is_direction(char c) { return c == '/' || c == '\\'; }

  void add_bond(std::size_t a, std::size_t b, std::optional<char> symbol, std::size_t offset) {
    if (a == b) throw SmilesError(SmilesErrorKind::kInvalidSyntax, offset, "atom bonded to itself");
    for (const auto& bond : mol_.bonds) {
      if ((bond.begin == a && bond.end == b) || (bond.begin == b && bond.end == a)) {
        throw SmilesError(SmilesErrorKind::kInvalidSyntax, offset, "duplicate bond between the same atoms");
      }
    }
    Bond bond;
    bond.begin = a;
    bond.end = b;
    bool implicit_aromatic = false;
    if (!symbol) {
      if (mol_.atoms[a].is_aromatic && mol_.atoms[b].is_aromatic) {
        bond.order = BondOrder::kAromatic;
        implicit_aromatic = true;
      }
    } else {
      switch (*symbol) {
        case '=': bond.order = BondOrder::kDouble; break;
        case '#': bond.order = BondOrder::kTriple; break;
        case ':': bond.order = BondOrder::kAromatic; break;
        case '/': bond.stereo = BondStereo::kUp; break;
        case '\\': bond.stereo = BondStereo::kDown; break;
        default: break;
      }
    }
    mol_.bonds.push_back(bond);
    implicit_aromatic_.push_back(implicit_aromatic);
  }

  std::string_view text_;
  std::size_t pos_ = 0;
  Molecule mol_;
  std::optional<std::size_t> prev_;
  std::optional<PendingBond> pending_;
  std::vector<OpenBranch> branches_;
  std::map<int, OpenRing> rings_;
  std::vector<bool> implicit_aromatic_;
};

//! Flags bonds that lie on a cycle, i.e. every bond that is not a bridge.
inline std::vector<bool> ring_bonds(std::size_t atom_count, const std::vector<Bond>& bonds) {
  std::vector<std::vector<std::pair<std::size_t, std::size_t>>> adj(atom_count);  // (neighbor, bond)
  for (std::size_t b = 0; b < bonds.size(); ++b) {
    adj[bonds[b].begin].push_back({bonds[b].end, b});
    adj[bonds[b].end].push_back({bonds[b].begin, b});
  }
  std::vector<int> order(atom_count, -1), low(atom_count, 0);
  std::vector<bool> in_ring(bonds.size(), true);
  int counter = 0;
  std::function<void(std::size_t, std::size_t)> visit = [&](std::size_t v, std::size_t parent_bond) {
    order[v] = low[v] = counter++;
    for (auto [w, b] : adj[v]) {
      if (b == parent_bond) continue;
      if (order[w] < 0) {
        visit(w, b);
        low[v] = std::min(low[v], low[w]);
        if (low[w] > order[v]) in_ring[b] = false;
      } else {
        low[v] = std::min(low[v], order[w]);
      }
    }
  };
  for (std::size_t v = 0; v < atom_count; ++v)
    if (order[v] < 0) visit(v, bonds.size());
  return in_ring;
}

inline bool is_multiple(BondOrder order) { return order != BondOrder::kSingle; }

inline void perceive(Molecule& mol, const std::vector<bool>& implicit_aromatic) {
  const std::size_t n = mol.atoms.size();
  const auto in_ring = ring_bonds(n, mol.bonds);
  std::vector<std::vector<std::size_t>> incident(n);
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    auto& bond = mol.bonds[b];
    bond.is_in_ring = in_ring[b];
    // Two aromatic atoms joined outside any ring (biaryl) get a plain single bond.
    if (implicit_aromatic[b] && !bond.is_in_ring) bond.order = BondOrder::kSingle;
    incident[bond.begin].push_back(b);
    incident[bond.end].push_back(b);
  }

  for (std::size_t a = 0; a < n; ++a) mol.atoms[a].degree = static_cast<int>(incident[a].size());

  auto has_other_multiple = [&](std::size_t atom, std::size_t self) {
    return std::any_of(incident[atom].begin(), incident[atom].end(),
                       [&](std::size_t b) { return b != self && is_multiple(mol.bonds[b].order); });
  };
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    auto& bond = mol.bonds[b];
    if (bond.order == BondOrder::kAromatic) {
      bond.is_conjugated = true;
    } else if (bond.order == BondOrder::kSingle) {
      bond.is_conjugated = has_other_multiple(bond.begin, b) && has_other_multiple(bond.end, b);
    }
  }
  for (std::size_t b = 0; b < mol.bonds.size(); ++b) {
    auto& bond = mol.bonds[b];
    if (bond.order != BondOrder::kDouble && bond.order != BondOrder::kTriple) continue;
    auto touches_conjugated = [&](std::size_t atom) {
      return std::any_of(incident[atom].begin(), incident[atom].end(), [&](std::size_t o) {
        return o != b && mol.bonds[o].is_conjugated && mol.bonds[o].order != BondOrder::kDouble &&
               mol.bonds[o].order != BondOrder::kTriple;
      });
    };
    bond.is_conjugated = touches_conjugated(bond.begin) || touches_conjugated(bond.end);
  }

  for (std::size_t a = 0; a < n; ++a) {
    auto& atom = mol.atoms[a];
    int doubles = 0, triples = 0;
    for (std::size_t b : incident[a]) {
      doubles += mol.bonds[b].order == BondOrder::kDouble;
      triples += mol.bonds[b].order == BondOrder::kTriple;
    }
    if (triples > 0 || doubles >= 2) {
      atom.hybridization = Hybridization::kSP;
    } else if (doubles == 1 || atom.is_aromatic) {
      atom.hybridization = Hybridization::kSP2;
    } else if (atom.bracket && atom.degree == 0 && (atom.formal_charge != 0 || !is_organic_subset(atom.element))) {
      atom.hybridization = Hybridization::kOther;
    } else {
      atom.hybridization = Hybridization::kSP3;
    }
  }
}

}  // namespace detail

//! Parses `smiles` into a heavy-atom Molecule with perceived ring membership,
//! conjugation and hybridization. Throws SmilesError naming the byte offset.
inline Molecule parse_smiles(std::string_view smiles) {
  if (smiles.empty()) throw SmilesError(SmilesErrorKind::kEmptyInput, 0, "empty SMILES");
  detail::SmilesParser parser(smiles);
  Molecule mol = parser.run();
  detail::perceive(mol, parser.take_implicit_aromatic());
  return mol;
}

}  // namespace vidta::chem
