// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace vidta {

//! Base class for every error raised by the library.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

//! Two tensors (or a tensor and a layout) disagree on shape.
class ShapeMismatch : public Error {
 public:
  using Error::Error;
};

//! Input feature widths disagree with the configured model dimensions.
class DimensionMismatch : public Error {
 public:
  using Error::Error;
};

//! Backward pass requested on a tensor that is not a single value.
class NotScalarLoss : public Error {
 public:
  using Error::Error;
};

//! The Jacobi eigensolver did not converge within its sweep budget.
class ConvergenceFailure : public Error {
 public:
  using Error::Error;
};

class EmptyMolecule : public Error {
 public:
  using Error::Error;
};

class MissingVirtualNode : public Error {
 public:
  using Error::Error;
};

//! Correlation-type metric evaluated on constant input.
class DegenerateInput : public Error {
 public:
  using Error::Error;
};

//! Concordance index evaluated on targets without any ordered pair.
class NoComparablePairs : public Error {
 public:
  using Error::Error;
};

class NonPositiveKd : public Error {
 public:
  using Error::Error;
};

class FileUnreadable : public Error {
 public:
  using Error::Error;
};

class HeaderMismatch : public Error {
 public:
  using Error::Error;
};

class TooFewRecords : public Error {
 public:
  using Error::Error;
};

//! Checkpoint written with an incompatible format or featurization layout.
class VersionMismatch : public Error {
 public:
  using Error::Error;
};

class UnknownResidue : public Error {
 public:
  UnknownResidue(char residue, std::size_t position)
      : Error("unknown residue '" + std::string(1, residue) + "' at position " + std::to_string(position)),
        residue_(residue),
        position_(position) {}

  char residue() const noexcept { return residue_; }
  std::size_t position() const noexcept { return position_; }

 private:
  char residue_;
  std::size_t position_;
};

class EmptySequence : public Error {
 public:
  EmptySequence() : Error("empty protein sequence") {}
};

}  // namespace vidta
