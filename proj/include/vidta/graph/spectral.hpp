// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Symmetric normalized Laplacian, dense Jacobi eigensolver and the
//!       Laplacian positional encodings derived from it.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "vidta/error.hpp"
#include "vidta/graph/molecular_graph.hpp"
#include "vidta/tensor/random.hpp"
#include "vidta/tensor/tensor.hpp"

namespace vidta::graph {

//! L = I - D^{-1/2} A D^{-1/2} over the unweighted adjacency of the edge list.
//! Degree-0 nodes get a zero D^{-1/2} entry, so their row is an identity row.
inline Tensor<double> normalized_laplacian(const MolecularGraph& g) {
  const std::size_t n = g.n_nodes();
  if (n == 0) throw EmptyMolecule("Laplacian of an empty graph");
  Tensor<double> adj(Shape{n, n});
  for (auto [s, t] : g.edge_list) {
    if (s == t) continue;
    adj(s, t) = 1.0;
    adj(t, s) = 1.0;
  }
  std::vector<double> inv_sqrt_deg(n, 0.0);
  for (std::size_t i = 0; i < n; ++i) {
    double deg = 0;
    for (std::size_t j = 0; j < n; ++j) deg += adj(i, j);
    inv_sqrt_deg[i] = deg > 0 ? 1.0 / std::sqrt(deg) : 0.0;
  }
  Tensor<double> lap(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      // The product is commutative, so L(i,j) and L(j,i) are bit-identical.
      lap(i, j) = (i == j ? 1.0 : 0.0) - adj(i, j) * (inv_sqrt_deg[i] * inv_sqrt_deg[j]);
    }
  return lap;
}

struct SpectralBasis {
  std::vector<double> eigenvalues;  // ascending
  Tensor<double> eigenvectors;      // [n x n], column c pairs with eigenvalues[c]
};

//! Flips `column` of `vectors` so its largest-magnitude entry is positive;
//! entries within 1e-9 of the maximum count as ties, resolved to the lowest row.
inline void canonicalize_sign(Tensor<double>& vectors, std::size_t column) {
  const std::size_t n = vectors.dim(0);
  double best = 0;
  for (std::size_t r = 0; r < n; ++r) best = std::max(best, std::abs(vectors(r, column)));
  for (std::size_t r = 0; r < n; ++r) {
    if (std::abs(vectors(r, column)) >= best - 1e-9) {
      if (vectors(r, column) < 0)
        for (std::size_t k = 0; k < n; ++k) vectors(k, column) = -vectors(k, column);
      return;
    }
  }
}

//! Cyclic Jacobi rotations on a dense symmetric matrix. Deterministic: fixed
//! sweep order, stable ascending sort, canonical eigenvector signs.
inline SpectralBasis eigendecompose(const Tensor<double>& matrix, double threshold = 1e-12, int max_sweeps = 100) {
  if (matrix.rank() != 2 || matrix.dim(0) != matrix.dim(1)) {
    throw ShapeMismatch("eigendecompose needs a square matrix, got " + shape_str(matrix.shape()));
  }
  const std::size_t n = matrix.dim(0);
  Tensor<double> a = matrix;
  Tensor<double> v(Shape{n, n});
  for (std::size_t i = 0; i < n; ++i) v(i, i) = 1.0;

  auto off_norm = [&] {
    double s = 0;
    for (std::size_t p = 0; p < n; ++p)
      for (std::size_t q = p + 1; q < n; ++q) s += a(p, q) * a(p, q);
    return std::sqrt(2.0 * s);
  };

  int sweep = 0;
  for (; off_norm() > threshold; ++sweep) {
    if (sweep >= max_sweeps) {
      throw ConvergenceFailure("Jacobi eigensolver did not converge in " + std::to_string(max_sweeps) + " sweeps");
    }
    for (std::size_t p = 0; p + 1 < n; ++p) {
      for (std::size_t q = p + 1; q < n; ++q) {
        const double apq = a(p, q);
        if (apq == 0.0) continue;
        const double theta = (a(q, q) - a(p, p)) / (2.0 * apq);
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (std::size_t k = 0; k < n; ++k) {
          const double akp = a(k, p), akq = a(k, q);
          a(k, p) = c * akp - s * akq;
          a(k, q) = s * akp + c * akq;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double apk = a(p, k), aqk = a(q, k);
          a(p, k) = c * apk - s * aqk;
          a(q, k) = s * apk + c * aqk;
        }
        for (std::size_t k = 0; k < n; ++k) {
          const double vkp = v(k, p), vkq = v(k, q);
          v(k, p) = c * vkp - s * vkq;
          v(k, q) = s * vkp + c * vkq;
        }
      }
    }
  }

  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t x, std::size_t y) { return a(x, x) < a(y, y); });

  SpectralBasis basis;
  basis.eigenvalues.resize(n);
  basis.eigenvectors = Tensor<double>(Shape{n, n});
  for (std::size_t c = 0; c < n; ++c) {
    basis.eigenvalues[c] = a(order[c], order[c]);
    for (std::size_t r = 0; r < n; ++r) basis.eigenvectors(r, c) = v(r, order[c]);
    canonicalize_sign(basis.eigenvectors, c);
  }
  return basis;
}

//! Flips each column's sign with probability 1/2.
inline void random_sign_flip(Tensor<double>& pe, Rng& rng) {
  const std::size_t rows = pe.dim(0), cols = pe.dim(1);
  for (std::size_t c = 0; c < cols; ++c) {
    if (uniform01(rng) < 0.5) {
      for (std::size_t r = 0; r < rows; ++r) pe(r, c) = -pe(r, c);
    }
  }
}

//! Eigenvectors 2..k_pe+1 (the smallest-eigenvalue vector is skipped), zero
//! padded when the graph is too small. Eval mode keeps the canonical signs;
//! train mode flips every column independently with probability 1/2.
inline Tensor<double> positional_encoding(const SpectralBasis& basis, std::size_t k_pe, bool train_mode,
                                          Rng* rng = nullptr) {
  if (k_pe == 0) throw DimensionMismatch("positional encoding needs k_pe >= 1");
  const std::size_t n = basis.eigenvalues.size();
  Tensor<double> pe(Shape{n, k_pe});
  for (std::size_t c = 0; c < k_pe && c + 1 < n; ++c)
    for (std::size_t r = 0; r < n; ++r) pe(r, c) = basis.eigenvectors(r, c + 1);
  if (train_mode) {
    if (rng == nullptr) throw Error("train-mode positional encoding needs a random generator");
    random_sign_flip(pe, *rng);
  }
  return pe;
}

//! Computes and stores the eval-mode encoding on the graph.
inline void attach_positional_encoding(MolecularGraph& g, std::size_t k_pe) {
  g.positional_encoding = positional_encoding(eigendecompose(normalized_laplacian(g)), k_pe, false);
}

}  // namespace vidta::graph
