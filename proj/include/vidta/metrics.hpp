// SPDX-FileCopyrightText: Copyright (c) 2026 The vidta-cpp Authors.
// SPDX-License-Identifier: Apache-2.0

//! @file Regression metrics for affinity prediction: concordance index,
//!       Pearson correlation, r_m^2 and mean squared error.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "vidta/error.hpp"

namespace vidta::metrics {

namespace detail {

inline void require_pairs(std::span<const double> pred, std::span<const double> truth, std::size_t min_n) {
  if (pred.size() != truth.size()) {
    throw ShapeMismatch("metric inputs differ in length: " + std::to_string(pred.size()) + " vs " +
                        std::to_string(truth.size()));
  }
  if (pred.size() < min_n) throw DegenerateInput("metric needs at least " + std::to_string(min_n) + " samples");
}

inline double mean(std::span<const double> x) { return std::accumulate(x.begin(), x.end(), 0.0) / double(x.size()); }

}  // namespace detail

//! Over all pairs with truth_i > truth_j: 1 if pred_i > pred_j, 0.5 if tied,
//! 0 otherwise, divided by the number of such pairs. Sort-based, O(n log n).
inline double concordance_index(std::span<const double> pred, std::span<const double> truth) {
  detail::require_pairs(pred, truth, 2);
  const std::size_t n = pred.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  // Ascending truth; pred breaks nothing since equal-truth pairs are skipped.
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return truth[a] < truth[b]; });

  // Rank-compress predictions for a Fenwick tree over "pred values seen so far".
  std::vector<double> levels(pred.begin(), pred.end());
  std::sort(levels.begin(), levels.end());
  levels.erase(std::unique(levels.begin(), levels.end()), levels.end());
  std::vector<std::size_t> tree(levels.size() + 1, 0);
  auto rank_of = [&](double v) { return static_cast<std::size_t>(std::lower_bound(levels.begin(), levels.end(), v) - levels.begin()); };
  auto add = [&](std::size_t r) {
    for (++r; r < tree.size(); r += r & (~r + 1)) ++tree[r];
  };
  auto count_below = [&](std::size_t r) {  // entries with rank < r
    std::size_t c = 0;
    for (; r > 0; r -= r & (~r + 1)) c += tree[r];
    return c;
  };

  double credit = 0;
  double pairs = 0;
  std::size_t seen = 0;
  for (std::size_t start = 0; start < n;) {
    std::size_t stop = start;
    while (stop < n && truth[order[stop]] == truth[order[start]]) ++stop;
    // Every earlier element has strictly smaller truth.
    for (std::size_t k = start; k < stop; ++k) {
      const std::size_t r = rank_of(pred[order[k]]);
      const std::size_t below = count_below(r);
      const std::size_t tied = count_below(r + 1) - below;
      credit += double(below) + 0.5 * double(tied);
      pairs += double(seen);
    }
    for (std::size_t k = start; k < stop; ++k) add(rank_of(pred[order[k]]));
    seen += stop - start;
    start = stop;
  }
  if (pairs == 0) throw NoComparablePairs("concordance index undefined: all targets are equal");
  return credit / pairs;
}

inline double mse(std::span<const double> pred, std::span<const double> truth) {
  detail::require_pairs(pred, truth, 1);
  double total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) total += (pred[i] - truth[i]) * (pred[i] - truth[i]);
  return total / double(pred.size());
}

inline double pearson(std::span<const double> pred, std::span<const double> truth) {
  detail::require_pairs(pred, truth, 2);
  const double mp = detail::mean(pred), mt = detail::mean(truth);
  double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sxy += (pred[i] - mp) * (truth[i] - mt);
    sxx += (pred[i] - mp) * (pred[i] - mp);
    syy += (truth[i] - mt) * (truth[i] - mt);
  }
  if (sxx == 0 || syy == 0) throw DegenerateInput("correlation undefined for constant input");
  return sxy / std::sqrt(sxx * syy);
}

//! r_m^2 = r^2 (1 - sqrt|r^2 - r0^2|). r^2 is the squared correlation of the
//! fit with intercept; r0^2 the coefficient of determination of the fit of
//! predictions on truth through the origin.
inline double r_m_squared(std::span<const double> pred, std::span<const double> truth) {
  const double r = pearson(pred, truth);
  const double r2 = r * r;
  double sty = 0, stt = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    sty += truth[i] * pred[i];
    stt += truth[i] * truth[i];
  }
  const double k = sty / stt;
  const double mp = detail::mean(pred);
  double resid = 0, total = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    resid += (pred[i] - k * truth[i]) * (pred[i] - k * truth[i]);
    total += (pred[i] - mp) * (pred[i] - mp);
  }
  const double r02 = 1.0 - resid / total;
  return r2 * (1.0 - std::sqrt(std::abs(r2 - r02)));
}

struct MetricsReport {
  double ci = 0;
  double rm2 = 0;
  double pcc = 0;
  double mse = 0;
  std::size_t n = 0;

  //! Flat "key=value" lines.
  std::string to_text() const {
    std::ostringstream out;
    out.precision(10);
    out << "n=" << n << "\nci=" << ci << "\nrm2=" << rm2 << "\npcc=" << pcc << "\nmse=" << mse << "\n";
    return out.str();
  }

  static std::string csv_header() { return "n,ci,rm2,pcc,mse"; }

  std::string to_csv_row() const {
    std::ostringstream out;
    out.precision(10);
    out << n << "," << ci << "," << rm2 << "," << pcc << "," << mse;
    return out.str();
  }
};

inline MetricsReport evaluate(std::span<const double> pred, std::span<const double> truth) {
  MetricsReport report;
  report.n = pred.size();
  report.mse = mse(pred, truth);
  report.ci = concordance_index(pred, truth);
  report.pcc = pearson(pred, truth);
  report.rm2 = r_m_squared(pred, truth);
  return report;
}

}  // namespace vidta::metrics
