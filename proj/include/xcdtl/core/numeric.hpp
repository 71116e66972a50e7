#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numeric>
#include <span>
#include <vector>

#include "xcdtl/core/error.hpp"

namespace xcdtl {

inline constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

/// Neumaier-compensated sum in index order.
inline double stable_sum(std::span<const double> xs) noexcept {
  double sum = 0.0;
  double comp = 0.0;
  for (double x : xs) {
    const double t = sum + x;
    if (std::abs(sum) >= std::abs(x))
      comp += (sum - t) + x;
    else
      comp += (x - t) + sum;
    sum = t;
  }
  return sum + comp;
}

inline double mean(std::span<const double> xs) {
  if (xs.empty()) throw DataError("mean of empty sequence");
  return stable_sum(xs) / static_cast<double>(xs.size());
}

/// Population variance (divisor n).
inline double variance(std::span<const double> xs) {
  const double mu = mean(xs);
  std::vector<double> sq(xs.size());
  for (std::size_t i = 0; i < xs.size(); ++i) sq[i] = (xs[i] - mu) * (xs[i] - mu);
  return stable_sum(sq) / static_cast<double>(xs.size());
}

inline double population_std(std::span<const double> xs) { return std::sqrt(variance(xs)); }

/// Sample variance (divisor n - 1).
inline double sample_variance(std::span<const double> xs) {
  if (xs.size() < 2) throw DataError("sample variance needs at least two values");
  return variance(xs) * static_cast<double>(xs.size()) / static_cast<double>(xs.size() - 1);
}

/// Linear-interpolation quantile (Hyndman-Fan type 7), q in [0, 1].
inline double quantile(std::span<const double> xs, double q) {
  if (xs.empty()) throw DataError("quantile of empty sequence");
  std::vector<double> s(xs.begin(), xs.end());
  std::sort(s.begin(), s.end());
  const double h = q * static_cast<double>(s.size() - 1);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline double median(std::span<const double> xs) { return quantile(xs, 0.5); }

/// 1-based ranks with ties assigned their average rank.
inline std::vector<double> average_ranks(std::span<const double> xs) {
  const std::size_t n = xs.size();
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return xs[a] < xs[b]; });
  std::vector<double> ranks(n);
  std::size_t i = 0;
  while (i < n) {
    std::size_t j = i;
    while (j + 1 < n && xs[order[j + 1]] == xs[order[i]]) ++j;
    const double r = 0.5 * static_cast<double>(i + j) + 1.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

/// Pearson correlation; 0 when either input is constant.
inline double pearson(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("pearson: length mismatch");
  if (x.empty()) return 0.0;
  const auto [xmin, xmax] = std::minmax_element(x.begin(), x.end());
  const auto [ymin, ymax] = std::minmax_element(y.begin(), y.end());
  if (*xmin == *xmax || *ymin == *ymax) return 0.0;
  const double mx = mean(x);
  const double my = mean(y);
  std::vector<double> sxy(x.size()), sxx(x.size()), syy(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy[i] = (x[i] - mx) * (y[i] - my);
    sxx[i] = (x[i] - mx) * (x[i] - mx);
    syy[i] = (y[i] - my) * (y[i] - my);
  }
  const double vx = stable_sum(sxx);
  const double vy = stable_sum(syy);
  if (vx <= 0.0 || vy <= 0.0) return 0.0;
  const double r = stable_sum(sxy) / std::sqrt(vx * vy);
  return std::clamp(r, -1.0, 1.0);
}

/// Spearman correlation (Pearson on average ranks); 0 when either input is constant.
inline double spearman(std::span<const double> x, std::span<const double> y) {
  const auto rx = average_ranks(x);
  const auto ry = average_ranks(y);
  return pearson(rx, ry);
}

}  // namespace xcdtl
