#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "xcdtl/core/error.hpp"
#include "xcdtl/core/matrix.hpp"
#include "xcdtl/core/numeric.hpp"
#include "xcdtl/core/rng.hpp"

namespace xcdtl::stats {

using Groups = std::vector<std::vector<double>>;

namespace detail {

inline constexpr double kEps = 1e-15;
inline constexpr double kTiny = 1e-300;
inline constexpr int kMaxIter = 100000;

inline double gamma_series(double a, double x) {
  double ap = a, sum = 1.0 / a, del = sum;
  for (int n = 0; n < kMaxIter; ++n) {
    ap += 1.0;
    del *= x / ap;
    sum += del;
    if (std::abs(del) < std::abs(sum) * kEps) return sum * std::exp(-x + a * std::log(x) - std::lgamma(a));
  }
  throw NumericalError("incomplete gamma series did not converge");
}

inline double gamma_fraction(double a, double x) {
  double b = x + 1.0 - a, c = 1.0 / kTiny, d = 1.0 / b, h = d;
  for (int i = 1; i < kMaxIter; ++i) {
    const double an = -i * (i - a);
    b += 2.0;
    d = an * d + b;
    if (std::abs(d) < kTiny) d = kTiny;
    c = b + an / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return std::exp(-x + a * std::log(x) - std::lgamma(a)) * h;
  }
  throw NumericalError("incomplete gamma continued fraction did not converge");
}

inline double beta_fraction(double a, double b, double x) {
  const double qab = a + b, qap = a + 1.0, qam = a - 1.0;
  double c = 1.0, d = 1.0 - qab * x / qap;
  if (std::abs(d) < kTiny) d = kTiny;
  d = 1.0 / d;
  double h = d;
  for (int m = 1; m < kMaxIter; ++m) {
    const int m2 = 2 * m;
    double aa = m * (b - m) * x / ((qam + m2) * (a + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    h *= d * c;
    aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
    d = 1.0 + aa * d;
    if (std::abs(d) < kTiny) d = kTiny;
    c = 1.0 + aa / c;
    if (std::abs(c) < kTiny) c = kTiny;
    d = 1.0 / d;
    const double del = d * c;
    h *= del;
    if (std::abs(del - 1.0) < kEps) return h;
  }
  throw NumericalError("incomplete beta continued fraction did not converge");
}

}  // namespace detail

/// Regularized upper incomplete gamma Q(a, x).
inline double gamma_q(double a, double x) {
  if (!(a > 0.0) || x < 0.0) throw NumericalError("gamma_q: invalid arguments");
  if (x == 0.0) return 1.0;
  if (std::isinf(x)) return 0.0;
  return x < a + 1.0 ? 1.0 - detail::gamma_series(a, x) : detail::gamma_fraction(a, x);
}

/// Regularized incomplete beta I_x(a, b).
inline double incomplete_beta(double a, double b, double x) {
  if (!(a > 0.0 && b > 0.0) || x < 0.0 || x > 1.0) throw NumericalError("incomplete_beta: invalid arguments");
  if (x == 0.0 || x == 1.0) return x;
  const double front =
      std::exp(std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + a * std::log(x) + b * std::log1p(-x));
  if (x < (a + 1.0) / (a + b + 2.0)) return front * detail::beta_fraction(a, b, x) / a;
  return 1.0 - front * detail::beta_fraction(b, a, 1.0 - x) / b;
}

inline double chi_square_sf(double x, double dof) { return x <= 0.0 ? 1.0 : gamma_q(dof / 2.0, x / 2.0); }

/// Two-sided P(|T| >= |t|) for Student's t with `dof` degrees of freedom.
inline double student_t_two_sided(double t, double dof) {
  if (std::isinf(t)) return 0.0;
  return incomplete_beta(dof / 2.0, 0.5, dof / (dof + t * t));
}

inline double normal_sf(double z) { return 0.5 * std::erfc(z / std::sqrt(2.0)); }

struct StatResult {
  std::string test;
  double statistic = 0.0;
  double p_value = 1.0;
  double dof = 0.0;
  std::vector<std::size_t> group_sizes;
  Matrix pairwise_z;  // Dunn only
  Matrix pairwise_p;  // Dunn only: corrected, symmetric, unit diagonal
  bool degenerate = false;
};

namespace detail {

struct PooledRanks {
  std::vector<double> ranks;       // pooled, in group order
  std::vector<std::size_t> sizes;
  double tie_sum = 0.0;            // sum of t^3 - t over tie blocks
  std::size_t n = 0;
};

inline PooledRanks pool_ranks(const Groups& groups) {
  PooledRanks p;
  std::vector<double> all;
  for (const auto& g : groups) {
    p.sizes.push_back(g.size());
    all.insert(all.end(), g.begin(), g.end());
  }
  p.n = all.size();
  p.ranks = average_ranks(all);
  std::vector<double> sorted = all;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size();) {
    std::size_t j = i;
    while (j < sorted.size() && sorted[j] == sorted[i]) ++j;
    const double t = static_cast<double>(j - i);
    p.tie_sum += t * t * t - t;
    i = j;
  }
  return p;
}

inline std::vector<double> rank_means(std::span<const double> ranks, std::span<const std::size_t> sizes) {
  std::vector<double> out;
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    out.push_back(mean(ranks.subspan(at, s)));
    at += s;
  }
  return out;
}

/// Uncorrected H from pooled ranks laid out in group order.
inline double h_from_ranks(std::span<const double> ranks, std::span<const std::size_t> sizes) {
  const double n = static_cast<double>(ranks.size());
  double sum = 0.0;
  std::size_t at = 0;
  for (std::size_t s : sizes) {
    double r = 0.0;
    for (std::size_t i = at; i < at + s; ++i) r += ranks[i];
    sum += r * r / static_cast<double>(s);
    at += s;
  }
  return 12.0 / (n * (n + 1.0)) * sum - 3.0 * (n + 1.0);
}

inline void check_groups(const Groups& groups, std::size_t min_groups, const char* who) {
  if (groups.size() < min_groups)
    throw DataError(std::string(who) + ": need at least " + std::to_string(min_groups) + " groups");
  for (const auto& g : groups)
    if (g.empty()) throw DataError(std::string(who) + ": empty group");
}

inline Matrix dunn_z(std::span<const double> ranks, std::span<const std::size_t> sizes, double tie_sum) {
  const double n = static_cast<double>(ranks.size());
  const double var = n * (n + 1.0) / 12.0 - tie_sum / (12.0 * (n - 1.0));
  const auto means = rank_means(ranks, sizes);
  const std::size_t k = sizes.size();
  Matrix z(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b || var <= 0.0) continue;
      const double se = std::sqrt(var * (1.0 / static_cast<double>(sizes[a]) + 1.0 / static_cast<double>(sizes[b])));
      z(a, b) = (means[a] - means[b]) / se;
    }
  return z;
}

inline bool at_least(double stat, double observed) {
  return stat >= observed - 1e-12 * std::max(1.0, std::abs(observed));
}

}  // namespace detail

/// Kruskal-Wallis H with tie correction; p from chi-square with k - 1 dof.
inline StatResult kruskal_wallis(const Groups& groups) {
  detail::check_groups(groups, 2, "kruskal_wallis");
  const auto p = detail::pool_ranks(groups);
  if (p.n < 5) throw DataError("kruskal_wallis: need at least 5 observations");
  StatResult r;
  r.test = "kruskal_wallis";
  r.group_sizes = p.sizes;
  r.dof = static_cast<double>(groups.size() - 1);
  const double n = static_cast<double>(p.n);
  const double correction = 1.0 - p.tie_sum / (n * n * n - n);
  if (correction <= 0.0) {
    r.statistic = 0.0;
    r.p_value = 1.0;
    r.degenerate = true;
    return r;
  }
  r.statistic = std::max(0.0, detail::h_from_ranks(p.ranks, p.sizes) / correction);
  r.p_value = chi_square_sf(r.statistic, r.dof);
  return r;
}

/// Pairwise Dunn z on mean ranks with the tie-corrected variance; two-sided p times the comparison count, capped at 1.
inline StatResult dunn_posthoc(const Groups& groups) {
  detail::check_groups(groups, 3, "dunn_posthoc");
  const auto p = detail::pool_ranks(groups);
  const std::size_t k = groups.size();
  const double m = static_cast<double>(k * (k - 1) / 2);
  StatResult r;
  r.test = "dunn_bonferroni";
  r.group_sizes = p.sizes;
  r.pairwise_z = detail::dunn_z(p.ranks, p.sizes, p.tie_sum);
  r.pairwise_p = Matrix(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b)
      r.pairwise_p(a, b) = a == b ? 1.0 : std::min(1.0, 2.0 * normal_sf(std::abs(r.pairwise_z(a, b))) * m);
  return r;
}

/// Two-sided paired t-test on d = x - y.
inline StatResult paired_t_test(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("paired_t_test: length mismatch");
  if (x.size() < 2) throw DataError("paired_t_test: need at least 2 pairs");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - y[i];
  StatResult r;
  r.test = "paired_t";
  r.group_sizes = {d.size()};
  r.dof = static_cast<double>(d.size() - 1);
  const double md = mean(d);
  const double sd = std::sqrt(sample_variance(d));
  if (sd == 0.0) {
    r.degenerate = true;
    r.statistic = md == 0.0 ? 0.0 : std::copysign(std::numeric_limits<double>::infinity(), md);
    r.p_value = md == 0.0 ? 1.0 : 0.0;
    return r;
  }
  r.statistic = md / (sd / std::sqrt(static_cast<double>(d.size())));
  r.p_value = student_t_two_sided(r.statistic, r.dof);
  return r;
}

// --- permutation p-values (fraction of resamples at least as extreme) ---

/// Group labels permuted over the pooled values; statistic H.
inline double kruskal_wallis_permutation_p(const Groups& groups, std::size_t resamples, std::uint64_t seed) {
  detail::check_groups(groups, 2, "kruskal_wallis_permutation_p");
  auto p = detail::pool_ranks(groups);
  const double observed = detail::h_from_ranks(p.ranks, p.sizes);
  Rng rng(seed);
  std::size_t hits = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    rng.shuffle(p.ranks);
    hits += detail::at_least(detail::h_from_ranks(p.ranks, p.sizes), observed);
  }
  return static_cast<double>(hits) / static_cast<double>(resamples);
}

/// Per-pair Bonferroni-corrected permutation p of |z| (same correction as dunn_posthoc).
inline Matrix dunn_permutation_p(const Groups& groups, std::size_t resamples, std::uint64_t seed) {
  detail::check_groups(groups, 3, "dunn_permutation_p");
  auto p = detail::pool_ranks(groups);
  const std::size_t k = groups.size();
  const Matrix observed = detail::dunn_z(p.ranks, p.sizes, p.tie_sum);
  Matrix hits(k, k);
  Rng rng(seed);
  for (std::size_t r = 0; r < resamples; ++r) {
    rng.shuffle(p.ranks);
    const Matrix z = detail::dunn_z(p.ranks, p.sizes, p.tie_sum);
    for (std::size_t a = 0; a < k; ++a)
      for (std::size_t b = a + 1; b < k; ++b)
        if (detail::at_least(std::abs(z(a, b)), std::abs(observed(a, b)))) hits(a, b) += 1.0;
  }
  const double m = static_cast<double>(k * (k - 1) / 2);
  Matrix out(k, k);
  for (std::size_t a = 0; a < k; ++a)
    for (std::size_t b = 0; b < k; ++b) {
      if (a == b) {
        out(a, b) = 1.0;
      } else {
        const double h = a < b ? hits(a, b) : hits(b, a);
        out(a, b) = std::min(1.0, m * h / static_cast<double>(resamples));
      }
    }
  return out;
}

/// Random sign flips of the paired differences; statistic |t|.
inline double paired_t_sign_flip_p(std::span<const double> x, std::span<const double> y, std::size_t resamples,
                                   std::uint64_t seed) {
  if (x.size() != y.size() || x.size() < 2) throw DataError("paired_t_sign_flip_p: need equal lengths >= 2");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < d.size(); ++i) d[i] = x[i] - y[i];
  auto abs_t = [](std::span<const double> v) {
    const double sd = std::sqrt(sample_variance(v));
    return sd == 0.0 ? 0.0 : std::abs(mean(v)) / (sd / std::sqrt(static_cast<double>(v.size())));
  };
  const double observed = abs_t(d);
  Rng rng(seed);
  std::vector<double> flipped(d.size());
  std::size_t hits = 0;
  for (std::size_t r = 0; r < resamples; ++r) {
    for (std::size_t i = 0; i < d.size(); ++i) flipped[i] = rng.bernoulli(0.5) ? -d[i] : d[i];
    hits += detail::at_least(abs_t(flipped), observed);
  }
  return static_cast<double>(hits) / static_cast<double>(resamples);
}

// --- regression ---

struct RegressionSummary {
  double slope = kNaN;
  double intercept = kNaN;
  double pearson_r = kNaN;
  double spearman_rho = kNaN;
  std::size_t n = 0;
  bool defined = false;  // false when x has zero variance
};

/// Ordinary least squares of y on x plus both correlation coefficients.
inline RegressionSummary regression(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size()) throw DataError("regression: length mismatch");
  if (x.size() < 3) throw DataError("regression: need at least 3 points");
  RegressionSummary r;
  r.n = x.size();
  const double mx = mean(x), my = mean(y);
  double sxx = 0.0, sxy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxx += (x[i] - mx) * (x[i] - mx);
    sxy += (x[i] - mx) * (y[i] - my);
  }
  if (sxx <= 0.0) return r;
  r.defined = true;
  r.slope = sxy / sxx;
  r.intercept = my - r.slope * mx;
  r.pearson_r = pearson(x, y);
  r.spearman_rho = spearman(x, y);
  return r;
}

}  // namespace xcdtl::stats
