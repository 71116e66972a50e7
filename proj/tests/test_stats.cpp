#include <gtest/gtest.h>

#include <algorithm>
#include <boost/math/distributions/chi_squared.hpp>
#include <boost/math/distributions/normal.hpp>
#include <boost/math/distributions/students_t.hpp>
#include <boost/math/special_functions/beta.hpp>
#include <boost/math/special_functions/gamma.hpp>
#include <cmath>

#include "xcdtl/core/rng.hpp"
#include "stats_oracles.hpp"
#include "xcdtl/stats.hpp"

using namespace xcdtl;
using namespace xcdtl::stats;
using namespace oracle;

namespace {

constexpr std::size_t kResamples = 100000;

}  // namespace

TEST(SpecialFunctions, MatchBoost) {
  for (double a : {0.5, 1.0, 2.5, 7.0, 30.0})
    for (double x : {0.01, 0.5, 1.0, 3.0, 10.0, 45.0}) {
      const double want = boost::math::gamma_q(a, x);
      EXPECT_NEAR(gamma_q(a, x), want, 1e-12 * std::max(want, 1e-300) + 1e-300) << a << " " << x;
    }
  for (double a : {0.5, 1.0, 3.5, 12.0})
    for (double b : {0.5, 2.0, 9.0})
      for (double x : {0.001, 0.2, 0.5, 0.8, 0.999}) {
        const double want = boost::math::ibeta(a, b, x);
        EXPECT_NEAR(incomplete_beta(a, b, x), want, 1e-12 * std::max(want, 1e-12)) << a << " " << b << " " << x;
      }
}

TEST(SpecialFunctions, DistributionTails) {
  for (double dof : {1.0, 2.0, 5.0, 17.0})
    for (double x : {0.1, 1.0, 4.0, 20.0})
      EXPECT_NEAR(chi_square_sf(x, dof), boost::math::cdf(boost::math::complement(boost::math::chi_squared(dof), x)),
                  1e-12);
  for (double dof : {1.0, 3.0, 9.0, 60.0})
    for (double t : {0.0, 0.5, 2.0, 6.0})
      EXPECT_NEAR(student_t_two_sided(t, dof),
                  2 * boost::math::cdf(boost::math::complement(boost::math::students_t(dof), t)), 1e-12);
  EXPECT_NEAR(normal_sf(1.96), boost::math::cdf(boost::math::complement(boost::math::normal(), 1.96)), 1e-15);
  EXPECT_EQ(student_t_two_sided(INFINITY, 3), 0.0);
}

TEST(KruskalWallis, NoTiesHandExample) {
  const auto r = kruskal_wallis({{1, 2, 3}, {4, 5, 6}, {7, 8, 9}});
  EXPECT_NEAR(r.statistic, 7.2, 1e-12);
  EXPECT_EQ(r.dof, 2.0);
  EXPECT_NEAR(r.p_value, std::exp(-3.6), 1e-12);
}

TEST(KruskalWallis, IdenticalGroupsAndConstants) {
  EXPECT_NEAR(kruskal_wallis({{1, 2, 3}, {1, 2, 3}, {3, 2, 1}}).statistic, 0.0, 1e-12);
  const auto r = kruskal_wallis({{4, 4}, {4, 4, 4}});
  EXPECT_EQ(r.statistic, 0.0);
  EXPECT_EQ(r.p_value, 1.0);
  EXPECT_TRUE(r.degenerate);
}

TEST(KruskalWallis, ReferenceValues) {
  // Reference values from scipy.stats.kruskal.
  const auto a = kruskal_wallis({{2.9, 3.0, 2.5, 2.6, 3.2}, {3.8, 2.7, 4.0, 2.4}, {2.8, 3.4, 3.7, 2.2, 2.0}});
  EXPECT_NEAR(a.statistic, 0.7714285714285722, 1e-10);
  EXPECT_NEAR(a.p_value, 0.6799647735788936, 1e-10);
  const auto b = kruskal_wallis({{1, 2, 2, 3, 3, 3}, {2, 3, 4, 4, 5}, {5, 5, 6, 6, 7, 1}});
  EXPECT_NEAR(b.statistic, 6.350020964360578, 1e-10);
  EXPECT_NEAR(b.p_value, 0.041793665993881964, 1e-10);
}

TEST(KruskalWallis, MatchesBruteForceWithTies) {
  Rng rng(3);
  for (int trial = 0; trial < 50; ++trial) {
    const Groups g = random_groups(rng, 2 + rng.index(3));
    const auto p = naive_pool(g);
    const double want = naive_h(p.ranks, p.label, g.size(), p.ties);
    const auto r = kruskal_wallis(g);
    EXPECT_NEAR(r.statistic, want, 1e-10);
    EXPECT_NEAR(r.p_value, boost::math::cdf(boost::math::complement(boost::math::chi_squared(r.dof), want)), 1e-10);
  }
}

TEST(KruskalWallis, Errors) {
  EXPECT_THROW(kruskal_wallis({{1, 2, 3}}), DataError);
  EXPECT_THROW(kruskal_wallis({{1, 2}, {3}}), DataError);
  EXPECT_THROW(kruskal_wallis({{1, 2, 3}, {}}), DataError);
}

TEST(Dunn, IdenticalGroupsGiveOne) {
  const auto r = dunn_posthoc({{1, 2, 3}, {1, 2, 3}, {1, 2, 3}});
  for (std::size_t a = 0; a < 3; ++a)
    for (std::size_t b = 0; b < 3; ++b) EXPECT_EQ(r.pairwise_p(a, b), 1.0);
}

TEST(Dunn, SeparatedGroupsAndShape) {
  Rng rng(4);
  Groups g(3);
  for (int i = 0; i < 12; ++i) {
    g[0].push_back(rng.normal());
    g[1].push_back(rng.normal() + 0.1);
    g[2].push_back(rng.normal() + 10.0);
  }
  const auto r = dunn_posthoc(g);
  EXPECT_LT(r.pairwise_p(0, 2), 0.01);
  EXPECT_LT(r.pairwise_p(1, 2), 0.01);
  EXPECT_GT(r.pairwise_p(0, 1), 0.05);
  for (std::size_t a = 0; a < 3; ++a) {
    EXPECT_EQ(r.pairwise_p(a, a), 1.0);
    for (std::size_t b = 0; b < 3; ++b) {
      EXPECT_EQ(r.pairwise_p(a, b), r.pairwise_p(b, a));
      EXPECT_GE(r.pairwise_p(a, b), 0.0);
      EXPECT_LE(r.pairwise_p(a, b), 1.0);
    }
  }
}

TEST(Dunn, MatchesFormulaAndClamps) {
  Rng rng(5);
  for (int trial = 0; trial < 30; ++trial) {
    const Groups g = random_groups(rng, 3 + rng.index(2));
    const auto p = naive_pool(g);
    const auto r = dunn_posthoc(g);
    const double m = static_cast<double>(g.size() * (g.size() - 1) / 2);
    for (std::size_t a = 0; a < g.size(); ++a)
      for (std::size_t b = a + 1; b < g.size(); ++b) {
        const double z = naive_dunn_abs_z(p.ranks, p.label, a, b, p.ties);
        EXPECT_NEAR(std::abs(r.pairwise_z(a, b)), z, 1e-10);
        const double raw = 2 * boost::math::cdf(boost::math::complement(boost::math::normal(), z));
        EXPECT_NEAR(r.pairwise_p(a, b), std::min(1.0, raw * m), 1e-12);
      }
  }
  EXPECT_THROW(dunn_posthoc({{1, 2}, {3, 4}}), DataError);
  EXPECT_THROW(dunn_posthoc({{1, 2}, {3, 4}, {}}), DataError);
}

TEST(PairedT, HandValues) {
  const std::vector<double> x{1, 2, 3, 4}, zero{0, 0, 0, 0};
  const auto r = paired_t_test(x, zero);
  EXPECT_NEAR(r.statistic, 2.5 / (std::sqrt(5.0 / 3.0) / 2.0), 1e-12);
  EXPECT_NEAR(r.statistic, 3.873, 5e-4);
  EXPECT_EQ(r.dof, 3.0);
  const auto same = paired_t_test(x, x);
  EXPECT_EQ(same.statistic, 0.0);
  EXPECT_EQ(same.p_value, 1.0);
  EXPECT_TRUE(same.degenerate);
  const std::vector<double> shifted{2, 3, 4, 5};
  const auto shift = paired_t_test(shifted, x);
  EXPECT_TRUE(shift.degenerate);
  EXPECT_EQ(shift.p_value, 0.0);
  EXPECT_THROW(paired_t_test(std::vector<double>{1}, std::vector<double>{2}), DataError);
}

TEST(PairedT, ReferenceDataset) {
  // Reference values from scipy.stats.ttest_rel.
  const std::vector<double> x{0.82, 0.91, 0.77, 0.68, 0.95, 0.73, 0.88}, y{0.71, 0.85, 0.79, 0.60, 0.83, 0.70, 0.81};
  const auto r = paired_t_test(x, y);
  EXPECT_NEAR(r.statistic, 3.550173860507965, 1e-9);
  EXPECT_NEAR(r.p_value, 0.012069519532442962, 1e-9);
}

TEST(PairedT, NormalNullSimulation) {
  // Under Gaussian differences t is exactly Student-distributed.
  Rng rng(6);
  for (int trial = 0; trial < 5; ++trial) {
    const std::size_t n = 5 + rng.index(10);
    std::vector<double> x(n), y(n, 0.0);
    for (double& v : x) v = rng.normal() + 0.5;
    const auto r = paired_t_test(x, y);
    std::size_t hits = 0;
    const std::size_t reps = 40000;
    std::vector<double> z(n);
    for (std::size_t k = 0; k < reps; ++k) {
      for (double& v : z) v = rng.normal();
      hits += std::abs(paired_t_test(z, y).statistic) >= std::abs(r.statistic);
    }
    const double mc = static_cast<double>(hits) / reps;
    EXPECT_NEAR(r.p_value, mc, 3 * mc_sigma(r.p_value, reps));
  }
}

TEST(Permutation, KruskalWallisMatchesBruteForceOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const Groups g = random_groups(rng, 3);
    const double lib = kruskal_wallis_permutation_p(g, kResamples, 100 + trial);
    auto p = naive_pool(g);
    const double observed = naive_h(p.ranks, p.label, g.size(), p.ties);
    Rng oracle(9000 + trial);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < kResamples; ++r) {
      std::shuffle(p.label.begin(), p.label.end(), oracle);
      hits += naive_h(p.ranks, p.label, g.size(), p.ties) >= observed - 1e-9;
    }
    const double want = static_cast<double>(hits) / kResamples;
    EXPECT_NEAR(lib, want, 3 * std::sqrt(2.0) * mc_sigma(want, kResamples)) << trial;
  }
}

TEST(Permutation, DunnMatchesBruteForceOracle) {
  Rng rng(8);
  const std::size_t reps = kResamples / 4;
  for (int trial = 0; trial < 20; ++trial) {
    const Groups g = random_groups(rng, 3);
    const Matrix lib = dunn_permutation_p(g, reps, 200 + trial);
    auto p = naive_pool(g);
    Rng oracle(8000 + trial);
    const double z01 = naive_dunn_abs_z(p.ranks, p.label, 0, 1, p.ties);
    std::size_t hits = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      std::shuffle(p.label.begin(), p.label.end(), oracle);
      hits += naive_dunn_abs_z(p.ranks, p.label, 0, 1, p.ties) >= z01 - 1e-9;
    }
    const double raw = static_cast<double>(hits) / reps;
    EXPECT_NEAR(lib(0, 1), std::min(1.0, 3 * raw), 3 * 3 * std::sqrt(2.0) * mc_sigma(raw, reps) + 1e-12) << trial;
    EXPECT_EQ(lib(0, 1), lib(1, 0));
  }
}

TEST(Permutation, SignFlipMatchesEnumeration) {
  // n = 10: all 1024 sign patterns give the exact permutation p.
  Rng rng(9);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<double> x(10), y(10);
    for (std::size_t i = 0; i < 10; ++i) {
      x[i] = rng.normal() + 0.3;
      y[i] = rng.normal();
    }
    std::vector<double> d(10);
    for (std::size_t i = 0; i < 10; ++i) d[i] = x[i] - y[i];
    auto abs_t = [](const std::vector<double>& v) {
      double m = 0, s = 0;
      for (double u : v) m += u;
      m /= static_cast<double>(v.size());
      for (double u : v) s += (u - m) * (u - m);
      return std::abs(m) / std::sqrt(s / static_cast<double>(v.size() - 1) / static_cast<double>(v.size()));
    };
    const double observed = abs_t(d);
    std::size_t hits = 0;
    for (unsigned mask = 0; mask < 1024; ++mask) {
      std::vector<double> f = d;
      for (std::size_t i = 0; i < 10; ++i)
        if (mask >> i & 1U) f[i] = -f[i];
      hits += abs_t(f) >= observed - 1e-9;
    }
    const double exact = hits / 1024.0;
    EXPECT_NEAR(paired_t_sign_flip_p(x, y, kResamples, 300 + trial), exact, 3 * mc_sigma(exact, kResamples)) << trial;
  }
}

TEST(Regression, ExactLine) {
  const std::vector<double> x{0, 1, 2, 3, 4}, y{1, 3, 5, 7, 9};
  const auto r = regression(x, y);
  EXPECT_TRUE(r.defined);
  EXPECT_NEAR(r.slope, 2.0, 1e-12);
  EXPECT_NEAR(r.intercept, 1.0, 1e-12);
  EXPECT_NEAR(r.pearson_r, 1.0, 1e-12);
  EXPECT_NEAR(r.spearman_rho, 1.0, 1e-12);
  EXPECT_FALSE(regression(std::vector<double>{2, 2, 2}, std::vector<double>{1, 2, 3}).defined);
  EXPECT_THROW(regression(std::vector<double>{1, 2}, std::vector<double>{1, 2}), DataError);
}

TEST(Regression, NullCorrelationIsSmall) {
  Rng rng(10);
  int small = 0;
  for (int trial = 0; trial < 100; ++trial) {
    std::vector<double> x(12), y(12);
    for (double& v : x) v = rng.normal();
    for (double& v : y) v = rng.normal();
    small += std::abs(regression(x, y).pearson_r) < 0.6;
  }
  EXPECT_GE(small, 90);
}
