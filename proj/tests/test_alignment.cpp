#include <gtest/gtest.h>

#include <Eigen/Dense>
#include <cmath>

#include "xcdtl/alignment.hpp"
#include "xcdtl/core/rng.hpp"

using namespace xcdtl;

namespace {

Matrix gaussian(std::size_t n, std::size_t w, std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  Matrix m(n, w);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) m(i, j) = scale * rng.normal() + static_cast<double>(j);
  return m;
}

Matrix low_rank(std::size_t n, std::size_t w, std::size_t rank, std::uint64_t seed) {
  const Matrix latent = gaussian(n, rank, seed);
  const Matrix mix = gaussian(rank, w, seed + 1);
  Matrix out = multiply(latent, mix);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < w; ++j) out(i, j) += 3.0 * static_cast<double>(j);  // offsets are removed by centering
  return out;
}

Eigen::MatrixXd to_eigen(const Matrix& m) {
  Eigen::MatrixXd e(m.rows(), m.cols());
  for (std::size_t i = 0; i < m.rows(); ++i)
    for (std::size_t j = 0; j < m.cols(); ++j) e(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = m(i, j);
  return e;
}

double frobenius(const Matrix& m) {
  double s = 0;
  for (double v : m.data()) s += v * v;
  return std::sqrt(s);
}

}  // namespace

TEST(Alignment, RankTwoDataKeepsTwoComponents) {
  const Matrix x = low_rank(120, 8, 2, 3);
  const auto p = fit_alignment(x.select_rows(std::vector<std::size_t>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9}),
                               x.select_rows([] {
                                 std::vector<std::size_t> v;
                                 for (std::size_t i = 10; i < 120; ++i) v.push_back(i);
                                 return v;
                               }()));
  EXPECT_EQ(p.dims(), 2u);
  EXPECT_FALSE(p.fallback_triggered);
}

TEST(Alignment, RankOneTriggersFallback) {
  const Matrix x = low_rank(50, 8, 1, 4);
  const auto p = fit_alignment(x, Matrix());
  EXPECT_EQ(p.dims(), 1u);
  EXPECT_TRUE(p.fallback_triggered);
}

TEST(Alignment, DuplicatedAndConstantColumnsDropOneComponent) {
  Matrix x = gaussian(200, 8, 5);
  for (std::size_t i = 0; i < x.rows(); ++i) x(i, 5) = x(i, 2);
  EXPECT_EQ(fit_alignment(x, Matrix()).dims(), 7u);
  Matrix c = gaussian(200, 8, 6);
  for (std::size_t i = 0; i < c.rows(); ++i) c(i, 0) = 4.0;
  EXPECT_EQ(fit_alignment(c, Matrix()).dims(), 7u);
}

TEST(Alignment, IsotropicDataIsRotated) {
  const Matrix s = gaussian(500, 8, 7), t = gaussian(500, 8, 8, 2.0);
  const auto p = fit_alignment(s, t);
  ASSERT_EQ(p.dims(), 8u);
  const Matrix z = standardized_input(p, s);
  const Matrix y = project(p, s);
  Rng rng(1);
  for (int k = 0; k < 200; ++k) {
    const std::size_t a = rng.index(500), b = rng.index(500);
    double dz = 0, dy = 0;
    for (std::size_t j = 0; j < 8; ++j) {
      dz += (z(a, j) - z(b, j)) * (z(a, j) - z(b, j));
      dy += (y(a, j) - y(b, j)) * (y(a, j) - y(b, j));
    }
    EXPECT_NEAR(std::sqrt(dz), std::sqrt(dy), 1e-9);
  }
}

TEST(Alignment, BasisOrthonormalSortedAndSigned) {
  const auto p = fit_alignment(gaussian(60, 8, 9), low_rank(60, 8, 5, 10));
  for (std::size_t a = 0; a < p.dims(); ++a) {
    for (std::size_t b = 0; b < p.dims(); ++b) {
      double dot = 0;
      for (std::size_t j = 0; j < 8; ++j) dot += p.basis(a, j) * p.basis(b, j);
      EXPECT_NEAR(dot, a == b ? 1.0 : 0.0, 1e-9);
    }
    const auto r = p.basis.row(a);
    const auto big = std::max_element(r.begin(), r.end(), [](double u, double v) { return std::abs(u) < std::abs(v); });
    EXPECT_GT(*big, 0.0);
  }
  for (std::size_t k = 1; k < p.singular_values.size(); ++k) EXPECT_LE(p.singular_values[k], p.singular_values[k - 1]);
}

TEST(Alignment, SingularValuesMatchEigenOracle) {
  const Matrix s = gaussian(40, 8, 11), t = low_rank(30, 8, 6, 12);
  const auto p = fit_alignment(s, t);
  const Eigen::JacobiSVD<Eigen::MatrixXd> svd(to_eigen(standardized_input(p, vstack(s, t))));
  for (std::size_t k = 0; k < 8; ++k)
    EXPECT_NEAR(p.singular_values[k], svd.singularValues()(static_cast<Eigen::Index>(k)), 1e-9 * p.singular_values[0]);
}

TEST(Alignment, ReconstructionAndVarianceConservation) {
  const Matrix s = gaussian(300, 8, 13), t = low_rank(200, 8, 8, 14);
  const auto p = fit_alignment(s, t);
  ASSERT_EQ(p.dims(), 8u);
  const Matrix joint = vstack(s, t);
  const Matrix z = standardized_input(p, joint);
  const Matrix y = project(p, joint);
  Matrix diff = back_project(p, y);
  for (std::size_t i = 0; i < diff.rows(); ++i)
    for (std::size_t j = 0; j < 8; ++j) diff(i, j) -= z(i, j);
  EXPECT_LT(frobenius(diff) / frobenius(z), 1e-8);
  double vz = 0, vy = 0;
  for (std::size_t j = 0; j < 8; ++j) {
    vz += variance(z.column(j));
    vy += variance(y.column(j));
  }
  EXPECT_NEAR(vy, vz, 1e-8);
  for (std::size_t k = 0; k < 8; ++k) EXPECT_NEAR(mean(y.column(k)), 0.0, 1e-9);
}

TEST(Alignment, ProjectIsPureAndMatchesExplicitArithmetic) {
  const Matrix s = gaussian(80, 8, 15), t = gaussian(20, 8, 16, 3.0);
  const auto p = fit_alignment(s, t);
  const Matrix held = gaussian(5, 8, 17, 1.5);
  EXPECT_EQ(project(p, held), project(p, held));
  EXPECT_EQ(project(p, held, 4), project(p, held, 1));
  // Oracle: ((x - mu) / sd - center) * basis^T with Eigen.
  Eigen::MatrixXd x = to_eigen(held);
  for (Eigen::Index j = 0; j < 8; ++j) {
    const auto uj = static_cast<std::size_t>(j);
    x.col(j) = ((x.col(j).array() - p.mean[uj]) / p.stddev[uj] - p.center[uj]).matrix();
  }
  const Eigen::MatrixXd want = x * to_eigen(p.basis).transpose();
  const Matrix got = project(p, held);
  for (std::size_t i = 0; i < 5; ++i)
    for (std::size_t k = 0; k < p.dims(); ++k)
      EXPECT_NEAR(got(i, k), want(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(k)), 1e-10);
  EXPECT_THROW(project(p, gaussian(3, 7, 1)), DataError);
}

TEST(Alignment, Errors) {
  EXPECT_THROW(fit_alignment(gaussian(4, 8, 1), gaussian(4, 8, 2)), DataError);
  EXPECT_THROW(fit_alignment(gaussian(10, 8, 1), gaussian(10, 7, 2)), DataError);
}

TEST(Alignment, JsonRoundTrip) {
  const auto p = fit_alignment(gaussian(30, 8, 18), gaussian(30, 8, 19), {4, 3, 0, 1, 2, 5, 6, 7});
  const auto j = to_json(p);
  EXPECT_EQ(j["anchors"][0], "transitivity");
  const auto q = alignment_from_json(nlohmann::json::parse(j.dump()));
  EXPECT_EQ(q.anchors, p.anchors);
  EXPECT_EQ(q.basis, p.basis);
  EXPECT_EQ(q.mean, p.mean);
  const Matrix x = gaussian(4, 8, 20);
  EXPECT_EQ(project(q, x), project(p, x));
}
