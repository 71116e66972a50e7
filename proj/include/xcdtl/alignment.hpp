#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xcdtl/core/error.hpp"
#include "xcdtl/core/linalg.hpp"
#include "xcdtl/core/matrix.hpp"
#include "xcdtl/core/numeric.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/features.hpp"

namespace xcdtl {

/// Frozen pooled standardization + orthonormal basis of a joint source/target fit.
struct AlignmentProjection {
  std::vector<std::size_t> anchors;     // feature ids of the input columns (informational)
  std::vector<double> mean;             // pooled, per column
  std::vector<double> stddev;           // pooled population std; < 1e-12 means the column is zeroed
  std::vector<double> center;           // column means of the z-scored training rows
  Matrix basis;                         // d x width, rows orthonormal
  std::vector<double> singular_values;  // all, non-increasing
  bool fallback_triggered = false;

  std::size_t dims() const noexcept { return basis.rows(); }
  std::size_t width() const noexcept { return mean.size(); }
};

inline constexpr double kRetainRatio = 1e-10;
inline constexpr double kConditionLimit = 1e8;

namespace detail {

inline Matrix standardize_centered(const AlignmentProjection& p, const Matrix& x) {
  Matrix z(x.rows(), x.cols());
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < x.cols(); ++j)
      z(i, j) = (p.stddev[j] < 1e-12 ? 0.0 : (x(i, j) - p.mean[j]) / p.stddev[j]) - p.center[j];
  return z;
}

}  // namespace detail

/**
 * Stacks source and target training rows, z-scores each column over the
 * pooled rows, re-centers, and takes the right singular vectors of the
 * result. Components with sigma_k >= 1e-10 sigma_1 are kept. The fit is
 * flagged ill-conditioned when fewer than two survive or the kept
 * condition number exceeds 1e8.
 */
inline AlignmentProjection fit_alignment(const Matrix& source, const Matrix& target,
                                         std::vector<std::size_t> anchors = {}) {
  const Matrix joint = vstack(source, target);
  if (joint.rows() < 9) throw DataError("fit_alignment: need at least 9 combined rows");
  if (source.rows() > 0 && target.rows() > 0 && source.cols() != target.cols())
    throw DataError("fit_alignment: source/target width mismatch");
  const std::size_t w = joint.cols();
  if (w == 0) throw DataError("fit_alignment: no columns");

  AlignmentProjection p;
  p.anchors = std::move(anchors);
  p.mean.resize(w);
  p.stddev.resize(w);
  p.center.assign(w, 0.0);
  for (std::size_t j = 0; j < w; ++j) {
    const auto col = joint.column(j);
    p.mean[j] = mean(col);
    p.stddev[j] = population_std(col);
  }
  {
    const Matrix z = detail::standardize_centered(p, joint);
    for (std::size_t j = 0; j < w; ++j) p.center[j] = mean(z.column(j));
  }
  const Matrix centered = detail::standardize_centered(p, joint);
  const auto svd = linalg::jacobi_svd(centered);
  p.singular_values = svd.singular_values;

  const double s1 = svd.singular_values.front();
  std::size_t d = 0;
  while (d < w && s1 > 0.0 && svd.singular_values[d] >= kRetainRatio * s1) ++d;
  p.basis = Matrix(d, w);
  for (std::size_t k = 0; k < d; ++k) {
    std::size_t big = 0;
    for (std::size_t j = 1; j < w; ++j)
      if (std::abs(svd.right_vectors(j, k)) > std::abs(svd.right_vectors(big, k))) big = j;
    const double sign = svd.right_vectors(big, k) < 0.0 ? -1.0 : 1.0;
    for (std::size_t j = 0; j < w; ++j) p.basis(k, j) = sign * svd.right_vectors(j, k);
  }
  p.fallback_triggered = d < 2 || s1 / svd.singular_values[d - 1] > kConditionLimit;
  return p;
}

/// Rows of x mapped into the fitted basis (N x d). Never refits.
inline Matrix project(const AlignmentProjection& p, const Matrix& x, std::size_t threads = 1) {
  if (x.cols() != p.width()) throw DataError("project: column count does not match the fitted anchors");
  const Matrix z = detail::standardize_centered(p, x);
  Matrix out(x.rows(), p.dims());
  parallel_for(
      x.rows(),
      [&](std::size_t i) {
        for (std::size_t k = 0; k < p.dims(); ++k) {
          double v = 0.0;
          for (std::size_t j = 0; j < p.width(); ++j) v += z(i, j) * p.basis(k, j);
          out(i, k) = v;
        }
      },
      threads);
  return out;
}

/// Inverse map from component space back to the standardized, centered input space.
inline Matrix back_project(const AlignmentProjection& p, const Matrix& y) {
  if (y.cols() != p.dims()) throw DataError("back_project: width mismatch");
  return multiply(y, p.basis);
}

/// Standardized and centered copy of x, the space the basis lives in.
inline Matrix standardized_input(const AlignmentProjection& p, const Matrix& x) {
  if (x.cols() != p.width()) throw DataError("standardized_input: width mismatch");
  return detail::standardize_centered(p, x);
}

inline nlohmann::ordered_json to_json(const AlignmentProjection& p) {
  nlohmann::ordered_json j;
  std::vector<std::string> names;
  for (std::size_t a : p.anchors) names.emplace_back(a < kNumFeatures ? kFeatureNames[a] : std::to_string(a));
  j["anchors"] = names;
  j["mean"] = p.mean;
  j["stddev"] = p.stddev;
  j["center"] = p.center;
  j["singular_values"] = p.singular_values;
  auto rows = nlohmann::ordered_json::array();
  for (std::size_t k = 0; k < p.dims(); ++k) {
    const auto r = p.basis.row(k);
    rows.push_back(std::vector<double>(r.begin(), r.end()));
  }
  j["basis"] = rows;
  j["fallback_triggered"] = p.fallback_triggered;
  return j;
}

inline AlignmentProjection alignment_from_json(const nlohmann::json& j) {
  AlignmentProjection p;
  try {
    for (const auto& name : j.at("anchors")) p.anchors.push_back(feature_index(name.get<std::string>()));
    p.mean = j.at("mean").get<std::vector<double>>();
    p.stddev = j.at("stddev").get<std::vector<double>>();
    p.center = j.at("center").get<std::vector<double>>();
    p.singular_values = j.at("singular_values").get<std::vector<double>>();
    for (const auto& row : j.at("basis")) p.basis.push_row(row.get<std::vector<double>>());
    p.fallback_triggered = j.at("fallback_triggered").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw DataError(std::string("alignment JSON: ") + e.what());
  }
  if (p.stddev.size() != p.mean.size() || p.center.size() != p.mean.size() ||
      (p.dims() > 0 && p.basis.cols() != p.mean.size()))
    throw DataError("alignment JSON: inconsistent widths");
  return p;
}

}  // namespace xcdtl
