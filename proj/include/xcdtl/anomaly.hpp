#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "xcdtl/core/csv.hpp"
#include "xcdtl/core/error.hpp"
#include "xcdtl/core/matrix.hpp"
#include "xcdtl/core/numeric.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/core/rng.hpp"
#include "xcdtl/features.hpp"
#include "xcdtl/metrics.hpp"

namespace xcdtl {

struct AnomalyLabels {
  std::vector<double> extremeness;  // S_i = sum_j |z_ij|
  std::vector<bool> label;
  double threshold = 0.0;  // 90th percentile of S

  std::size_t positives() const { return static_cast<std::size_t>(std::count(label.begin(), label.end(), true)); }
};

/// Ground truth from within-domain z-scores: label = S_i > quantile(S, 0.9).
inline AnomalyLabels label_anomalies(const FeatureMatrix& fm) {
  if (fm.size() < 10) throw DataError("label_anomalies: need at least 10 graphs");
  const FeatureMatrix z = standardize(fm);
  AnomalyLabels out;
  out.extremeness.resize(fm.size());
  for (std::size_t i = 0; i < fm.size(); ++i) {
    std::vector<double> terms(kNumFeatures);
    for (std::size_t j = 0; j < kNumFeatures; ++j) terms[j] = std::abs(z.rows[i].values[j]);
    out.extremeness[i] = stable_sum(terms);
  }
  out.threshold = quantile(out.extremeness, 0.9);
  out.label = metrics::above(out.extremeness, out.threshold);
  return out;
}

/// Expected path length of an unsuccessful BST search among n points.
inline double average_path_length(double n) {
  if (n > 2.0) return 2.0 * (std::log(n - 1.0) + 0.5772156649) - 2.0 * (n - 1.0) / n;
  if (n == 2.0) return 1.0;
  return 0.0;
}

struct ITreeNode {
  int feature = -1;  // -1: leaf
  double split = 0.0;
  std::uint32_t left = 0;
  std::uint32_t right = 0;
  std::uint32_t size = 0;  // training points reaching this node
  friend bool operator==(const ITreeNode&, const ITreeNode&) = default;
};

struct ITree {
  std::vector<ITreeNode> nodes;
  friend bool operator==(const ITree&, const ITree&) = default;

  /// Depth at the reached leaf plus c(leaf size).
  double path_length(std::span<const double> x) const {
    std::size_t at = 0;
    double depth = 0.0;
    while (nodes[at].feature >= 0) {
      at = x[static_cast<std::size_t>(nodes[at].feature)] < nodes[at].split ? nodes[at].left : nodes[at].right;
      depth += 1.0;
    }
    return depth + average_path_length(nodes[at].size);
  }
};

struct IForestOptions {
  std::size_t trees = 100;
  std::size_t max_samples = 256;
};

class IsolationForest {
 public:
  IsolationForest() = default;
  IsolationForest(std::vector<ITree> trees, std::size_t psi, std::size_t width)
      : trees_(std::move(trees)), psi_(psi), width_(width) {}

  /**
   * Each tree isolates a psi = min(max_samples, N) subsample drawn without
   * replacement; a node splits on a uniformly chosen feature that is not
   * constant in the node, at a uniform point of its range, until the height
   * limit ceil(log2 psi) or a single point.
   */
  static IsolationForest fit(const Matrix& x, std::uint64_t seed, const IForestOptions& opt = {},
                             std::size_t threads = 1) {
    if (x.rows() < 2) throw DataError("iforest: need at least 2 rows");
    if (x.cols() < 1) throw DataError("iforest: need at least 1 column");
    IsolationForest f;
    f.width_ = x.cols();
    f.psi_ = std::min(opt.max_samples, x.rows());
    const auto limit = static_cast<std::size_t>(std::ceil(std::log2(static_cast<double>(f.psi_))));
    f.trees_.resize(opt.trees);
    parallel_for(
        opt.trees,
        [&](std::size_t t) {
          Rng rng(derive_seed(seed, t));
          auto sample = rng.permutation(x.rows());
          sample.resize(f.psi_);
          ITree tree;
          grow(x, sample, 0, limit, rng, tree);
          f.trees_[t] = std::move(tree);
        },
        threads);
    return f;
  }

  /// s(x) = 2^(-E[h(x)] / c(psi)), higher is more anomalous.
  std::vector<double> score(const Matrix& x, std::size_t threads = 1) const {
    if (x.cols() != width_) throw DataError("iforest: feature width mismatch");
    const double norm = average_path_length(static_cast<double>(psi_));
    std::vector<double> out(x.rows());
    parallel_for(
        x.rows(),
        [&](std::size_t i) {
          std::vector<double> h(trees_.size());
          for (std::size_t t = 0; t < trees_.size(); ++t) h[t] = trees_[t].path_length(x.row(i));
          const double eh = mean(h);
          out[i] = norm > 0.0 ? std::pow(2.0, -eh / norm) : 0.5;
        },
        threads);
    return out;
  }

  const std::vector<ITree>& trees() const noexcept { return trees_; }
  std::size_t psi() const noexcept { return psi_; }
  std::size_t width() const noexcept { return width_; }

 private:
  static std::uint32_t grow(const Matrix& x, std::vector<std::size_t>& idx, std::size_t depth, std::size_t limit,
                            Rng& rng, ITree& tree) {
    const auto at = static_cast<std::uint32_t>(tree.nodes.size());
    tree.nodes.push_back({-1, 0.0, 0, 0, static_cast<std::uint32_t>(idx.size())});
    if (depth >= limit || idx.size() <= 1) return at;
    std::vector<std::size_t> usable;
    std::vector<std::pair<double, double>> range;
    for (std::size_t j = 0; j < x.cols(); ++j) {
      double lo = x(idx[0], j), hi = lo;
      for (std::size_t i : idx) {
        lo = std::min(lo, x(i, j));
        hi = std::max(hi, x(i, j));
      }
      if (hi > lo) {
        usable.push_back(j);
        range.emplace_back(lo, hi);
      }
    }
    if (usable.empty()) return at;
    const std::size_t pick = rng.index(usable.size());
    const auto [lo, hi] = range[pick];
    double split = lo + rng.uniform_open() * (hi - lo);
    if (!(split > lo)) split = lo + (hi - lo) / 2.0;
    const std::size_t f = usable[pick];
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (x(i, f) < split ? l : r).push_back(i);
    const std::uint32_t li = grow(x, l, depth + 1, limit, rng, tree);
    const std::uint32_t ri = grow(x, r, depth + 1, limit, rng, tree);
    auto& node = tree.nodes[at];
    node.feature = static_cast<int>(f);
    node.split = split;
    node.left = li;
    node.right = ri;
    return at;
  }

  std::vector<ITree> trees_;
  std::size_t psi_ = 0;
  std::size_t width_ = 0;
};

inline void check_contamination(double contamination) {
  if (!(contamination > 0.0 && contamination <= 0.5))
    throw UsageError("contamination must lie in (0, 0.5], got " + std::to_string(contamination));
}

/// Score threshold: the (1 - contamination) type-7 quantile of the training scores.
inline double contamination_threshold(std::span<const double> train_scores, double contamination = 0.1) {
  check_contamination(contamination);
  return quantile(train_scores, 1.0 - contamination);
}

struct Detection {
  std::vector<double> scores;
  std::vector<bool> predicted;
  double threshold = 0.0;
};

inline Detection detect(const IsolationForest& model, std::span<const double> train_scores, const Matrix& x_test,
                        double contamination = 0.1, std::size_t threads = 1) {
  Detection d;
  d.threshold = contamination_threshold(train_scores, contamination);
  d.scores = model.score(x_test, threads);
  d.predicted = metrics::above(d.scores, d.threshold);
  return d;
}

struct DetectionMetrics {
  double roc_auc = kNaN;
  double average_precision = kNaN;
  double f1 = kNaN;
  double threshold = kNaN;
  bool defined = false;  // false when labels hold a single class
};

inline DetectionMetrics detection_metrics(std::span<const double> scores, const std::vector<bool>& labels,
                                          double threshold) {
  DetectionMetrics m;
  m.threshold = threshold;
  m.f1 = metrics::f1(metrics::above(scores, threshold), labels);
  const auto auc = metrics::roc_auc(scores, labels);
  const auto ap = metrics::average_precision(scores, labels);
  if (auc && ap) {
    m.roc_auc = *auc;
    m.average_precision = *ap;
    m.defined = true;
  }
  return m;
}

inline constexpr double kTransferEpsilon = 1e-6;

/// Relative improvement of the transfer metric over the target-only metric.
inline double transfer_gain(double m_t, double m_nt) { return (m_t - m_nt) / (m_nt + kTransferEpsilon); }

inline std::string scores_csv(std::span<const std::string> ids, std::span<const double> scores,
                              const std::vector<bool>& labels, const std::vector<bool>& predicted) {
  if (ids.size() != scores.size() || labels.size() != scores.size() || predicted.size() != scores.size())
    throw DataError("scores_csv: length mismatch");
  std::string out = "graph_id,score,label,predicted\n";
  for (std::size_t i = 0; i < ids.size(); ++i)
    out += ids[i] + "," + csv::format_double(scores[i], 17) + (labels[i] ? ",1" : ",0") + (predicted[i] ? ",1\n" : ",0\n");
  return out;
}

}  // namespace xcdtl
