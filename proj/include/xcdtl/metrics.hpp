#pragma once

#include <algorithm>
#include <cstddef>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "xcdtl/core/error.hpp"
#include "xcdtl/core/numeric.hpp"

namespace xcdtl::metrics {

/// ROC-AUC via the Mann-Whitney statistic; tied scores count 0.5. Empty when a class is missing.
inline std::optional<double> roc_auc(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DataError("roc_auc: length mismatch");
  std::size_t pos = 0;
  for (bool b : labels) pos += b;
  const std::size_t neg = labels.size() - pos;
  if (pos == 0 || neg == 0) return std::nullopt;
  const auto ranks = average_ranks(scores);
  double rank_sum = 0.0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (labels[i]) rank_sum += ranks[i];
  const double p = static_cast<double>(pos);
  const double u = rank_sum - p * (p + 1.0) / 2.0;
  return u / (p * static_cast<double>(neg));
}

/**
 * Average precision: sum over distinct score thresholds (descending) of
 * (R_k - R_{k-1}) * P_k. Tied scores enter together.
 */
inline std::optional<double> average_precision(std::span<const double> scores, const std::vector<bool>& labels) {
  if (scores.size() != labels.size()) throw DataError("average_precision: length mismatch");
  std::size_t total_pos = 0;
  for (bool b : labels) total_pos += b;
  if (total_pos == 0 || total_pos == labels.size()) return std::nullopt;
  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });
  double ap = 0.0, prev_recall = 0.0;
  std::size_t tp = 0, seen = 0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) {
      tp += labels[order[j]];
      ++j;
    }
    seen = j;
    const double recall = static_cast<double>(tp) / static_cast<double>(total_pos);
    const double precision = static_cast<double>(tp) / static_cast<double>(seen);
    ap += (recall - prev_recall) * precision;
    prev_recall = recall;
    i = j;
  }
  return ap;
}

/// Binary F1 of the positive class; 0 when there are no true positives.
inline double f1(const std::vector<bool>& predicted, const std::vector<bool>& labels) {
  if (predicted.size() != labels.size()) throw DataError("f1: length mismatch");
  std::size_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < labels.size(); ++i) {
    tp += predicted[i] && labels[i];
    fp += predicted[i] && !labels[i];
    fn += !predicted[i] && labels[i];
  }
  if (tp == 0) return 0.0;
  return 2.0 * static_cast<double>(tp) / static_cast<double>(2 * tp + fp + fn);
}

inline std::vector<bool> above(std::span<const double> scores, double threshold) {
  std::vector<bool> out(scores.size());
  for (std::size_t i = 0; i < scores.size(); ++i) out[i] = scores[i] > threshold;
  return out;
}

}  // namespace xcdtl::metrics
