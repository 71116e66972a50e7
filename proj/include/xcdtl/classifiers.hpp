#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
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

enum class ModelKind : std::uint8_t { RF, GB, LR };

inline constexpr std::array<ModelKind, 3> kAllModels{ModelKind::RF, ModelKind::GB, ModelKind::LR};

inline std::string_view to_string(ModelKind k) {
  switch (k) {
    case ModelKind::RF: return "RF";
    case ModelKind::GB: return "GB";
    case ModelKind::LR: return "LR";
  }
  return "?";
}

inline ModelKind parse_model_kind(std::string_view s) {
  for (ModelKind k : kAllModels)
    if (to_string(k) == s) return k;
  throw DataError("unknown model kind '" + std::string(s) + "'");
}

using Labels = std::vector<std::size_t>;

struct ForestOptions {
  std::size_t trees = 100;
  std::size_t max_features = 0;  // 0: ceil(sqrt(width))
  std::size_t min_split = 2;
  // Identity of each column for candidate-feature draws; defaults to the column index.
  std::vector<std::uint64_t> feature_keys;
};

struct BoostingOptions {
  std::size_t stages = 100;
  std::size_t depth = 3;
  double learning_rate = 0.1;
};

struct LogisticOptions {
  double lambda = 1.0;
  double tolerance = 1e-6;
  std::size_t max_iterations = 2000;
};

struct ClassifierOptions {
  ForestOptions forest;
  BoostingOptions boosting;
  LogisticOptions logistic;
  std::size_t threads = 0;
};

namespace detail {

struct TreeNode {
  int feature = -1;  // -1 marks a leaf
  double threshold = 0.0;
  std::size_t left = 0;
  std::size_t right = 0;
  std::vector<double> value;  // class frequencies, or a single leaf output
};

struct Tree {
  std::vector<TreeNode> nodes;

  const TreeNode& leaf(std::span<const double> x) const {
    std::size_t at = 0;
    while (nodes[at].feature >= 0)
      at = x[static_cast<std::size_t>(nodes[at].feature)] <= nodes[at].threshold ? nodes[at].left : nodes[at].right;
    return nodes[at];
  }
};

inline double split_point(double lo, double hi) {
  const double mid = lo + (hi - lo) / 2.0;
  return mid < hi ? mid : lo;
}

inline void validate_xy(const Matrix& x, const Labels& y) {
  if (x.rows() != y.size()) throw DataError("classifier: X and y lengths differ");
  if (x.rows() < 20) throw DataError("classifier: need at least 20 training rows");
  if (x.cols() == 0) throw DataError("classifier: no feature columns");
  std::vector<std::size_t> distinct(y.begin(), y.end());
  std::sort(distinct.begin(), distinct.end());
  distinct.erase(std::unique(distinct.begin(), distinct.end()), distinct.end());
  if (distinct.size() < 2) throw DataError("classifier: need at least two classes in y");
}

inline std::size_t class_count(const Labels& y) { return *std::max_element(y.begin(), y.end()) + 1; }

// CART with Gini impurity; samples may repeat (bootstrap multiplicity).
class GiniTreeBuilder {
 public:
  GiniTreeBuilder(const Matrix& x, const Labels& y, std::size_t classes, std::size_t max_features,
                  std::size_t min_split, std::span<const std::uint64_t> keys, Rng& rng,
                  std::vector<double>& importance)
      : x_(x), y_(y), k_(classes), mtry_(max_features), min_split_(min_split), keys_(keys), rng_(rng),
        importance_(importance) {}

  Tree build(std::vector<std::size_t> samples) {
    total_ = static_cast<double>(samples.size());
    grow(samples);
    return std::move(tree_);
  }

 private:
  double gini(const std::vector<double>& counts, double n) const {
    double s = 0.0;
    for (double c : counts) s += (c / n) * (c / n);
    return 1.0 - s;
  }

  std::size_t grow(std::vector<std::size_t>& idx) {
    const std::size_t at = tree_.nodes.size();
    tree_.nodes.emplace_back();
    const double n = static_cast<double>(idx.size());
    std::vector<double> counts(k_, 0.0);
    for (std::size_t i : idx) counts[y_[i]] += 1.0;
    const double parent = gini(counts, n);
    {
      auto& node = tree_.nodes[at];
      node.value.resize(k_);
      for (std::size_t c = 0; c < k_; ++c) node.value[c] = counts[c] / n;
    }
    if (idx.size() < min_split_ || parent <= 0.0) return at;

    // Visit features in a per-node random order keyed by column identity.
    const std::uint64_t node_seed = rng_.next();
    const std::size_t p = x_.cols();
    std::vector<std::pair<std::uint64_t, std::size_t>> order(p);
    for (std::size_t c = 0; c < p; ++c) order[c] = {mix64(node_seed ^ stable_hash(keys_[c])), c};
    std::sort(order.begin(), order.end());

    int best_feature = -1;
    double best_gain = -1.0, best_threshold = 0.0;
    std::size_t examined = 0;
    std::vector<std::size_t> sorted = idx;
    std::vector<double> left(k_);
    for (const auto& [key, f] : order) {
      if (examined >= mtry_) break;
      std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      if (x_(sorted.front(), f) == x_(sorted.back(), f)) continue;  // constant here; not counted
      ++examined;
      std::fill(left.begin(), left.end(), 0.0);
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        left[y_[sorted[i]]] += 1.0;
        const double lo = x_(sorted[i], f), hi = x_(sorted[i + 1], f);
        if (lo == hi) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        double sl = 0.0, sr = 0.0;
        for (std::size_t c = 0; c < k_; ++c) {
          sl += left[c] * left[c];
          const double r = counts[c] - left[c];
          sr += r * r;
        }
        const double child = (nl - sl / nl) / n + (nr - sr / nr) / n;  // weighted Gini of children
        const double gain = parent - child;
        if (gain > best_gain) {
          best_gain = gain;
          best_feature = static_cast<int>(f);
          best_threshold = split_point(lo, hi);
        }
      }
    }
    if (best_feature < 0) return at;

    importance_[static_cast<std::size_t>(best_feature)] += n / total_ * std::max(best_gain, 0.0);
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (x_(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? l : r).push_back(i);
    idx.clear();
    idx.shrink_to_fit();
    const std::size_t li = grow(l);
    const std::size_t ri = grow(r);
    auto& node = tree_.nodes[at];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = li;
    node.right = ri;
    return at;
  }

  const Matrix& x_;
  const Labels& y_;
  std::size_t k_, mtry_, min_split_;
  std::span<const std::uint64_t> keys_;
  Rng& rng_;
  std::vector<double>& importance_;
  double total_ = 1.0;
  Tree tree_;
};

// Least-squares regression tree of bounded depth with Newton-step leaf values.
class RegressionTreeBuilder {
 public:
  RegressionTreeBuilder(const Matrix& x, std::span<const double> residual, std::size_t max_depth, double leaf_scale,
                        std::vector<double>& importance)
      : x_(x), r_(residual), depth_(max_depth), scale_(leaf_scale), importance_(importance) {}

  Tree build() {
    std::vector<std::size_t> idx(x_.rows());
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    total_ = static_cast<double>(idx.size());
    grow(idx, 0);
    return std::move(tree_);
  }

 private:
  std::size_t grow(std::vector<std::size_t>& idx, std::size_t depth) {
    const std::size_t at = tree_.nodes.size();
    tree_.nodes.emplace_back();
    double sum = 0.0, sq = 0.0, hess = 0.0;
    for (std::size_t i : idx) {
      const double a = std::abs(r_[i]);
      sum += r_[i];
      sq += r_[i] * r_[i];
      hess += a * (1.0 - a);
    }
    tree_.nodes[at].value = {hess < 1e-150 ? 0.0 : scale_ * sum / hess};
    const double n = static_cast<double>(idx.size());
    if (depth >= depth_ || idx.size() < 2) return at;

    const double parent_sse = sq - sum * sum / n;
    int best_feature = -1;
    double best_score = sum * sum / n + 1e-12 * std::max(1.0, std::abs(sq));
    double best_threshold = 0.0;
    std::vector<std::size_t> sorted = idx;
    for (std::size_t f = 0; f < x_.cols(); ++f) {
      std::sort(sorted.begin(), sorted.end(), [&](std::size_t a, std::size_t b) { return x_(a, f) < x_(b, f); });
      double left = 0.0;
      for (std::size_t i = 0; i + 1 < sorted.size(); ++i) {
        left += r_[sorted[i]];
        const double lo = x_(sorted[i], f), hi = x_(sorted[i + 1], f);
        if (lo == hi) continue;
        const double nl = static_cast<double>(i + 1), nr = n - nl;
        const double right = sum - left;
        const double score = left * left / nl + right * right / nr;
        if (score > best_score) {
          best_score = score;
          best_feature = static_cast<int>(f);
          best_threshold = split_point(lo, hi);
        }
      }
    }
    if (best_feature < 0) return at;

    const double child_sse = sq - best_score;
    importance_[static_cast<std::size_t>(best_feature)] += std::max(parent_sse - child_sse, 0.0) / total_;
    std::vector<std::size_t> l, r;
    for (std::size_t i : idx) (x_(i, static_cast<std::size_t>(best_feature)) <= best_threshold ? l : r).push_back(i);
    const std::size_t li = grow(l, depth + 1);
    const std::size_t ri = grow(r, depth + 1);
    auto& node = tree_.nodes[at];
    node.feature = best_feature;
    node.threshold = best_threshold;
    node.left = li;
    node.right = ri;
    return at;
  }

  const Matrix& x_;
  std::span<const double> r_;
  std::size_t depth_;
  double scale_;
  std::vector<double>& importance_;
  double total_ = 1.0;
  Tree tree_;
};

inline std::vector<double> normalized(std::vector<double> v) {
  const double s = stable_sum(v);
  if (s <= 0.0) {
    std::fill(v.begin(), v.end(), 1.0 / static_cast<double>(v.size()));
  } else {
    for (double& x : v) x /= s;
  }
  return v;
}

inline void softmax_inplace(std::span<double> z) {
  const double mx = *std::max_element(z.begin(), z.end());
  double s = 0.0;
  for (double& v : z) s += (v = std::exp(v - mx));
  for (double& v : z) v /= s;
}

}  // namespace detail

class RandomForest {
 public:
  static RandomForest fit(const Matrix& x, const Labels& y, std::uint64_t seed, const ForestOptions& opt = {},
                          std::size_t threads = 0) {
    detail::validate_xy(x, y);
    RandomForest rf;
    rf.classes_ = detail::class_count(y);
    rf.width_ = x.cols();
    const std::size_t mtry = opt.max_features
                                 ? std::min(opt.max_features, x.cols())
                                 : static_cast<std::size_t>(std::ceil(std::sqrt(static_cast<double>(x.cols()))));
    std::vector<std::uint64_t> keys = opt.feature_keys;
    if (keys.empty()) {
      keys.resize(x.cols());
      std::iota(keys.begin(), keys.end(), std::uint64_t{0});
    }
    if (keys.size() != x.cols()) throw DataError("RandomForest: feature_keys width mismatch");

    rf.trees_.resize(opt.trees);
    std::vector<std::vector<double>> per_tree(opt.trees, std::vector<double>(x.cols(), 0.0));
    parallel_for(
        opt.trees,
        [&](std::size_t t) {
          Rng rng(derive_seed(seed, t));
          std::vector<std::size_t> boot(x.rows());
          for (auto& i : boot) i = rng.index(x.rows());
          detail::GiniTreeBuilder b(x, y, rf.classes_, mtry, opt.min_split, keys, rng, per_tree[t]);
          rf.trees_[t] = b.build(std::move(boot));
          per_tree[t] = detail::normalized(per_tree[t]);
        },
        threads);
    // Mean of per-tree normalized impurity decrease.
    std::vector<double> imp(x.cols(), 0.0);
    for (const auto& t : per_tree)
      for (std::size_t j = 0; j < imp.size(); ++j) imp[j] += t[j];
    rf.importance_ = detail::normalized(imp);
    return rf;
  }

  Matrix predict_proba(const Matrix& x) const {
    if (x.cols() != width_) throw DataError("RandomForest: feature width mismatch");
    Matrix p(x.rows(), classes_);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (const auto& t : trees_) {
        const auto& v = t.leaf(x.row(i)).value;
        for (std::size_t c = 0; c < classes_; ++c) p(i, c) += v[c];
      }
      for (std::size_t c = 0; c < classes_; ++c) p(i, c) /= static_cast<double>(trees_.size());
    }
    return p;
  }

  const std::vector<double>& importance() const noexcept { return importance_; }
  std::size_t classes() const noexcept { return classes_; }
  const std::vector<detail::Tree>& trees() const noexcept { return trees_; }

 private:
  std::vector<detail::Tree> trees_;
  std::vector<double> importance_;
  std::size_t classes_ = 0;
  std::size_t width_ = 0;
};

/// Multinomial-deviance gradient boosting with one depth-limited regression tree per class per stage.
class GradientBoosting {
 public:
  static GradientBoosting fit(const Matrix& x, const Labels& y, const BoostingOptions& opt = {}) {
    detail::validate_xy(x, y);
    GradientBoosting gb;
    const std::size_t k = detail::class_count(y);
    const std::size_t n = x.rows();
    gb.classes_ = k;
    gb.width_ = x.cols();
    gb.rate_ = opt.learning_rate;
    gb.init_.assign(k, 0.0);
    std::vector<double> prior(k, 0.0);
    for (std::size_t c : y) prior[c] += 1.0;
    for (std::size_t c = 0; c < k; ++c)
      gb.init_[c] = prior[c] > 0 ? std::log(prior[c] / static_cast<double>(n)) : std::log(1e-12);

    Matrix raw(n, k);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t c = 0; c < k; ++c) raw(i, c) = gb.init_[c];
    std::vector<double> imp(x.cols(), 0.0), residual(n), prob(k);
    Matrix p(n, k);
    const double scale = static_cast<double>(k - 1) / static_cast<double>(k);
    gb.deviance_.push_back(deviance(raw, y));
    for (std::size_t s = 0; s < opt.stages; ++s) {
      for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t c = 0; c < k; ++c) prob[c] = raw(i, c);
        detail::softmax_inplace(prob);
        for (std::size_t c = 0; c < k; ++c) p(i, c) = prob[c];
      }
      std::vector<detail::Tree> stage(k);
      for (std::size_t c = 0; c < k; ++c) {
        for (std::size_t i = 0; i < n; ++i) residual[i] = (y[i] == c ? 1.0 : 0.0) - p(i, c);
        detail::RegressionTreeBuilder b(x, residual, opt.depth, scale, imp);
        stage[c] = b.build();
        for (std::size_t i = 0; i < n; ++i) raw(i, c) += opt.learning_rate * stage[c].leaf(x.row(i)).value[0];
      }
      gb.stages_.push_back(std::move(stage));
      gb.deviance_.push_back(deviance(raw, y));
    }
    gb.importance_ = detail::normalized(imp);
    return gb;
  }

  Matrix decision_function(const Matrix& x) const {
    if (x.cols() != width_) throw DataError("GradientBoosting: feature width mismatch");
    Matrix raw(x.rows(), classes_);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < classes_; ++c) raw(i, c) = init_[c];
      for (const auto& stage : stages_)
        for (std::size_t c = 0; c < classes_; ++c) raw(i, c) += rate_ * stage[c].leaf(x.row(i)).value[0];
    }
    return raw;
  }

  Matrix predict_proba(const Matrix& x) const {
    Matrix p = decision_function(x);
    for (std::size_t i = 0; i < p.rows(); ++i) detail::softmax_inplace(p.row(i));
    return p;
  }

  /// Mean multinomial deviance on the training set: before stage 1, then after each stage.
  const std::vector<double>& training_deviance() const noexcept { return deviance_; }
  const std::vector<double>& importance() const noexcept { return importance_; }
  std::size_t classes() const noexcept { return classes_; }

 private:
  static double deviance(const Matrix& raw, const Labels& y) {
    std::vector<double> terms(raw.rows());
    for (std::size_t i = 0; i < raw.rows(); ++i) {
      const auto r = raw.row(i);
      const double mx = *std::max_element(r.begin(), r.end());
      double s = 0.0;
      for (double v : r) s += std::exp(v - mx);
      terms[i] = mx + std::log(s) - r[y[i]];
    }
    return mean(terms);
  }

  std::vector<double> init_;
  std::vector<std::vector<detail::Tree>> stages_;
  std::vector<double> importance_;
  std::vector<double> deviance_;
  std::size_t classes_ = 0;
  std::size_t width_ = 0;
  double rate_ = 0.1;
};

/**
 * Multinomial softmax regression with an L2 penalty on the weights.
 *
 * Objective: mean cross-entropy + lambda / (2N) * ||W||^2 (intercepts
 * unpenalized). Solved by gradient descent with Barzilai-Borwein trial
 * steps and Armijo backtracking, so every accepted step lowers the objective.
 */
class LogisticRegression {
 public:
  struct Evaluation {
    double objective = 0.0;
    std::vector<double> gradient;  // K*p weights (row-major by class), then K intercepts
  };

  /// Objective and gradient at packed parameters theta.
  static Evaluation evaluate(const Matrix& x, const Labels& y, std::size_t k, double lambda,
                             std::span<const double> theta) {
    const std::size_t n = x.rows(), p = x.cols();
    Evaluation e;
    e.gradient.assign(k * p + k, 0.0);
    std::vector<double> z(k), loss(n);
    for (std::size_t i = 0; i < n; ++i) {
      const auto xi = x.row(i);
      for (std::size_t c = 0; c < k; ++c) {
        double v = theta[k * p + c];
        for (std::size_t j = 0; j < p; ++j) v += theta[c * p + j] * xi[j];
        z[c] = v;
      }
      const double mx = *std::max_element(z.begin(), z.end());
      double s = 0.0;
      for (double v : z) s += std::exp(v - mx);
      loss[i] = mx + std::log(s) - z[y[i]];
      for (std::size_t c = 0; c < k; ++c) {
        const double d = std::exp(z[c] - mx) / s - (y[i] == c ? 1.0 : 0.0);
        for (std::size_t j = 0; j < p; ++j) e.gradient[c * p + j] += d * xi[j];
        e.gradient[k * p + c] += d;
      }
    }
    const double nn = static_cast<double>(n);
    double penalty = 0.0;
    for (std::size_t w = 0; w < k * p; ++w) penalty += theta[w] * theta[w];
    e.objective = mean(loss) + lambda / (2.0 * nn) * penalty;
    for (std::size_t w = 0; w < k * p + k; ++w) {
      e.gradient[w] /= nn;
      if (w < k * p) e.gradient[w] += lambda / nn * theta[w];
    }
    return e;
  }

  static LogisticRegression fit(const Matrix& x, const Labels& y, const LogisticOptions& opt = {}) {
    detail::validate_xy(x, y);
    LogisticRegression lr;
    const std::size_t k = detail::class_count(y), p = x.cols();
    lr.classes_ = k;
    lr.width_ = p;
    std::vector<double> theta(k * p + k, 0.0), trial(theta.size());
    auto cur = evaluate(x, y, k, opt.lambda, theta);
    lr.objective_.push_back(cur.objective);
    auto inf_norm = [](const std::vector<double>& g) {
      double m = 0.0;
      for (double v : g) m = std::max(m, std::abs(v));
      return m;
    };
    double step = 1.0;
    std::vector<double> prev_theta, prev_grad;
    for (std::size_t it = 0; it < opt.max_iterations; ++it) {
      if (inf_norm(cur.gradient) < opt.tolerance) break;
      if (!prev_theta.empty()) {
        double ss = 0.0, sy = 0.0;
        for (std::size_t w = 0; w < theta.size(); ++w) {
          const double s = theta[w] - prev_theta[w];
          ss += s * s;
          sy += s * (cur.gradient[w] - prev_grad[w]);
        }
        if (sy > 0.0) step = ss / sy;
      }
      double g2 = 0.0;
      for (double v : cur.gradient) g2 += v * v;
      Evaluation next;
      bool accepted = false;
      for (int halving = 0; halving < 60; ++halving) {
        for (std::size_t w = 0; w < theta.size(); ++w) trial[w] = theta[w] - step * cur.gradient[w];
        next = evaluate(x, y, k, opt.lambda, trial);
        if (next.objective <= cur.objective - 1e-4 * step * g2) {
          accepted = true;
          break;
        }
        step *= 0.5;
      }
      if (!accepted) break;
      prev_theta = theta;
      prev_grad = cur.gradient;
      theta = trial;
      cur = std::move(next);
      lr.objective_.push_back(cur.objective);
    }
    lr.iterations_ = lr.objective_.size() - 1;
    lr.gradient_norm_ = inf_norm(cur.gradient);
    lr.theta_ = theta;
    std::vector<double> imp(p, 0.0);
    for (std::size_t j = 0; j < p; ++j) {
      for (std::size_t c = 0; c < k; ++c) imp[j] += std::abs(theta[c * p + j]);
      imp[j] /= static_cast<double>(k);
    }
    lr.importance_ = detail::normalized(imp);
    return lr;
  }

  Matrix predict_proba(const Matrix& x) const {
    if (x.cols() != width_) throw DataError("LogisticRegression: feature width mismatch");
    const std::size_t k = classes_, p = width_;
    Matrix out(x.rows(), k);
    for (std::size_t i = 0; i < x.rows(); ++i) {
      for (std::size_t c = 0; c < k; ++c) {
        double v = theta_[k * p + c];
        for (std::size_t j = 0; j < p; ++j) v += theta_[c * p + j] * x(i, j);
        out(i, c) = v;
      }
      detail::softmax_inplace(out.row(i));
    }
    return out;
  }

  double weight(std::size_t cls, std::size_t feature) const { return theta_[cls * width_ + feature]; }
  const std::vector<double>& objective_history() const noexcept { return objective_; }
  double final_gradient_norm() const noexcept { return gradient_norm_; }
  std::size_t iterations() const noexcept { return iterations_; }
  const std::vector<double>& importance() const noexcept { return importance_; }
  std::size_t classes() const noexcept { return classes_; }

 private:
  std::vector<double> theta_;
  std::vector<double> importance_;
  std::vector<double> objective_;
  double gradient_norm_ = 0.0;
  std::size_t iterations_ = 0;
  std::size_t classes_ = 0;
  std::size_t width_ = 0;
};

struct TrainedModel {
  ModelKind kind = ModelKind::RF;
  std::uint64_t seed = 0;
  std::variant<RandomForest, GradientBoosting, LogisticRegression> model;

  const std::vector<double>& importance() const {
    return std::visit([](const auto& m) -> const std::vector<double>& { return m.importance(); }, model);
  }
  std::size_t classes() const {
    return std::visit([](const auto& m) { return m.classes(); }, model);
  }
  Matrix predict_proba(const Matrix& x) const {
    return std::visit([&](const auto& m) { return m.predict_proba(x); }, model);
  }
  /// Argmax class per row; ties go to the lower class index.
  Labels predict(const Matrix& x) const {
    const Matrix p = predict_proba(x);
    Labels out(p.rows());
    for (std::size_t i = 0; i < p.rows(); ++i) {
      const auto r = p.row(i);
      out[i] = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    }
    return out;
  }
};

inline TrainedModel train_classifier(ModelKind kind, const Matrix& x, const Labels& y, std::uint64_t seed,
                                     const ClassifierOptions& opt = {}) {
  switch (kind) {
    case ModelKind::RF: return {kind, seed, RandomForest::fit(x, y, seed, opt.forest, opt.threads)};
    case ModelKind::GB: return {kind, seed, GradientBoosting::fit(x, y, opt.boosting)};
    case ModelKind::LR: return {kind, seed, LogisticRegression::fit(x, y, opt.logistic)};
  }
  throw UsageError("unknown model kind");
}

struct MulticlassMetrics {
  double accuracy = 0.0;
  double f1_macro = 0.0;
  double roc_auc = kNaN;               // macro one-vs-rest over classes present in y_test
  std::vector<std::size_t> auc_skipped;  // classes absent from y_test
  Matrix confusion;                    // counts, rows = true class

  Matrix confusion_normalized() const {
    Matrix out = confusion;
    for (std::size_t i = 0; i < out.rows(); ++i) {
      double s = 0.0;
      for (double v : out.row(i)) s += v;
      if (s > 0)
        for (double& v : out.row(i)) v /= s;
    }
    return out;
  }
};

inline MulticlassMetrics multiclass_metrics(const Matrix& proba, const Labels& y) {
  if (proba.rows() != y.size() || y.empty()) throw DataError("evaluate: empty or mismatched test set");
  const std::size_t k = proba.cols();
  MulticlassMetrics m;
  m.confusion = Matrix(k, k);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < y.size(); ++i) {
    if (y[i] >= k) throw DataError("evaluate: test label outside the model's classes");
    const auto r = proba.row(i);
    const auto pred = static_cast<std::size_t>(std::max_element(r.begin(), r.end()) - r.begin());
    m.confusion(y[i], pred) += 1.0;
    correct += pred == y[i];
  }
  m.accuracy = static_cast<double>(correct) / static_cast<double>(y.size());
  double f1_sum = 0.0, auc_sum = 0.0;
  std::size_t auc_n = 0;
  for (std::size_t c = 0; c < k; ++c) {
    double tp = m.confusion(c, c), fp = 0.0, fn = 0.0;
    for (std::size_t o = 0; o < k; ++o)
      if (o != c) {
        fp += m.confusion(o, c);
        fn += m.confusion(c, o);
      }
    f1_sum += tp > 0 ? 2.0 * tp / (2.0 * tp + fp + fn) : 0.0;
    std::vector<bool> is_c(y.size());
    for (std::size_t i = 0; i < y.size(); ++i) is_c[i] = y[i] == c;
    if (auto auc = metrics::roc_auc(proba.column(c), is_c)) {
      auc_sum += *auc;
      ++auc_n;
    } else {
      m.auc_skipped.push_back(c);
    }
  }
  m.f1_macro = f1_sum / static_cast<double>(k);
  if (auc_n > 0) m.roc_auc = auc_sum / static_cast<double>(auc_n);
  return m;
}

inline MulticlassMetrics evaluate_multiclass(const TrainedModel& model, const Matrix& x, const Labels& y) {
  return multiclass_metrics(model.predict_proba(x), y);
}

/// Ranks 1..p by descending importance; exact ties go to the lower feature index.
inline std::vector<double> importance_ranks(std::span<const double> importance) {
  std::vector<std::size_t> order(importance.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return importance[a] > importance[b]; });
  std::vector<double> ranks(importance.size());
  for (std::size_t r = 0; r < order.size(); ++r) ranks[order[r]] = static_cast<double>(r + 1);
  return ranks;
}

inline std::vector<double> importance_ranks(const TrainedModel& m) { return importance_ranks(m.importance()); }

struct Split {
  std::vector<std::size_t> train;
  std::vector<std::size_t> test;
};

/// Per-class shuffle; round(test_fraction * class size) rows of each class go to test.
inline Split stratified_split(const Labels& y, double test_fraction, std::uint64_t seed) {
  if (!(test_fraction > 0.0 && test_fraction < 1.0)) throw UsageError("test fraction must lie in (0, 1)");
  Split s;
  const std::size_t k = y.empty() ? 0 : detail::class_count(y);
  for (std::size_t c = 0; c < k; ++c) {
    std::vector<std::size_t> members;
    for (std::size_t i = 0; i < y.size(); ++i)
      if (y[i] == c) members.push_back(i);
    Rng rng(derive_seed(seed, c));
    rng.shuffle(members);
    const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(members.size())));
    s.test.insert(s.test.end(), members.begin(), members.begin() + static_cast<std::ptrdiff_t>(n_test));
    s.train.insert(s.train.end(), members.begin() + static_cast<std::ptrdiff_t>(n_test), members.end());
  }
  std::sort(s.train.begin(), s.train.end());
  std::sort(s.test.begin(), s.test.end());
  return s;
}

inline Labels domain_labels(const FeatureMatrix& fm) {
  Labels y(fm.size());
  for (std::size_t i = 0; i < fm.size(); ++i) y[i] = static_cast<std::size_t>(fm.domains[i]);
  return y;
}

struct ModelRun {
  ModelKind kind = ModelKind::RF;
  std::uint64_t seed = 0;
  MulticlassMetrics metrics;
  std::vector<double> importance;
  std::vector<double> ranks;
};

/**
 * Domain classification over several seeds: per seed a stratified 80/20
 * holdout, standardization fitted on the training part, then all three
 * models. Output order is (seed, model).
 */
inline std::vector<ModelRun> run_domain_classification(const FeatureMatrix& fm, std::span<const std::uint64_t> seeds,
                                                       ClassifierOptions opt = {}, double test_fraction = 0.2) {
  const Labels y = domain_labels(fm);
  std::vector<ModelRun> runs(seeds.size() * kAllModels.size());
  const std::size_t threads = opt.threads;
  opt.threads = 1;
  parallel_for(
      runs.size(),
      [&](std::size_t job) {
        const std::uint64_t seed = seeds[job / kAllModels.size()];
        const ModelKind kind = kAllModels[job % kAllModels.size()];
        const Split split = stratified_split(y, test_fraction, seed);
        const FeatureMatrix train = fm.select(split.train);
        const Standardization params = fit_standardization(train);
        const Matrix xtr = apply_standardization(params, train).values();
        const Matrix xte = apply_standardization(params, fm.select(split.test)).values();
        Labels ytr, yte;
        for (std::size_t i : split.train) ytr.push_back(y[i]);
        for (std::size_t i : split.test) yte.push_back(y[i]);
        const TrainedModel model = train_classifier(kind, xtr, ytr, seed, opt);
        runs[job] = {kind, seed, evaluate_multiclass(model, xte, yte), model.importance(), importance_ranks(model)};
      },
      threads);
  return runs;
}

inline std::string metrics_csv(std::span<const ModelRun> runs) {
  std::string out = "model,seed,accuracy,f1_macro,roc_auc\n";
  for (const auto& r : runs)
    out += std::string(to_string(r.kind)) + "," + std::to_string(r.seed) + "," +
           csv::format_double(r.metrics.accuracy, 17) + "," + csv::format_double(r.metrics.f1_macro, 17) + "," +
           csv::format_double(r.metrics.roc_auc, 17) + "\n";
  return out;
}

inline std::string confusion_csv(std::span<const ModelRun> runs) {
  std::string out = "model,seed,true_domain,predicted_domain,count\n";
  for (const auto& r : runs)
    for (std::size_t t = 0; t < r.metrics.confusion.rows(); ++t)
      for (std::size_t p = 0; p < r.metrics.confusion.cols(); ++p)
        out += std::string(to_string(r.kind)) + "," + std::to_string(r.seed) + "," +
               std::string(to_string(static_cast<Domain>(t))) + "," +
               std::string(to_string(static_cast<Domain>(p))) + "," +
               std::to_string(static_cast<long long>(r.metrics.confusion(t, p))) + "\n";
  return out;
}

/// Long-format importances: model,seed,feature,importance,rank.
inline std::string ranks_csv(std::span<const ModelRun> runs) {
  std::string out = "model,seed,feature,importance,rank\n";
  for (const auto& r : runs)
    for (std::size_t j = 0; j < r.ranks.size(); ++j)
      out += std::string(to_string(r.kind)) + "," + std::to_string(r.seed) + "," + std::string(kFeatureNames[j]) +
             "," + csv::format_double(r.importance[j], 17) + "," + csv::format_double(r.ranks[j], 17) + "\n";
  return out;
}

}  // namespace xcdtl
