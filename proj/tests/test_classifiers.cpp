#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "xcdtl/classifiers.hpp"
#include "xcdtl/generators.hpp"

using namespace xcdtl;

namespace {

// Gaussian blobs, one per class, centred at `spread` * class index on every axis.
std::pair<Matrix, Labels> blobs(std::size_t per_class, std::size_t classes, std::size_t dims, double spread,
                                std::uint64_t seed) {
  Rng rng(seed);
  Matrix x;
  Labels y;
  std::vector<double> row(dims);
  for (std::size_t c = 0; c < classes; ++c)
    for (std::size_t i = 0; i < per_class; ++i) {
      for (auto& v : row) v = spread * static_cast<double>(c) + rng.normal();
      x.push_row(row);
      y.push_back(c);
    }
  return {x, y};
}

const FeatureMatrix& domain_features() {
  static const FeatureMatrix fm = [] {
    FeatureMatrix out;
    for (Domain d : kAllDomains) out = concat(out, compute_feature_matrix(generate_ensemble(d, 500, 1)));
    return out;
  }();
  return fm;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST(LogisticRegression, SeparableBlobs) {
  const auto [x, y] = blobs(100, 2, 3, 8.0, 11);
  const auto m = train_classifier(ModelKind::LR, x, y, 1);
  EXPECT_GE(evaluate_multiclass(m, x, y).accuracy, 0.99);
}

TEST(LogisticRegression, GradientMatchesCentralDifferences) {
  Matrix x;
  x.push_row(std::vector<double>{0.5, -1.0, 2.0});
  x.push_row(std::vector<double>{1.5, 0.3, -0.7});
  x.push_row(std::vector<double>{-0.2, 0.8, 0.1});
  x.push_row(std::vector<double>{2.2, -0.4, 1.1});
  x.push_row(std::vector<double>{-1.3, 1.7, 0.6});
  const Labels y{0, 1, 2, 1, 0};
  Rng rng(3);
  std::vector<double> theta(3 * 3 + 3);
  for (auto& t : theta) t = rng.normal();
  const auto e = LogisticRegression::evaluate(x, y, 3, 1.0, theta);
  for (std::size_t w = 0; w < theta.size(); ++w) {
    const double h = 1e-5;
    auto plus = theta, minus = theta;
    plus[w] += h;
    minus[w] -= h;
    const double fd = (LogisticRegression::evaluate(x, y, 3, 1.0, plus).objective -
                       LogisticRegression::evaluate(x, y, 3, 1.0, minus).objective) /
                      (2 * h);
    EXPECT_NEAR(e.gradient[w], fd, 1e-5 * std::max(1.0, std::abs(fd))) << w;
  }
}

TEST(LogisticRegression, MonotoneObjectiveAndConvergedGradientOnDomainTask) {
  const auto z = standardize(domain_features());
  const auto lr = LogisticRegression::fit(z.values(), domain_labels(z));
  const auto& h = lr.objective_history();
  for (std::size_t i = 1; i < h.size(); ++i) EXPECT_LT(h[i], h[i - 1]);
  EXPECT_LT(lr.final_gradient_norm(), 1e-6);
  EXPECT_LE(lr.iterations(), 2000u);
}

TEST(LogisticRegression, ImportanceIsNormalizedMeanAbsoluteWeight) {
  const auto [x, y] = blobs(40, 3, 4, 2.0, 5);
  const auto lr = LogisticRegression::fit(x, y);
  std::vector<double> want(4, 0.0);
  for (std::size_t j = 0; j < 4; ++j)
    for (std::size_t c = 0; c < 3; ++c) want[j] += std::abs(lr.weight(c, j)) / 3.0;
  const double s = sum(want);
  for (std::size_t j = 0; j < 4; ++j) EXPECT_NEAR(lr.importance()[j], want[j] / s, 1e-12);
}

TEST(GradientBoosting, TrainingDevianceNonIncreasing) {
  const auto [x, y] = blobs(60, 4, 5, 1.0, 8);
  const auto gb = GradientBoosting::fit(x, y);
  const auto& d = gb.training_deviance();
  ASSERT_EQ(d.size(), 101u);
  for (std::size_t i = 1; i < d.size(); ++i) EXPECT_LE(d[i], d[i - 1] + 1e-12) << i;
  EXPECT_LT(d.back(), d.front());
}

TEST(RandomForest, PermutedLabelsGiveChanceAccuracy) {
  const auto [x, y0] = blobs(100, 4, 12, 1.0, 21);
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    Labels y = y0;
    Rng(seed).shuffle(y);
    const auto split = stratified_split(y, 0.2, seed);
    Labels ytr, yte;
    for (auto i : split.train) ytr.push_back(y[i]);
    for (auto i : split.test) yte.push_back(y[i]);
    const auto rf = train_classifier(ModelKind::RF, x.select_rows(split.train), ytr, seed);
    const double acc = evaluate_multiclass(rf, x.select_rows(split.test), yte).accuracy;
    EXPECT_GE(acc, 0.15) << seed;
    EXPECT_LE(acc, 0.35) << seed;
  }
}

TEST(RandomForest, ImportancePermutesWithColumns) {
  const auto [x, y] = blobs(50, 3, 6, 1.5, 4);
  const std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
  ClassifierOptions base, permuted;
  permuted.forest.feature_keys.assign(perm.begin(), perm.end());
  const auto a = train_classifier(ModelKind::RF, x, y, 99, base);
  const auto b = train_classifier(ModelKind::RF, x.select_cols(perm), y, 99, permuted);
  for (std::size_t c = 0; c < perm.size(); ++c) EXPECT_DOUBLE_EQ(b.importance()[c], a.importance()[perm[c]]);
}

TEST(Classifiers, ImportanceIsADistribution) {
  const auto [x, y] = blobs(30, 4, 5, 1.0, 6);
  for (ModelKind k : kAllModels) {
    const auto m = train_classifier(k, x, y, 2);
    EXPECT_NEAR(sum(m.importance()), 1.0, 1e-9) << to_string(k);
    for (double v : m.importance()) EXPECT_GE(v, 0.0);
  }
}

TEST(Classifiers, DeterministicGivenSeed) {
  const auto [x, y] = blobs(30, 3, 4, 1.0, 7);
  for (ModelKind k : kAllModels) {
    const auto a = train_classifier(k, x, y, 5);
    const auto b = train_classifier(k, x, y, 5);
    EXPECT_EQ(a.predict_proba(x), b.predict_proba(x)) << to_string(k);
  }
}

TEST(Classifiers, RejectsDegenerateInput) {
  const auto [x, y] = blobs(30, 1, 3, 1.0, 7);
  EXPECT_THROW(train_classifier(ModelKind::LR, x, y, 1), DataError);
  const auto [x2, y2] = blobs(5, 2, 3, 1.0, 7);
  EXPECT_THROW(train_classifier(ModelKind::RF, x2, y2, 1), DataError);
}

TEST(Classifiers, DomainTaskHoldout) {
  const std::vector<std::uint64_t> seeds{42};
  for (const auto& r : run_domain_classification(domain_features(), seeds)) {
    EXPECT_GE(r.metrics.accuracy, 0.90) << to_string(r.kind);
    EXPECT_GE(r.metrics.roc_auc, 0.97) << to_string(r.kind);
    EXPECT_EQ(r.metrics.confusion.rows(), 4u);
  }
}

TEST(Evaluate, PerfectPredictor) {
  Matrix p(8, 4);
  Labels y;
  for (std::size_t i = 0; i < 8; ++i) {
    y.push_back(i % 4);
    p(i, i % 4) = 1.0;
  }
  const auto m = multiclass_metrics(p, y);
  EXPECT_EQ(m.accuracy, 1.0);
  EXPECT_EQ(m.f1_macro, 1.0);
  EXPECT_EQ(m.roc_auc, 1.0);
}

TEST(Evaluate, ConstantPredictorOnBalancedClasses) {
  Matrix p(40, 4, 0.25);
  Labels y;
  for (std::size_t i = 0; i < 40; ++i) {
    y.push_back(i % 4);
    p(i, 0) = 0.4;  // always class 0
  }
  const auto m = multiclass_metrics(p, y);
  EXPECT_DOUBLE_EQ(m.accuracy, 0.25);
  EXPECT_DOUBLE_EQ(m.f1_macro, 0.1);
  EXPECT_DOUBLE_EQ(m.roc_auc, 0.5);  // every score tied within each column
  EXPECT_EQ(m.confusion_normalized()(2, 0), 1.0);
}

TEST(Evaluate, AbsentClassSkippedFromAuc) {
  Matrix p(4, 3);
  const Labels y{0, 1, 0, 1};
  for (std::size_t i = 0; i < 4; ++i) p(i, y[i]) = 1.0;
  const auto m = multiclass_metrics(p, y);
  EXPECT_EQ(m.auc_skipped, (std::vector<std::size_t>{2}));
  EXPECT_EQ(m.roc_auc, 1.0);
}

TEST(ImportanceRanks, OrderingAndTies) {
  const std::vector<double> imp{0.5, 0.3, 0.2, 0, 0, 0, 0, 0, 0, 0, 0, 0};
  const auto r = importance_ranks(imp);
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(r[j], static_cast<double>(j + 1));
  const auto eq = importance_ranks(std::vector<double>(12, 1.0 / 12));
  for (std::size_t j = 0; j < 12; ++j) EXPECT_EQ(eq[j], static_cast<double>(j + 1));
  const auto rev = importance_ranks(std::vector<double>{0.1, 0.2, 0.7});
  EXPECT_EQ(rev, (std::vector<double>{3, 2, 1}));
}

TEST(StratifiedSplit, PreservesClassProportions) {
  Labels y;
  for (std::size_t c = 0; c < 4; ++c) y.insert(y.end(), 500, c);
  const auto s = stratified_split(y, 0.2, 9);
  EXPECT_EQ(s.test.size(), 400u);
  EXPECT_EQ(s.train.size(), 1600u);
  std::vector<std::size_t> per(4, 0);
  for (auto i : s.test) ++per[y[i]];
  for (auto n : per) EXPECT_EQ(n, 100u);
  EXPECT_EQ(s.test, stratified_split(y, 0.2, 9).test);
  EXPECT_NE(s.test, stratified_split(y, 0.2, 10).test);
}
