#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "xcdtl/grid.hpp"

using namespace xcdtl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

fs::path scratch(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("xcdtl_grid_" + name);
  fs::remove_all(dir);
  return dir;
}

GridConfig small_config() {
  GridConfig c;
  c.seeds = {1, 24};
  c.master_pool = 400;
  c.train_pool = 200;
  c.test_size = 100;
  c.domains = {Domain::Social, Domain::Proteins};
  c.feature_mode = FeatureMode::All12;
  c.iforest_trees = 50;
  return c;
}

const GridData& small_data() {
  static const GridData g = prepare_grid(small_config());
  return g;
}

Matrix normal_matrix(std::size_t n, std::size_t w, std::uint64_t seed, double sd) {
  Rng rng(seed);
  Matrix m(n, w);
  for (std::size_t i = 0; i < n; ++i)
    for (double& v : m.row(i)) v = sd * rng.normal();
  return m;
}

}  // namespace

TEST(Corrupt, ZeroNoiseAndNoMissingIsIdentity) {
  const Matrix x = normal_matrix(50, 12, 1, 1.0);
  EXPECT_EQ(corrupt(x, 0.0, 0.0, 7), x);
}

TEST(Corrupt, NoiseScalesWithColumnStd) {
  const Matrix x = normal_matrix(1000, 1, 2, 2.0);
  const Matrix y = corrupt(x, 1.0, 0.0, 3);
  std::vector<double> diff(1000);
  for (std::size_t i = 0; i < 1000; ++i) diff[i] = y(i, 0) - x(i, 0);
  const double sd = std::sqrt(variance(diff));
  const double sigma = population_std(x.column(0));
  EXPECT_NEAR(sd, sigma, 0.1 * sigma);
}

TEST(Corrupt, MissingCellsFilledWithMedians) {
  const Matrix x = normal_matrix(500, 12, 4, 1.0);
  const Matrix y = corrupt(x, 0.0, 0.05, 5);
  std::size_t changed = 0;
  for (std::size_t j = 0; j < 12; ++j) {
    std::vector<double> kept;
    for (std::size_t i = 0; i < 500; ++i)
      if (y(i, j) == x(i, j)) kept.push_back(x(i, j));
    const double med = median(kept);
    for (std::size_t i = 0; i < 500; ++i) {
      if (y(i, j) != x(i, j)) {
        ++changed;
        EXPECT_DOUBLE_EQ(y(i, j), med);
      }
    }
  }
  EXPECT_EQ(changed, 300u);
  EXPECT_EQ(corrupt(x, 0.5, 0.05, 5), corrupt(x, 0.5, 0.05, 5));
  EXPECT_NE(corrupt(x, 0.5, 0.05, 5), corrupt(x, 0.5, 0.05, 6));
}

TEST(Cells, SeedFormula) {
  const CellKey k{Domain::Social, Domain::Molecular, 42, 0.1, 0.9};
  EXPECT_EQ(cell_seed(k, "nt"), 42u ^ fnv1a64("Social|Molecular|0.1|0.9|nt"));
  EXPECT_NE(cell_seed(k, "nt"), cell_seed(k, "t"));
}

TEST(Cells, DefaultGridHas1080Cells) {
  const GridConfig c;
  EXPECT_EQ(grid_cells(c).size(), 1080u);
  const auto cells = grid_cells(c);
  EXPECT_TRUE(std::is_sorted(cells.begin(), cells.end()));
  GridConfig one = c;
  one.pairs = {{Domain::Proteins, Domain::Social}};
  one.seeds = {7};
  EXPECT_EQ(grid_cells(one).size(), 9u);
}

TEST(Cells, SizesDeterminismAndGains) {
  const GridConfig cfg = small_config();
  const auto& g = small_data();
  const SeedSplit s = split_pool(g.pools.at(Domain::Social), Domain::Social, 1, cfg);
  const SeedSplit t = split_pool(g.pools.at(Domain::Proteins), Domain::Proteins, 1, cfg);
  EXPECT_EQ(s.train_pool.rows(), 200u);
  EXPECT_EQ(t.test.rows(), 100u);
  const AnchorPlan plan = anchor_plan(g, cfg, Domain::Social, Domain::Proteins);
  const CellKey k{Domain::Social, Domain::Proteins, 1, 0.1, 0.5};
  const CellData data{&s.train_pool, &t.train_pool, &t.test, &t.test_labels};
  const CellResult a = run_cell(k, data, plan, cfg);
  EXPECT_EQ(a.n_train_target, 20u);
  EXPECT_EQ(a.n_train_source, 200u);
  EXPECT_EQ(a.status, "ok");
  EXPECT_EQ(result_row(a), result_row(run_cell(k, data, plan, cfg)));
  EXPECT_EQ(a.tgi.roc, transfer_gain(a.t.roc_auc, a.nt.roc_auc));
  EXPECT_EQ(a.tgi.f1, transfer_gain(a.t.f1, a.nt.f1));
  EXPECT_EQ(a.tgi.ap, transfer_gain(a.t.average_precision, a.nt.average_precision));
}

TEST(Cells, SourceDominatesAtLowAlpha) {
  GridConfig cfg;
  cfg.feature_mode = FeatureMode::All12;
  const Matrix source = normal_matrix(500, 12, 1, 1.0), pool = normal_matrix(500, 12, 2, 1.0),
               test = normal_matrix(250, 12, 3, 1.0);
  std::vector<bool> labels(250, false);
  for (std::size_t i = 0; i < 25; ++i) labels[i * 10] = true;
  const AnchorPlan plan{{0, 1, 2, 3, 4, 5, 6, 7}, {}, false};
  const auto r = run_cell({Domain::Social, Domain::Molecular, 1, 0.1, 0.1}, {&source, &pool, &test, &labels}, plan, cfg);
  EXPECT_EQ(r.n_train_target, 50u);
  EXPECT_EQ(r.n_train_source, 500u);
}

TEST(Cells, InDistributionSourceDoesNotHurt) {
  GridConfig cfg = small_config();
  cfg.master_pool = 1000;
  cfg.train_pool = 500;
  cfg.test_size = 250;
  cfg.domains = {Domain::Linguistic};
  const GridData g = prepare_grid(cfg);
  const DomainPools& pool = g.pools.at(Domain::Linguistic);
  double nt = 0, t = 0;
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const SeedSplit split = split_pool(pool, Domain::Linguistic, seed, cfg);
    // Source: the 250 master graphs outside this seed's train-pool and test set.
    Rng rng(seed ^ fnv1a64("pool|Linguistic"));
    const auto perm = rng.permutation(pool.master.rows());
    const std::vector<std::size_t> rest(perm.begin() + 750, perm.end());
    const Matrix source = pool.master.select_rows(rest);
    const AnchorPlan plan = anchor_plan(g, cfg, Domain::Linguistic, Domain::Linguistic);
    GridConfig clean = cfg;
    clean.missing_frac = 0.0;
    const auto r = run_cell({Domain::Linguistic, Domain::Social, seed, 0.5, 0.0},
                            {&source, &split.train_pool, &split.test, &split.test_labels}, plan, clean);
    nt += r.nt.roc_auc / 10.0;
    t += r.t.roc_auc / 10.0;
  }
  EXPECT_GE(t, nt - 0.05);
}

TEST(Cells, IllConditionedAnchorsRetryWithGlobalSet) {
  GridConfig cfg;
  const Matrix source = normal_matrix(100, 12, 1, 1.0), pool = normal_matrix(500, 12, 2, 1.0),
               test = normal_matrix(50, 12, 3, 1.0);
  std::vector<bool> labels(50, false);
  labels[0] = labels[7] = labels[30] = true;
  const AnchorPlan plan{{3, 3, 3, 3, 3, 3, 3, 3}, {0, 1, 2, 4, 5, 6, 7, 8}, false};
  const auto r = run_cell({Domain::Social, Domain::Molecular, 1, 0.5, 0.1}, {&source, &pool, &test, &labels}, plan, cfg);
  EXPECT_TRUE(r.fallback);
  EXPECT_EQ(r.anchors, plan.global_anchors);
  const auto keep = run_cell({Domain::Social, Domain::Molecular, 1, 0.5, 0.1}, {&source, &pool, &test, &labels},
                             {{0, 1, 2, 4, 5, 6, 7, 8}, {3, 3, 3, 3, 3, 3, 3, 3}, false}, cfg);
  EXPECT_FALSE(keep.fallback);
}

TEST(Grid, OnePairOneSeedGivesNineSortedRows) {
  GridConfig cfg = small_config();
  cfg.seeds = {24};
  cfg.pairs = {{Domain::Proteins, Domain::Social}};
  const auto dir = scratch("nine");
  const auto s = run_grid(cfg, small_data(), dir);
  EXPECT_EQ(s.computed, 9u);
  const auto rows = load_results(dir / "results.csv");
  ASSERT_EQ(rows.size(), 9u);
  for (std::size_t i = 1; i < rows.size(); ++i) EXPECT_LT(rows[i - 1].key, rows[i].key);
  for (const auto& r : rows) {
    EXPECT_EQ(r.status, "ok");
    EXPECT_EQ(r.tgi_roc, transfer_gain(r.t_roc, r.nt_roc));
  }
  EXPECT_EQ(slurp(dir / "results.csv").substr(0, kResultsHeader.size()), kResultsHeader);
  fs::remove_all(dir);
}

TEST(Grid, ThreadCountDoesNotChangeBytes) {
  const GridConfig cfg = small_config();
  const auto a = scratch("t1"), b = scratch("t4");
  run_grid(cfg, small_data(), a, 1);
  run_grid(cfg, small_data(), b, 4);
  EXPECT_EQ(slurp(a / "results.csv"), slurp(b / "results.csv"));
  EXPECT_EQ(slurp(a / "cells_detail.csv"), slurp(b / "cells_detail.csv"));
  EXPECT_EQ(load_results(a / "results.csv").size(), 2u * 2u * 9u);
  fs::remove_all(a);
  fs::remove_all(b);
}

TEST(Grid, ResumeSkipsExistingCells) {
  const GridConfig cfg = small_config();
  const auto dir = scratch("resume");
  run_grid(cfg, small_data(), dir);
  const std::string full = slurp(dir / "results.csv");
  // Drop every third data row and resume.
  std::istringstream in(full);
  std::string line, cut;
  for (std::size_t i = 0; std::getline(in, line); ++i)
    if (i == 0 || i % 3 != 0) (cut += line) += '\n';
  csv::write_file(dir / "results.csv", cut);
  const auto s = run_grid(cfg, small_data(), dir);
  EXPECT_EQ(s.skipped + s.computed, s.total);
  EXPECT_EQ(s.computed, 12u);
  EXPECT_EQ(slurp(dir / "results.csv"), full);
  csv::write_file(dir / "results.csv", "not,a,header\n");
  EXPECT_THROW(run_grid(cfg, small_data(), dir), ParseError);
  fs::remove_all(dir);
}

TEST(Config, JsonRoundTripAndValidation) {
  GridConfig c;
  c.pairs = {{Domain::Social, Domain::Proteins}};
  c.feature_mode = FeatureMode::All12;
  const GridConfig d = grid_config_from_json(nlohmann::json::parse(to_json(c).dump()));
  EXPECT_EQ(d.seeds, c.seeds);
  EXPECT_EQ(d.pairs, c.pairs);
  EXPECT_EQ(d.feature_mode, FeatureMode::All12);
  EXPECT_EQ(grid_config_from_json(nlohmann::json::object()).seeds.size(), 10u);
  EXPECT_THROW(grid_config_from_json(nlohmann::json::parse(R"({"alphas":[0.0]})")), UsageError);
  EXPECT_THROW(grid_config_from_json(nlohmann::json::parse(R"({"seeds":[1,1]})")), UsageError);
  EXPECT_THROW(grid_config_from_json(nlohmann::json::parse(R"({"colour":1})")), UsageError);
  EXPECT_THROW(grid_config_from_json(nlohmann::json::parse(R"({"pairs":["Social:Social"]})")), UsageError);
  EXPECT_THROW(grid_config_from_json(nlohmann::json::parse(R"({"contamination":0.7})")), UsageError);
}

TEST(Pools, SplitIsDisjointAndLabelsHaveTenPercentScale) {
  const GridConfig cfg = small_config();
  const auto& pools = small_data().pools.at(Domain::Social);
  const SeedSplit s = split_pool(pools, Domain::Social, 42, cfg);
  const auto positives = std::count(s.test_labels.begin(), s.test_labels.end(), true);
  EXPECT_GT(positives, 0);
  EXPECT_LT(positives, 30);
  std::set<std::size_t> seen(s.train_index.begin(), s.train_index.end());
  seen.insert(s.test_index.begin(), s.test_index.end());
  EXPECT_EQ(seen.size(), 300u);
  EXPECT_EQ(s.test.row(0)[0], pools.master(s.test_index[0], 0));
}
