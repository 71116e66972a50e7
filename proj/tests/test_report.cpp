#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>
#include <sstream>

#include "xcdtl/report.hpp"

using namespace xcdtl;
namespace fs = std::filesystem;

namespace {

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// A synthetic 1080-cell results directory plus IIT tables.
fs::path fake_results(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("xcdtl_report_" + name);
  fs::remove_all(dir);
  Rng rng(11);
  std::string out(kResultsHeader);
  out += '\n';
  for (const CellKey& k : grid_cells(GridConfig{})) {
    CellResult r;
    r.key = k;
    r.nt = {0.5 + 0.4 * rng.uniform(), 0.2 + 0.5 * rng.uniform(), 0.1 + 0.6 * rng.uniform(), 0.5, true};
    r.t = {0.5 + 0.4 * rng.uniform(), 0.2 + 0.5 * rng.uniform(), 0.1 + 0.6 * rng.uniform(), 0.5, true};
    r.tgi = transfer_gains(r.nt, r.t);
    (out += result_row(r)) += '\n';
  }
  csv::write_file(dir / "results.csv", out);
  std::vector<IITTable> tables;
  for (Domain s : kAllDomains)
    for (Domain t : kAllDomains) {
      if (s == t) continue;
      IITTable tab{s, t, std::vector<IITRow>(kNumFeatures), {}, 0.0};
      for (auto& row : tab.rows) {
        row.borda = 1.0 + 11.0 * rng.uniform();
        row.rho = rng.uniform();
        row.delta = rng.uniform();
      }
      finalize_table(tab);
      tables.push_back(tab);
    }
  csv::write_file(dir / "iit.csv", iit_csv(tables));
  return dir;
}

}  // namespace

TEST(Report, ShapesCountsAndConsistency) {
  const auto dir = fake_results("shape");
  const auto out = dir / "report";
  emit_report(dir, out);
  const auto pair_table = csv::read(out / "pair_table.csv");
  ASSERT_EQ(pair_table.rows.size(), 12u);
  for (std::size_t r = 0; r < 12; ++r) {
    EXPECT_EQ(pair_table.number(r, "cells"), 90.0);
    for (const char* m : {"roc", "ap", "f1"}) {
      const std::string s(m);
      EXPECT_EQ(pair_table.number(r, "tgi_" + s),
                transfer_gain(pair_table.number(r, "t_" + s), pair_table.number(r, "nt_" + s)));
    }
  }
  const auto regimes = csv::read(out / "regimes.csv");
  ASSERT_EQ(regimes.rows.size(), 9u);
  for (std::size_t r = 0; r < regimes.rows.size(); ++r) {
    const std::string name = regimes.text(r, "regime");
    EXPECT_EQ(regimes.number(r, "cells"), name == "full_grid" ? 1080.0 : 120.0);
    EXPECT_EQ(regimes.number(r, "pairs"), 12.0);
  }
  EXPECT_EQ(csv::read(out / "global_ranking.csv").rows.size(), 12u);
  const auto st = csv::read(out / "stats.csv");
  for (std::size_t r = 0; r < st.rows.size(); ++r) {
    const double p = st.number(r, "p_value");
    if (!std::isnan(p)) {
      EXPECT_GE(p, 0.0);
      EXPECT_LE(p, 1.0);
    }
  }
  EXPECT_EQ(csv::read(out / "dunn.csv").rows.size(), 3u * 18u * 17u / 2u);
  EXPECT_TRUE(fs::exists(out / "digest.md"));
  fs::remove_all(dir);
}

TEST(Report, RegressionRoundTripsThroughCsv) {
  const auto dir = fake_results("regression");
  emit_report(dir, dir / "report");
  const auto rows = load_results(dir / "results.csv");
  const auto tables = load_iit_tables(dir / "iit.csv");
  for (const auto& regime : report_regimes()) {
    const auto direct = regression_tgi_vs_iit(rows, tables, regime);
    EXPECT_EQ(direct.points.size(), 12u);
    const auto again = load_regression(dir / "report" / ("regression_" + regime.name + ".csv"));
    EXPECT_NEAR(again.pearson_r, direct.fit.pearson_r, 1e-12);
    EXPECT_NEAR(again.slope, direct.fit.slope, 1e-12);
  }
  fs::remove_all(dir);
}

TEST(Report, RerunIsByteIdentical) {
  const auto dir = fake_results("rerun");
  emit_report(dir, dir / "a");
  emit_report(dir, dir / "b");
  for (const char* f : {"pair_table.csv", "regimes.csv", "stats.csv", "dunn.csv", "digest.md", "global_ranking.csv"})
    EXPECT_EQ(slurp(dir / "a" / f), slurp(dir / "b" / f)) << f;
  fs::remove_all(dir);
}

TEST(Report, MissingInputsAreListed) {
  const auto dir = fs::temp_directory_path() / "xcdtl_report_missing";
  fs::remove_all(dir);
  fs::create_directories(dir);
  try {
    emit_report(dir, dir / "out");
    FAIL();
  } catch (const DataError& e) {
    const std::string msg = e.what();
    EXPECT_NE(msg.find("results.csv"), std::string::npos);
    EXPECT_NE(msg.find("iit.csv"), std::string::npos);
  }
  fs::remove_all(dir);
}

TEST(Report, UnusableCellsAreExcluded) {
  std::vector<ParsedResult> rows(4);
  for (std::size_t i = 0; i < 4; ++i) {
    rows[i].key = {Domain::Social, Domain::Molecular, i, 0.9, 0.9};
    rows[i].nt_f1 = 0.2;
    rows[i].t_f1 = 0.4;
    rows[i].status = "ok";
  }
  rows[3].status = "undefined";
  rows[3].t_f1 = kNaN;
  const auto s = summarize_regime(rows, report_regimes()[2]);
  EXPECT_EQ(s.agg.cells, 3u);
  EXPECT_NEAR(s.agg.tgi[2], transfer_gain(0.4, 0.2), 1e-12);
  EXPECT_EQ(s.pairs_t_better[2], 1u);
}
