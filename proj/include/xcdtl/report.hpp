#pragma once

#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "xcdtl/anomaly.hpp"
#include "xcdtl/core/csv.hpp"
#include "xcdtl/core/error.hpp"
#include "xcdtl/grid.hpp"
#include "xcdtl/iit.hpp"
#include "xcdtl/stats.hpp"

namespace xcdtl {

inline constexpr std::array<std::string_view, 3> kMetricNames{"roc", "ap", "f1"};

struct Regime {
  std::string name;
  std::optional<double> alpha;
  std::optional<double> eta;

  bool matches(const ParsedResult& r) const {
    return (!alpha || std::abs(r.key.alpha - *alpha) < 1e-9) && (!eta || std::abs(r.key.eta - *eta) < 1e-9);
  }
};

inline const std::vector<Regime>& report_regimes() {
  static const std::vector<Regime> r{
      {"full_grid", std::nullopt, std::nullopt}, {"eta0.1_alpha0.1", 0.1, 0.1}, {"eta0.9_alpha0.9", 0.9, 0.9}};
  return r;
}

inline bool usable(const ParsedResult& r) { return r.status == "ok"; }

inline std::array<double, 3> nt_metrics(const ParsedResult& r) { return {r.nt_roc, r.nt_ap, r.nt_f1}; }
inline std::array<double, 3> t_metrics(const ParsedResult& r) { return {r.t_roc, r.t_ap, r.t_f1}; }

/// Mean NT/T metrics over a set of cells; tgi is the gain between those means.
struct Aggregate {
  std::size_t cells = 0;
  std::array<double, 3> nt{kNaN, kNaN, kNaN};
  std::array<double, 3> t{kNaN, kNaN, kNaN};
  std::array<double, 3> tgi{kNaN, kNaN, kNaN};
  double mean_cell_tgi_roc = kNaN;  // mean of per-cell TGI_ROC
};

inline Aggregate aggregate(const std::vector<const ParsedResult*>& rows) {
  Aggregate a;
  a.cells = rows.size();
  if (rows.empty()) return a;
  for (std::size_t m = 0; m < 3; ++m) {
    std::vector<double> nt, t;
    for (const auto* r : rows) {
      nt.push_back(nt_metrics(*r)[m]);
      t.push_back(t_metrics(*r)[m]);
    }
    a.nt[m] = mean(nt);
    a.t[m] = mean(t);
    a.tgi[m] = transfer_gain(a.t[m], a.nt[m]);
  }
  std::vector<double> g;
  for (const auto* r : rows) g.push_back(r->tgi_roc);
  a.mean_cell_tgi_roc = mean(g);
  return a;
}

struct PairAggregate {
  DomainPair pair;
  Aggregate agg;
  double mean_iit = kNaN;
};

inline std::vector<PairAggregate> aggregate_pairs(std::span<const ParsedResult> rows, const Regime& regime,
                                                  std::span<const IITTable> tables) {
  std::map<DomainPair, std::vector<const ParsedResult*>> by_pair;
  for (const auto& r : rows)
    if (usable(r) && regime.matches(r)) by_pair[{r.key.source, r.key.target}].push_back(&r);
  std::vector<PairAggregate> out;
  for (const auto& [pair, cells] : by_pair) {
    PairAggregate p{pair, aggregate(cells), kNaN};
    for (const auto& t : tables)
      if (t.source == pair.first && t.target == pair.second) p.mean_iit = t.mean_iit;
    out.push_back(p);
  }
  return out;
}

struct RegimeSummary {
  Regime regime;
  Aggregate agg;
  std::size_t pairs = 0;
  std::array<std::size_t, 3> pairs_t_better{};  // pairs whose mean T exceeds mean NT
};

inline RegimeSummary summarize_regime(std::span<const ParsedResult> rows, const Regime& regime) {
  RegimeSummary s;
  s.regime = regime;
  std::vector<const ParsedResult*> cells;
  for (const auto& r : rows)
    if (usable(r) && regime.matches(r)) cells.push_back(&r);
  s.agg = aggregate(cells);
  const auto pairs = aggregate_pairs(rows, regime, {});
  s.pairs = pairs.size();
  for (const auto& p : pairs)
    for (std::size_t m = 0; m < 3; ++m) s.pairs_t_better[m] += p.agg.t[m] > p.agg.nt[m];
  return s;
}

struct RegressionPoint {
  DomainPair pair;
  double mean_iit = kNaN;
  double mean_tgi_roc = kNaN;
};

struct TgiRegression {
  std::vector<RegressionPoint> points;
  stats::RegressionSummary fit;
};

/// Per directed pair: x = mean anchor IIT, y = mean per-cell TGI_ROC within the regime.
inline TgiRegression regression_tgi_vs_iit(std::span<const ParsedResult> rows, std::span<const IITTable> tables,
                                           const Regime& regime) {
  TgiRegression out;
  for (const auto& p : aggregate_pairs(rows, regime, tables)) {
    if (std::isnan(p.mean_iit)) continue;
    out.points.push_back({p.pair, p.mean_iit, p.agg.mean_cell_tgi_roc});
  }
  if (out.points.size() < 3) throw DataError("regression_tgi_vs_iit: need at least 3 pairs with IIT tables");
  std::vector<double> x, y;
  for (const auto& p : out.points) {
    x.push_back(p.mean_iit);
    y.push_back(p.mean_tgi_roc);
  }
  out.fit = stats::regression(x, y);
  return out;
}

// --- CSV renderers ---

namespace detail {

inline std::string num(double v) { return csv::format_double(v, 17); }

inline std::string pair_name(const DomainPair& p) {
  return std::string(to_string(p.first)) + "," + std::string(to_string(p.second));
}

}  // namespace detail

inline std::string pair_table_csv(const std::vector<PairAggregate>& pairs) {
  std::string out = "source,target,cells,nt_roc,t_roc,tgi_roc,nt_ap,t_ap,tgi_ap,nt_f1,t_f1,tgi_f1,mean_iit\n";
  for (const auto& p : pairs) {
    out += detail::pair_name(p.pair) + "," + std::to_string(p.agg.cells);
    for (std::size_t m = 0; m < 3; ++m)
      out += "," + detail::num(p.agg.nt[m]) + "," + detail::num(p.agg.t[m]) + "," + detail::num(p.agg.tgi[m]);
    out += "," + detail::num(p.mean_iit) + "\n";
  }
  return out;
}

inline std::string regime_table_csv(const std::vector<RegimeSummary>& regimes) {
  std::string out = "regime,metric,cells,pairs,nt,t,tgi,pairs_t_better\n";
  for (const auto& r : regimes)
    for (std::size_t m = 0; m < 3; ++m)
      out += r.regime.name + "," + std::string(kMetricNames[m]) + "," + std::to_string(r.agg.cells) + "," +
             std::to_string(r.pairs) + "," + detail::num(r.agg.nt[m]) + "," + detail::num(r.agg.t[m]) + "," +
             detail::num(r.agg.tgi[m]) + "," + std::to_string(r.pairs_t_better[m]) + "\n";
  return out;
}

inline std::string regression_csv(const TgiRegression& r) {
  std::string out = "source,target,mean_iit,mean_tgi_roc\n";
  for (const auto& p : r.points)
    out += detail::pair_name(p.pair) + "," + detail::num(p.mean_iit) + "," + detail::num(p.mean_tgi_roc) + "\n";
  return out;
}

/// Points written by regression_csv, refitted.
inline stats::RegressionSummary load_regression(const std::filesystem::path& path) {
  const auto t = csv::read(path);
  std::vector<double> x, y;
  for (std::size_t r = 0; r < t.rows.size(); ++r) {
    x.push_back(t.number(r, "mean_iit"));
    y.push_back(t.number(r, "mean_tgi_roc"));
  }
  return stats::regression(x, y);
}

struct StatRow {
  std::string test, metric, scope;
  stats::StatResult result;
};

struct DunnRow {
  std::string metric, group_a, group_b;
  double z = 0.0;
  double p = 1.0;
};

struct StatsBundle {
  std::vector<StatRow> rows;
  std::vector<DunnRow> dunn;
  std::vector<std::pair<std::string, TgiRegression>> regressions;  // by regime name
  std::vector<std::string> notes;
};

inline std::string group_label(const std::string& scenario, double alpha, double eta) {
  return scenario + "_a" + csv::format_double(alpha, 6) + "_e" + csv::format_double(eta, 6);
}

/// Kruskal-Wallis and Dunn over scenario x (alpha, eta) groups, paired t per regime, regressions per regime.
inline StatsBundle run_statistics(std::span<const ParsedResult> rows, std::span<const IITTable> tables) {
  StatsBundle b;
  std::map<std::pair<double, double>, std::vector<const ParsedResult*>> cells;
  for (const auto& r : rows)
    if (usable(r)) cells[{r.key.alpha, r.key.eta}].push_back(&r);
  for (std::size_t m = 0; m < 3; ++m) {
    const std::string metric(kMetricNames[m]);
    stats::Groups groups;
    std::vector<std::string> labels;
    for (const std::string scenario : {"nt", "t"})
      for (const auto& [ae, list] : cells) {
        std::vector<double> g;
        for (const auto* r : list) g.push_back(scenario == "nt" ? nt_metrics(*r)[m] : t_metrics(*r)[m]);
        groups.push_back(g);
        labels.push_back(group_label(scenario, ae.first, ae.second));
      }
    try {
      b.rows.push_back({"kruskal_wallis", metric, "scenario_x_alpha_eta", stats::kruskal_wallis(groups)});
      if (groups.size() >= 3) {
        const auto d = stats::dunn_posthoc(groups);
        b.rows.push_back({"dunn_bonferroni", metric, "scenario_x_alpha_eta", d});
        for (std::size_t i = 0; i < groups.size(); ++i)
          for (std::size_t j = i + 1; j < groups.size(); ++j)
            b.dunn.push_back({metric, labels[i], labels[j], d.pairwise_z(i, j), d.pairwise_p(i, j)});
      }
    } catch (const DataError& e) {
      b.notes.push_back("kruskal_wallis " + metric + ": " + e.what());
    }
    for (const auto& regime : report_regimes()) {
      std::vector<double> t, nt;
      for (const auto& r : rows)
        if (usable(r) && regime.matches(r)) {
          t.push_back(t_metrics(r)[m]);
          nt.push_back(nt_metrics(r)[m]);
        }
      try {
        b.rows.push_back({"paired_t", metric, regime.name, stats::paired_t_test(t, nt)});
      } catch (const DataError& e) {
        b.notes.push_back("paired_t " + metric + " " + regime.name + ": " + e.what());
      }
    }
  }
  for (const auto& regime : report_regimes()) {
    try {
      b.regressions.emplace_back(regime.name, regression_tgi_vs_iit(rows, tables, regime));
    } catch (const DataError& e) {
      b.notes.push_back("regression " + regime.name + ": " + e.what());
    }
  }
  return b;
}

inline std::string stats_csv(const StatsBundle& b) {
  std::string out = "test,metric,scope,statistic,dof,p_value,n,degenerate\n";
  for (const auto& r : b.rows) {
    std::size_t n = 0;
    for (std::size_t s : r.result.group_sizes) n += s;
    const bool pairwise = r.test == "dunn_bonferroni";
    out += r.test + "," + r.metric + "," + r.scope + "," + (pairwise ? "nan" : detail::num(r.result.statistic)) + "," +
           (pairwise ? "nan" : detail::num(r.result.dof)) + "," + (pairwise ? "nan" : detail::num(r.result.p_value)) +
           "," + std::to_string(n) + "," + (r.result.degenerate ? "1" : "0") + "\n";
  }
  for (const auto& [name, reg] : b.regressions) {
    out += "regression_pearson,tgi_roc," + name + "," + detail::num(reg.fit.pearson_r) + ",nan,nan," +
           std::to_string(reg.fit.n) + "," + (reg.fit.defined ? "0" : "1") + "\n";
    out += "regression_spearman,tgi_roc," + name + "," + detail::num(reg.fit.spearman_rho) + ",nan,nan," +
           std::to_string(reg.fit.n) + "," + (reg.fit.defined ? "0" : "1") + "\n";
  }
  return out;
}

inline std::string dunn_csv(const StatsBundle& b) {
  std::string out = "metric,group_a,group_b,z,p_bonferroni\n";
  for (const auto& d : b.dunn)
    out += d.metric + "," + d.group_a + "," + d.group_b + "," + detail::num(d.z) + "," + detail::num(d.p) + "\n";
  return out;
}

// --- digest ---

namespace detail {

inline std::string fixed(double v, int digits = 3) {
  if (std::isnan(v)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  return buf;
}

}  // namespace detail

inline std::string digest_markdown(const std::vector<PairAggregate>& pairs, const std::vector<RegimeSummary>& regimes,
                                   const GlobalConsensus* global, const StatsBundle& b, std::size_t total_rows,
                                   std::size_t usable_rows) {
  using detail::fixed;
  std::string md = "# Transfer report\n\n";
  md += "Cells: " + std::to_string(total_rows) + " rows, " + std::to_string(usable_rows) + " usable.\n\n";
  md += "## Per-pair performance (full grid)\n\n";
  md += "| Source | Target | NT ROC | T ROC | TGI ROC | NT F1 | T F1 | TGI F1 | mean IIT |\n";
  md += "|---|---|---|---|---|---|---|---|---|\n";
  for (const auto& p : pairs)
    md += "| " + std::string(to_string(p.pair.first)) + " | " + std::string(to_string(p.pair.second)) + " | " +
          fixed(p.agg.nt[0]) + " | " + fixed(p.agg.t[0]) + " | " + fixed(p.agg.tgi[0]) + " | " + fixed(p.agg.nt[2]) +
          " | " + fixed(p.agg.t[2]) + " | " + fixed(p.agg.tgi[2]) + " | " + fixed(p.mean_iit) + " |\n";
  md += "\n## Regimes\n\n| Regime | Metric | Cells | NT | T | TGI | Pairs T > NT |\n|---|---|---|---|---|---|---|\n";
  for (const auto& r : regimes)
    for (std::size_t m = 0; m < 3; ++m)
      md += "| " + r.regime.name + " | " + std::string(kMetricNames[m]) + " | " + std::to_string(r.agg.cells) + " | " +
            fixed(r.agg.nt[m]) + " | " + fixed(r.agg.t[m]) + " | " + fixed(r.agg.tgi[m]) + " | " +
            std::to_string(r.pairs_t_better[m]) + "/" + std::to_string(r.pairs) + " |\n";
  if (global != nullptr) {
    md += "\n## Global consensus ranking\n\n| Rank | Feature | IIT | Anchor |\n|---|---|---|---|\n";
    const auto order = top_k(global->iit, global->iit.size());
    for (std::size_t k = 0; k < order.size(); ++k) {
      const bool anchor = std::find(global->anchors.begin(), global->anchors.end(), order[k]) != global->anchors.end();
      md += "| " + std::to_string(k + 1) + " | " + std::string(kFeatureNames[order[k]]) + " | " +
            fixed(global->iit[order[k]]) + " | " + (anchor ? "yes" : "") + " |\n";
    }
  }
  md += "\n## Statistics\n\n| Test | Metric | Scope | Statistic | p |\n|---|---|---|---|---|\n";
  for (const auto& r : b.rows) {
    if (r.test == "dunn_bonferroni") continue;
    md += "| " + r.test + " | " + r.metric + " | " + r.scope + " | " + fixed(r.result.statistic, 4) + " | " +
          csv::format_double(r.result.p_value, 4) + " |\n";
  }
  md += "\n| Regression (TGI ROC vs mean IIT) | n | slope | Pearson r | Spearman rho |\n|---|---|---|---|---|\n";
  for (const auto& [name, reg] : b.regressions)
    md += "| " + name + " | " + std::to_string(reg.fit.n) + " | " + fixed(reg.fit.slope, 4) + " | " +
          fixed(reg.fit.pearson_r) + " | " + fixed(reg.fit.spearman_rho) + " |\n";
  if (!b.notes.empty()) {
    md += "\nSkipped:\n\n";
    for (const auto& n : b.notes) md += "- " + n + "\n";
  }
  return md;
}

struct ReportPaths {
  std::filesystem::path results;
  std::filesystem::path iit;
};

/// Resolves the inputs under a results directory; every absent file is named in the error.
inline ReportPaths report_inputs(const std::filesystem::path& results_dir) {
  ReportPaths p{results_dir / "results.csv", results_dir / "iit.csv"};
  std::string missing;
  for (const auto& f : {p.results, p.iit})
    if (!std::filesystem::exists(f)) missing += " " + f.string();
  if (!missing.empty()) throw DataError("report: missing input files:" + missing);
  return p;
}

/// Writes every report artifact under out_dir. Output depends only on the input files.
inline void emit_report(const std::filesystem::path& results_dir, const std::filesystem::path& out_dir) {
  const ReportPaths in = report_inputs(results_dir);
  const auto rows = load_results(in.results);
  const auto tables = load_iit_tables(in.iit);
  std::optional<GlobalConsensus> global;
  if (tables.size() == 12) global = global_consensus(tables);

  std::filesystem::create_directories(out_dir);
  const auto pairs = aggregate_pairs(rows, report_regimes()[0], tables);
  csv::write_file(out_dir / "pair_table.csv", pair_table_csv(pairs));
  std::vector<RegimeSummary> regimes;
  for (const auto& r : report_regimes()) regimes.push_back(summarize_regime(rows, r));
  csv::write_file(out_dir / "regimes.csv", regime_table_csv(regimes));
  if (global) csv::write_file(out_dir / "global_ranking.csv", global_csv(*global));
  const StatsBundle b = run_statistics(rows, tables);
  for (const auto& [name, reg] : b.regressions) csv::write_file(out_dir / ("regression_" + name + ".csv"), regression_csv(reg));
  csv::write_file(out_dir / "stats.csv", stats_csv(b));
  csv::write_file(out_dir / "dunn.csv", dunn_csv(b));
  const auto usable_rows = static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), usable));
  csv::write_file(out_dir / "digest.md",
                  digest_markdown(pairs, regimes, global ? &*global : nullptr, b, rows.size(), usable_rows));
}

}  // namespace xcdtl
