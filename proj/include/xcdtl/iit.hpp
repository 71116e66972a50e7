#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <filesystem>
#include <map>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "xcdtl/classifiers.hpp"
#include "xcdtl/core/csv.hpp"
#include "xcdtl/core/error.hpp"
#include "xcdtl/core/matrix.hpp"
#include "xcdtl/core/numeric.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/features.hpp"

namespace xcdtl {

inline constexpr std::size_t kAnchorCount = 8;

struct RankRecord {
  ModelKind kind = ModelKind::RF;
  std::uint64_t seed = 0;
  std::vector<double> ranks;
};

struct BordaScore {
  std::vector<double> b;                            // per feature
  std::map<ModelKind, std::vector<double>> per_model;  // mean rank per model over seeds
};

/// B_i = mean rank of feature i over every (model, seed) record.
inline BordaScore borda_scores(std::span<const RankRecord> records) {
  if (records.empty()) throw DataError("borda: no rank vectors");
  const std::size_t p = records.front().ranks.size();
  std::map<ModelKind, std::vector<std::vector<double>>> by_model;
  std::vector<std::vector<double>> all(p);
  for (const auto& r : records) {
    if (r.ranks.size() != p) throw DataError("borda: inconsistent feature counts");
    auto& cols = by_model[r.kind];
    cols.resize(p);
    for (std::size_t j = 0; j < p; ++j) {
      cols[j].push_back(r.ranks[j]);
      all[j].push_back(r.ranks[j]);
    }
  }
  BordaScore s;
  s.b.resize(p);
  for (std::size_t j = 0; j < p; ++j) s.b[j] = mean(all[j]);
  for (const auto& [kind, cols] : by_model) {
    auto& m = s.per_model[kind];
    for (const auto& c : cols) m.push_back(mean(c));
  }
  return s;
}

inline std::vector<RankRecord> rank_records(std::span<const ModelRun> runs) {
  std::vector<RankRecord> out;
  for (const auto& r : runs) out.push_back({r.kind, r.seed, r.ranks});
  return out;
}

/// Spearman correlation matrix of the columns of x.
inline Matrix spearman_matrix(const Matrix& x) {
  const std::size_t p = x.cols();
  std::vector<std::vector<double>> ranks(p);
  for (std::size_t j = 0; j < p; ++j) ranks[j] = average_ranks(x.column(j));
  Matrix c(p, p);
  for (std::size_t i = 0; i < p; ++i) {
    c(i, i) = 1.0;
    for (std::size_t j = i + 1; j < p; ++j) c(i, j) = c(j, i) = pearson(ranks[i], ranks[j]);
  }
  return c;
}

/**
 * Correlation-profile consistency of every feature between two domains.
 *
 * Feature i's profile in a domain is its Spearman correlation with each
 * other feature over that domain's rows; rho_i is the Spearman correlation
 * of the two profiles. A constant column yields an all-zero profile and
 * therefore rho_i = 0. Profile entries are rounded to 1e-12 so that
 * mathematically equal correlations rank as ties.
 */
inline std::vector<double> rho_consistency(const Matrix& s, const Matrix& t) {
  if (s.rows() < 3 || t.rows() < 3) throw DataError("rho: need at least 3 rows per domain");
  if (s.cols() != t.cols()) throw DataError("rho: width mismatch");
  const Matrix cs = spearman_matrix(s), ct = spearman_matrix(t);
  const std::size_t p = s.cols();
  std::vector<double> rho(p);
  std::vector<double> ps, pt;
  for (std::size_t i = 0; i < p; ++i) {
    ps.clear();
    pt.clear();
    for (std::size_t j = 0; j < p; ++j)
      if (j != i) {
        ps.push_back(std::round(cs(i, j) * 1e12) / 1e12);
        pt.push_back(std::round(ct(i, j) * 1e12) / 1e12);
      }
    rho[i] = spearman(ps, pt);
  }
  return rho;
}

inline double rho_consistency(const Matrix& s, const Matrix& t, std::size_t i) { return rho_consistency(s, t).at(i); }

/**
 * |mean_S - mean_T| in units of the pooled (S u T) population std.
 * Pooled moments are combined from per-group moments, so the value is
 * bitwise symmetric in (S, T).
 */
inline double mean_shift(std::span<const double> s, std::span<const double> t) {
  if (s.empty() || t.empty()) throw DataError("mean_shift: empty column");
  const double ns = static_cast<double>(s.size()), nt = static_cast<double>(t.size());
  const double ms = mean(s), mt = mean(t);
  const double n = ns + nt;
  const double mu = (ns * ms + nt * mt) / n;
  const double var = (ns * (variance(s) + (ms - mu) * (ms - mu)) + nt * (variance(t) + (mt - mu) * (mt - mu))) / n;
  const double sigma = std::sqrt(std::max(var, 0.0));
  if (sigma < 1e-12) return 0.0;
  return std::abs(ms - mt) / sigma;
}

struct IITRow {
  double borda = 0.0;
  double rho = 0.0;
  double delta = 0.0;
  double iit = 0.0;
  bool anchor = false;
};

struct IITTable {
  Domain source = Domain::Social;
  Domain target = Domain::Social;
  std::vector<IITRow> rows;          // per feature
  std::vector<std::size_t> anchors;  // top by iit, descending
  double mean_iit = 0.0;             // over anchors
};

inline double iit_score(double borda, double rho, double delta) { return borda * rho / (1.0 + delta); }

/// Indices of the k largest values; ties go to the lower index.
inline std::vector<std::size_t> top_k(std::span<const double> v, std::size_t k) {
  std::vector<std::size_t> order(v.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return v[a] > v[b]; });
  order.resize(std::min(k, order.size()));
  return order;
}

/// Fills iit, anchors and mean_iit from the borda/rho/delta columns.
inline void finalize_table(IITTable& t, std::size_t anchor_count = kAnchorCount) {
  std::vector<double> scores;
  for (auto& r : t.rows) {
    r.iit = iit_score(r.borda, r.rho, r.delta);
    r.anchor = false;
    scores.push_back(r.iit);
  }
  t.anchors = top_k(scores, anchor_count);
  std::vector<double> chosen;
  for (std::size_t a : t.anchors) {
    t.rows[a].anchor = true;
    chosen.push_back(t.rows[a].iit);
  }
  t.mean_iit = chosen.empty() ? 0.0 : mean(chosen);
}

/**
 * Directed IIT table from two single-domain feature matrices (raw values).
 * Each matrix is median-imputed within its own domain; rho uses the imputed
 * values (rank-based, so per-domain z-scoring changes nothing) and delta the
 * imputed raw columns.
 */
inline IITTable iit_table(const FeatureMatrix& s, const FeatureMatrix& t, const BordaScore& borda, Domain source,
                          Domain target, std::size_t anchor_count = kAnchorCount) {
  if (borda.b.size() != kNumFeatures) throw DataError("iit_table: Borda score width mismatch");
  const Matrix xs = impute_medians(s).values(), xt = impute_medians(t).values();
  const auto rho = rho_consistency(xs, xt);
  IITTable table{source, target, std::vector<IITRow>(kNumFeatures), {}, 0.0};
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    table.rows[j].borda = borda.b[j];
    table.rows[j].rho = rho[j];
    table.rows[j].delta = mean_shift(xs.column(j), xt.column(j));
  }
  finalize_table(table, anchor_count);
  return table;
}

/// All 12 directed tables in (source, target) order of kAllDomains.
inline std::vector<IITTable> iit_tables(const std::map<Domain, FeatureMatrix>& domains, const BordaScore& borda,
                                        std::size_t threads = 0) {
  std::vector<std::pair<Domain, Domain>> pairs;
  for (Domain s : kAllDomains)
    for (Domain t : kAllDomains)
      if (s != t) pairs.emplace_back(s, t);
  for (Domain d : kAllDomains)
    if (!domains.count(d)) throw DataError("iit: missing features for domain " + std::string(to_string(d)));
  std::vector<IITTable> out(pairs.size());
  parallel_for(
      pairs.size(),
      [&](std::size_t i) {
        out[i] = iit_table(domains.at(pairs[i].first), domains.at(pairs[i].second), borda, pairs[i].first,
                           pairs[i].second);
      },
      threads);
  return out;
}

struct GlobalConsensus {
  std::vector<double> iit;           // per feature, mean over the 12 directed tables
  std::vector<std::size_t> anchors;  // top 8
};

inline GlobalConsensus global_consensus(std::span<const IITTable> tables, std::size_t anchor_count = kAnchorCount) {
  std::map<std::pair<Domain, Domain>, const IITTable*> by_pair;
  for (const auto& t : tables) {
    if (t.source == t.target) throw DataError("global consensus: table with source == target");
    if (!by_pair.emplace(std::pair{t.source, t.target}, &t).second)
      throw DataError("global consensus: duplicate pair");
  }
  if (by_pair.size() != 12) {
    std::string missing;
    for (Domain s : kAllDomains)
      for (Domain t : kAllDomains)
        if (s != t && !by_pair.count({s, t})) missing += " " + std::string(to_string(s)) + "->" + std::string(to_string(t));
    throw DataError("global consensus: missing pairs:" + missing);
  }
  const std::size_t p = by_pair.begin()->second->rows.size();
  GlobalConsensus g;
  g.iit.resize(p);
  for (std::size_t j = 0; j < p; ++j) {
    std::vector<double> v;
    for (const auto& [key, t] : by_pair) {
      if (t->rows.size() != p) throw DataError("global consensus: inconsistent feature counts");
      v.push_back(t->rows[j].iit);
    }
    g.iit[j] = mean(v);
  }
  g.anchors = top_k(g.iit, anchor_count);
  return g;
}

struct AnchorSelection {
  std::vector<std::size_t> anchors;
  bool fallback = false;
};

/// Pair anchors, or the global anchors when the pair is degenerate or alignment was ill-conditioned.
inline AnchorSelection select_anchors(const IITTable& pair, const GlobalConsensus& global, bool ill_conditioned = false,
                                      std::size_t anchor_count = kAnchorCount) {
  const auto positive = std::count_if(pair.rows.begin(), pair.rows.end(), [](const IITRow& r) { return r.iit > 0; });
  if (ill_conditioned || static_cast<std::size_t>(positive) < anchor_count) return {global.anchors, true};
  return {pair.anchors, false};
}

inline const IITTable& find_table(std::span<const IITTable> tables, Domain s, Domain t) {
  for (const auto& x : tables)
    if (x.source == s && x.target == t) return x;
  throw DataError("no IIT table for " + std::string(to_string(s)) + "->" + std::string(to_string(t)));
}

// --- CSV ---

inline std::string borda_csv(const BordaScore& b) {
  std::string out = "feature,B";
  for (const auto& [k, v] : b.per_model) (out += ",") += to_string(k);
  out += "\n";
  for (std::size_t j = 0; j < b.b.size(); ++j) {
    out += std::string(kFeatureNames.at(j)) + "," + csv::format_double(b.b[j], 17);
    for (const auto& [k, v] : b.per_model) (out += ",") += csv::format_double(v[j], 17);
    out += "\n";
  }
  return out;
}

inline BordaScore load_borda(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  BordaScore b;
  b.b.assign(kNumFeatures, kNaN);
  const std::size_t fcol = table.column("feature"), bcol = table.column("B");
  std::vector<bool> seen(kNumFeatures, false);
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const std::size_t j = feature_index(table.rows[r][fcol]);
    b.b[j] = csv::parse_double(table.rows[r][bcol], table.source, r + 2);
    seen[j] = true;
    for (std::size_t c = 0; c < table.header.size(); ++c) {
      if (c == fcol || c == bcol) continue;
      auto& v = b.per_model[parse_model_kind(table.header[c])];
      v.resize(kNumFeatures, kNaN);
      v[j] = csv::parse_double(table.rows[r][c], table.source, r + 2);
    }
  }
  if (std::find(seen.begin(), seen.end(), false) != seen.end())
    throw DataError(table.source + ": Borda file does not cover all features");
  return b;
}

inline std::string iit_csv(std::span<const IITTable> tables) {
  std::string out = "source,target,feature,B,rho,delta,iit,is_anchor\n";
  for (const auto& t : tables)
    for (std::size_t j = 0; j < t.rows.size(); ++j) {
      const auto& r = t.rows[j];
      out += std::string(to_string(t.source)) + "," + std::string(to_string(t.target)) + "," +
             std::string(kFeatureNames.at(j)) + "," + csv::format_double(r.borda, 17) + "," +
             csv::format_double(r.rho, 17) + "," + csv::format_double(r.delta, 17) + "," +
             csv::format_double(r.iit, 17) + "," + (r.anchor ? "1" : "0") + "\n";
    }
  return out;
}

/// Reads tables written by iit_csv; anchors are re-derived from the stored scores.
inline std::vector<IITTable> load_iit_tables(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  const std::size_t cs = table.column("source"), ct = table.column("target"), cf = table.column("feature"),
                    cb = table.column("B"), cr = table.column("rho"), cd = table.column("delta");
  std::map<std::pair<Domain, Domain>, IITTable> by_pair;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const Domain s = parse_domain(row[cs]), t = parse_domain(row[ct]);
    auto& tab = by_pair[{s, t}];
    tab.source = s;
    tab.target = t;
    tab.rows.resize(kNumFeatures);
    auto& x = tab.rows[feature_index(row[cf])];
    x.borda = csv::parse_double(row[cb], table.source, r + 2);
    x.rho = csv::parse_double(row[cr], table.source, r + 2);
    x.delta = csv::parse_double(row[cd], table.source, r + 2);
  }
  std::vector<IITTable> out;
  for (auto& [key, t] : by_pair) {
    finalize_table(t);
    out.push_back(std::move(t));
  }
  return out;
}

inline std::string global_csv(const GlobalConsensus& g) {
  std::string out = "rank,feature,iit_global,is_anchor\n";
  const auto order = top_k(g.iit, g.iit.size());
  for (std::size_t r = 0; r < order.size(); ++r) {
    const bool anchor = std::find(g.anchors.begin(), g.anchors.end(), order[r]) != g.anchors.end();
    out += std::to_string(r + 1) + "," + std::string(kFeatureNames.at(order[r])) + "," +
           csv::format_double(g.iit[order[r]], 17) + "," + (anchor ? "1" : "0") + "\n";
  }
  return out;
}

}  // namespace xcdtl
