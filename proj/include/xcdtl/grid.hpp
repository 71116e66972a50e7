#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "xcdtl/alignment.hpp"
#include "xcdtl/anomaly.hpp"
#include "xcdtl/classifiers.hpp"
#include "xcdtl/core/csv.hpp"
#include "xcdtl/core/error.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/core/rng.hpp"
#include "xcdtl/features.hpp"
#include "xcdtl/generators.hpp"
#include "xcdtl/iit.hpp"

namespace xcdtl {

enum class FeatureMode { Anchors8, All12 };

inline std::string_view to_string(FeatureMode m) { return m == FeatureMode::Anchors8 ? "anchors8" : "all12"; }

inline FeatureMode parse_feature_mode(std::string_view s) {
  if (s == "anchors8") return FeatureMode::Anchors8;
  if (s == "all12") return FeatureMode::All12;
  throw UsageError("feature mode must be anchors8 or all12, got '" + std::string(s) + "'");
}

using DomainPair = std::pair<Domain, Domain>;

inline DomainPair parse_pair(std::string_view s) {
  const auto colon = s.find(':');
  if (colon == std::string_view::npos) throw UsageError("pair must look like SRC:TGT, got '" + std::string(s) + "'");
  try {
    const DomainPair p{parse_domain(s.substr(0, colon)), parse_domain(s.substr(colon + 1))};
    if (p.first == p.second) throw UsageError("pair source and target must differ: '" + std::string(s) + "'");
    return p;
  } catch (const DataError& e) {
    throw UsageError(e.what());
  }
}

struct GridConfig {
  std::vector<std::uint64_t> seeds{1, 24, 42, 50, 123, 501, 700, 800, 920, 999};
  std::vector<double> alphas{0.1, 0.5, 0.9};
  std::vector<double> etas{0.1, 0.5, 0.9};
  double missing_frac = 0.05;
  double contamination = 0.1;
  FeatureMode feature_mode = FeatureMode::Anchors8;
  std::size_t master_pool = 1000;
  std::size_t train_pool = 500;
  std::size_t test_size = 250;
  std::vector<Domain> domains{kAllDomains.begin(), kAllDomains.end()};
  std::vector<DomainPair> pairs;  // empty: every ordered pair of `domains`
  std::uint64_t ensemble_seed = 2024;
  std::vector<std::uint64_t> rank_seeds{1, 24, 42};
  std::size_t iforest_trees = 100;
  std::size_t max_samples = 256;
  std::string features_dir;  // optional <dir>/<Domain>.csv master features
  std::string iit_dir;       // optional iit.csv + global.csv

  std::vector<DomainPair> active_pairs() const {
    if (!pairs.empty()) return pairs;
    std::vector<DomainPair> out;
    for (Domain s : domains)
      for (Domain t : domains)
        if (s != t) out.emplace_back(s, t);
    return out;
  }

  void validate() const {
    if (seeds.empty()) throw UsageError("config: no seeds");
    if (std::set<std::uint64_t>(seeds.begin(), seeds.end()).size() != seeds.size())
      throw UsageError("config: seeds must be distinct");
    for (const auto* grid : {&alphas, &etas}) {
      if (grid->empty()) throw UsageError("config: empty alpha/eta list");
      for (double v : *grid)
        if (!(v > 0.0 && v <= 1.0)) throw UsageError("config: alphas and etas must lie in (0, 1]");
    }
    if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw UsageError("config: missing_frac must lie in [0, 1)");
    check_contamination(contamination);
    if (train_pool + test_size > master_pool) throw UsageError("config: train_pool + test_size exceeds master_pool");
    if (test_size < 10 || train_pool < 10) throw UsageError("config: pools need at least 10 graphs");
    if (iforest_trees == 0 || max_samples < 2) throw UsageError("config: invalid iforest settings");
    if (rank_seeds.empty() && iit_dir.empty()) throw UsageError("config: rank_seeds is empty and no iit_dir given");
    for (const auto& [s, t] : active_pairs()) {
      if (std::find(domains.begin(), domains.end(), s) == domains.end() ||
          std::find(domains.begin(), domains.end(), t) == domains.end())
        throw UsageError("config: pair uses a domain that is not configured");
    }
  }
};

inline nlohmann::ordered_json to_json(const GridConfig& c) {
  nlohmann::ordered_json j;
  j["seeds"] = c.seeds;
  j["alphas"] = c.alphas;
  j["etas"] = c.etas;
  j["missing_frac"] = c.missing_frac;
  j["contamination"] = c.contamination;
  j["feature_mode"] = to_string(c.feature_mode);
  j["master_pool"] = c.master_pool;
  j["train_pool"] = c.train_pool;
  j["test_size"] = c.test_size;
  std::vector<std::string> domains, pairs;
  for (Domain d : c.domains) domains.emplace_back(to_string(d));
  for (const auto& [s, t] : c.pairs) pairs.push_back(std::string(to_string(s)) + ":" + std::string(to_string(t)));
  j["domains"] = domains;
  j["pairs"] = pairs;
  j["ensemble_seed"] = c.ensemble_seed;
  j["rank_seeds"] = c.rank_seeds;
  j["iforest_trees"] = c.iforest_trees;
  j["max_samples"] = c.max_samples;
  j["features_dir"] = c.features_dir;
  j["iit_dir"] = c.iit_dir;
  return j;
}

/// Missing keys keep their defaults; unknown keys are rejected.
inline GridConfig grid_config_from_json(const nlohmann::json& j) {
  static const std::set<std::string> known{"seeds",         "alphas",      "etas",          "missing_frac",
                                           "contamination", "feature_mode", "master_pool",  "train_pool",
                                           "test_size",     "domains",     "pairs",         "ensemble_seed",
                                           "rank_seeds",    "iforest_trees", "max_samples", "features_dir",
                                           "iit_dir"};
  if (!j.is_object()) throw UsageError("config: expected a JSON object");
  GridConfig c;
  try {
    for (const auto& [key, value] : j.items()) {
      if (!known.count(key)) throw UsageError("config: unknown key '" + key + "'");
    }
    if (j.contains("seeds")) c.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("alphas")) c.alphas = j["alphas"].get<std::vector<double>>();
    if (j.contains("etas")) c.etas = j["etas"].get<std::vector<double>>();
    if (j.contains("missing_frac")) c.missing_frac = j["missing_frac"].get<double>();
    if (j.contains("contamination")) c.contamination = j["contamination"].get<double>();
    if (j.contains("feature_mode")) c.feature_mode = parse_feature_mode(j["feature_mode"].get<std::string>());
    if (j.contains("master_pool")) c.master_pool = j["master_pool"].get<std::size_t>();
    if (j.contains("train_pool")) c.train_pool = j["train_pool"].get<std::size_t>();
    if (j.contains("test_size")) c.test_size = j["test_size"].get<std::size_t>();
    if (j.contains("domains")) {
      c.domains.clear();
      for (const auto& d : j["domains"]) c.domains.push_back(parse_domain(d.get<std::string>()));
    }
    if (j.contains("pairs")) {
      c.pairs.clear();
      for (const auto& p : j["pairs"]) c.pairs.push_back(parse_pair(p.get<std::string>()));
    }
    if (j.contains("ensemble_seed")) c.ensemble_seed = j["ensemble_seed"].get<std::uint64_t>();
    if (j.contains("rank_seeds")) c.rank_seeds = j["rank_seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("iforest_trees")) c.iforest_trees = j["iforest_trees"].get<std::size_t>();
    if (j.contains("max_samples")) c.max_samples = j["max_samples"].get<std::size_t>();
    if (j.contains("features_dir")) c.features_dir = j["features_dir"].get<std::string>();
    if (j.contains("iit_dir")) c.iit_dir = j["iit_dir"].get<std::string>();
  } catch (const nlohmann::json::exception& e) {
    throw UsageError(std::string("config: ") + e.what());
  } catch (const DataError& e) {
    throw UsageError(std::string("config: ") + e.what());
  }
  c.validate();
  return c;
}

inline GridConfig load_grid_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open config " + path.string());
  try {
    return grid_config_from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
}

// --- corruption ---

/**
 * Adds N(0, (eta * sigma_j)^2) noise per column (sigma_j over the input rows),
 * blanks floor(missing_frac * cells) uniformly chosen cells, then fills them
 * with the column medians of the remaining corrupted entries.
 */
inline Matrix corrupt(const Matrix& x, double eta, double missing_frac, std::uint64_t seed) {
  if (eta < 0.0) throw UsageError("corrupt: eta must be >= 0");
  if (!(missing_frac >= 0.0 && missing_frac < 1.0)) throw UsageError("corrupt: missing_frac must lie in [0, 1)");
  Matrix out = x;
  if (x.rows() == 0) return out;
  if (eta > 0.0) {
    Rng noise(derive_seed(seed, 0));
    std::vector<double> sigma(x.cols());
    for (std::size_t j = 0; j < x.cols(); ++j) sigma[j] = population_std(x.column(j));
    for (std::size_t i = 0; i < x.rows(); ++i)
      for (std::size_t j = 0; j < x.cols(); ++j) out(i, j) += eta * sigma[j] * noise.normal();
  }
  const std::size_t cells = x.rows() * x.cols();
  const auto blank = static_cast<std::size_t>(std::floor(missing_frac * static_cast<double>(cells)));
  if (blank == 0) return out;
  Rng pick(derive_seed(seed, 1));
  auto order = pick.permutation(cells);
  order.resize(blank);
  std::vector<bool> missing(cells, false);
  for (std::size_t c : order) missing[c] = true;
  for (std::size_t j = 0; j < x.cols(); ++j) {
    std::vector<double> present;
    for (std::size_t i = 0; i < x.rows(); ++i)
      if (!missing[i * x.cols() + j]) present.push_back(out(i, j));
    const double fill = present.empty() ? 0.0 : median(present);
    for (std::size_t i = 0; i < x.rows(); ++i)
      if (missing[i * x.cols() + j]) out(i, j) = fill;
  }
  return out;
}

// --- cells ---

struct CellKey {
  Domain source = Domain::Social;
  Domain target = Domain::Molecular;
  std::uint64_t seed = 0;
  double alpha = 0.0;
  double eta = 0.0;

  auto tie() const { return std::tuple(static_cast<int>(source), static_cast<int>(target), seed, alpha, eta); }
  friend bool operator<(const CellKey& a, const CellKey& b) { return a.tie() < b.tie(); }
  friend bool operator==(const CellKey& a, const CellKey& b) { return a.tie() == b.tie(); }
};

/// seed XOR FNV-1a("src|tgt|alpha|eta|scenario"); independent streams per cell and scenario.
inline std::uint64_t cell_seed(const CellKey& k, std::string_view scenario) {
  const std::string text = std::string(to_string(k.source)) + "|" + std::string(to_string(k.target)) + "|" +
                           csv::format_double(k.alpha, 12) + "|" + csv::format_double(k.eta, 12) + "|" +
                           std::string(scenario);
  return k.seed ^ fnv1a64(text);
}

struct TransferGains {
  double roc = kNaN;
  double ap = kNaN;
  double f1 = kNaN;
};

struct CellResult {
  CellKey key;
  DetectionMetrics nt;
  DetectionMetrics t;
  TransferGains tgi;
  bool fallback = false;
  std::size_t n_train_target = 0;
  std::size_t n_train_source = 0;
  std::vector<std::size_t> anchors;
  std::string status = "ok";
};

inline TransferGains transfer_gains(const DetectionMetrics& nt, const DetectionMetrics& t) {
  return {transfer_gain(t.roc_auc, nt.roc_auc), transfer_gain(t.average_precision, nt.average_precision),
          transfer_gain(t.f1, nt.f1)};
}

/// Inputs of one cell; all matrices carry the 12 imputed raw descriptors.
struct CellData {
  const Matrix* source_train = nullptr;
  const Matrix* target_pool = nullptr;
  const Matrix* target_test = nullptr;
  const std::vector<bool>* test_labels = nullptr;
};

struct AnchorPlan {
  std::vector<std::size_t> anchors;         // columns used first
  std::vector<std::size_t> global_anchors;  // retry set; empty disables retry
  bool fallback = false;                    // anchors already are the fallback set
};

struct ScenarioOutcome {
  DetectionMetrics metrics;
  bool ill_conditioned = false;
};

namespace detail {

inline ScenarioOutcome run_scenario(const Matrix& train, const Matrix* source, const Matrix& test,
                                    const std::vector<bool>& labels, std::uint64_t seed, const GridConfig& cfg) {
  const AlignmentProjection p = source ? fit_alignment(*source, train) : fit_alignment(train, Matrix());
  const Matrix fit_rows = source ? vstack(*source, train) : train;
  const Matrix z = project(p, fit_rows);
  const IsolationForest forest = IsolationForest::fit(z, seed, {cfg.iforest_trees, cfg.max_samples});
  const auto train_scores = forest.score(z);
  const Detection d = detect(forest, train_scores, project(p, test), cfg.contamination);
  return {detection_metrics(d.scores, labels, d.threshold), p.fallback_triggered};
}

}  // namespace detail

/**
 * One (pair, seed, alpha, eta) cell: draws the target training subset,
 * corrupts it, and scores the clean target test set under the target-only
 * (NT) and source-plus-target (T) scenarios. Both scenarios share the
 * subset, the corruption and the anchors; an ill-conditioned alignment in
 * either retries the cell once with the global anchors.
 */
inline CellResult run_cell(const CellKey& key, const CellData& data, const AnchorPlan& plan, const GridConfig& cfg) {
  CellResult r;
  r.key = key;
  const Matrix& pool = *data.target_pool;
  const auto n_target = static_cast<std::size_t>(std::floor(key.alpha * static_cast<double>(pool.rows()) + 1e-9));
  if (n_target < 10) throw DataError("run_cell: target training subset has fewer than 10 rows");
  Rng shuffle(cell_seed(key, "subset"));
  auto order = shuffle.permutation(pool.rows());
  order.resize(n_target);
  const Matrix target_train = corrupt(pool.select_rows(order), key.eta, cfg.missing_frac, cell_seed(key, "corrupt"));
  r.n_train_target = n_target;
  r.n_train_source = data.source_train->rows();

  auto attempt = [&](const std::vector<std::size_t>& cols) {
    const Matrix src = data.source_train->select_cols(cols);
    const Matrix tgt = target_train.select_cols(cols);
    const Matrix test = data.target_test->select_cols(cols);
    auto nt = detail::run_scenario(tgt, nullptr, test, *data.test_labels, cell_seed(key, "nt"), cfg);
    auto t = detail::run_scenario(tgt, &src, test, *data.test_labels, cell_seed(key, "t"), cfg);
    return std::pair{nt, t};
  };

  r.anchors = plan.anchors;
  r.fallback = plan.fallback;
  auto [nt, t] = attempt(plan.anchors);
  if ((nt.ill_conditioned || t.ill_conditioned) && !plan.fallback && !plan.global_anchors.empty() &&
      plan.global_anchors != plan.anchors) {
    r.anchors = plan.global_anchors;
    r.fallback = true;
    std::tie(nt, t) = attempt(plan.global_anchors);
  }
  r.nt = nt.metrics;
  r.t = t.metrics;
  r.tgi = transfer_gains(r.nt, r.t);
  if (!r.nt.defined || !r.t.defined) r.status = "undefined";
  return r;
}

// --- prepared inputs ---

struct DomainPools {
  Matrix master;  // imputed raw descriptors, master_pool x 12
  std::vector<std::string> ids;
};

struct SeedSplit {
  std::vector<std::size_t> train_index;  // rows of the master pool
  std::vector<std::size_t> test_index;
  Matrix train_pool;
  Matrix test;
  std::vector<bool> test_labels;
};

struct GridData {
  std::map<Domain, DomainPools> pools;
  std::vector<IITTable> tables;  // empty in all12 mode without ranking
  GlobalConsensus global;
  BordaScore borda;
};

/// Per-(domain, seed) disjoint train-pool/test draw; labels from the uncorrupted union of both.
inline SeedSplit split_pool(const DomainPools& p, Domain d, std::uint64_t seed, const GridConfig& cfg) {
  Rng rng(seed ^ fnv1a64("pool|" + std::string(to_string(d))));
  const auto perm = rng.permutation(p.master.rows());
  const std::vector<std::size_t> train(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_pool));
  const std::vector<std::size_t> test(perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_pool),
                                      perm.begin() + static_cast<std::ptrdiff_t>(cfg.train_pool + cfg.test_size));
  SeedSplit s{train, test, p.master.select_rows(train), p.master.select_rows(test), {}};
  FeatureMatrix sampled;
  for (const auto* rows : {&train, &test})
    for (std::size_t i : *rows) {
      FeatureVector v;
      for (std::size_t j = 0; j < kNumFeatures; ++j) v.values[j] = p.master(i, j);
      v.mask.fill(true);
      sampled.append(p.ids[i], d, v);
    }
  const AnomalyLabels labels = label_anomalies(sampled);
  s.test_labels.assign(labels.label.begin() + static_cast<std::ptrdiff_t>(cfg.train_pool), labels.label.end());
  return s;
}

inline std::uint64_t domain_ensemble_seed(std::uint64_t base, Domain d) {
  return derive_seed(base, static_cast<std::uint64_t>(d));
}

inline std::map<Domain, FeatureMatrix> master_features(const GridConfig& cfg, std::size_t threads = 0) {
  std::map<Domain, FeatureMatrix> out;
  for (Domain d : cfg.domains) {
    if (!cfg.features_dir.empty()) {
      const auto path = std::filesystem::path(cfg.features_dir) / (std::string(to_string(d)) + ".csv");
      FeatureMatrix fm = load_features(path);
      if (fm.size() < cfg.master_pool)
        throw DataError(path.string() + ": has " + std::to_string(fm.size()) + " rows, master_pool needs " +
                        std::to_string(cfg.master_pool));
      std::vector<std::size_t> head(cfg.master_pool);
      std::iota(head.begin(), head.end(), std::size_t{0});
      out[d] = fm.select(head);
    } else {
      out[d] = compute_feature_matrix(
          generate_ensemble(d, cfg.master_pool, domain_ensemble_seed(cfg.ensemble_seed, d), default_size_range(d),
                            threads),
          threads);
    }
  }
  return out;
}

/// Borda scores, directed IIT tables and global consensus over the master pools.
inline void rank_features(GridData& g, const std::map<Domain, FeatureMatrix>& features, const GridConfig& cfg,
                          std::size_t threads = 0) {
  if (features.size() < 2) return;
  FeatureMatrix all;
  for (const auto& [d, fm] : features) all = all.size() == 0 ? fm : concat(all, fm);
  ClassifierOptions opt;
  opt.threads = threads;
  const auto runs = run_domain_classification(all, cfg.rank_seeds, opt);
  const auto records = rank_records(runs);
  g.borda = borda_scores(records);
  if (features.size() == kAllDomains.size()) {
    g.tables = iit_tables(features, g.borda, threads);
    g.global = global_consensus(g.tables);
  } else {
    for (const auto& [s, fs] : features)
      for (const auto& [t, ft] : features)
        if (s != t) g.tables.push_back(iit_table(fs, ft, g.borda, s, t));
    std::vector<double> per(kNumFeatures, 0.0);
    for (const auto& t : g.tables)
      for (std::size_t j = 0; j < kNumFeatures; ++j) per[j] += t.rows[j].iit / static_cast<double>(g.tables.size());
    g.global = {per, top_k(per, kAnchorCount)};
  }
}

inline GridData prepare_grid(const GridConfig& cfg, std::size_t threads = 0) {
  cfg.validate();
  GridData g;
  const auto features = master_features(cfg, threads);
  for (const auto& [d, fm] : features) {
    const FeatureMatrix imputed = impute_medians(fm);
    g.pools[d] = {imputed.values(), imputed.ids};
  }
  if (cfg.feature_mode == FeatureMode::All12) return g;
  if (!cfg.iit_dir.empty()) {
    g.tables = load_iit_tables(std::filesystem::path(cfg.iit_dir) / "iit.csv");
    g.global = global_consensus(g.tables);
  } else {
    rank_features(g, features, cfg, threads);
  }
  return g;
}

inline AnchorPlan anchor_plan(const GridData& g, const GridConfig& cfg, Domain s, Domain t) {
  if (cfg.feature_mode == FeatureMode::All12) {
    std::vector<std::size_t> all(kNumFeatures);
    std::iota(all.begin(), all.end(), std::size_t{0});
    return {all, {}, false};
  }
  const auto sel = select_anchors(find_table(g.tables, s, t), g.global);
  return {sel.anchors, g.global.anchors, sel.fallback};
}

// --- results CSV ---

inline constexpr std::string_view kResultsHeader =
    "source,target,seed,alpha,eta,nt_roc,nt_ap,nt_f1,t_roc,t_ap,t_f1,tgi_roc,tgi_ap,tgi_f1,fallback,status";
inline constexpr std::string_view kDetailsHeader =
    "source,target,seed,alpha,eta,n_train_source,n_train_target,np_ratio_nt,np_ratio_t,nt_threshold,t_threshold,"
    "anchors";

inline std::string key_fields(const CellKey& k) {
  return std::string(to_string(k.source)) + "," + std::string(to_string(k.target)) + "," + std::to_string(k.seed) +
         "," + csv::format_double(k.alpha, 17) + "," + csv::format_double(k.eta, 17);
}

inline std::string result_row(const CellResult& r) {
  auto f = [](double v) { return csv::format_double(v, 17); };
  std::string status = r.status;
  std::replace(status.begin(), status.end(), ',', ';');
  std::replace(status.begin(), status.end(), '\n', ' ');
  return key_fields(r.key) + "," + f(r.nt.roc_auc) + "," + f(r.nt.average_precision) + "," + f(r.nt.f1) + "," +
         f(r.t.roc_auc) + "," + f(r.t.average_precision) + "," + f(r.t.f1) + "," + f(r.tgi.roc) + "," + f(r.tgi.ap) +
         "," + f(r.tgi.f1) + "," + (r.fallback ? "1" : "0") + "," + status;
}

inline std::string detail_row(const CellResult& r) {
  auto f = [](double v) { return csv::format_double(v, 17); };
  const double p = static_cast<double>(r.anchors.size());
  std::string anchors;
  for (std::size_t a : r.anchors) anchors += (anchors.empty() ? "" : ";") + std::string(kFeatureNames[a]);
  return key_fields(r.key) + "," + std::to_string(r.n_train_source) + "," + std::to_string(r.n_train_target) + "," +
         f(p > 0 ? static_cast<double>(r.n_train_target) / p : kNaN) + "," +
         f(p > 0 ? static_cast<double>(r.n_train_target + r.n_train_source) / p : kNaN) + "," + f(r.nt.threshold) +
         "," + f(r.t.threshold) + "," + anchors;
}

inline CellKey parse_key(const std::vector<std::string>& fields, const std::string& source, std::size_t line) {
  if (fields.size() < 5) throw ParseError(source, line, "expected at least 5 fields");
  try {
    return {parse_domain(fields[0]), parse_domain(fields[1]), std::stoull(fields[2]),
            csv::parse_double(fields[3], source, line), csv::parse_double(fields[4], source, line)};
  } catch (const std::logic_error&) {
    throw ParseError(source, line, "bad seed '" + fields[2] + "'");
  }
}

/// Existing rows of a keyed CSV (header must match), or an empty map when the file is absent.
inline std::map<CellKey, std::string> load_keyed_rows(const std::filesystem::path& path, std::string_view header) {
  std::map<CellKey, std::string> rows;
  if (!std::filesystem::exists(path)) return rows;
  std::ifstream in(path);
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (lineno == 1) {
      if (line != header) throw ParseError(path.string(), 1, "unexpected header");
      continue;
    }
    if (line.empty()) continue;
    rows[parse_key(csv::split(line), path.string(), lineno)] = line;
  }
  return rows;
}

inline void write_keyed_rows(const std::filesystem::path& path, std::string_view header,
                             const std::map<CellKey, std::string>& rows) {
  std::string out(header);
  out += '\n';
  for (const auto& [k, line] : rows) (out += line) += '\n';
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  csv::write_file(tmp, out);
  std::filesystem::rename(tmp, path);
}

struct ParsedResult {
  CellKey key;
  double nt_roc, nt_ap, nt_f1, t_roc, t_ap, t_f1, tgi_roc, tgi_ap, tgi_f1;
  bool fallback = false;
  std::string status;
};

inline std::vector<ParsedResult> load_results(const std::filesystem::path& path) {
  const csv::Table table = csv::read(path);
  if (csv::join(table.header) != kResultsHeader) throw ParseError(path.string(), 1, "unexpected results header");
  std::vector<ParsedResult> out;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& f = table.rows[r];
    const std::size_t line = r + 2;
    if (f.size() != 16) throw ParseError(path.string(), line, "expected 16 fields");
    ParsedResult p;
    p.key = parse_key(f, path.string(), line);
    double* slots[] = {&p.nt_roc, &p.nt_ap, &p.nt_f1, &p.t_roc, &p.t_ap, &p.t_f1, &p.tgi_roc, &p.tgi_ap, &p.tgi_f1};
    for (std::size_t k = 0; k < 9; ++k) *slots[k] = csv::parse_double(f[5 + k], path.string(), line);
    p.fallback = f[14] == "1";
    p.status = f[15];
    out.push_back(p);
  }
  return out;
}

/// Every configured cell, sorted by (source, target, seed, alpha, eta).
inline std::vector<CellKey> grid_cells(const GridConfig& cfg) {
  std::vector<CellKey> out;
  for (const auto& [s, t] : cfg.active_pairs())
    for (std::uint64_t seed : cfg.seeds)
      for (double a : cfg.alphas)
        for (double e : cfg.etas) out.push_back({s, t, seed, a, e});
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  return out;
}

struct GridRunSummary {
  std::size_t total = 0;
  std::size_t skipped = 0;
  std::size_t computed = 0;
  std::size_t failed = 0;
};

/**
 * Runs every configured cell not yet present in <out>/results.csv. Cells are
 * processed in sorted key order in batches; after each batch both CSVs are
 * rewritten sorted, so an interrupted run resumes from the last batch and
 * the final bytes do not depend on the thread count.
 */
inline GridRunSummary run_grid(const GridConfig& cfg, const GridData& data, const std::filesystem::path& out_dir,
                               std::size_t threads = 0) {
  cfg.validate();
  std::filesystem::create_directories(out_dir);
  const auto results_path = out_dir / "results.csv";
  const auto details_path = out_dir / "cells_detail.csv";
  auto results = load_keyed_rows(results_path, kResultsHeader);
  auto details = load_keyed_rows(details_path, kDetailsHeader);

  std::vector<CellKey> todo;
  GridRunSummary summary;
  for (const auto& [s, t] : cfg.active_pairs())
    if (!data.pools.count(s) || !data.pools.count(t)) throw DataError("run_grid: missing pool for a configured pair");
  for (const CellKey& k : grid_cells(cfg)) {
    ++summary.total;
    if (results.count(k)) {
      ++summary.skipped;
    } else {
      todo.push_back(k);
    }
  }

  // Splits are shared by every cell that touches a (domain, seed).
  std::map<std::pair<Domain, std::uint64_t>, SeedSplit> splits;
  for (const auto& k : todo)
    for (Domain d : {k.source, k.target}) splits.try_emplace({d, k.seed});
  {
    std::vector<std::pair<Domain, std::uint64_t>> keys;
    for (const auto& [k, v] : splits) keys.push_back(k);
    std::vector<SeedSplit> built(keys.size());
    parallel_for(
        keys.size(), [&](std::size_t i) { built[i] = split_pool(data.pools.at(keys[i].first), keys[i].first, keys[i].second, cfg); },
        threads);
    for (std::size_t i = 0; i < keys.size(); ++i) splits[keys[i]] = std::move(built[i]);
  }
  std::map<DomainPair, AnchorPlan> plans;
  for (const auto& pair : cfg.active_pairs()) plans[pair] = anchor_plan(data, cfg, pair.first, pair.second);

  const std::size_t batch = std::max<std::size_t>(64, thread_count(threads) * 8);
  for (std::size_t start = 0; start < todo.size(); start += batch) {
    const std::size_t end = std::min(todo.size(), start + batch);
    std::vector<CellResult> done(end - start);
    parallel_for(
        end - start,
        [&](std::size_t i) {
          const CellKey& k = todo[start + i];
          const SeedSplit& src = splits.at({k.source, k.seed});
          const SeedSplit& tgt = splits.at({k.target, k.seed});
          try {
            done[i] = run_cell(k, {&src.train_pool, &tgt.train_pool, &tgt.test, &tgt.test_labels},
                               plans.at({k.source, k.target}), cfg);
          } catch (const Error& e) {
            done[i] = CellResult{};
            done[i].key = k;
            done[i].status = std::string("error: ") + e.what();
          }
        },
        threads);
    for (const auto& r : done) {
      results[r.key] = result_row(r);
      details[r.key] = detail_row(r);
      ++summary.computed;
      if (r.status.rfind("error", 0) == 0) ++summary.failed;
    }
    write_keyed_rows(results_path, kResultsHeader, results);
    write_keyed_rows(details_path, kDetailsHeader, details);
  }
  if (todo.empty()) {
    write_keyed_rows(results_path, kResultsHeader, results);
    write_keyed_rows(details_path, kDetailsHeader, details);
  }
  return summary;
}

/// Writes the ranking artifacts the grid used, so a report can be built from the output directory alone.
inline void write_grid_inputs(const GridConfig& cfg, const GridData& g, const std::filesystem::path& out_dir) {
  csv::write_file(out_dir / "config.json", to_json(cfg).dump(2) + "\n");
  if (g.tables.empty()) return;
  if (!g.borda.b.empty()) csv::write_file(out_dir / "borda.csv", borda_csv(g.borda));
  csv::write_file(out_dir / "iit.csv", iit_csv(g.tables));
  if (g.tables.size() == 12) csv::write_file(out_dir / "global.csv", global_csv(g.global));
}

}  // namespace xcdtl
