#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <limits>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xcdtl/core/csv.hpp"
#include "xcdtl/core/error.hpp"
#include "xcdtl/core/linalg.hpp"
#include "xcdtl/core/matrix.hpp"
#include "xcdtl/core/numeric.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/generators.hpp"
#include "xcdtl/graph.hpp"
#include "xcdtl/louvain.hpp"

namespace xcdtl {

inline constexpr std::size_t kNumFeatures = 12;

enum class Feature : std::uint8_t {
  n_nodes,
  n_edges,
  density,
  avg_clustering,
  transitivity,
  assortativity,
  efficiency,
  avg_shortest_path,
  diameter,
  spectral_radius,
  lambda_2,
  modularity,
};

inline constexpr std::array<std::string_view, kNumFeatures> kFeatureNames{
    "n_nodes",    "n_edges",           "density",  "avg_clustering",  "transitivity", "assortativity",
    "efficiency", "avg_shortest_path", "diameter", "spectral_radius", "lambda_2",     "modularity"};

constexpr std::size_t idx(Feature f) noexcept { return static_cast<std::size_t>(f); }

inline std::size_t feature_index(std::string_view name) {
  for (std::size_t i = 0; i < kNumFeatures; ++i)
    if (kFeatureNames[i] == name) return i;
  throw DataError("unknown feature '" + std::string(name) + "'");
}

/// Twelve-descriptor fingerprint; mask[i] is false where the descriptor is non-computable (value NaN).
struct FeatureVector {
  std::array<double, kNumFeatures> values{};
  std::array<bool, kNumFeatures> mask{};

  double operator[](Feature f) const noexcept { return values[idx(f)]; }
  bool computed(Feature f) const noexcept { return mask[idx(f)]; }

  void set(Feature f, double v) noexcept {
    values[idx(f)] = v;
    mask[idx(f)] = true;
  }
  void unset(Feature f) noexcept {
    values[idx(f)] = kNaN;
    mask[idx(f)] = false;
  }
};

namespace detail {

inline Matrix adjacency_matrix(const Graph& g) {
  Matrix a(g.node_count(), g.node_count());
  for (auto [u, v] : g.edges()) a(u, v) = a(v, u) = 1.0;
  return a;
}

inline Matrix laplacian_matrix(const Graph& g) {
  Matrix l(g.node_count(), g.node_count());
  for (auto [u, v] : g.edges()) {
    l(u, v) = l(v, u) = -1.0;
    l(u, u) += 1.0;
    l(v, v) += 1.0;
  }
  return l;
}

}  // namespace detail

inline FeatureVector compute_features(const Graph& g) {
  const std::size_t n = g.node_count();
  if (n == 0) throw DataError("compute_features: graph '" + g.id() + "' has no nodes");
  const std::size_t m = g.edge_count();
  FeatureVector f;
  f.set(Feature::n_nodes, static_cast<double>(n));
  f.set(Feature::n_edges, static_cast<double>(m));

  const auto adj = g.adjacency();
  const auto deg = g.degrees();

  // Local clustering and transitivity from per-node triangle counts.
  std::vector<char> dense(n * n, 0);
  for (auto [u, v] : g.edges()) dense[u * n + v] = dense[v * n + u] = 1;
  double clustering_sum = 0.0;
  double tri_twice = 0.0;  // sum over nodes of links among neighbours (= 3 * triangles)
  double triples = 0.0;
  for (std::size_t u = 0; u < n; ++u) {
    const auto& nb = adj[u];
    std::size_t links = 0;
    for (std::size_t a = 0; a < nb.size(); ++a)
      for (std::size_t b = a + 1; b < nb.size(); ++b) links += dense[nb[a] * n + nb[b]];
    const double k = static_cast<double>(nb.size());
    if (nb.size() >= 2) clustering_sum += 2.0 * static_cast<double>(links) / (k * (k - 1.0));
    tri_twice += static_cast<double>(links);
    triples += k * (k - 1.0) / 2.0;
  }
  f.set(Feature::avg_clustering, clustering_sum / static_cast<double>(n));
  f.set(Feature::transitivity, triples > 0.0 ? tri_twice / triples : 0.0);
  f.set(Feature::modularity, louvain_modularity(g));

  if (n < 2) {
    for (Feature x : {Feature::density, Feature::assortativity, Feature::efficiency,
                      Feature::avg_shortest_path, Feature::diameter, Feature::spectral_radius,
                      Feature::lambda_2})
      f.unset(x);
    return f;
  }

  f.set(Feature::density, 2.0 * static_cast<double>(m) / (static_cast<double>(n) * static_cast<double>(n - 1)));

  // Degree assortativity over both orientations of every edge; exact integer moments.
  {
    std::int64_t sxy = 0, sx = 0, sxx = 0;
    for (auto [u, v] : g.edges()) {
      const auto du = static_cast<std::int64_t>(deg[u]);
      const auto dv = static_cast<std::int64_t>(deg[v]);
      sxy += 2 * du * dv;
      sx += du + dv;
      sxx += du * du + dv * dv;
    }
    const auto count = static_cast<std::int64_t>(2 * m);
    const std::int64_t num = count * sxy - sx * sx;
    const std::int64_t den = count * sxx - sx * sx;
    if (den == 0)
      f.unset(Feature::assortativity);
    else
      f.set(Feature::assortativity, static_cast<double>(num) / static_cast<double>(den));
  }

  // All-pairs BFS.
  {
    double inv_sum = 0.0;
    double dist_sum = 0.0;
    std::size_t diameter = 0;
    bool connected = true;
    std::vector<std::size_t> dist(n);
    std::vector<NodeId> queue;
    for (NodeId s = 0; s < n; ++s) {
      std::fill(dist.begin(), dist.end(), std::numeric_limits<std::size_t>::max());
      dist[s] = 0;
      queue.assign(1, s);
      for (std::size_t h = 0; h < queue.size(); ++h)
        for (NodeId w : adj[queue[h]])
          if (dist[w] == std::numeric_limits<std::size_t>::max()) {
            dist[w] = dist[queue[h]] + 1;
            queue.push_back(w);
          }
      for (NodeId t = 0; t < n; ++t) {
        if (t == s) continue;
        if (dist[t] == std::numeric_limits<std::size_t>::max()) {
          connected = false;
          continue;
        }
        inv_sum += 1.0 / static_cast<double>(dist[t]);
        dist_sum += static_cast<double>(dist[t]);
        diameter = std::max(diameter, dist[t]);
      }
    }
    const double pairs = static_cast<double>(n) * static_cast<double>(n - 1);
    f.set(Feature::efficiency, inv_sum / pairs);
    if (connected) {
      f.set(Feature::avg_shortest_path, dist_sum / pairs);
      f.set(Feature::diameter, static_cast<double>(diameter));
    } else {
      f.unset(Feature::avg_shortest_path);
      f.unset(Feature::diameter);
    }
  }

  const auto adj_eig = linalg::jacobi_eigen(detail::adjacency_matrix(g));
  f.set(Feature::spectral_radius, std::max(0.0, adj_eig.values.back()));
  const auto lap_eig = linalg::jacobi_eigen(detail::laplacian_matrix(g));
  double l2 = lap_eig.values[1];
  if (l2 < 1e-10) l2 = 0.0;
  f.set(Feature::lambda_2, l2);
  return f;
}

/// Median-imputation and z-score parameters, fitted on one matrix and reusable on others.
struct Standardization {
  std::array<double, kNumFeatures> median{};
  std::array<double, kNumFeatures> mean{};
  std::array<double, kNumFeatures> stddev{};
  std::array<bool, kNumFeatures> all_missing{};  // imputed with 0
  std::array<bool, kNumFeatures> constant{};     // sigma < 1e-12, column zeroed
};

struct FeatureMatrix {
  std::vector<std::string> ids;
  std::vector<Domain> domains;
  std::vector<FeatureVector> rows;
  std::optional<Standardization> standardization;

  std::size_t size() const noexcept { return rows.size(); }

  void append(std::string id, Domain d, FeatureVector v) {
    ids.push_back(std::move(id));
    domains.push_back(d);
    rows.push_back(v);
  }

  std::vector<double> column(std::size_t j) const {
    std::vector<double> out(rows.size());
    for (std::size_t i = 0; i < rows.size(); ++i) out[i] = rows[i].values[j];
    return out;
  }

  /// Values as an N x 12 matrix (NaN where non-computable and not yet imputed).
  Matrix values() const {
    Matrix out(rows.size(), kNumFeatures);
    for (std::size_t i = 0; i < rows.size(); ++i)
      for (std::size_t j = 0; j < kNumFeatures; ++j) out(i, j) = rows[i].values[j];
    return out;
  }

  FeatureMatrix select(std::span<const std::size_t> index) const {
    FeatureMatrix out;
    for (std::size_t i : index) out.append(ids[i], domains[i], rows[i]);
    out.standardization = standardization;
    return out;
  }

  FeatureMatrix filter(Domain d) const {
    std::vector<std::size_t> index;
    for (std::size_t i = 0; i < rows.size(); ++i)
      if (domains[i] == d) index.push_back(i);
    return select(index);
  }
};

inline FeatureMatrix concat(const FeatureMatrix& a, const FeatureMatrix& b) {
  FeatureMatrix out = a;
  for (std::size_t i = 0; i < b.size(); ++i) out.append(b.ids[i], b.domains[i], b.rows[i]);
  out.standardization.reset();
  return out;
}

inline FeatureMatrix compute_feature_matrix(std::span<const Graph> graphs, std::size_t threads = 0) {
  FeatureMatrix fm;
  fm.ids.resize(graphs.size());
  fm.domains.resize(graphs.size());
  fm.rows.resize(graphs.size());
  parallel_for(
      graphs.size(),
      [&](std::size_t i) {
        fm.ids[i] = graphs[i].id();
        fm.domains[i] = graphs[i].domain();
        fm.rows[i] = compute_features(graphs[i]);
      },
      threads);
  return fm;
}

inline FeatureMatrix compute_feature_matrix(const DomainEnsemble& e, std::size_t threads = 0) {
  return compute_feature_matrix(std::span<const Graph>(e.graphs), threads);
}

/// Per-feature medians over computed entries; all-missing columns get 0 and are flagged.
inline void fit_medians(const FeatureMatrix& fm, Standardization& p) {
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    std::vector<double> present;
    for (const auto& r : fm.rows)
      if (r.mask[j] && !std::isnan(r.values[j])) present.push_back(r.values[j]);
    p.all_missing[j] = present.empty();
    p.median[j] = present.empty() ? 0.0 : median(present);
  }
}

/// Fills non-computable entries with the column medians (mask is preserved).
inline FeatureMatrix impute_medians(const FeatureMatrix& fm) {
  Standardization p;
  fit_medians(fm, p);
  FeatureMatrix out = fm;
  for (auto& r : out.rows)
    for (std::size_t j = 0; j < kNumFeatures; ++j)
      if (!r.mask[j] || std::isnan(r.values[j])) r.values[j] = p.median[j];
  return out;
}

inline Standardization fit_standardization(const FeatureMatrix& fm) {
  if (fm.size() < 2) throw DataError("standardize: need at least 2 rows");
  Standardization p;
  fit_medians(fm, p);
  const FeatureMatrix filled = impute_medians(fm);
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    const auto col = filled.column(j);
    p.mean[j] = mean(col);
    p.stddev[j] = population_std(col);
    p.constant[j] = p.stddev[j] < 1e-12;
  }
  return p;
}

/// Imputes and z-scores one vector with frozen parameters.
inline std::array<double, kNumFeatures> apply_standardization(const Standardization& p, const FeatureVector& v) {
  std::array<double, kNumFeatures> z{};
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    const double x = (!v.mask[j] || std::isnan(v.values[j])) ? p.median[j] : v.values[j];
    z[j] = p.constant[j] ? 0.0 : (x - p.mean[j]) / p.stddev[j];
  }
  return z;
}

inline FeatureMatrix apply_standardization(const Standardization& p, const FeatureMatrix& fm) {
  FeatureMatrix out = fm;
  for (auto& r : out.rows) r.values = apply_standardization(p, r);
  out.standardization = p;
  return out;
}

inline FeatureMatrix standardize(const FeatureMatrix& fm) {
  return apply_standardization(fit_standardization(fm), fm);
}

// CSV: graph_id,domain,<12 features>,<12 mask_ columns>.
inline std::string feature_csv_header() {
  std::string h = "graph_id,domain";
  for (auto name : kFeatureNames) (h += ",") += name;
  for (auto name : kFeatureNames) (h += ",mask_") += name;
  return h;
}

inline std::string to_csv(const FeatureMatrix& fm) {
  std::string out = feature_csv_header() + "\n";
  for (std::size_t i = 0; i < fm.size(); ++i) {
    out += fm.ids[i];
    out += ",";
    out += to_string(fm.domains[i]);
    for (double v : fm.rows[i].values) (out += ",") += csv::format_double(v, 12);
    for (bool b : fm.rows[i].mask) out += b ? ",1" : ",0";
    out += "\n";
  }
  return out;
}

inline void save_features(const FeatureMatrix& fm, const std::filesystem::path& path) {
  csv::write_file(path, to_csv(fm));
}

inline FeatureMatrix load_features(const std::filesystem::path& path) {
  const auto table = csv::read(path);
  FeatureMatrix fm;
  std::array<std::size_t, kNumFeatures> col{}, mcol{};
  for (std::size_t j = 0; j < kNumFeatures; ++j) {
    col[j] = table.column(kFeatureNames[j]);
    mcol[j] = table.column("mask_" + std::string(kFeatureNames[j]));
  }
  const std::size_t id_col = table.column("graph_id");
  const std::size_t dom_col = table.column("domain");
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    FeatureVector v;
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
      v.values[j] = csv::parse_double(table.rows[r][col[j]], table.source, r + 2);
      v.mask[j] = table.rows[r][mcol[j]] == "1" || table.rows[r][mcol[j]] == "true";
    }
    fm.append(table.rows[r][id_col], parse_domain(table.rows[r][dom_col]), v);
  }
  return fm;
}

}  // namespace xcdtl
