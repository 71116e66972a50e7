#pragma once

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "xcdtl/core/error.hpp"
#include "xcdtl/core/parallel.hpp"
#include "xcdtl/core/rng.hpp"
#include "xcdtl/graph.hpp"

namespace xcdtl {

struct SizeRange {
  std::size_t min = 10;
  std::size_t max = 30;
  friend bool operator==(const SizeRange&, const SizeRange&) = default;
};

inline SizeRange default_size_range(Domain d) {
  return d == Domain::Molecular ? SizeRange{10, 23} : SizeRange{10, 30};
}

struct DomainEnsemble {
  Domain domain = Domain::Social;
  std::vector<Graph> graphs;
  std::uint64_t seed = 0;

  std::size_t size() const noexcept { return graphs.size(); }
};

namespace detail {

// Dense adjacency bitsets for the generators' inner loops.
class BitAdjacency {
 public:
  explicit BitAdjacency(std::size_t n) : n_(n), words_((n + 63) / 64), bits_(n * words_, 0) {}

  bool test(std::size_t u, std::size_t v) const { return (bits_[u * words_ + v / 64] >> (v % 64)) & 1U; }
  void link(std::size_t u, std::size_t v) {
    bits_[u * words_ + v / 64] |= std::uint64_t{1} << (v % 64);
    bits_[v * words_ + u / 64] |= std::uint64_t{1} << (u % 64);
  }
  std::size_t common(std::size_t u, std::size_t v) const {
    std::size_t c = 0;
    for (std::size_t w = 0; w < words_; ++w)
      c += static_cast<std::size_t>(std::popcount(bits_[u * words_ + w] & bits_[v * words_ + w]));
    return c;
  }
  std::size_t size() const noexcept { return n_; }

  std::vector<Edge> edges() const {
    std::vector<Edge> out;
    for (std::size_t u = 0; u < n_; ++u)
      for (std::size_t v = u + 1; v < n_; ++v)
        if (test(u, v)) out.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    return out;
  }

 private:
  std::size_t n_;
  std::size_t words_;
  std::vector<std::uint64_t> bits_;
};

inline std::size_t draw_size(Rng& rng, SizeRange r) {
  return static_cast<std::size_t>(rng.uniform_int(static_cast<std::int64_t>(r.min),
                                                  static_cast<std::int64_t>(r.max)));
}

// Erdos-Renyi G(n, p) followed by 2n triadic-closure passes.
inline std::vector<Edge> social_edges(Rng& rng, std::size_t n, double p) {
  BitAdjacency adj(n);
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v)
      if (rng.bernoulli(p)) adj.link(u, v);

  std::vector<std::pair<std::size_t, std::size_t>> open;
  std::vector<std::size_t> weight;
  for (std::size_t pass = 0; pass < 2 * n; ++pass) {
    open.clear();
    weight.clear();
    std::size_t total = 0;
    for (std::size_t u = 0; u < n; ++u)
      for (std::size_t v = u + 1; v < n; ++v) {
        if (adj.test(u, v)) continue;
        const std::size_t c = adj.common(u, v);
        if (c == 0) continue;
        open.emplace_back(u, v);
        weight.push_back(c);
        total += c;
      }
    if (total == 0) break;
    // A two-path drawn uniformly selects its endpoint pair with weight = #common neighbors.
    auto r = static_cast<std::size_t>(rng.uniform_int(0, static_cast<std::int64_t>(total) - 1));
    std::size_t k = 0;
    while (r >= weight[k]) r -= weight[k++];
    if (rng.bernoulli(0.8)) adj.link(open[k].first, open[k].second);
  }
  return adj.edges();
}

inline std::vector<Edge> prufer_decode(const std::vector<std::size_t>& seq, std::size_t n) {
  std::vector<std::size_t> degree(n, 1);
  for (std::size_t x : seq) ++degree[x];
  std::vector<Edge> edges;
  for (std::size_t x : seq) {
    std::size_t leaf = 0;
    while (degree[leaf] != 1) ++leaf;
    edges.emplace_back(static_cast<NodeId>(leaf), static_cast<NodeId>(x));
    --degree[leaf];
    --degree[x];
  }
  std::size_t u = n, v = n;
  for (std::size_t i = 0; i < n; ++i)
    if (degree[i] == 1) (u == n ? u : v) = i;
  if (u < n && v < n) edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
  return edges;
}

// Valence-limited random tree plus an optional ring closure.
inline std::vector<Edge> molecular_edges(Rng& rng, std::size_t n) {
  if (n < 2) return {};
  std::vector<Edge> edges;
  std::vector<std::size_t> seq(n - 2);
  for (int attempt = 0;; ++attempt) {
    std::vector<std::size_t> count(n, 0);
    bool ok = true;
    for (auto& x : seq) {
      x = rng.index(n);
      if (++count[x] > 3) ok = false;  // tree degree = count + 1 must stay <= 4
    }
    if (ok || attempt >= 10000) break;
  }
  edges = prufer_decode(seq, n);
  if (!rng.bernoulli(0.3)) return edges;

  const Graph tree("", Domain::Molecular, n, edges);
  const auto adj = tree.adjacency();
  // BFS distances from every node.
  std::vector<Edge> candidates;
  std::vector<std::size_t> dist(n);
  std::vector<NodeId> queue;
  for (NodeId s = 0; s < n; ++s) {
    std::fill(dist.begin(), dist.end(), n + 1);
    dist[s] = 0;
    queue.assign(1, s);
    for (std::size_t h = 0; h < queue.size(); ++h)
      for (NodeId w : adj[queue[h]])
        if (dist[w] > n) {
          dist[w] = dist[queue[h]] + 1;
          queue.push_back(w);
        }
    for (NodeId t = s + 1; t < n; ++t)
      if (dist[t] >= 3 && adj[s].size() < 4 && adj[t].size() < 4) candidates.emplace_back(s, t);
  }
  if (!candidates.empty()) edges.push_back(candidates[rng.index(candidates.size())]);
  return edges;
}

inline std::vector<Edge> planted_partition_edges(Rng& rng, std::size_t n, std::size_t blocks,
                                                 double p_in, double p_out) {
  std::vector<Edge> edges;
  for (std::size_t u = 0; u < n; ++u)
    for (std::size_t v = u + 1; v < n; ++v) {
      const bool same = (u * blocks / n) == (v * blocks / n);
      if (rng.bernoulli(same ? p_in : p_out))
        edges.emplace_back(static_cast<NodeId>(u), static_cast<NodeId>(v));
    }
  return edges;
}

// Holme-Kim growth: preferential attachment with triad formation.
inline std::vector<Edge> holme_kim_edges(Rng& rng, std::size_t n, std::size_t m, double p_triad) {
  if (n <= m) return {};
  BitAdjacency adj(n);
  std::vector<std::vector<NodeId>> nbrs(n);
  auto link = [&](std::size_t u, std::size_t v) {
    adj.link(u, v);
    nbrs[u].push_back(static_cast<NodeId>(v));
    nbrs[v].push_back(static_cast<NodeId>(u));
  };
  std::vector<std::size_t> repeated(m);
  for (std::size_t i = 0; i < m; ++i) repeated[i] = i;
  for (std::size_t source = m; source < n; ++source) {
    std::vector<std::size_t> targets;
    while (targets.size() < m) {
      const std::size_t t = repeated[rng.index(repeated.size())];
      if (std::find(targets.begin(), targets.end(), t) == targets.end()) targets.push_back(t);
    }
    std::size_t target = targets.back();
    targets.pop_back();
    link(source, target);
    repeated.push_back(target);
    std::size_t count = 1;
    while (count < m) {
      if (rng.bernoulli(p_triad)) {
        std::vector<NodeId> hood;
        for (NodeId w : nbrs[target])
          if (w != source && !adj.test(source, w)) hood.push_back(w);
        if (!hood.empty()) {
          const NodeId w = hood[rng.index(hood.size())];
          link(source, w);
          repeated.push_back(w);
          ++count;
          continue;
        }
      }
      target = targets.back();
      targets.pop_back();
      link(source, target);
      repeated.push_back(target);
      ++count;
    }
    repeated.insert(repeated.end(), m, source);
  }
  return adj.edges();
}

inline std::string graph_id(Domain d, std::size_t index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", index);
  return std::string(to_string(d)) + "_" + buf;
}

}  // namespace detail

// Planted-partition edge probabilities for the Proteins regime.
inline constexpr double kProteinsInBlock = 0.8;
inline constexpr double kProteinsCrossBlock = 0.02;

/**
 * One connected graph of the given domain.
 *
 * Topology parameters are drawn once; edge sets are resampled up to 100
 * times until connected, after which the largest component is kept.
 */
inline Graph generate_graph(Domain domain, std::uint64_t seed, SizeRange range, std::string id = {}) {
  if (range.min < 1 || range.min > range.max) throw DataError("invalid size range");
  // Stream keyed by (seed, domain) so equal seeds do not couple domains.
  Rng rng(mix64(seed + 0x632BE59BD9B4E019ULL * (static_cast<std::uint64_t>(domain) + 1)));
  const std::size_t n = detail::draw_size(rng, range);
  double p = 0.0;
  std::size_t blocks = 0;
  switch (domain) {
    case Domain::Social: p = rng.uniform(0.45, 0.85); break;
    case Domain::Proteins: blocks = static_cast<std::size_t>(rng.uniform_int(2, 4)); break;
    default: break;
  }
  auto sample = [&]() -> std::vector<Edge> {
    switch (domain) {
      case Domain::Social: return detail::social_edges(rng, n, p);
      case Domain::Molecular: return detail::molecular_edges(rng, n);
      case Domain::Proteins: return detail::planted_partition_edges(rng, n, std::min(blocks, n), kProteinsInBlock, kProteinsCrossBlock);
      case Domain::Linguistic: return detail::holme_kim_edges(rng, n, 2, 0.75);
    }
    return {};
  };
  Graph g;
  for (int attempt = 0; attempt < 100; ++attempt) {
    g = Graph(id, domain, n, sample());
    if (is_connected(g)) return g;
  }
  return largest_component(g);
}

inline DomainEnsemble generate_ensemble(Domain domain, std::size_t count, std::uint64_t seed,
                                        SizeRange range, std::size_t threads = 0) {
  if (count < 1) throw DataError("generate_ensemble: count must be >= 1");
  if (range.min < 1 || range.min > range.max) throw DataError("generate_ensemble: invalid size range");
  DomainEnsemble e{domain, std::vector<Graph>(count), seed};
  parallel_for(
      count,
      [&](std::size_t i) {
        e.graphs[i] = generate_graph(domain, derive_seed(seed, i), range, detail::graph_id(domain, i));
      },
      threads);
  return e;
}

inline DomainEnsemble generate_ensemble(Domain domain, std::size_t count, std::uint64_t seed) {
  return generate_ensemble(domain, count, seed, default_size_range(domain));
}

/// Indices of a uniform sample without replacement, ascending.
inline std::vector<std::size_t> sample_indices(std::size_t pool, std::size_t n, std::uint64_t seed) {
  if (n > pool) throw DataError("sample_subset: requested " + std::to_string(n) +
                                " graphs from a pool of " + std::to_string(pool));
  Rng rng(seed);
  auto perm = rng.permutation(pool);
  perm.resize(n);
  std::sort(perm.begin(), perm.end());
  return perm;
}

inline DomainEnsemble sample_subset(const DomainEnsemble& ensemble, std::size_t n, std::uint64_t seed) {
  DomainEnsemble out{ensemble.domain, {}, seed};
  for (std::size_t i : sample_indices(ensemble.size(), n, seed)) out.graphs.push_back(ensemble.graphs[i]);
  return out;
}

inline void save_ensemble(const DomainEnsemble& e, const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw DataError("cannot write " + path.string());
  for (const auto& g : e.graphs) out << to_json(g).dump() << '\n';
}

inline DomainEnsemble load_ensemble(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  DomainEnsemble e;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      e.graphs.push_back(graph_from_json(nlohmann::json::parse(line)));
    } catch (const nlohmann::json::exception& ex) {
      throw ParseError(path.string(), lineno, ex.what());
    }
    if (e.graphs.size() > 1 && e.graphs.back().domain() != e.graphs.front().domain())
      throw ParseError(path.string(), lineno, "mixed domains in one ensemble");
  }
  if (e.graphs.empty()) throw DataError(path.string() + ": no graphs");
  e.domain = e.graphs.front().domain();
  return e;
}

}  // namespace xcdtl
