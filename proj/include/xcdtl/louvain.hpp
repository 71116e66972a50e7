#pragma once

#include <cstddef>
#include <algorithm>
#include <limits>
#include <map>
#include <numeric>
#include <vector>

#include "xcdtl/graph.hpp"

namespace xcdtl {

/// Newman modularity (resolution 1) of a node partition of an unweighted graph.
inline double modularity(const Graph& g, const std::vector<std::size_t>& community) {
  const double m = static_cast<double>(g.edge_count());
  if (m == 0.0) return 0.0;
  const std::size_t k = community.empty() ? 0 : *std::max_element(community.begin(), community.end()) + 1;
  std::vector<double> internal(k, 0.0), degree_sum(k, 0.0);
  for (auto [u, v] : g.edges()) {
    if (community[u] == community[v]) internal[community[u]] += 1.0;
    degree_sum[community[u]] += 1.0;
    degree_sum[community[v]] += 1.0;
  }
  double q = 0.0;
  for (std::size_t c = 0; c < k; ++c) {
    const double frac = degree_sum[c] / (2.0 * m);
    q += internal[c] / m - frac * frac;
  }
  return q;
}

struct LouvainResult {
  std::vector<std::size_t> community;  // per original node, labels 0..k-1
  double modularity = 0.0;
  std::size_t levels = 0;
};

/**
 * Deterministic two-phase Louvain at resolution 1.
 *
 * Nodes are visited in ascending id; a node moves only if the best
 * neighbouring community beats staying by more than 1e-12, with ties going
 * to the lowest community id. Levels repeat until a local-moving phase
 * makes no move.
 */
inline LouvainResult louvain(const Graph& g) {
  const std::size_t n0 = g.node_count();
  LouvainResult result;
  result.community.resize(n0);
  std::iota(result.community.begin(), result.community.end(), std::size_t{0});
  if (g.edge_count() == 0) return result;

  // Weighted symmetric adjacency; loops[i] holds A_ii (twice the internal edge weight).
  std::vector<std::map<std::size_t, double>> adj(n0);
  std::vector<double> loops(n0, 0.0);
  for (auto [u, v] : g.edges()) {
    adj[u][v] += 1.0;
    adj[v][u] += 1.0;
  }
  const double m2 = 2.0 * static_cast<double>(g.edge_count());

  for (;;) {
    const std::size_t n = adj.size();
    std::vector<double> k(n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      k[i] = loops[i];
      for (const auto& [j, w] : adj[i]) k[i] += w;
    }
    std::vector<std::size_t> comm(n);
    std::iota(comm.begin(), comm.end(), std::size_t{0});
    std::vector<double> tot = k;

    bool any_move = false;
    std::map<std::size_t, double> links;
    for (std::size_t pass = 0; pass < 1000; ++pass) {
      bool moved = false;
      for (std::size_t i = 0; i < n; ++i) {
        const std::size_t own = comm[i];
        links.clear();
        for (const auto& [j, w] : adj[i]) links[comm[j]] += w;
        tot[own] -= k[i];
        const double own_link = links.count(own) ? links[own] : 0.0;
        const double own_gain = own_link - tot[own] * k[i] / m2;
        std::size_t best = own;
        double best_gain = -std::numeric_limits<double>::infinity();
        for (const auto& [c, w] : links) {  // ascending community id
          if (c == own) continue;
          const double gain = w - tot[c] * k[i] / m2;
          if (gain > best_gain) {
            best_gain = gain;
            best = c;
          }
        }
        if (best != own && best_gain > own_gain + 1e-12) {
          comm[i] = best;
          moved = true;
          any_move = true;
        }
        tot[comm[i]] += k[i];
      }
      if (!moved) break;
    }
    if (!any_move) break;

    // Relabel communities by first appearance in node order, then aggregate.
    std::vector<std::size_t> relabel(n, n);
    std::size_t next = 0;
    for (std::size_t i = 0; i < n; ++i)
      if (relabel[comm[i]] == n) relabel[comm[i]] = next++;
    for (auto& c : result.community) c = relabel[comm[c]];

    std::vector<std::map<std::size_t, double>> agg(next);
    std::vector<double> agg_loops(next, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
      const std::size_t ci = relabel[comm[i]];
      agg_loops[ci] += loops[i];
      for (const auto& [j, w] : adj[i]) {
        const std::size_t cj = relabel[comm[j]];
        if (ci == cj)
          agg_loops[ci] += w;
        else
          agg[ci][cj] += w;
      }
    }
    adj = std::move(agg);
    loops = std::move(agg_loops);
    ++result.levels;
    if (next == 1) break;
  }
  result.modularity = modularity(g, result.community);
  return result;
}

inline double louvain_modularity(const Graph& g) { return louvain(g).modularity; }

}  // namespace xcdtl
