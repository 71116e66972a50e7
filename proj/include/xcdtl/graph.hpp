#pragma once

#include <algorithm>
#include <cctype>
#include <array>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <utility>
#include <vector>

#include <json.hpp>

#include "xcdtl/core/error.hpp"

namespace xcdtl {

enum class Domain : std::uint8_t { Social = 0, Molecular = 1, Proteins = 2, Linguistic = 3 };

inline constexpr std::array<Domain, 4> kAllDomains{Domain::Social, Domain::Molecular,
                                                   Domain::Proteins, Domain::Linguistic};

inline std::string_view to_string(Domain d) {
  switch (d) {
    case Domain::Social: return "Social";
    case Domain::Molecular: return "Molecular";
    case Domain::Proteins: return "Proteins";
    case Domain::Linguistic: return "Linguistic";
  }
  return "?";
}

inline Domain parse_domain(std::string_view s) {
  for (Domain d : kAllDomains)
    if (to_string(d) == s) return d;
  std::string lower(s);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "social" || lower == "soc") return Domain::Social;
  if (lower == "molecular" || lower == "mol") return Domain::Molecular;
  if (lower == "proteins" || lower == "prot" || lower == "protein") return Domain::Proteins;
  if (lower == "linguistic" || lower == "ling") return Domain::Linguistic;
  throw DataError("unknown domain '" + std::string(s) + "'");
}

using NodeId = std::uint32_t;
using Edge = std::pair<NodeId, NodeId>;

/**
 * Undirected, unweighted simple graph.
 *
 * Edges are stored canonically (u < v), sorted and unique.
 */
class Graph {
 public:
  Graph() = default;

  /// Builds a graph, canonicalizing edge orientation and dropping self-loops and duplicates.
  Graph(std::string id, Domain domain, std::size_t n, std::vector<Edge> edges)
      : id_(std::move(id)), domain_(domain), n_(n) {
    for (auto& [u, v] : edges) {
      if (u >= n || v >= n)
        throw DataError("graph '" + id_ + "': edge endpoint out of range");
      if (u > v) std::swap(u, v);
    }
    std::erase_if(edges, [](const Edge& e) { return e.first == e.second; });
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    edges_ = std::move(edges);
  }

  const std::string& id() const noexcept { return id_; }
  void set_id(std::string id) { id_ = std::move(id); }
  Domain domain() const noexcept { return domain_; }
  std::size_t node_count() const noexcept { return n_; }
  std::size_t edge_count() const noexcept { return edges_.size(); }
  const std::vector<Edge>& edges() const noexcept { return edges_; }

  bool has_edge(NodeId u, NodeId v) const {
    if (u > v) std::swap(u, v);
    return std::binary_search(edges_.begin(), edges_.end(), Edge{u, v});
  }

  /// Sorted neighbor lists.
  std::vector<std::vector<NodeId>> adjacency() const {
    std::vector<std::vector<NodeId>> adj(n_);
    for (auto [u, v] : edges_) {
      adj[u].push_back(v);
      adj[v].push_back(u);
    }
    for (auto& nb : adj) std::sort(nb.begin(), nb.end());
    return adj;
  }

  std::vector<std::size_t> degrees() const {
    std::vector<std::size_t> deg(n_, 0);
    for (auto [u, v] : edges_) {
      ++deg[u];
      ++deg[v];
    }
    return deg;
  }

  friend bool operator==(const Graph&, const Graph&) = default;

 private:
  std::string id_;
  Domain domain_ = Domain::Social;
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
};

/// Connected-component label per node, components numbered by lowest member.
inline std::vector<std::size_t> component_labels(const Graph& g) {
  const auto adj = g.adjacency();
  constexpr auto unset = static_cast<std::size_t>(-1);
  std::vector<std::size_t> label(g.node_count(), unset);
  std::size_t next = 0;
  std::vector<NodeId> stack;
  for (NodeId s = 0; s < g.node_count(); ++s) {
    if (label[s] != unset) continue;
    label[s] = next;
    stack.push_back(s);
    while (!stack.empty()) {
      const NodeId u = stack.back();
      stack.pop_back();
      for (NodeId v : adj[u])
        if (label[v] == unset) {
          label[v] = next;
          stack.push_back(v);
        }
    }
    ++next;
  }
  return label;
}

inline bool is_connected(const Graph& g) {
  if (g.node_count() == 0) return false;
  const auto label = component_labels(g);
  return std::all_of(label.begin(), label.end(), [](std::size_t l) { return l == 0; });
}

/// Induced subgraph on the largest connected component (ties: lowest-numbered component).
inline Graph largest_component(const Graph& g) {
  const auto label = component_labels(g);
  std::vector<std::size_t> size;
  for (std::size_t l : label) {
    if (l >= size.size()) size.resize(l + 1, 0);
    ++size[l];
  }
  const auto best = static_cast<std::size_t>(std::max_element(size.begin(), size.end()) - size.begin());
  std::vector<NodeId> remap(g.node_count(), 0);
  NodeId next = 0;
  for (std::size_t u = 0; u < g.node_count(); ++u)
    if (label[u] == best) remap[u] = next++;
  std::vector<Edge> edges;
  for (auto [u, v] : g.edges())
    if (label[u] == best) edges.emplace_back(remap[u], remap[v]);
  return Graph(g.id(), g.domain(), next, std::move(edges));
}

struct EdgeListLoad {
  Graph graph;
  std::size_t dropped_edges = 0;  // self-loops and duplicates
};

/**
 * Reads a whitespace-separated "u v" edge list; '#' lines are comments.
 * Node ids are remapped to 0..n-1 in order of first appearance.
 */
inline EdgeListLoad load_edge_list(std::istream& in, Domain domain, const std::string& id,
                                   const std::string& source = "<stream>") {
  std::unordered_map<std::uint64_t, NodeId> remap;
  std::vector<Edge> raw;
  std::string line;
  std::size_t lineno = 0;
  auto node = [&](std::uint64_t x) {
    auto [it, inserted] = remap.try_emplace(x, static_cast<NodeId>(remap.size()));
    return it->second;
  };
  while (std::getline(in, line)) {
    ++lineno;
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream fields(line);
    std::string a, b, extra;
    fields >> a >> b;
    if (b.empty() || (fields >> extra))
      throw ParseError(source, lineno, "expected two node ids");
    auto parse = [&](const std::string& s) {
      if (s.empty() || s.find_first_not_of("0123456789") != std::string::npos)
        throw ParseError(source, lineno, "node id is not a non-negative integer: '" + s + "'");
      try {
        return static_cast<std::uint64_t>(std::stoull(s));
      } catch (const std::out_of_range&) {
        throw ParseError(source, lineno, "node id out of range: '" + s + "'");
      }
    };
    const NodeId u = node(parse(a));
    const NodeId v = node(parse(b));
    raw.emplace_back(u, v);
  }
  if (raw.empty()) throw DataError(source + ": edge list is empty");
  const std::size_t raw_count = raw.size();
  Graph g(id, domain, remap.size(), std::move(raw));
  const std::size_t dropped = raw_count - g.edge_count();
  return {std::move(g), dropped};
}

inline EdgeListLoad load_edge_list(const std::filesystem::path& path, Domain domain) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open " + path.string());
  return load_edge_list(in, domain, path.stem().string(), path.string());
}

inline nlohmann::ordered_json to_json(const Graph& g) {
  nlohmann::ordered_json edges = nlohmann::ordered_json::array();
  for (auto [u, v] : g.edges()) edges.push_back({u, v});
  return {{"id", g.id()}, {"domain", std::string(to_string(g.domain()))},
          {"n", g.node_count()}, {"edges", std::move(edges)}};
}

inline Graph graph_from_json(const nlohmann::json& j) {
  std::vector<Edge> edges;
  for (const auto& e : j.at("edges")) {
    if (!e.is_array() || e.size() != 2) throw DataError("edge must be a [u, v] pair");
    edges.emplace_back(e[0].get<NodeId>(), e[1].get<NodeId>());
  }
  return Graph(j.at("id").get<std::string>(), parse_domain(j.at("domain").get<std::string>()),
               j.at("n").get<std::size_t>(), std::move(edges));
}

}  // namespace xcdtl
