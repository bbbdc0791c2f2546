// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "etymo/error.hpp"
#include "etymo/io.hpp"

namespace etymo {

/// Weighted document graph. While undirected, every edge is stored once
/// under the key (min(a, b), max(a, b)); once directed, keys are
/// (source, target) arcs.
struct SimilarityGraph {
  using Key = std::pair<std::string, std::string>;

  std::set<std::string, std::less<>> nodes;
  std::map<Key, double> edges;
  bool directed = false;

  bool has_node(std::string_view id) const { return nodes.find(id) != nodes.end(); }

  void add_node(std::string id) { nodes.insert(std::move(id)); }

  Key key(std::string a, std::string b) const {
    if (!directed && b < a) std::swap(a, b);
    return {std::move(a), std::move(b)};
  }

  void set_edge(const std::string& a, const std::string& b, double w) {
    if (a == b) throw Error(ErrorCode::InvalidArgument, "self-loop on '" + a + "'");
    if (!has_node(a) || !has_node(b))
      throw Error(ErrorCode::NotFound, "edge endpoint not in graph: " + a + ", " + b);
    edges[key(a, b)] = w;
  }

  std::optional<double> weight(const std::string& a, const std::string& b) const {
    auto it = edges.find(key(a, b));
    if (it == edges.end()) return std::nullopt;
    return it->second;
  }

  double total_weight() const {
    double s = 0.0;
    for (const auto& [_, w] : edges) s += w;
    return s;
  }

  /// Neighbors of every node ignoring direction; a pair joined by arcs in
  /// both directions appears once with the larger weight.
  std::map<std::string, std::map<std::string, double>, std::less<>> undirected_adjacency() const {
    std::map<std::string, std::map<std::string, double>, std::less<>> adj;
    for (const auto& n : nodes) adj[n];
    for (const auto& [k, w] : edges) {
      auto put = [&](const std::string& a, const std::string& b) {
        auto [it, inserted] = adj[a].emplace(b, w);
        if (!inserted && w > it->second) it->second = w;
      };
      put(k.first, k.second);
      put(k.second, k.first);
    }
    return adj;
  }

  friend bool operator==(const SimilarityGraph&, const SimilarityGraph&) = default;
};

/// Every arc (s, t) becomes (t, s). Undirected graphs are returned as is.
inline SimilarityGraph reverse(const SimilarityGraph& g) {
  if (!g.directed) return g;
  SimilarityGraph r;
  r.nodes = g.nodes;
  r.directed = true;
  for (const auto& [k, w] : g.edges) r.edges[{k.second, k.first}] = w;
  return r;
}

/// Forgets direction; a reciprocal arc pair collapses to one edge.
inline SimilarityGraph undirected_projection(const SimilarityGraph& g) {
  if (!g.directed) return g;
  SimilarityGraph u;
  u.nodes = g.nodes;
  for (const auto& [k, w] : g.edges) {
    auto key = u.key(k.first, k.second);
    auto [it, inserted] = u.edges.emplace(key, w);
    if (!inserted && w > it->second) it->second = w;
  }
  return u;
}

/// graph.json: {directed, config, nodes, edges: [{a, b, w}]} sorted by (a, b).
inline io::Json graph_to_json(const SimilarityGraph& g, const io::Json& config = io::Json::object()) {
  io::Json j;
  j["directed"] = g.directed;
  j["config"] = config;
  j["nodes"] = io::Json::array();
  for (const auto& n : g.nodes) j["nodes"].push_back(n);
  j["edges"] = io::Json::array();
  for (const auto& [k, w] : g.edges) {
    io::Json e;
    e["a"] = k.first;
    e["b"] = k.second;
    e["w"] = w;
    j["edges"].push_back(std::move(e));
  }
  return j;
}

inline SimilarityGraph graph_from_json(const io::Json& j) {
  SimilarityGraph g;
  g.directed = j.at("directed").get<bool>();
  for (const auto& n : j.at("nodes")) g.add_node(n.get<std::string>());
  for (const auto& e : j.at("edges"))
    g.set_edge(e.at("a").get<std::string>(), e.at("b").get<std::string>(), e.at("w").get<double>());
  return g;
}

}  // namespace etymo
