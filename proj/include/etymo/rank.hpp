// SPDX-License-Identifier: Apache-2.0

// PageRank and Reverse PageRank by power iteration, and their blend into a
// single importance rating.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etymo/error.hpp"
#include "etymo/graph.hpp"
#include "etymo/io.hpp"

namespace etymo {

using ScoreMap = std::map<std::string, double, std::less<>>;

struct RankConfig {
  double damping = 0.85;
  int iterations = 10;
  /// Stop early once the L1 change between iterates drops below this; 0 disables.
  double tolerance = 0.0;
  double beta = 0.5;

  void validate() const {
    if (!(damping >= 0.0 && damping <= 1.0)) throw Error(ErrorCode::InvalidArgument, "damping must be in [0,1]");
    if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be positive");
    if (!(tolerance >= 0.0)) throw Error(ErrorCode::InvalidArgument, "tolerance must be >= 0");
    if (!(beta >= 0.0 && beta <= 1.0)) throw Error(ErrorCode::InvalidArgument, "beta must be in [0,1]");
  }
};

/// Called with (iteration, iterate) after every power step.
using IterateObserver = std::function<void(int, std::span<const double>)>;

/// Power method on the row-normalized transition matrix:
///   x <- damping * (P^T x + dangling_mass / N) + (1 - damping) / N
/// starting from the uniform vector. Nodes with no positive out-weight are
/// dangling. An undirected graph is treated as having both arcs per edge.
inline ScoreMap pagerank(const SimilarityGraph& g, double damping, int iterations,
                         double tolerance = 0.0, const IterateObserver& observer = {}) {
  const std::size_t n = g.nodes.size();
  if (n == 0) throw Error(ErrorCode::EmptyGraph, "pagerank of an empty graph");
  if (iterations < 1) throw Error(ErrorCode::InvalidArgument, "iterations must be positive");

  std::map<std::string_view, std::size_t> index;
  for (const auto& id : g.nodes) index.emplace(id, index.size());

  struct Arc {
    std::size_t target;
    double weight;
  };
  std::vector<std::vector<Arc>> out(n);
  auto add_arc = [&](const std::string& s, const std::string& t, double w) {
    if (w < 0.0) throw Error(ErrorCode::InvalidArgument, "negative edge weight");
    if (w > 0.0) out[index.at(s)].push_back({index.at(t), w});
  };
  for (const auto& [k, w] : g.edges) {
    add_arc(k.first, k.second, w);
    if (!g.directed) add_arc(k.second, k.first, w);
  }
  std::vector<double> out_sum(n, 0.0);
  for (std::size_t s = 0; s < n; ++s)
    for (const auto& a : out[s]) out_sum[s] += a.weight;

  const double uniform = 1.0 / static_cast<double>(n);
  std::vector<double> x(n, uniform), y(n);
  for (int it = 1; it <= iterations; ++it) {
    std::fill(y.begin(), y.end(), 0.0);
    double dangling = 0.0;
    for (std::size_t s = 0; s < n; ++s) {
      if (out[s].empty()) {
        dangling += x[s];
        continue;
      }
      const double share = x[s] / out_sum[s];
      for (const auto& a : out[s]) y[a.target] += share * a.weight;
    }
    double change = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      y[i] = damping * (y[i] + dangling * uniform) + (1.0 - damping) * uniform;
      change += std::abs(y[i] - x[i]);
    }
    x.swap(y);
    if (observer) observer(it, x);
    if (tolerance > 0.0 && change < tolerance) break;
  }

  ScoreMap scores;
  std::size_t i = 0;
  for (const auto& id : g.nodes) scores.emplace(id, x[i++]);
  return scores;
}

/// PageRank on the edge-reversed graph.
inline ScoreMap reverse_pagerank(const SimilarityGraph& g, double damping, int iterations,
                                 double tolerance = 0.0, const IterateObserver& observer = {}) {
  return pagerank(reverse(g), damping, iterations, tolerance, observer);
}

/// beta * pr / max(pr) + (1 - beta) * rpr / max(rpr).
inline ScoreMap combined_rating(const ScoreMap& pr, const ScoreMap& rpr, double beta) {
  if (pr.size() != rpr.size() ||
      !std::equal(pr.begin(), pr.end(), rpr.begin(), [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw Error(ErrorCode::IdMismatch, "pagerank and reverse pagerank cover different ids");
  auto max_of = [](const ScoreMap& m) {
    double mx = 0.0;
    for (const auto& [_, v] : m) mx = std::max(mx, v);
    return mx;
  };
  const double max_pr = max_of(pr), max_rpr = max_of(rpr);
  if (!pr.empty() && (!(max_pr > 0.0) || !(max_rpr > 0.0)))
    throw Error(ErrorCode::InvalidArgument, "rank vectors need a positive maximum");
  ScoreMap out;
  for (auto i = pr.begin(), j = rpr.begin(); i != pr.end(); ++i, ++j)
    out.emplace(i->first, beta * (i->second / max_pr) + (1.0 - beta) * (j->second / max_rpr));
  return out;
}

struct RankScores {
  ScoreMap pagerank;
  ScoreMap reverse_pagerank;
  ScoreMap combined;
  double damping = 0.85;
  int iterations = 10;
  double beta = 0.5;

  /// Combined rating, 0 for ids that were not ranked (e.g. newly inserted).
  double rating(std::string_view id) const {
    auto it = combined.find(id);
    return it == combined.end() ? 0.0 : it->second;
  }

  /// Ids by combined rating descending, ties by id ascending.
  std::vector<std::string> order() const {
    std::vector<std::string> ids;
    ids.reserve(combined.size());
    for (const auto& [id, _] : combined) ids.push_back(id);
    std::stable_sort(ids.begin(), ids.end(),
                     [&](const auto& a, const auto& b) { return combined.at(a) > combined.at(b); });
    return ids;
  }
};

inline RankScores compute_ranks(const SimilarityGraph& g, const RankConfig& cfg) {
  cfg.validate();
  RankScores r;
  r.damping = cfg.damping;
  r.iterations = cfg.iterations;
  r.beta = cfg.beta;
  r.pagerank = pagerank(g, cfg.damping, cfg.iterations, cfg.tolerance);
  r.reverse_pagerank = reverse_pagerank(g, cfg.damping, cfg.iterations, cfg.tolerance);
  r.combined = combined_rating(r.pagerank, r.reverse_pagerank, cfg.beta);
  return r;
}

/// ranks.json: [{id, pagerank, reverse_pagerank, combined}] by combined desc, ties by id.
inline io::Json to_json(const RankScores& r) {
  auto arr = io::Json::array();
  for (const auto& id : r.order()) {
    io::Json e;
    e["id"] = id;
    e["pagerank"] = r.pagerank.at(id);
    e["reverse_pagerank"] = r.reverse_pagerank.at(id);
    e["combined"] = r.combined.at(id);
    arr.push_back(std::move(e));
  }
  return arr;
}

inline RankScores ranks_from_json(const io::Json& j) {
  RankScores r;
  for (const auto& e : j) {
    const auto id = e.at("id").get<std::string>();
    r.pagerank[id] = e.at("pagerank").get<double>();
    r.reverse_pagerank[id] = e.at("reverse_pagerank").get<double>();
    r.combined[id] = e.at("combined").get<double>();
  }
  return r;
}

}  // namespace etymo
