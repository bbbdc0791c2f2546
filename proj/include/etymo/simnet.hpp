// SPDX-License-Identifier: Apache-2.0

// Construction and adaptation of the document similarity network.
//
// Two documents are linked when their blended similarity
//   s = mu * cos(tfidf_u, tfidf_v) + (1 - mu) * cos(dense_u, dense_v)
// exceeds alpha. User feedback then reshapes the undirected network (star
// boosts, library co-membership, click-rate demotion) before edges are
// oriented from the newer paper to the older one.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <vector>

#include "etymo/corpus.hpp"
#include "etymo/error.hpp"
#include "etymo/graph.hpp"
#include "etymo/io.hpp"
#include "etymo/rank.hpp"
#include "etymo/vectorize.hpp"

namespace etymo {

struct GraphConfig {
  double alpha = 0.5;
  double mu = 0.5;
  std::size_t k = 100;
  double gamma_star = 0.05;
  double delta_lib = 0.05;
  double ctr_threshold = 0.02;
  std::size_t top_R = 10;
  double demote_factor = 0.8;
  double prune_floor = 0.05;
  double weight_cap = 1.0;
  /// Impressions needed before a click rate is judged.
  std::uint64_t min_impressions = 20;

  void validate() const {
    auto bad = [](const char* what) { return Error(ErrorCode::InvalidArgument, what); };
    if (!(alpha > 0.0 && alpha < 1.0)) throw bad("alpha must be in (0,1)");
    if (!(mu >= 0.0 && mu <= 1.0)) throw bad("mu must be in [0,1]");
    if (k < 1) throw bad("k must be positive");
    if (!(gamma_star >= 0.0)) throw bad("gamma_star must be >= 0");
    if (!(delta_lib >= 0.0)) throw bad("delta_lib must be >= 0");
    if (!(ctr_threshold > 0.0 && ctr_threshold < 1.0)) throw bad("ctr_threshold must be in (0,1)");
    if (top_R < 1) throw bad("top_R must be positive");
    if (!(demote_factor > 0.0 && demote_factor < 1.0)) throw bad("demote_factor must be in (0,1)");
    if (!(prune_floor >= 0.0)) throw bad("prune_floor must be >= 0");
    if (weight_cap != 1.0) throw bad("weight_cap is fixed at 1.0");
  }
};

inline io::Json to_json(const GraphConfig& c) {
  io::Json j;
  j["alpha"] = c.alpha;
  j["mu"] = c.mu;
  j["k"] = c.k;
  j["gamma_star"] = c.gamma_star;
  j["delta_lib"] = c.delta_lib;
  j["ctr_threshold"] = c.ctr_threshold;
  j["top_R"] = c.top_R;
  j["demote_factor"] = c.demote_factor;
  j["prune_floor"] = c.prune_floor;
  j["weight_cap"] = c.weight_cap;
  j["min_impressions"] = c.min_impressions;
  return j;
}

/// mu-blend of the TF-IDF and dense cosines of two stored documents.
inline double blended_similarity(const DocumentVectors& vecs, std::string_view a, std::string_view b, double mu) {
  auto ta = vecs.tfidf.find(a), tb = vecs.tfidf.find(b);
  auto da = vecs.dense.find(a), db = vecs.dense.find(b);
  if (ta == vecs.tfidf.end() || tb == vecs.tfidf.end() || da == vecs.dense.end() || db == vecs.dense.end())
    throw Error(ErrorCode::IdMismatch, "missing vectors for " + std::string(a) + " or " + std::string(b));
  return mu * cosine_similarity(ta->second, tb->second) +
         (1.0 - mu) * cosine_similarity(da->second, db->second);
}

inline void check_same_ids(const DocumentVectors& vecs) {
  if (vecs.tfidf.size() != vecs.dense.size() ||
      !std::equal(vecs.tfidf.begin(), vecs.tfidf.end(), vecs.dense.begin(),
                  [](const auto& a, const auto& b) { return a.first == b.first; }))
    throw Error(ErrorCode::IdMismatch, "tf-idf and dense vectors cover different ids");
}

/// Exact all-pairs construction. Rows are split across worker threads; the
/// edge map is keyed, so the result does not depend on scheduling.
inline SimilarityGraph build_graph(const DocumentVectors& vecs, const GraphConfig& cfg,
                                   unsigned threads = std::thread::hardware_concurrency()) {
  cfg.validate();
  check_same_ids(vecs);
  SimilarityGraph g;
  std::vector<std::string> ids;
  for (const auto& [id, _] : vecs.tfidf) {
    ids.push_back(id);
    g.add_node(id);
  }
  const std::size_t n = ids.size();
  threads = std::clamp<unsigned>(threads, 1, 64);
  std::vector<std::vector<std::pair<std::pair<std::size_t, std::size_t>, double>>> found(threads);
  auto work = [&](unsigned t) {
    for (std::size_t i = t; i < n; i += threads)
      for (std::size_t j = i + 1; j < n; ++j) {
        const double s = blended_similarity(vecs, ids[i], ids[j], cfg.mu);
        if (s > cfg.alpha) found[t].push_back({{i, j}, std::min(s, cfg.weight_cap)});
      }
  };
  if (threads == 1 || n < 64) {
    threads = 1;
    found.resize(1);
    work(0);
  } else {
    std::vector<std::jthread> pool;
    for (unsigned t = 0; t < threads; ++t) pool.emplace_back(work, t);
  }
  for (const auto& part : found)
    for (const auto& [ij, w] : part) g.edges[{ids[ij.first], ids[ij.second]}] = w;
  return g;
}

/// The k existing nodes with the highest combined rating (ties by id).
inline std::vector<std::string> representative_subset(const SimilarityGraph& g, const RankScores& ranks,
                                                      std::size_t k) {
  std::vector<std::string> ids(g.nodes.begin(), g.nodes.end());
  std::stable_sort(ids.begin(), ids.end(),
                   [&](const auto& a, const auto& b) { return ranks.rating(a) > ranks.rating(b); });
  if (ids.size() > k) ids.resize(k);
  return ids;
}

/// Adds `new_id` comparing it only against the top-k ranked nodes, so one
/// insertion costs O(k n). `vecs` must hold vectors for `new_id` and for
/// the compared nodes.
inline SimilarityGraph insert_paper(SimilarityGraph g, const RankScores& ranks, const std::string& new_id,
                                    const DocumentVectors& vecs, const GraphConfig& cfg) {
  cfg.validate();
  if (g.directed) throw Error(ErrorCode::InvalidArgument, "insert_paper needs an undirected graph");
  if (g.has_node(new_id)) throw Error(ErrorCode::DuplicateNode, new_id);
  const auto subset = representative_subset(g, ranks, cfg.k);
  g.add_node(new_id);
  for (const auto& other : subset) {
    const double s = blended_similarity(vecs, new_id, other, cfg.mu);
    if (s > cfg.alpha) g.set_edge(new_id, other, std::min(s, cfg.weight_cap));
  }
  return g;
}

/// Applies the three feedback rules to an undirected graph, in order:
///  1. stars: every edge incident to a starred doc is scaled by
///     (1 + gamma_star) per star, and the doc's link threshold drops to
///     alpha * (1 - gamma_star * stars), floored at alpha / 2, admitting new
///     edges whose similarity lies between the lowered threshold and alpha;
///  2. libraries: each pair of docs in one user's library gains delta_lib,
///     an absent edge being created at delta_lib;
///  3. click demotion: a doc among the top_R by combined rating with at
///     least min_impressions impressions and click rate below
///     ctr_threshold has every incident edge scaled by demote_factor.
/// Weights are capped at weight_cap and edges at or below prune_floor are
/// dropped at the end. Click events contribute through `impressions` only.
inline SimilarityGraph apply_feedback(SimilarityGraph g, std::span<const FeedbackEvent> events,
                                      const ImpressionMap& impressions, const RankScores& ranks,
                                      const DocumentVectors& vecs, const GraphConfig& cfg) {
  cfg.validate();
  if (g.directed) throw Error(ErrorCode::InvalidArgument, "apply_feedback needs an undirected graph");
  for (const auto& e : events)
    if (!g.has_node(e.doc_id)) throw Error(ErrorCode::NotFound, "feedback on unknown doc '" + e.doc_id + "'");

  // Rule 1.
  std::map<std::string, std::size_t, std::less<>> stars;
  for (const auto& e : events)
    if (e.kind == FeedbackKind::Star) {
      ++stars[e.doc_id];
      for (auto& [k, w] : g.edges)
        if (k.first == e.doc_id || k.second == e.doc_id) w = std::min(w * (1.0 + cfg.gamma_star), cfg.weight_cap);
    }
  for (const auto& [doc, count] : stars) {
    const double lowered =
        std::max(cfg.alpha * (1.0 - cfg.gamma_star * static_cast<double>(count)), cfg.alpha / 2.0);
    if (!(lowered < cfg.alpha)) continue;
    for (const auto& other : g.nodes) {
      if (other == doc || g.weight(doc, other)) continue;
      const double s = blended_similarity(vecs, doc, other, cfg.mu);
      if (s > lowered && s <= cfg.alpha) g.set_edge(doc, other, std::min(s, cfg.weight_cap));
    }
  }

  // Rule 2.
  std::map<std::string, std::set<std::string>> libraries;
  for (const auto& e : events)
    if (e.kind == FeedbackKind::LibraryAdd) libraries[e.user].insert(e.doc_id);
  for (const auto& [user, docs] : libraries)
    for (auto a = docs.begin(); a != docs.end(); ++a)
      for (auto b = std::next(a); b != docs.end(); ++b) {
        if (auto w = g.weight(*a, *b))
          g.set_edge(*a, *b, std::min(*w + cfg.delta_lib, cfg.weight_cap));
        else if (cfg.delta_lib > 0.0)
          g.set_edge(*a, *b, std::min(cfg.delta_lib, cfg.weight_cap));
      }

  // Rule 3.
  auto order = ranks.order();
  std::erase_if(order, [&](const auto& id) { return !g.has_node(id); });
  if (order.size() > cfg.top_R) order.resize(cfg.top_R);
  for (const auto& doc : order) {
    auto it = impressions.find(doc);
    if (it == impressions.end() || it->second.impressions < cfg.min_impressions) continue;
    if (!(it->second.click_rate() < cfg.ctr_threshold)) continue;
    for (auto& [k, w] : g.edges)
      if (k.first == doc || k.second == doc) w *= cfg.demote_factor;
  }

  std::erase_if(g.edges, [&](const auto& kv) { return kv.second <= cfg.prune_floor; });
  return g;
}

/// Directs each edge from the newer paper to the older one; equal dates
/// produce arcs both ways with the original weight.
inline SimilarityGraph orient_temporal(const SimilarityGraph& g, const std::map<std::string, Date, std::less<>>& dates) {
  if (g.directed) throw Error(ErrorCode::InvalidArgument, "graph is already directed");
  for (const auto& n : g.nodes)
    if (!dates.contains(n)) throw Error(ErrorCode::MissingDate, n);
  SimilarityGraph d;
  d.nodes = g.nodes;
  d.directed = true;
  for (const auto& [k, w] : g.edges) {
    const auto& da = dates.find(k.first)->second;
    const auto& db = dates.find(k.second)->second;
    if (da >= db) d.edges[{k.first, k.second}] = w;
    if (db >= da) d.edges[{k.second, k.first}] = w;
  }
  return d;
}

}  // namespace etymo
