// SPDX-License-Identifier: Apache-2.0

// Query-time scoring, related-paper lookup, the per-user feed and
// impression counting.

#pragma once

#include <algorithm>
#include <cstdint>
#include <map>
#include <set>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "etymo/corpus.hpp"
#include "etymo/error.hpp"
#include "etymo/graph.hpp"
#include "etymo/io.hpp"
#include "etymo/rank.hpp"
#include "etymo/vectorize.hpp"

namespace etymo {

struct SearchResult {
  std::string doc_id;
  double text_score = 0.0;
  double network_rating = 0.0;
  double final_score = 0.0;
  std::size_t position = 0;
};

// ---------------------------------------------------------------------------
// Inverted index

struct Posting {
  std::string doc_id;
  double weight = 0.0;
  friend bool operator==(const Posting&, const Posting&) = default;
};

/// term_id -> postings sorted by doc id. Weights are the normalized TF-IDF
/// entries, so summing query-weight * posting-weight is the cosine.
class InvertedIndex {
 public:
  InvertedIndex() = default;

  explicit InvertedIndex(const std::map<std::string, SparseVector, std::less<>>& tfidf) {
    for (const auto& [id, v] : tfidf)
      for (const auto& [term, w] : v.entries) postings_[term].push_back({id, w});
  }

  const std::vector<Posting>* find(std::uint32_t term_id) const {
    auto it = postings_.find(term_id);
    return it == postings_.end() ? nullptr : &it->second;
  }

  const std::map<std::uint32_t, std::vector<Posting>>& postings() const noexcept { return postings_; }

  void add(const std::string& id, const SparseVector& v) {
    for (const auto& [term, w] : v.entries) {
      auto& list = postings_[term];
      auto pos = std::lower_bound(list.begin(), list.end(), id,
                                  [](const Posting& p, const std::string& key) { return p.doc_id < key; });
      list.insert(pos, {id, w});
    }
  }

  friend bool operator==(const InvertedIndex&, const InvertedIndex&) = default;

 private:
  std::map<std::uint32_t, std::vector<Posting>> postings_;
};

/// index.json: {postings: [{term_id, docs: [[doc_id, weight], ...]}]}.
inline io::Json to_json(const InvertedIndex& index) {
  io::Json j;
  j["postings"] = io::Json::array();
  for (const auto& [term, list] : index.postings()) {
    io::Json e;
    e["term_id"] = term;
    e["docs"] = io::Json::array();
    for (const auto& p : list) e["docs"].push_back(io::Json::array({p.doc_id, p.weight}));
    j["postings"].push_back(std::move(e));
  }
  return j;
}

inline InvertedIndex index_from_json(const io::Json& j) {
  std::map<std::string, SparseVector, std::less<>> vecs;
  for (const auto& e : j.at("postings")) {
    const auto term = e.at("term_id").get<std::uint32_t>();
    for (const auto& d : e.at("docs")) vecs[d.at(0).get<std::string>()].entries.emplace_back(term, d.at(1).get<double>());
  }
  return InvertedIndex(vecs);
}

// ---------------------------------------------------------------------------
// Search

struct SearchOptions {
  std::size_t limit = 10;
  bool use_network_ratings = true;
  /// Boost strength in final = text * (1 + lambda * combined).
  double lambda = 1.0;
};

/// Scores every document sharing at least one term with the query by the
/// cosine between the query and document TF-IDF vectors, optionally boosted
/// by the network rating. `ranks` is never read when ratings are off.
inline std::vector<SearchResult> search(std::string_view query, const TermLexicon& lex, const InvertedIndex& index,
                                        const RankScores* ranks, const SearchOptions& opt) {
  if (opt.limit == 0) throw Error(ErrorCode::InvalidArgument, "limit must be positive");
  const auto tokens = tokenize(query);
  SparseVector qv;
  try {
    qv = tfidf_from_tokens(tokens, lex);
  } catch (const Error& e) {
    if (e.code() == ErrorCode::EmptyVector) return {};
    throw;
  }
  std::map<std::string, double, std::less<>> text;
  for (const auto& [term, qw] : qv.entries)
    if (const auto* list = index.find(term))
      for (const auto& p : *list) text[p.doc_id] += qw * p.weight;

  std::vector<SearchResult> out;
  out.reserve(text.size());
  for (const auto& [id, score] : text) {
    SearchResult r;
    r.doc_id = id;
    r.text_score = std::clamp(score, 0.0, 1.0);
    if (opt.use_network_ratings) {
      if (!ranks) throw Error(ErrorCode::InvalidArgument, "network ratings requested without ranks");
      r.network_rating = ranks->rating(id);
      r.final_score = r.text_score * (1.0 + opt.lambda * r.network_rating);
    } else {
      r.final_score = r.text_score;
    }
    out.push_back(std::move(r));
  }
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.final_score > b.final_score; });
  if (out.size() > opt.limit) out.resize(opt.limit);
  for (std::size_t i = 0; i < out.size(); ++i) out[i].position = i + 1;
  return out;
}

// ---------------------------------------------------------------------------
// Graph neighborhoods

/// Direction-free adjacency of a graph snapshot.
class GraphView {
 public:
  GraphView() = default;
  explicit GraphView(const SimilarityGraph& g) : adj_(g.undirected_adjacency()) {}

  bool has(std::string_view id) const { return adj_.find(id) != adj_.end(); }

  const std::map<std::string, double>& neighbors(std::string_view id) const {
    auto it = adj_.find(id);
    if (it == adj_.end()) throw Error(ErrorCode::NotFound, "node '" + std::string(id) + "'");
    return it->second;
  }

  /// Neighbors by weight descending, ties by id.
  std::vector<std::pair<std::string, double>> related(std::string_view id, std::size_t limit) const {
    const auto& nb = neighbors(id);
    std::vector<std::pair<std::string, double>> out(nb.begin(), nb.end());
    std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
    if (out.size() > limit) out.resize(limit);
    return out;
  }

  /// Ids within `hops` rings of `seeds`, seeds included.
  std::set<std::string> expand(const std::set<std::string>& seeds, int hops) const {
    std::set<std::string> seen;
    std::vector<std::string> frontier;
    for (const auto& s : seeds)
      if (has(s) && seen.insert(s).second) frontier.push_back(s);
    for (int h = 0; h < hops; ++h) {
      std::vector<std::string> next;
      for (const auto& id : frontier)
        for (const auto& [other, _] : neighbors(id))
          if (seen.insert(other).second) next.push_back(other);
      frontier.swap(next);
    }
    return seen;
  }

  const std::map<std::string, std::map<std::string, double>, std::less<>>& adjacency() const noexcept { return adj_; }

 private:
  std::map<std::string, std::map<std::string, double>, std::less<>> adj_;
};

// ---------------------------------------------------------------------------
// Feed

enum class FeedReason { NeighborOfLibrary, NeighborOfStarred, GlobalTop };

constexpr std::string_view to_string(FeedReason r) noexcept {
  switch (r) {
    case FeedReason::NeighborOfLibrary: return "neighbor_of_library";
    case FeedReason::NeighborOfStarred: return "neighbor_of_starred";
    case FeedReason::GlobalTop: return "global_top";
  }
  return "";
}

struct FeedItem {
  std::string doc_id;
  FeedReason reason = FeedReason::GlobalTop;
  double score = 0.0;
};

/// Recommendations for `user`: neighbors of the user's library and starred
/// docs scored by edge weight * combined rating (library seeds first on
/// ties), followed by global top-rated padding. Docs the user starred,
/// clicked or saved never appear.
inline std::vector<FeedItem> feed(std::string_view user, std::size_t limit, std::span<const FeedbackEvent> events,
                                  const GraphView& graph, const RankScores& ranks) {
  std::set<std::string, std::less<>> starred, library, interacted;
  for (const auto& e : events) {
    if (e.user != user) continue;
    interacted.insert(e.doc_id);
    if (e.kind == FeedbackKind::Star) starred.insert(e.doc_id);
    if (e.kind == FeedbackKind::LibraryAdd) library.insert(e.doc_id);
  }

  std::map<std::string, FeedItem, std::less<>> best;
  auto visit = [&](const std::set<std::string, std::less<>>& seeds, FeedReason reason) {
    for (const auto& seed : seeds) {
      if (!graph.has(seed)) continue;
      for (const auto& [other, w] : graph.neighbors(seed)) {
        if (interacted.contains(other)) continue;
        const double score = w * ranks.rating(other);
        auto [it, inserted] = best.try_emplace(other, FeedItem{other, reason, score});
        if (!inserted && score > it->second.score) it->second = {other, reason, score};
      }
    }
  };
  visit(library, FeedReason::NeighborOfLibrary);
  visit(starred, FeedReason::NeighborOfStarred);

  std::vector<FeedItem> out;
  for (auto& [_, item] : best) out.push_back(std::move(item));
  std::stable_sort(out.begin(), out.end(), [](const auto& a, const auto& b) { return a.score > b.score; });
  if (out.size() > limit) out.resize(limit);

  for (const auto& id : ranks.order()) {
    if (out.size() >= limit) break;
    if (interacted.contains(id) || best.contains(id)) continue;
    out.push_back({id, FeedReason::GlobalTop, ranks.rating(id)});
  }
  return out;
}

// ---------------------------------------------------------------------------
// Impressions

/// Counts one impression for every result shown within the top `top_r`
/// positions.
inline void record_impressions(ImpressionMap& m, std::span<const SearchResult> results, std::size_t top_r) {
  for (const auto& r : results) {
    if (r.position == 0 || r.position > top_r) continue;
    auto& rec = m[r.doc_id];
    rec.doc_id = r.doc_id;
    ++rec.impressions;
  }
}

/// Counts a click; clicks on docs with no outstanding impression are ignored
/// so that clicks never exceed impressions.
inline bool record_click(ImpressionMap& m, const std::string& doc_id) {
  auto it = m.find(doc_id);
  if (it == m.end() || it->second.clicks >= it->second.impressions) return false;
  ++it->second.clicks;
  return true;
}

}  // namespace etymo
