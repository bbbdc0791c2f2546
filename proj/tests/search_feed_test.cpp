// SPDX-License-Identifier: Apache-2.0

#include <random>

#include <gtest/gtest.h>

#include "etymo/pipeline.hpp"
#include "etymo/search_feed.hpp"
#include "test_support.hpp"

using namespace etymo;
using etymo::testing::make_doc;

namespace {

struct Built {
  std::vector<Document> docs;
  TermLexicon lex;
  DocumentVectors vecs;
  InvertedIndex index;
  SimilarityGraph graph;
  RankScores ranks;
};

Built build(std::vector<Document> docs) {
  Built b{std::move(docs), {}, {}, InvertedIndex(), {}, {}};
  b.lex = build_lexicon(b.docs);
  b.vecs = vectorize_all(b.docs, b.lex, RandomProjectionEmbedder(256, 42));
  b.index = InvertedIndex(b.vecs.tfidf);
  b.graph = orient_temporal(build_graph(b.vecs, {}, 1), publication_dates(b.docs));
  b.ranks = compute_ranks(b.graph, {});
  return b;
}

std::vector<std::string> ids_of(const std::vector<SearchResult>& rs) {
  std::vector<std::string> out;
  for (const auto& r : rs) out.push_back(r.doc_id);
  return out;
}

SimilarityGraph undirected(const std::vector<std::string>& nodes,
                           std::initializer_list<std::tuple<std::string, std::string, double>> edges) {
  SimilarityGraph g;
  for (const auto& n : nodes) g.add_node(n);
  for (const auto& [a, b, w] : edges) g.set_edge(a, b, w);
  return g;
}

RankScores ranks_with(std::initializer_list<std::pair<std::string, double>> combined) {
  RankScores r;
  for (const auto& [id, c] : combined) r.combined[id] = r.pagerank[id] = r.reverse_pagerank[id] = c;
  return r;
}

FeedbackEvent ev(std::string user, FeedbackKind k, std::string doc) {
  return {std::move(user), k, std::move(doc), "2018-01-01T00:00:00Z"};
}

}  // namespace

TEST(Search, ExactTextMatchScoresOne) {
  const auto b = build(etymo::testing::toy5());
  const auto rs = search("visualization layout tsne embedding", b.lex, b.index, nullptr, {10, false, 1.0});
  ASSERT_FALSE(rs.empty());
  EXPECT_EQ(rs[0].doc_id, "d5");
  EXPECT_NEAR(rs[0].text_score, 1.0, 1e-12);
  EXPECT_EQ(rs[0].position, 1u);
}

TEST(Search, TextScoreIsCosineWithQuery) {
  const auto b = build(etymo::testing::toy5());
  const auto oracle = etymo::testing::brute_tfidf(b.docs);
  const auto rs = search("graph network", b.lex, b.index, nullptr, {10, false, 1.0});
  // The query vector: both terms tf 1, weighted by their idf.
  std::map<std::string, double> q = {{"graph", b.lex.find("graph")->idf}, {"network", b.lex.find("network")->idf}};
  for (const auto& r : rs) EXPECT_NEAR(r.text_score, etymo::testing::brute_cosine(q, oracle.at(r.doc_id)), 1e-12);
  EXPECT_EQ(rs.size(), 3u);
}

TEST(Search, NoMatchingTermsGivesNoResults) {
  const auto b = build(etymo::testing::toy5());
  EXPECT_TRUE(search("zzzz qqqq", b.lex, b.index, &b.ranks, {}).empty());
  EXPECT_TRUE(search("the of and", b.lex, b.index, &b.ranks, {}).empty());
  EXPECT_TRUE(search("", b.lex, b.index, &b.ranks, {}).empty());
}

TEST(Search, PositionsContiguousAndLimitRespected) {
  std::mt19937_64 rng(5);
  const auto b = build(etymo::testing::random_corpus(rng, 30));
  const auto rs = search("graph embedding neural", b.lex, b.index, &b.ranks, {7, true, 1.0});
  ASSERT_EQ(rs.size(), 7u);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    EXPECT_EQ(rs[i].position, i + 1);
    if (i) EXPECT_GE(rs[i - 1].final_score, rs[i].final_score);
    EXPECT_NEAR(rs[i].final_score, rs[i].text_score * (1 + rs[i].network_rating), 1e-15);
  }
}

TEST(Search, TiesBreakById) {
  std::vector<Document> docs = {make_doc("zeta", "graph"), make_doc("alpha", "graph"), make_doc("mid", "graph"),
                                make_doc("other", "poetry")};
  const auto b = build(docs);
  EXPECT_EQ(ids_of(search("graph", b.lex, b.index, nullptr, {10, false, 1.0})),
            (std::vector<std::string>{"alpha", "mid", "zeta"}));
}

TEST(Search, RatingsOffIgnoresRanks) {
  const auto b = build(etymo::testing::reorder12());
  auto garbage = b.ranks;
  for (auto& [_, c] : garbage.combined) c = 1000.0;
  const auto a = search("t-sne", b.lex, b.index, nullptr, {10, false, 1.0});
  const auto c = search("t-sne", b.lex, b.index, &garbage, {10, false, 1.0});
  ASSERT_EQ(a.size(), c.size());
  for (std::size_t i = 0; i < a.size(); ++i) {
    EXPECT_EQ(a[i].doc_id, c[i].doc_id);
    EXPECT_EQ(a[i].final_score, c[i].final_score);
    EXPECT_EQ(a[i].final_score, a[i].text_score);
  }
}

TEST(Search, NetworkRatingReordersLexicalMatches) {
  const auto b = build(etymo::testing::reorder12());
  EXPECT_EQ(b.ranks.order().front(), "S");
  const auto off = search("t-sne", b.lex, b.index, nullptr, {10, false, 1.0});
  const auto on = search("t-sne", b.lex, b.index, &b.ranks, {10, true, 1.0});
  ASSERT_EQ(off.size(), 2u);
  EXPECT_EQ(ids_of(off), (std::vector<std::string>{"T", "S"}));
  EXPECT_EQ(ids_of(on), (std::vector<std::string>{"S", "T"}));
  // The flip is exactly text_T < text_S * (1 + c_S) / (1 + c_T).
  const double tt = off[0].text_score, ts = off[1].text_score;
  EXPECT_GT(tt, ts);
  EXPECT_LT(tt * (1 + b.ranks.rating("T")), ts * (1 + b.ranks.rating("S")));
}

TEST(Search, RaisingARatingNeverLowersThePosition) {
  std::mt19937_64 rng(19);
  const auto b = build(etymo::testing::random_corpus(rng, 25));
  const auto base = search("graph network embedding", b.lex, b.index, &b.ranks, {25, true, 1.0});
  for (const auto& r : base) {
    auto boosted = b.ranks;
    boosted.combined[r.doc_id] += 0.5;
    const auto again = search("graph network embedding", b.lex, b.index, &boosted, {25, true, 1.0});
    for (const auto& x : again)
      if (x.doc_id == r.doc_id) EXPECT_LE(x.position, r.position);
  }
}

TEST(Search, RatingsWithoutRanksIsAnError) {
  const auto b = build(etymo::testing::toy5());
  EXPECT_THROW(search("graph", b.lex, b.index, nullptr, {10, true, 1.0}), Error);
}

TEST(Index, JsonRoundTripAndIncrementalAdd) {
  const auto b = build(etymo::testing::toy5());
  const auto back = index_from_json(io::Json::parse(to_json(b.index).dump()));
  EXPECT_EQ(back.postings(), b.index.postings());
  InvertedIndex partial;
  for (const auto& [id, v] : b.vecs.tfidf) partial.add(id, v);
  EXPECT_EQ(partial.postings(), b.index.postings());
}

TEST(Related, OrderedByWeight) {
  const auto g = undirected({"x", "a", "b", "c", "lone"}, {{"x", "a", 0.9}, {"x", "b", 0.7}, {"x", "c", 0.7}});
  const GraphView view(g);
  const auto r = view.related("x", 10);
  ASSERT_EQ(r.size(), 3u);
  EXPECT_EQ(r[0], (std::pair<std::string, double>{"a", 0.9}));
  EXPECT_EQ(r[1].first, "b");
  EXPECT_EQ(r[2].first, "c");
  EXPECT_EQ(view.related("x", 1).size(), 1u);
  EXPECT_TRUE(view.related("lone", 10).empty());
  EXPECT_THROW(view.related("ghost", 10), Error);
}

TEST(Related, SymmetricAndMatchesEdgeList) {
  std::mt19937_64 rng(2);
  const auto b = build(etymo::testing::random_corpus(rng, 20));
  const GraphView view(b.graph);
  const auto u = undirected_projection(b.graph);
  for (const auto& id : b.graph.nodes) {
    std::map<std::string, double> want;
    for (const auto& [k, w] : u.edges) {
      if (k.first == id) want[k.second] = w;
      if (k.second == id) want[k.first] = w;
    }
    const auto got = view.related(id, 100);
    ASSERT_EQ(got.size(), want.size());
    for (const auto& [other, w] : got) {
      EXPECT_EQ(want.at(other), w);
      bool back = false;
      for (const auto& [o2, _] : view.related(other, 100)) back |= o2 == id;
      EXPECT_TRUE(back);
    }
  }
}

TEST(GraphViewExpand, HopsGrowRings) {
  const auto g = undirected({"a", "b", "c", "d"}, {{"a", "b", 0.6}, {"b", "c", 0.6}, {"c", "d", 0.6}});
  const GraphView v(g);
  EXPECT_EQ(v.expand({"a"}, 0), (std::set<std::string>{"a"}));
  EXPECT_EQ(v.expand({"a"}, 1), (std::set<std::string>{"a", "b"}));
  EXPECT_EQ(v.expand({"a"}, 2), (std::set<std::string>{"a", "b", "c"}));
  EXPECT_EQ(v.expand({"a", "d"}, 1), (std::set<std::string>{"a", "b", "c", "d"}));
}

TEST(Feed, NoHistoryGivesGlobalTop) {
  const auto ranks = ranks_with({{"a", 0.2}, {"b", 0.9}, {"c", 0.5}});
  const GraphView view(undirected({"a", "b", "c"}, {}));
  const auto f = feed("nobody", 2, {}, view, ranks);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].doc_id, "b");
  EXPECT_EQ(f[1].doc_id, "c");
  for (const auto& item : f) EXPECT_EQ(item.reason, FeedReason::GlobalTop);
}

TEST(Feed, StarredNeighborsScoredByWeightTimesRating) {
  const auto g = undirected({"s", "n1", "n2", "n3", "far"},
                            {{"s", "n1", 0.9}, {"s", "n2", 0.6}, {"s", "n3", 0.8}});
  const auto ranks = ranks_with({{"s", 1.0}, {"n1", 0.2}, {"n2", 0.9}, {"n3", 0.5}, {"far", 0.95}});
  const std::vector<FeedbackEvent> events = {ev("u", FeedbackKind::Star, "s"), ev("v", FeedbackKind::Star, "n2")};
  const auto f = feed("u", 10, events, GraphView(g), ranks);
  // Oracle scores: n2 0.54, n3 0.40, n1 0.18; then "far" as padding.
  ASSERT_EQ(f.size(), 4u);
  EXPECT_EQ(f[0].doc_id, "n2");
  EXPECT_NEAR(f[0].score, 0.54, 1e-15);
  EXPECT_EQ(f[0].reason, FeedReason::NeighborOfStarred);
  EXPECT_EQ(f[1].doc_id, "n3");
  EXPECT_EQ(f[2].doc_id, "n1");
  EXPECT_EQ(f[3].doc_id, "far");
  EXPECT_EQ(f[3].reason, FeedReason::GlobalTop);
}

TEST(Feed, IsolatedLibraryFallsBackToGlobalTop) {
  const auto g = undirected({"lib", "x", "y"}, {{"x", "y", 0.7}});
  const auto ranks = ranks_with({{"lib", 1.0}, {"x", 0.3}, {"y", 0.6}});
  const std::vector<FeedbackEvent> events = {ev("u", FeedbackKind::LibraryAdd, "lib")};
  const auto f = feed("u", 5, events, GraphView(g), ranks);
  ASSERT_EQ(f.size(), 2u);
  EXPECT_EQ(f[0].doc_id, "y");
  EXPECT_EQ(f[1].doc_id, "x");
  for (const auto& item : f) EXPECT_EQ(item.reason, FeedReason::GlobalTop);
}

TEST(Feed, NeverRecommendsInteractedDocs) {
  std::mt19937_64 rng(71);
  const auto b = build(etymo::testing::random_corpus(rng, 25));
  std::uniform_int_distribution<std::size_t> pick(0, b.docs.size() - 1);
  std::vector<FeedbackEvent> events;
  const FeedbackKind kinds[] = {FeedbackKind::Star, FeedbackKind::Click, FeedbackKind::LibraryAdd};
  for (int i = 0; i < 10; ++i) events.push_back(ev("u", kinds[i % 3], b.docs[pick(rng)].id));
  std::set<std::string> touched;
  for (const auto& e : events) touched.insert(e.doc_id);
  const auto f = feed("u", 25, events, GraphView(b.graph), b.ranks);
  EXPECT_EQ(f.size(), b.docs.size() - touched.size());
  std::set<std::string> seen;
  for (const auto& item : f) {
    EXPECT_FALSE(touched.contains(item.doc_id)) << item.doc_id;
    EXPECT_TRUE(seen.insert(item.doc_id).second);
  }
}

TEST(Impressions, CountsOnlyTopPositions) {
  ImpressionMap m;
  std::vector<SearchResult> rs(12);
  for (std::size_t i = 0; i < rs.size(); ++i) {
    rs[i].doc_id = "d" + std::to_string(i + 1);
    rs[i].position = i + 1;
  }
  record_impressions(m, std::span<const SearchResult>(rs.data(), 0), 10);
  EXPECT_TRUE(m.empty());
  record_impressions(m, rs, 10);
  record_impressions(m, rs, 10);
  EXPECT_EQ(m.at("d1").impressions, 2u);
  EXPECT_EQ(m.at("d10").impressions, 2u);
  EXPECT_FALSE(m.contains("d11"));
}

TEST(Impressions, ClicksNeverExceedImpressions) {
  ImpressionMap m;
  EXPECT_FALSE(record_click(m, "x"));
  m["x"] = {"x", 1, 0};
  EXPECT_TRUE(record_click(m, "x"));
  EXPECT_FALSE(record_click(m, "x"));
  EXPECT_EQ(m.at("x").clicks, 1u);
}
