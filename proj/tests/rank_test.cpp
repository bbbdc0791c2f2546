// SPDX-License-Identifier: Apache-2.0

#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "etymo/rank.hpp"
#include "test_support.hpp"

using namespace etymo;

namespace {

SimilarityGraph digraph(std::initializer_list<std::string> nodes,
                        std::initializer_list<std::tuple<std::string, std::string, double>> arcs) {
  SimilarityGraph g;
  g.directed = true;
  for (const auto& n : nodes) g.add_node(n);
  for (const auto& [a, b, w] : arcs) g.set_edge(a, b, w);
  return g;
}

// Four newer leaves pointing at an older hub.
SimilarityGraph star() {
  return digraph({"H", "L1", "L2", "L3", "L4"},
                 {{"L1", "H", 0.9}, {"L2", "H", 0.8}, {"L3", "H", 0.7}, {"L4", "H", 0.6}});
}

double sum(const ScoreMap& m) {
  double s = 0.0;
  for (const auto& [_, v] : m) s += v;
  return s;
}

}  // namespace

TEST(PageRank, TwoCycleIsUniform) {
  const auto pr = pagerank(digraph({"a", "b"}, {{"a", "b", 1.0}, {"b", "a", 1.0}}), 0.85, 10);
  EXPECT_NEAR(pr.at("a"), 0.5, 1e-15);
  EXPECT_NEAR(pr.at("b"), 0.5, 1e-15);
}

TEST(PageRank, SingleNodeAndEmptyGraph) {
  SimilarityGraph one;
  one.add_node("x");
  EXPECT_NEAR(pagerank(one, 0.85, 10).at("x"), 1.0, 1e-15);
  SimilarityGraph empty;
  try {
    pagerank(empty, 0.85, 10);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::EmptyGraph);
  }
}

TEST(PageRank, MatchesDenseGoogleMatrixOracle) {
  std::mt19937_64 rng(2018);
  for (int trial = 0; trial < 30; ++trial) {
    const auto g = etymo::testing::random_digraph(rng, 8);
    const auto oracle = etymo::testing::dense_pagerank(g, 0.85, 10);
    const auto pr = pagerank(g, 0.85, 10);
    for (const auto& [id, v] : oracle) EXPECT_NEAR(pr.at(id), v, 1e-12) << trial << " " << id;
  }
}

TEST(PageRank, UndirectedInputCountsBothDirections) {
  SimilarityGraph u;
  for (auto n : {"a", "b", "c"}) u.add_node(n);
  u.set_edge("a", "b", 0.7);
  u.set_edge("b", "c", 0.3);
  const auto oracle = etymo::testing::dense_pagerank(u, 0.85, 10);
  const auto pr = pagerank(u, 0.85, 10);
  for (const auto& [id, v] : oracle) EXPECT_NEAR(pr.at(id), v, 1e-12);
}

TEST(PageRank, EveryIterateIsADistribution) {
  std::mt19937_64 rng(7);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = etymo::testing::random_digraph(rng, 10);
    int calls = 0;
    pagerank(g, 0.85, 10, 0.0, [&](int it, std::span<const double> x) {
      EXPECT_EQ(it, ++calls);
      double s = 0.0;
      for (double v : x) {
        EXPECT_GE(v, 0.0);
        s += v;
      }
      EXPECT_NEAR(s, 1.0, 1e-12);
    });
    EXPECT_EQ(calls, 10);
  }
}

TEST(PageRank, IteratesTrackTheOracleTrace) {
  std::mt19937_64 rng(12);
  const auto g = etymo::testing::random_digraph(rng, 9);
  std::vector<std::vector<double>> trace;
  etymo::testing::dense_pagerank(g, 0.85, 10, &trace);
  pagerank(g, 0.85, 10, 0.0, [&](int it, std::span<const double> x) {
    for (std::size_t i = 0; i < x.size(); ++i) EXPECT_NEAR(x[i], trace[it - 1][i], 1e-12);
  });
}

TEST(PageRank, InvariantUnderUniformWeightScaling) {
  std::mt19937_64 rng(99);
  for (int trial = 0; trial < 10; ++trial) {
    auto g = etymo::testing::random_digraph(rng, 8);
    const auto base = pagerank(g, 0.85, 10);
    for (auto& [_, w] : g.edges) w *= 3.7;
    const auto scaled = pagerank(g, 0.85, 10);
    for (const auto& [id, v] : base) EXPECT_NEAR(scaled.at(id), v, 1e-12);
  }
}

TEST(PageRank, ToleranceStopsEarlyButStaysClose) {
  std::mt19937_64 rng(4);
  const auto g = etymo::testing::random_digraph(rng, 10);
  int calls = 0;
  const auto early = pagerank(g, 0.85, 1000, 1e-9, [&](int, std::span<const double>) { ++calls; });
  EXPECT_LT(calls, 1000);
  const auto exact = pagerank(g, 0.85, 1000);
  for (const auto& [id, v] : exact) EXPECT_NEAR(early.at(id), v, 1e-8);
}

TEST(ReversePageRank, IsPageRankOfTheReversedGraph) {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const auto g = etymo::testing::random_digraph(rng, 10);
    const auto a = reverse_pagerank(g, 0.85, 10);
    const auto b = pagerank(reverse(g), 0.85, 10);
    for (const auto& [id, v] : a) EXPECT_EQ(v, b.at(id));
    EXPECT_NEAR(sum(a), 1.0, 1e-12);
  }
}

TEST(ReversePageRank, StarHubIsAuthorityNotHub) {
  const auto g = star();
  const auto pr = pagerank(g, 0.85, 10);
  const auto rpr = reverse_pagerank(g, 0.85, 10);
  EXPECT_LT(rpr.at("H"), pr.at("H"));
  for (auto leaf : {"L1", "L2", "L3", "L4"}) {
    EXPECT_GT(pr.at("H"), pr.at(leaf));
    EXPECT_GT(rpr.at(leaf), pr.at(leaf));
  }
  const auto oracle = etymo::testing::dense_pagerank(reverse(g), 0.85, 10);
  for (const auto& [id, v] : oracle) EXPECT_NEAR(rpr.at(id), v, 1e-12);
}

TEST(Combined, BetaEndpointsAndMidpoint) {
  const auto g = star();
  const auto pr = pagerank(g, 0.85, 10), rpr = reverse_pagerank(g, 0.85, 10);
  double mpr = 0, mrpr = 0;
  for (const auto& [id, v] : pr) mpr = std::max(mpr, v);
  for (const auto& [id, v] : rpr) mrpr = std::max(mrpr, v);
  const auto c1 = combined_rating(pr, rpr, 1.0), c0 = combined_rating(pr, rpr, 0.0),
             ch = combined_rating(pr, rpr, 0.5);
  for (const auto& [id, v] : pr) {
    EXPECT_NEAR(c1.at(id), v / mpr, 1e-15);
    EXPECT_NEAR(c0.at(id), rpr.at(id) / mrpr, 1e-15);
    EXPECT_NEAR(ch.at(id), 0.5 * v / mpr + 0.5 * rpr.at(id) / mrpr, 1e-15);
    EXPECT_GE(ch.at(id), 0.0);
    EXPECT_LE(ch.at(id), 1.0);
  }
  EXPECT_DOUBLE_EQ(c1.at("H"), 1.0);
}

TEST(Combined, MismatchedIdsAreRejected) {
  ScoreMap a = {{"x", 0.5}, {"y", 0.5}}, b = {{"x", 0.5}, {"z", 0.5}};
  try {
    combined_rating(a, b, 0.5);
    FAIL();
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::IdMismatch);
  }
}

TEST(Combined, ArgmaxSurvivesRescaling) {
  std::mt19937_64 rng(77);
  std::uniform_real_distribution<double> u(0.01, 1.0), s(0.1, 10.0);
  for (int trial = 0; trial < 50; ++trial) {
    ScoreMap pr, rpr;
    for (int i = 0; i < 6; ++i) {
      pr["n" + std::to_string(i)] = u(rng);
      rpr["n" + std::to_string(i)] = u(rng);
    }
    const auto base = combined_rating(pr, rpr, 0.5);
    const double k1 = s(rng), k2 = s(rng);
    for (auto& [_, v] : pr) v *= k1;
    for (auto& [_, v] : rpr) v *= k2;
    const auto scaled = combined_rating(pr, rpr, 0.5);
    for (const auto& [id, v] : base) EXPECT_NEAR(scaled.at(id), v, 1e-12);
  }
}

TEST(RankScores, OrderAndJsonRoundTrip) {
  const auto r = compute_ranks(star(), {});
  const auto order = r.order();
  EXPECT_EQ(order.size(), 5u);
  for (std::size_t i = 1; i < order.size(); ++i) {
    EXPECT_GE(r.combined.at(order[i - 1]), r.combined.at(order[i]));
    if (r.combined.at(order[i - 1]) == r.combined.at(order[i])) EXPECT_LT(order[i - 1], order[i]);
  }
  const auto back = ranks_from_json(io::Json::parse(to_json(r).dump()));
  EXPECT_EQ(back.combined, r.combined);
  EXPECT_EQ(back.pagerank, r.pagerank);
  EXPECT_EQ(back.reverse_pagerank, r.reverse_pagerank);
  EXPECT_DOUBLE_EQ(r.rating("unknown"), 0.0);
}

TEST(RankScores, TenIterationsAreCloseToConvergence) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = etymo::testing::random_digraph(rng, 10);
    const auto ten = pagerank(g, 0.85, 10), many = pagerank(g, 0.85, 200);
    double l1 = 0.0;
    for (const auto& [id, v] : ten) l1 += std::abs(v - many.at(id));
    EXPECT_LT(l1, 1e-2) << trial;
  }
}

// On zero-sum vectors the Google matrix acts as damping * (column-stochastic
// matrix), so the L1 error to the limit shrinks by at least `damping` per step.
TEST(RankScores, ErrorContractsByDampingEachStep) {
  std::mt19937_64 rng(1);
  for (int trial = 0; trial < 50; ++trial) {
    const auto g = etymo::testing::random_digraph(rng, 10);
    const auto limit = pagerank(g, 0.85, 400);
    std::vector<double> x(limit.size());
    std::size_t i = 0;
    for (const auto& id : g.nodes) x[i++] = limit.at(id);
    auto error = [&](std::span<const double> v) {
      double l1 = 0.0;
      for (std::size_t k = 0; k < v.size(); ++k) l1 += std::abs(v[k] - x[k]);
      return l1;
    };
    double prev = error(std::vector<double>(x.size(), 1.0 / static_cast<double>(x.size())));
    pagerank(g, 0.85, 10, 0.0, [&](int, std::span<const double> v) {
      const double e = error(v);
      EXPECT_LE(e, 0.85 * prev + 1e-14) << trial;
      prev = e;
    });
  }
}
