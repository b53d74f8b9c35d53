#include <gtest/gtest.h>

#include <numeric>

#include "egc2/centrality.hpp"
#include "oracles.hpp"

using namespace egc2;

namespace {

void expect_near_all(const std::vector<double>& got, const std::vector<double>& want, double tol) {
  ASSERT_EQ(got.size(), want.size());
  for (std::size_t i = 0; i < got.size(); ++i) EXPECT_NEAR(got[i], want[i], tol) << "entry " << i;
}

const Graph kTriangle = make_graph(3, {{0, 1}, {1, 2}, {0, 2}});
const Graph kPath3 = make_graph(3, {{0, 1}, {1, 2}});
const Graph kStar = make_graph(4, {{0, 1}, {0, 2}, {0, 3}});
const Graph kCycle4 = make_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});

}  // namespace

TEST(NodeCentrality, TriangleClustering) { expect_near_all(node_centrality(kTriangle, ScoreKind::C), {1, 1, 1}, 0); }

TEST(NodeCentrality, PathBetweenness) {
  expect_near_all(node_centrality(kPath3, ScoreKind::BC), {0, 1, 0}, 0);
  expect_near_all(oracle::betweenness(kPath3), {0, 1, 0}, 0);
}

TEST(NodeCentrality, TriangleEigenvector) {
  const double s = 1.0 / std::sqrt(3.0);
  expect_near_all(node_centrality(kTriangle, ScoreKind::EC), {s, s, s}, 1e-12);
}

TEST(NodeCentrality, PathCloseness) {
  expect_near_all(node_centrality(kPath3, ScoreKind::CC), {2.0 / 3, 1, 2.0 / 3}, 1e-15);
  expect_near_all(oracle::closeness(kPath3), {2.0 / 3, 1, 2.0 / 3}, 1e-15);
}

TEST(NodeCentrality, DegenerateCases) {
  const Graph single = make_graph(1, {});
  for (ScoreKind k : kCentralityKinds) {
    const auto v = node_centrality(single, k);
    ASSERT_EQ(v.size(), 1u);
    if (k == ScoreKind::EC)
      EXPECT_DOUBLE_EQ(v[0], 1.0);
    else
      EXPECT_EQ(v[0], 0.0);
  }
  const Graph iso = make_graph(3, {{0, 1}});
  EXPECT_EQ(node_centrality(iso, ScoreKind::CC)[2], 0.0);
  EXPECT_EQ(node_centrality(iso, ScoreKind::DC)[2], 0.0);
  EXPECT_THROW(node_centrality(iso, ScoreKind::GRAD), ContractError);
}

TEST(EdgeImportance, StarClustering) {
  const auto s = edge_importance(kStar, ScoreKind::C);
  EXPECT_EQ(s.kind, ScoreKind::C);
  expect_near_all(s.values, {1, 1, 1}, 0);
  expect_near_all(s.values, oracle::clustering(oracle::line_graph(kStar)), 0);
}

TEST(EdgeImportance, PathDegree) { expect_near_all(edge_importance(kPath3, ScoreKind::DC).values, {1, 1}, 0); }

TEST(EdgeImportance, CycleBetweenness) {
  expect_near_all(edge_importance(kCycle4, ScoreKind::BC).values, {0.5, 0.5, 0.5, 0.5}, 1e-15);
  expect_near_all(oracle::betweenness(oracle::line_graph(kCycle4)), {0.5, 0.5, 0.5, 0.5}, 1e-15);
}

TEST(EdgeImportance, EdgelessThrows) { EXPECT_THROW(edge_importance(make_graph(2, {}), ScoreKind::C), GraphError); }

// Node-level kernels against the naive definitions on random small graphs.
TEST(CentralityOracle, RandomGraphs) {
  Rng rng(123);
  for (int t = 0; t < 200; ++t) {
    const Graph g = oracle::random_graph(rng, 1 + t % 8, 0.2 + 0.6 * uniform01(rng));
    expect_near_all(node_centrality(g, ScoreKind::BC), oracle::betweenness(g), 1e-12);
    expect_near_all(node_centrality(g, ScoreKind::CC), oracle::closeness(g), 1e-12);
    expect_near_all(node_centrality(g, ScoreKind::C), oracle::clustering(g), 1e-12);
    expect_near_all(node_centrality(g, ScoreKind::DC), oracle::degree_centrality(g), 1e-12);
    const auto ec = node_centrality(g, ScoreKind::EC);
    EXPECT_LE(oracle::eigen_residual(g, ec), 1e-8);
  }
}

// The same on line graphs of graphs with at most 10 edges.
TEST(CentralityOracle, EdgeScoresOnLineGraphs) {
  Rng rng(321);
  int tested = 0;
  while (tested < 200) {
    const Graph g = oracle::random_nonempty_graph(rng, 2 + static_cast<int>(uniform_below(rng, 7)), 0.4);
    if (g.num_edges() > 10) continue;
    ++tested;
    const Graph lg = oracle::line_graph(g);
    expect_near_all(edge_importance(g, ScoreKind::BC).values, oracle::betweenness(lg), 1e-12);
    expect_near_all(edge_importance(g, ScoreKind::CC).values, oracle::closeness(lg), 1e-12);
    expect_near_all(edge_importance(g, ScoreKind::C).values, oracle::clustering(lg), 1e-12);
    const auto ec = edge_importance(g, ScoreKind::EC).values;
    EXPECT_LE(oracle::eigen_residual(lg, ec), 1e-8);
  }
}

TEST(CentralityProperties, EigenvectorNormalisedPerComponent) {
  Rng rng(9);
  for (int t = 0; t < 100; ++t) {
    const Graph g = oracle::random_graph(rng, 2 + t % 10, 0.25);
    const auto ec = node_centrality(g, ScoreKind::EC);
    for (const auto& comp : oracle::components(g)) {
      double sq = 0.0;
      for (int v : comp) {
        EXPECT_GE(ec[v], 0.0);
        sq += ec[v] * ec[v];
      }
      EXPECT_NEAR(std::sqrt(sq), 1.0, 1e-12);
    }
  }
}

// Bipartite components (here the line graph of a path) need the shifted
// iteration; a plain power method oscillates forever on them.
TEST(CentralityProperties, EigenvectorOnBipartiteComponent) {
  const Graph path5 = make_graph(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  const auto ec = node_centrality(path5, ScoreKind::EC);
  EXPECT_LE(oracle::eigen_residual(path5, ec), 1e-8);
  EXPECT_GT(ec[2], ec[0]);
}

TEST(CentralityProperties, PermutationEquivariance) {
  Rng rng(77);
  for (int t = 0; t < 60; ++t) {
    const int n = 2 + t % 8;
    const Graph g = oracle::random_graph(rng, n, 0.45);
    std::vector<int> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    const Graph p = permute_nodes(g, perm);
    for (ScoreKind k : {ScoreKind::CC, ScoreKind::BC, ScoreKind::C, ScoreKind::DC}) {
      const auto a = node_centrality(g, k), b = node_centrality(p, k);
      for (int v = 0; v < n; ++v) EXPECT_NEAR(a[v], b[perm[v]], 1e-12) << to_string(k);
    }
    const auto a = node_centrality(g, ScoreKind::EC), b = node_centrality(p, ScoreKind::EC);
    for (int v = 0; v < n; ++v) EXPECT_NEAR(a[v], b[perm[v]], 1e-9);
  }
}

TEST(CentralityProperties, EdgeScoresAreNonnegativeAndAligned) {
  Rng rng(31);
  for (int t = 0; t < 50; ++t) {
    const Graph g = oracle::random_nonempty_graph(rng, 3 + t % 10, 0.35);
    for (ScoreKind k : kCentralityKinds) {
      const auto s = edge_importance(g, k);
      EXPECT_EQ(s.values.size(), static_cast<std::size_t>(g.num_edges()));
      for (double v : s.values) {
        EXPECT_TRUE(std::isfinite(v));
        EXPECT_GE(v, 0.0);
      }
    }
  }
}

TEST(ScoreKind, ParseAndPrint) {
  for (ScoreKind k : kCentralityKinds) EXPECT_EQ(parse_score_kind(to_string(k)), k);
  EXPECT_EQ(parse_score_kind("bc"), ScoreKind::BC);
  EXPECT_THROW(parse_score_kind("pagerank"), Error);
}
