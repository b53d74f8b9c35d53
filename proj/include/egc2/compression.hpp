#pragma once

// Centrality-guided graph compression: drop the floor(gamma*|E|) least
// important edges, then delete nodes left without neighbours.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "egc2/centrality.hpp"
#include "egc2/graph.hpp"

namespace egc2 {

struct CompressionConfig {
  ScoreKind kind = ScoreKind::C;
  double gamma = 0.0;
};

struct GraphCompression {
  int graph_id = 0;
  int edges_before = 0, edges_after = 0;
  int nodes_before = 0, nodes_after = 0;
  std::vector<Edge> removed;  // in original node ids
};

struct CompressionReport {
  ScoreKind kind = ScoreKind::C;
  double gamma = 0.0;
  long long edges_before = 0, edges_after = 0;
  long long nodes_before = 0, nodes_after = 0;
  int guarded_graphs = 0;  // graphs that kept their best edge instead of vanishing
  std::vector<GraphCompression> per_graph;
};

inline void check_gamma(double gamma) {
  if (!(gamma >= 0.0 && gamma < 1.0)) throw ContractError("compression ratio must lie in [0, 1)");
}

inline int removal_count(double gamma, std::size_t num_edges) {
  return static_cast<int>(std::floor(gamma * static_cast<double>(num_edges) + 1e-9));
}

// Canonical edge indices ordered from first-to-remove to last: ascending
// score, ties broken by larger canonical index first.
inline std::vector<int> removal_order(const std::vector<double>& scores) {
  std::vector<int> order(scores.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    if (scores[a] != scores[b]) return scores[a] < scores[b];
    return a > b;
  });
  return order;
}

struct CompressedGraph {
  Graph graph;
  EdgeList removed;
};

namespace compression_detail {

inline CompressedGraph remove_edges(const Graph& graph, const EdgeList& edges, const std::vector<int>& order,
                                    int m) {
  Graph pruned = graph;
  CompressedGraph out;
  for (int k = 0; k < m; ++k) {
    const auto [i, j] = edges[order[k]];
    pruned.adjacency(i, j) = 0.0;
    pruned.adjacency(j, i) = 0.0;
    out.removed.edges.push_back(edges[order[k]]);
  }
  std::sort(out.removed.edges.begin(), out.removed.edges.end());
  std::vector<bool> keep(graph.num_nodes());
  for (int v = 0; v < graph.num_nodes(); ++v) keep[v] = pruned.degree(v) > 0;
  out.graph = induced_subgraph(pruned, keep);
  return out;
}

}  // namespace compression_detail

inline CompressedGraph compress_graph(const Graph& graph, const EdgeScoreVector& scores, double gamma) {
  check_gamma(gamma);
  const EdgeList edges = canonical_edges(graph);
  if (scores.size() != edges.size())
    throw AlignmentError("score vector has " + std::to_string(scores.size()) + " entries but graph has " +
                         std::to_string(edges.size()) + " edges");
  const int m = removal_count(gamma, edges.size());
  return compression_detail::remove_edges(graph, edges, removal_order(scores.values), m);
}

inline std::pair<GraphDataset, CompressionReport> compress_dataset(const GraphDataset& dataset,
                                                                  const CompressionConfig& config) {
  check_gamma(config.gamma);
  GraphDataset out = dataset;
  out.graphs.clear();
  CompressionReport report;
  report.kind = config.kind;
  report.gamma = config.gamma;
  for (const Graph& g : dataset.graphs) {
    const EdgeList edges = canonical_edges(g);
    if (edges.empty()) throw GraphError("cannot compress a graph without edges");
    const auto scores = edge_importance(g, config.kind);
    const auto order = removal_order(scores.values);
    int m = removal_count(config.gamma, edges.size());
    if (m >= static_cast<int>(edges.size())) {
      m = static_cast<int>(edges.size()) - 1;  // keep the single highest-score edge
      ++report.guarded_graphs;
    }
    auto c = compression_detail::remove_edges(g, edges, order, m);
    GraphCompression gc;
    gc.graph_id = g.id;
    gc.edges_before = static_cast<int>(edges.size());
    gc.edges_after = gc.edges_before - m;
    gc.nodes_before = g.num_nodes();
    gc.nodes_after = c.graph.num_nodes();
    gc.removed = c.removed.edges;
    report.edges_before += gc.edges_before;
    report.edges_after += gc.edges_after;
    report.nodes_before += gc.nodes_before;
    report.nodes_after += gc.nodes_after;
    report.per_graph.push_back(std::move(gc));
    out.graphs.push_back(std::move(c.graph));
  }
  return {std::move(out), std::move(report)};
}

// Compresses one graph by the configured index, recomputing its scores. An
// edgeless graph is returned unchanged.
inline Graph compress_by_index(const Graph& graph, const CompressionConfig& config) {
  if (config.gamma == 0.0 || graph.num_edges() == 0) return graph;
  return compress_graph(graph, edge_importance(graph, config.kind), config.gamma).graph;
}

}  // namespace egc2
