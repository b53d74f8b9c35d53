#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "egc2/error.hpp"

namespace egc2 {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Undirected attributed graph with a dense binary adjacency.
struct Graph {
  int id = 0;
  Matrix adjacency;  // n x n, symmetric, zero diagonal
  Matrix features;   // n x f
  int label = 0;

  int num_nodes() const { return static_cast<int>(adjacency.rows()); }
  int feature_dim() const { return static_cast<int>(features.cols()); }
  bool has_edge(int i, int j) const { return adjacency(i, j) != 0.0; }

  int degree(int v) const {
    int d = 0;
    for (int j = 0; j < num_nodes(); ++j) d += adjacency(v, j) != 0.0;
    return d;
  }

  int num_edges() const {
    int m = 0;
    for (int i = 0; i < num_nodes(); ++i)
      for (int j = i + 1; j < num_nodes(); ++j) m += adjacency(i, j) != 0.0;
    return m;
  }

  std::vector<std::vector<int>> neighbors() const {
    std::vector<std::vector<int>> out(num_nodes());
    for (int i = 0; i < num_nodes(); ++i)
      for (int j = 0; j < num_nodes(); ++j)
        if (i != j && adjacency(i, j) != 0.0) out[i].push_back(j);
    return out;
  }
};

// How node features were produced; drives TU write-back.
enum class FeatureSource { NodeLabels, NodeAttributes, Degree };

struct GraphDataset {
  std::string name;
  std::vector<Graph> graphs;
  int num_classes = 0;
  int feature_dim = 0;
  FeatureSource feature_source = FeatureSource::NodeLabels;
  // Graphs dropped at ingestion because they had no edges.
  int rejected_edgeless = 0;

  std::size_t size() const { return graphs.size(); }

  int max_nodes() const {
    int n = 0;
    for (const auto& g : graphs) n = std::max(n, g.num_nodes());
    return n;
  }

  std::vector<int> class_counts() const {
    std::vector<int> counts(num_classes, 0);
    for (const auto& g : graphs) ++counts.at(g.label);
    return counts;
  }

  GraphDataset subset(const std::vector<int>& indices) const {
    GraphDataset out;
    out.name = name;
    out.num_classes = num_classes;
    out.feature_dim = feature_dim;
    out.feature_source = feature_source;
    out.graphs.reserve(indices.size());
    for (int i : indices) out.graphs.push_back(graphs.at(i));
    return out;
  }
};

using Edge = std::pair<int, int>;

// Edges (i < j) in lexicographic order. Every per-edge vector in the library
// shares this order.
struct EdgeList {
  std::vector<Edge> edges;

  std::size_t size() const { return edges.size(); }
  bool empty() const { return edges.empty(); }
  const Edge& operator[](std::size_t k) const { return edges[k]; }

  std::optional<std::size_t> index_of(int i, int j) const {
    if (i > j) std::swap(i, j);
    auto it = std::lower_bound(edges.begin(), edges.end(), Edge{i, j});
    if (it == edges.end() || *it != Edge{i, j}) return std::nullopt;
    return static_cast<std::size_t>(it - edges.begin());
  }
};

inline EdgeList canonical_edges(const Graph& graph) {
  EdgeList out;
  const int n = graph.num_nodes();
  for (int i = 0; i < n; ++i)
    for (int j = i + 1; j < n; ++j)
      if (graph.adjacency(i, j) != 0.0) out.edges.emplace_back(i, j);
  return out;
}

// Checks the Graph invariants; throws GraphError on the first violation.
inline void validate_graph(const Graph& graph, int num_classes = -1) {
  const int n = graph.num_nodes();
  if (graph.adjacency.cols() != n) throw GraphError("adjacency is not square");
  if (graph.features.rows() != n) throw GraphError("feature rows do not match node count");
  for (int i = 0; i < n; ++i) {
    if (graph.adjacency(i, i) != 0.0) throw GraphError("self-loop on node " + std::to_string(i));
    for (int j = 0; j < n; ++j) {
      const double a = graph.adjacency(i, j);
      if (a != 0.0 && a != 1.0) throw GraphError("adjacency is not binary");
      if (a != graph.adjacency(j, i)) throw GraphError("adjacency is not symmetric");
    }
  }
  if (!graph.features.allFinite()) throw GraphError("non-finite feature value");
  if (num_classes >= 0 && (graph.label < 0 || graph.label >= num_classes))
    throw GraphError("label out of range");
}

// One-hot degree features, capped at max_degree.
inline Matrix synthesize_degree_features(const Graph& graph, int max_degree) {
  Matrix out = Matrix::Zero(graph.num_nodes(), max_degree + 1);
  for (int v = 0; v < graph.num_nodes(); ++v) out(v, std::min(graph.degree(v), max_degree)) = 1.0;
  return out;
}

// Nodes are the canonical edges of `graph`; two are adjacent iff the edges
// share exactly one endpoint.
inline Graph line_graph(const Graph& graph) {
  const EdgeList el = canonical_edges(graph);
  if (el.empty()) throw GraphError("line graph undefined: graph has no edges");
  const int m = static_cast<int>(el.size());
  Graph out;
  out.id = graph.id;
  out.label = graph.label;
  out.adjacency = Matrix::Zero(m, m);
  out.features = Matrix::Ones(m, 1);
  // Bucket edges by endpoint; every pair inside a bucket shares that endpoint.
  std::vector<std::vector<int>> incident(graph.num_nodes());
  for (int e = 0; e < m; ++e) {
    incident[el[e].first].push_back(e);
    incident[el[e].second].push_back(e);
  }
  for (const auto& bucket : incident)
    for (std::size_t a = 0; a < bucket.size(); ++a)
      for (std::size_t b = a + 1; b < bucket.size(); ++b) {
        out.adjacency(bucket[a], bucket[b]) = 1.0;
        out.adjacency(bucket[b], bucket[a]) = 1.0;
      }
  return out;
}

// Removes nodes with `keep[v] == false`, preserving the order of the rest.
inline Graph induced_subgraph(const Graph& graph, const std::vector<bool>& keep) {
  std::vector<int> kept;
  for (int v = 0; v < graph.num_nodes(); ++v)
    if (keep[v]) kept.push_back(v);
  const int k = static_cast<int>(kept.size());
  Graph out;
  out.id = graph.id;
  out.label = graph.label;
  out.adjacency = Matrix::Zero(k, k);
  out.features = Matrix::Zero(k, graph.features.cols());
  for (int a = 0; a < k; ++a) {
    out.features.row(a) = graph.features.row(kept[a]);
    for (int b = 0; b < k; ++b) out.adjacency(a, b) = graph.adjacency(kept[a], kept[b]);
  }
  return out;
}

// Relabels nodes: node v of the input becomes node perm[v] of the output.
inline Graph permute_nodes(const Graph& graph, const std::vector<int>& perm) {
  const int n = graph.num_nodes();
  Graph out = graph;
  for (int i = 0; i < n; ++i) {
    out.features.row(perm[i]) = graph.features.row(i);
    for (int j = 0; j < n; ++j) out.adjacency(perm[i], perm[j]) = graph.adjacency(i, j);
  }
  return out;
}

inline Graph make_graph(int n, const std::vector<Edge>& edges, int label = 0, int id = 0) {
  Graph g;
  g.id = id;
  g.label = label;
  g.adjacency = Matrix::Zero(n, n);
  for (auto [i, j] : edges) {
    g.adjacency(i, j) = 1.0;
    g.adjacency(j, i) = 1.0;
  }
  g.features = Matrix::Ones(n, 1);
  return g;
}

}  // namespace egc2
