#pragma once

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <queue>
#include <stack>
#include <string>
#include <vector>

#include "egc2/graph.hpp"

namespace egc2 {

enum class ScoreKind { CC, BC, EC, C, DC, GRAD };

inline std::string to_string(ScoreKind k) {
  switch (k) {
    case ScoreKind::CC: return "CC";
    case ScoreKind::BC: return "BC";
    case ScoreKind::EC: return "EC";
    case ScoreKind::C: return "C";
    case ScoreKind::DC: return "DC";
    case ScoreKind::GRAD: return "GRAD";
  }
  return "?";
}

// Accepts the CLI spelling (cc, bc, ec, c, dc, grad) in either case.
inline ScoreKind parse_score_kind(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  if (s == "cc") return ScoreKind::CC;
  if (s == "bc") return ScoreKind::BC;
  if (s == "ec") return ScoreKind::EC;
  if (s == "c") return ScoreKind::C;
  if (s == "dc") return ScoreKind::DC;
  if (s == "grad") return ScoreKind::GRAD;
  throw SchemaError("unknown index '" + s + "' (expected cc|bc|ec|c|dc)");
}

inline constexpr ScoreKind kCentralityKinds[] = {ScoreKind::CC, ScoreKind::BC, ScoreKind::EC, ScoreKind::C,
                                                 ScoreKind::DC};

// Per-edge scores aligned with canonical_edges() of the owning graph.
struct EdgeScoreVector {
  ScoreKind kind = ScoreKind::GRAD;
  std::vector<double> values;
  int graph_id = 0;

  std::size_t size() const { return values.size(); }
};

namespace centrality_detail {

inline std::vector<int> bfs_distances(const std::vector<std::vector<int>>& nbr, int source) {
  std::vector<int> dist(nbr.size(), -1);
  std::queue<int> q;
  dist[source] = 0;
  q.push(source);
  while (!q.empty()) {
    const int v = q.front();
    q.pop();
    for (int w : nbr[v])
      if (dist[w] < 0) {
        dist[w] = dist[v] + 1;
        q.push(w);
      }
  }
  return dist;
}

inline std::vector<double> closeness(const std::vector<std::vector<int>>& nbr) {
  const int n = static_cast<int>(nbr.size());
  std::vector<double> out(n, 0.0);
  for (int s = 0; s < n; ++s) {
    const auto dist = bfs_distances(nbr, s);
    long long reach = 0, total = 0;
    for (int t = 0; t < n; ++t)
      if (t != s && dist[t] > 0) {
        ++reach;
        total += dist[t];
      }
    out[s] = total > 0 ? static_cast<double>(reach) / static_cast<double>(total) : 0.0;
  }
  return out;
}

// Brandes accumulation; each unordered pair is visited from both ends, so the
// result is halved.
inline std::vector<double> betweenness(const std::vector<std::vector<int>>& nbr) {
  const int n = static_cast<int>(nbr.size());
  std::vector<double> bc(n, 0.0);
  std::vector<std::vector<int>> pred(n);
  std::vector<double> sigma(n), delta(n);
  std::vector<int> dist(n);
  for (int s = 0; s < n; ++s) {
    for (int v = 0; v < n; ++v) {
      pred[v].clear();
      sigma[v] = 0.0;
      delta[v] = 0.0;
      dist[v] = -1;
    }
    std::stack<int> order;
    std::queue<int> q;
    sigma[s] = 1.0;
    dist[s] = 0;
    q.push(s);
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      order.push(v);
      for (int w : nbr[v]) {
        if (dist[w] < 0) {
          dist[w] = dist[v] + 1;
          q.push(w);
        }
        if (dist[w] == dist[v] + 1) {
          sigma[w] += sigma[v];
          pred[w].push_back(v);
        }
      }
    }
    while (!order.empty()) {
      const int w = order.top();
      order.pop();
      for (int v : pred[w]) delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w]);
      if (w != s) bc[w] += delta[w];
    }
  }
  for (double& x : bc) x *= 0.5;
  return bc;
}

inline std::vector<double> clustering(const Graph& g, const std::vector<std::vector<int>>& nbr) {
  const int n = g.num_nodes();
  std::vector<double> out(n, 0.0);
  for (int v = 0; v < n; ++v) {
    const auto& nv = nbr[v];
    const int d = static_cast<int>(nv.size());
    if (d < 2) continue;
    long long tri = 0;
    for (int a = 0; a < d; ++a)
      for (int b = a + 1; b < d; ++b) tri += g.adjacency(nv[a], nv[b]) != 0.0;
    out[v] = 2.0 * static_cast<double>(tri) / (static_cast<double>(d) * (d - 1));
  }
  return out;
}

inline std::vector<std::vector<int>> components(const std::vector<std::vector<int>>& nbr) {
  const int n = static_cast<int>(nbr.size());
  std::vector<int> seen(n, 0);
  std::vector<std::vector<int>> out;
  for (int s = 0; s < n; ++s) {
    if (seen[s]) continue;
    std::vector<int> comp;
    std::queue<int> q;
    q.push(s);
    seen[s] = 1;
    while (!q.empty()) {
      const int v = q.front();
      q.pop();
      comp.push_back(v);
      for (int w : nbr[v])
        if (!seen[w]) {
          seen[w] = 1;
          q.push(w);
        }
    }
    std::sort(comp.begin(), comp.end());
    out.push_back(std::move(comp));
  }
  return out;
}

inline constexpr int kPowerIterations = 1000;
inline constexpr double kPowerTolerance = 1e-10;

// Dominant eigenvector of one connected component, L2-normalised and
// nonnegative. Iterates with A + I so bipartite components converge too.
inline Vector dominant_eigenvector(const Matrix& a) {
  const Eigen::Index m = a.rows();
  Vector v = Vector::Constant(m, 1.0 / std::sqrt(static_cast<double>(m)));
  const Matrix shifted = a + Matrix::Identity(m, m);
  bool converged = false;
  for (int it = 0; it < kPowerIterations; ++it) {
    Vector next = shifted * v;
    next /= next.norm();
    const double diff = (next - v).cwiseAbs().maxCoeff();
    v = std::move(next);
    if (diff <= kPowerTolerance) {
      converged = true;
      break;
    }
  }
  if (!converged) {
    Eigen::SelfAdjointEigenSolver<Matrix> solver(a);
    v = solver.eigenvectors().col(m - 1);
  }
  v = v.cwiseAbs();
  return v / v.norm();
}

inline std::vector<double> eigenvector(const Graph& g, const std::vector<std::vector<int>>& nbr) {
  std::vector<double> out(g.num_nodes(), 0.0);
  for (const auto& comp : components(nbr)) {
    const Eigen::Index m = static_cast<Eigen::Index>(comp.size());
    Matrix sub(m, m);
    for (Eigen::Index a = 0; a < m; ++a)
      for (Eigen::Index b = 0; b < m; ++b) sub(a, b) = g.adjacency(comp[a], comp[b]);
    const Vector v = dominant_eigenvector(sub);
    for (Eigen::Index a = 0; a < m; ++a) out[comp[a]] = v(a);
  }
  return out;
}

}  // namespace centrality_detail

inline std::vector<double> node_centrality(const Graph& graph, ScoreKind kind) {
  using namespace centrality_detail;
  const int n = graph.num_nodes();
  if (n < 1) throw GraphError("centrality undefined on an empty graph");
  const auto nbr = graph.neighbors();
  switch (kind) {
    case ScoreKind::CC: return closeness(nbr);
    case ScoreKind::BC: return betweenness(nbr);
    case ScoreKind::EC: return eigenvector(graph, nbr);
    case ScoreKind::C: return clustering(graph, nbr);
    case ScoreKind::DC: {
      std::vector<double> out(n, 0.0);
      if (n == 1) return out;
      for (int v = 0; v < n; ++v) out[v] = static_cast<double>(nbr[v].size()) / (n - 1);
      return out;
    }
    case ScoreKind::GRAD: break;
  }
  throw ContractError("GRAD is not a centrality index");
}

// Centrality of every canonical edge, computed on the line graph.
inline EdgeScoreVector edge_importance(const Graph& graph, ScoreKind kind) {
  EdgeScoreVector out;
  out.kind = kind;
  out.graph_id = graph.id;
  out.values = node_centrality(line_graph(graph), kind);
  return out;
}

}  // namespace egc2
