#pragma once

// Gradient edge contributions and their agreement with centrality scores.

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "egc2/centrality.hpp"
#include "egc2/model.hpp"

namespace egc2 {

// (g + g^T) / 2 masked by A.
inline Matrix masked_symmetric_gradient(const Matrix& g, const Matrix& adjacency) {
  return (0.5 * (g + g.transpose())).cwiseProduct(adjacency);
}

// R_g: absolute symmetrised loss gradient with respect to the raw adjacency,
// read at every canonical edge.
inline EdgeScoreVector edge_contribution(const EgcModel& model, const Graph& graph) {
  if (!model.trained) throw ContractError("edge_contribution needs a trained model");
  const LossGradient lg = loss_gradient(graph, model, false, true);
  const Matrix gs = masked_symmetric_gradient(lg.adjacency, graph.adjacency);
  EdgeScoreVector out;
  out.kind = ScoreKind::GRAD;
  out.graph_id = graph.id;
  for (auto [i, j] : canonical_edges(graph).edges) out.values.push_back(std::abs(gs(i, j)));
  return out;
}

inline double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size())
    throw AlignmentError("vectors have lengths " + std::to_string(a.size()) + " and " + std::to_string(b.size()));
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return 0.0;
  return std::clamp(dot / (std::sqrt(na) * std::sqrt(nb)), -1.0, 1.0);
}

inline double eci(const EdgeScoreVector& importance, const EdgeScoreVector& contribution) {
  if (importance.size() == 0) throw AlignmentError("ECI needs at least one edge");
  return cosine(importance.values, contribution.values);
}

inline double eci_delta(double clean_mean, double adv_mean) { return clean_mean - adv_mean; }

// Rank-normalised importance of each target edge: (|E| - rank) / (|E| - 1)
// with rank 0 for the highest score (ties by ascending canonical index).
inline std::vector<double> perturbation_importance_score(const Graph& graph, const EdgeScoreVector& scores,
                                                         const std::vector<Edge>& targets) {
  const EdgeList edges = canonical_edges(graph);
  if (scores.size() != edges.size()) throw AlignmentError("score vector does not match the graph's edges");
  std::vector<int> order(edges.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) { return scores.values[a] > scores.values[b]; });
  std::vector<int> rank(edges.size());
  for (std::size_t r = 0; r < order.size(); ++r) rank[order[r]] = static_cast<int>(r);
  const double m = static_cast<double>(edges.size());
  std::vector<double> out;
  for (auto [i, j] : targets) {
    const auto idx = edges.index_of(i, j);
    if (!idx) throw LookupError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") is not in the graph");
    out.push_back(edges.size() == 1 ? 1.0 : (m - 1.0 - rank[*idx]) / (m - 1.0));
  }
  return out;
}

enum class EciAggregate { PerGraphMean, Concat };

inline EciAggregate parse_eci_aggregate(const std::string& s) {
  if (s == "mean") return EciAggregate::PerGraphMean;
  if (s == "concat") return EciAggregate::Concat;
  throw SchemaError("unknown ECI aggregation '" + s + "' (expected mean|concat)");
}

struct EciEntry {
  ScoreKind kind = ScoreKind::C;
  double mean = 0.0;  // over graphs, or the single concatenated cosine
  std::vector<double> per_graph;
};

struct EciReport {
  std::string dataset;
  EciAggregate aggregate = EciAggregate::PerGraphMean;
  std::vector<EciEntry> clean;
  std::vector<EciEntry> adversarial;  // empty unless computed

  double clean_mean(ScoreKind k) const { return find(clean, k).mean; }
  double adversarial_mean(ScoreKind k) const { return find(adversarial, k).mean; }
  double delta(ScoreKind k) const { return eci_delta(clean_mean(k), adversarial_mean(k)); }

 private:
  static const EciEntry& find(const std::vector<EciEntry>& v, ScoreKind k) {
    for (const auto& e : v)
      if (e.kind == k) return e;
    throw LookupError("no ECI entry for " + to_string(k));
  }
};

// Contributions and importances of one graph for every kind, computed once.
struct GraphAttribution {
  EdgeScoreVector contribution;
  std::vector<EdgeScoreVector> importance;  // aligned with the requested kinds
};

inline GraphAttribution attribute_graph(const EgcModel& model, const Graph& graph, const std::vector<ScoreKind>& kinds) {
  GraphAttribution a;
  a.contribution = edge_contribution(model, graph);
  for (ScoreKind k : kinds) a.importance.push_back(edge_importance(graph, k));
  return a;
}

// ECI per kind over a set of graphs. Graphs without edges are skipped.
inline std::vector<EciEntry> eci_over(const EgcModel& model, const std::vector<Graph>& graphs,
                                      const std::vector<ScoreKind>& kinds, EciAggregate aggregate) {
  std::vector<EciEntry> out(kinds.size());
  std::vector<std::vector<double>> cat_imp(kinds.size()), cat_con(kinds.size());
  for (std::size_t k = 0; k < kinds.size(); ++k) out[k].kind = kinds[k];
  for (const Graph& g : graphs) {
    if (g.num_edges() == 0) continue;
    const auto a = attribute_graph(model, g, kinds);
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      out[k].per_graph.push_back(eci(a.importance[k], a.contribution));
      cat_imp[k].insert(cat_imp[k].end(), a.importance[k].values.begin(), a.importance[k].values.end());
      cat_con[k].insert(cat_con[k].end(), a.contribution.values.begin(), a.contribution.values.end());
    }
  }
  for (std::size_t k = 0; k < kinds.size(); ++k) {
    auto& e = out[k];
    if (aggregate == EciAggregate::Concat)
      e.mean = cat_imp[k].empty() ? 0.0 : cosine(cat_imp[k], cat_con[k]);
    else
      e.mean = e.per_graph.empty() ? 0.0
                                   : std::accumulate(e.per_graph.begin(), e.per_graph.end(), 0.0) /
                                         static_cast<double>(e.per_graph.size());
  }
  return out;
}

}  // namespace egc2
