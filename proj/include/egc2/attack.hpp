#pragma once

// Iterative gradient edge-flip attack (FGA) and attack/defense evaluation.

#include <atomic>
#include <cmath>
#include <concepts>
#include <limits>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "egc2/compression.hpp"
#include "egc2/log.hpp"
#include "egc2/model.hpp"

namespace egc2 {

struct AdjacencyGradient {
  double loss = 0.0;
  int prediction = 0;
  Matrix gradient;  // d loss / d A, n x n
};

// Anything that can score a graph under a substitute adjacency.
template <typename M>
concept AttackTarget = requires(const M& m, const Graph& g, const Matrix& a) {
  { m.adjacency_gradient(g, a) } -> std::same_as<AdjacencyGradient>;
};

// Adapts a trained EgcModel to AttackTarget.
struct EgcTarget {
  const EgcModel* model = nullptr;

  AdjacencyGradient adjacency_gradient(const Graph& g, const Matrix& a) const {
    LossGradient lg = loss_gradient(g, a, *model, false, true);
    return {lg.loss, lg.prediction, std::move(lg.adjacency)};
  }
};

// Two-class scorer whose loss is exactly linear in A:
//   margin(A) = <W, A> + b, prediction 1 iff margin > 0,
//   loss = -margin for label 1 and +margin for label 0.
// First-order flip estimates are exact on it.
struct LinearAdjacencyClassifier {
  Matrix weights;
  double bias = 0.0;

  double margin(const Matrix& a) const { return weights.cwiseProduct(a).sum() + bias; }

  AdjacencyGradient adjacency_gradient(const Graph& g, const Matrix& a) const {
    const double m = margin(a);
    const double sign = g.label == 1 ? -1.0 : 1.0;
    return {sign * m, m > 0.0 ? 1 : 0, sign * weights};
  }
};

enum class AttackStatus { NotAttacked, Failed, Succeeded };

inline std::string to_string(AttackStatus s) {
  switch (s) {
    case AttackStatus::NotAttacked: return "not attacked";
    case AttackStatus::Failed: return "failed";
    case AttackStatus::Succeeded: return "succeeded";
  }
  return "?";
}

struct AttackResult {
  int graph_id = 0;
  int budget = 0;
  AttackStatus status = AttackStatus::NotAttacked;
  Graph adversarial;
  std::vector<Edge> flips;             // in order, i < j
  std::vector<double> loss_trajectory;  // loss before the first flip and after each flip

  bool success() const { return status == AttackStatus::Succeeded; }
  bool attacked() const { return status != AttackStatus::NotAttacked; }
};

inline int attack_budget(double ratio, int num_edges) {
  if (!(ratio >= 0.0)) throw ContractError("perturbation ratio must be nonnegative");
  return static_cast<int>(std::ceil(ratio * num_edges - 1e-9));
}

// Greedy FGA: after every flip the gradient is recomputed. Each step flips
// the unflipped real pair (i < j) maximising s = sym(g)_ij * (1 - 2 A_ij);
// ties go to the smallest (i, j). Stops when the prediction turns wrong, the
// budget is spent, or no pair has s > 0.
template <AttackTarget M>
AttackResult fga_attack(const M& model, const Graph& graph, int budget) {
  AttackResult res;
  res.graph_id = graph.id;
  res.budget = budget;
  res.adversarial = graph;
  Matrix& a = res.adversarial.adjacency;
  AdjacencyGradient cur = model.adjacency_gradient(graph, a);
  if (cur.prediction != graph.label) return res;
  res.status = AttackStatus::Failed;
  res.loss_trajectory.push_back(cur.loss);
  const int n = graph.num_nodes();
  std::vector<char> used(static_cast<std::size_t>(n) * n, 0);
  for (int step = 0; step < budget; ++step) {
    double best = 0.0;
    int bi = -1, bj = -1;
    for (int i = 0; i < n; ++i)
      for (int j = i + 1; j < n; ++j) {
        if (used[static_cast<std::size_t>(i) * n + j]) continue;
        const double gs = 0.5 * (cur.gradient(i, j) + cur.gradient(j, i));
        const double s = gs * (1.0 - 2.0 * a(i, j));
        if (s > best) {
          best = s;
          bi = i;
          bj = j;
        }
      }
    if (bi < 0) break;
    used[static_cast<std::size_t>(bi) * n + bj] = 1;
    const double v = a(bi, bj) != 0.0 ? 0.0 : 1.0;
    a(bi, bj) = v;
    a(bj, bi) = v;
    res.flips.emplace_back(bi, bj);
    cur = model.adjacency_gradient(res.adversarial, a);
    res.loss_trajectory.push_back(cur.loss);
    if (cur.prediction != graph.label) {
      res.status = AttackStatus::Succeeded;
      break;
    }
  }
  return res;
}

struct AttackSetResult {
  double ratio = 0.0;
  std::vector<AttackResult> results;  // one per input graph, in order
  GraphDataset adversarial;           // adversarial versions (unattacked graphs unchanged)
  int attacked = 0;
  int successes = 0;
  std::optional<double> asr;  // successes / attacked; empty when nothing was attacked
};

inline std::optional<double> attack_success_rate(int successes, int attacked) {
  if (attacked == 0) return std::nullopt;
  return static_cast<double>(successes) / static_cast<double>(attacked);
}

template <AttackTarget M>
AttackSetResult attack_dataset(const M& model, const GraphDataset& test_set, double ratio, int jobs = 1) {
  AttackSetResult out;
  out.ratio = ratio;
  out.results.resize(test_set.size());
  std::atomic<std::size_t> next{0};
  auto work = [&] {
    for (std::size_t i = next++; i < test_set.size(); i = next++) {
      const Graph& g = test_set.graphs[i];
      out.results[i] = fga_attack(model, g, attack_budget(ratio, g.num_edges()));
    }
  };
  jobs = std::max(1, jobs);
  if (jobs == 1) {
    work();
  } else {
    std::vector<std::thread> ts;
    for (int w = 0; w < jobs; ++w) ts.emplace_back(work);
    for (auto& t : ts) t.join();
  }
  out.adversarial = test_set;
  for (std::size_t i = 0; i < test_set.size(); ++i) {
    const auto& r = out.results[i];
    out.adversarial.graphs[i] = r.adversarial;
    out.attacked += r.attacked();
    out.successes += r.success();
  }
  out.asr = attack_success_rate(out.successes, out.attacked);
  if (!out.asr) log::warn(test_set.name + ": no graph was classified correctly, ASR undefined");
  return out;
}

// --- defense grid -----------------------------------------------------------

// A classifier variant: a model, optionally preceded by compression of its
// input. `attack_source` indexes the variant whose model generates the
// adversarial set used when this variant is the target (compressed variants
// reuse the set of their uncompressed counterpart).
struct DefenseVariant {
  std::string name;
  const EgcModel* model = nullptr;
  std::optional<CompressionConfig> compression;
  int attack_source = -1;  // -1: attack this variant's own model
};

inline int classify(const DefenseVariant& v, const Graph& g) {
  if (!v.compression || v.compression->gamma == 0.0 || g.num_edges() == 0) return predict(g, *v.model);
  return predict(compress_by_index(g, *v.compression), *v.model);
}

struct DefenseCell {
  std::string target;     // variant the adversarial set was generated for
  std::string evaluated;  // variant classifying it
  double accuracy = 0.0;  // on the whole adversarial set
  int attacked = 0;       // graphs attacked by the source that `evaluated` gets right when clean
  int successes = 0;      // of those, misclassified by `evaluated` after the attack
  std::optional<double> asr;
};

struct DefenseGrid {
  double ratio = 0.0;
  std::vector<std::string> variants;
  std::vector<DefenseCell> cells;  // row-major: target x evaluated

  const DefenseCell& at(const std::string& target, const std::string& evaluated) const {
    for (const auto& c : cells)
      if (c.target == target && c.evaluated == evaluated) return c;
    throw LookupError("no defense cell " + target + " -> " + evaluated);
  }
};

// Counts accumulated across folds before forming rates.
struct DefenseTally {
  int total = 0, correct = 0, attacked = 0, successes = 0;
};

struct DefenseRun {
  std::vector<AttackSetResult> sets;            // per variant as target
  std::vector<std::vector<DefenseTally>> tally;  // [target][evaluated]
};

inline DefenseRun defense_run(const std::vector<DefenseVariant>& variants, const GraphDataset& test_set, double ratio,
                              int jobs = 1) {
  const std::size_t nv = variants.size();
  DefenseRun run;
  run.sets.resize(nv);
  std::vector<int> generated(nv, -1);
  for (std::size_t t = 0; t < nv; ++t) {
    const int src = variants[t].attack_source < 0 ? static_cast<int>(t) : variants[t].attack_source;
    if (generated[src] < 0) {
      run.sets[src] = attack_dataset(EgcTarget{variants[src].model}, test_set, ratio, jobs);
      generated[src] = src;
    }
    if (static_cast<int>(t) != src) run.sets[t] = run.sets[src];
  }
  std::vector<std::vector<int>> clean(nv);
  for (std::size_t v = 0; v < nv; ++v)
    for (const Graph& g : test_set.graphs) clean[v].push_back(classify(variants[v], g));
  run.tally.assign(nv, std::vector<DefenseTally>(nv));
  for (std::size_t t = 0; t < nv; ++t) {
    const auto& set = run.sets[t];
    for (std::size_t e = 0; e < nv; ++e) {
      DefenseTally& c = run.tally[t][e];
      for (std::size_t i = 0; i < test_set.size(); ++i) {
        const Graph& adv = set.adversarial.graphs[i];
        const int p = classify(variants[e], adv);
        ++c.total;
        c.correct += p == adv.label;
        if (set.results[i].attacked() && clean[e][i] == test_set.graphs[i].label) {
          ++c.attacked;
          c.successes += p != adv.label;
        }
      }
    }
  }
  return run;
}

inline DefenseGrid defense_grid(const std::vector<DefenseVariant>& variants,
                                const std::vector<std::vector<DefenseTally>>& tally, double ratio) {
  DefenseGrid grid;
  grid.ratio = ratio;
  for (const auto& v : variants) grid.variants.push_back(v.name);
  for (std::size_t t = 0; t < variants.size(); ++t)
    for (std::size_t e = 0; e < variants.size(); ++e) {
      const DefenseTally& c = tally[t][e];
      DefenseCell cell;
      cell.target = variants[t].name;
      cell.evaluated = variants[e].name;
      cell.accuracy = c.total ? static_cast<double>(c.correct) / c.total : 0.0;
      cell.attacked = c.attacked;
      cell.successes = c.successes;
      cell.asr = attack_success_rate(c.successes, c.attacked);
      grid.cells.push_back(std::move(cell));
    }
  return grid;
}

inline void add_tallies(std::vector<std::vector<DefenseTally>>& into, const std::vector<std::vector<DefenseTally>>& x) {
  if (into.empty()) {
    into = x;
    return;
  }
  for (std::size_t t = 0; t < x.size(); ++t)
    for (std::size_t e = 0; e < x[t].size(); ++e) {
      into[t][e].total += x[t][e].total;
      into[t][e].correct += x[t][e].correct;
      into[t][e].attacked += x[t][e].attacked;
      into[t][e].successes += x[t][e].successes;
    }
}

// Accuracy/ASR grid for every ratio on one test set.
inline std::vector<DefenseGrid> defense_evaluation(const std::vector<DefenseVariant>& variants,
                                                   const GraphDataset& test_set, const std::vector<double>& ratios,
                                                   int jobs = 1) {
  std::vector<DefenseGrid> out;
  for (double r : ratios) out.push_back(defense_grid(variants, defense_run(variants, test_set, r, jobs).tally, r));
  return out;
}

}  // namespace egc2
