#pragma once

// Seeded generators for two benchmark-shaped datasets, used when the real
// TU files are not at hand.
//
//   ptc_syn       344 molecule-like graphs: labelled atoms on a random tree
//                 with a few ring closures; carcinogenicity is a noisy
//                 function of nitro groups, halogens and rings.
//   proteins_syn  1113 secondary-structure graphs: a backbone chain of
//                 helix/sheet/turn elements plus spatial contacts from a 3-D
//                 random walk; the class is a noisy function of composition
//                 and size.

#include <algorithm>
#include <array>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "egc2/graph.hpp"
#include "egc2/rng.hpp"

namespace egc2 {

namespace synth_detail {

inline double normal(Rng& rng) {
  double u = uniform01(rng);
  while (u <= 0.0) u = uniform01(rng);
  const double v = uniform01(rng);
  return std::sqrt(-2.0 * std::log(u)) * std::cos(2.0 * std::numbers::pi * v);
}

inline bool bernoulli(Rng& rng, double p) { return uniform01(rng) < p; }

inline int poisson(Rng& rng, double lambda) {
  const double limit = std::exp(-lambda);
  double p = uniform01(rng);
  int k = 0;
  while (p > limit) {
    p *= uniform01(rng);
    ++k;
  }
  return k;
}

inline int categorical(Rng& rng, const std::vector<double>& weights) {
  double total = 0.0;
  for (double w : weights) total += w;
  double u = uniform01(rng) * total;
  for (std::size_t i = 0; i < weights.size(); ++i) {
    if (u < weights[i]) return static_cast<int>(i);
    u -= weights[i];
  }
  return static_cast<int>(weights.size()) - 1;
}

inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

inline Graph assemble(int n, const std::vector<Edge>& edges, const std::vector<int>& labels, int num_labels, int y,
                      int id) {
  Graph g = make_graph(n, edges, y, id);
  g.features = Matrix::Zero(n, num_labels);
  for (int v = 0; v < n; ++v) g.features(v, labels[v]) = 1.0;
  return g;
}

// Hop distances from `s` in an adjacency-list graph.
inline std::vector<int> hops(const std::vector<std::vector<int>>& nbr, int s) {
  std::vector<int> dist(nbr.size(), -1);
  std::vector<int> queue{s};
  dist[s] = 0;
  for (std::size_t q = 0; q < queue.size(); ++q)
    for (int w : nbr[queue[q]])
      if (dist[w] < 0) {
        dist[w] = dist[queue[q]] + 1;
        queue.push_back(w);
      }
  return dist;
}

}  // namespace synth_detail

inline constexpr std::uint64_t kDefaultSynthSeed = 20190801;

// Atom vocabulary: 0 C, 1 O, 2 N, 3 Cl, 4 S, 5 F, 6 Br, 7 P, 8 I, 9 Na,
// 10 K, 11 Li, 12 Ca, 13 Sn, 14 Cu, 15 Zn, 16 B, 17 As, 18 Hg.
inline constexpr int kPtcLabels = 19;

inline GraphDataset ptc_syn(std::uint64_t seed = kDefaultSynthSeed, int count = 344) {
  using namespace synth_detail;
  const std::vector<double> atom_freq = {62, 14, 9, 4.5, 2.5, 2, 1.5, 1, 0.6, 0.5,
                                         0.3, 0.2, 0.2, 0.2, 0.15, 0.15, 0.1, 0.05, 0.05};
  const std::array<int, 4> halogens = {3, 5, 6, 8};
  GraphDataset ds;
  ds.name = "PTC_SYN";
  ds.num_classes = 2;
  ds.feature_dim = kPtcLabels;
  ds.feature_source = FeatureSource::NodeLabels;
  for (int gi = 0; gi < count; ++gi) {
    Rng rng(derive_seed(seed, Stream::Synth, static_cast<std::uint64_t>(gi)));
    const bool nitro = bernoulli(rng, 0.22);
    const int skeleton = std::clamp(static_cast<int>(std::lround(std::exp(2.47 + 0.55 * normal(rng)))), 2,
                                    nitro ? 61 : 64);
    std::vector<int> labels;
    std::vector<Edge> edges;
    std::vector<std::vector<int>> nbr;
    auto add_node = [&](int label) {
      labels.push_back(label);
      nbr.emplace_back();
      return static_cast<int>(labels.size()) - 1;
    };
    auto connect = [&](int a, int b) {
      edges.emplace_back(std::min(a, b), std::max(a, b));
      nbr[a].push_back(b);
      nbr[b].push_back(a);
    };
    // Tree skeleton; valence is capped at 4.
    add_node(0);
    for (int v = 1; v < skeleton; ++v) {
      const int label = categorical(rng, atom_freq);
      int parent = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(v)));
      for (int tries = 0; tries < 8 && nbr[parent].size() >= 4; ++tries)
        parent = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(v)));
      connect(add_node(label), parent);
    }
    // Ring closures between carbons 4 or 5 hops apart (5- and 6-rings).
    int rings = 0;
    const int closures = std::min(poisson(rng, 1.9), skeleton / 4);
    for (int c = 0; c < closures; ++c) {
      for (int tries = 0; tries < 20; ++tries) {
        const int a = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(skeleton)));
        const auto dist = hops(nbr, a);
        std::vector<int> cand;
        for (int b = 0; b < skeleton; ++b)
          if ((dist[b] == 4 || dist[b] == 5) && nbr[b].size() < 4 && nbr[a].size() < 4) cand.push_back(b);
        if (cand.empty()) continue;
        connect(a, cand[uniform_below(rng, cand.size())]);
        ++rings;
        break;
      }
    }
    if (nitro) {
      int host = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(skeleton)));
      const int nn = add_node(2);
      connect(nn, host);
      connect(add_node(1), nn);
      connect(add_node(1), nn);
    }
    const int n = static_cast<int>(labels.size());
    int halo = 0;
    for (int v = 0; v < n; ++v)
      halo += std::find(halogens.begin(), halogens.end(), labels[v]) != halogens.end();
    const double logit = -1.1 + 1.6 * nitro + 0.45 * std::min(halo, 4) + 0.35 * std::min(rings, 3) -
                         0.02 * (n - 14) + 0.6 * normal(rng);
    const int y = bernoulli(rng, sigmoid(logit)) ? 1 : 0;
    ds.graphs.push_back(assemble(n, edges, labels, kPtcLabels, y, gi));
  }
  return ds;
}

// Element types: 0 helix, 1 sheet, 2 turn.
inline constexpr int kProteinLabels = 3;

inline GraphDataset proteins_syn(std::uint64_t seed = kDefaultSynthSeed, int count = 1113, int max_nodes = 150) {
  using namespace synth_detail;
  GraphDataset ds;
  ds.name = "PROTEINS_SYN";
  ds.num_classes = 2;
  ds.feature_dim = kProteinLabels;
  ds.feature_source = FeatureSource::NodeLabels;
  for (int gi = 0; gi < count; ++gi) {
    Rng rng(derive_seed(seed ^ 0x5052u, Stream::Synth, static_cast<std::uint64_t>(gi)));
    const int n = std::clamp(static_cast<int>(std::lround(std::exp(3.5 + 0.62 * normal(rng)))), 4, max_nodes);
    const double helix_bias = 0.8 * normal(rng);
    // Runs of secondary-structure elements along the chain.
    std::vector<int> labels;
    while (static_cast<int>(labels.size()) < n) {
      const int type = categorical(rng, {std::exp(helix_bias), 1.0, 0.55});
      const int run = type == 0 ? 2 + poisson(rng, 3.0) : type == 1 ? 2 + poisson(rng, 1.5) : 1 + poisson(rng, 0.4);
      for (int k = 0; k < run && static_cast<int>(labels.size()) < n; ++k) labels.push_back(type);
    }
    // Backbone positions: a persistent random walk; helices step shorter.
    std::vector<std::array<double, 3>> pos(n);
    std::array<double, 3> dir = {1.0, 0.0, 0.0};
    for (int v = 1; v < n; ++v) {
      for (double& c : dir) c = 0.55 * c + 0.45 * normal(rng);
      const double len = std::sqrt(dir[0] * dir[0] + dir[1] * dir[1] + dir[2] * dir[2]);
      const double step = labels[v] == 0 ? 0.8 : 1.0;
      for (int c = 0; c < 3; ++c) pos[v][c] = pos[v - 1][c] + step * dir[c] / len;
    }
    std::vector<Edge> edges;
    for (int v = 0; v + 1 < n; ++v) edges.emplace_back(v, v + 1);
    const double cutoff = 1.42;
    for (int a = 0; a < n; ++a)
      for (int b = a + 2; b < n; ++b) {
        double d2 = 0.0;
        for (int c = 0; c < 3; ++c) d2 += (pos[a][c] - pos[b][c]) * (pos[a][c] - pos[b][c]);
        if (d2 < cutoff * cutoff) edges.emplace_back(a, b);
      }
    int helices = 0, sheets = 0;
    for (int t : labels) {
      helices += t == 0;
      sheets += t == 1;
    }
    const double hf = static_cast<double>(helices) / n, sf = static_cast<double>(sheets) / n;
    const double density = static_cast<double>(edges.size()) / n;
    const double logit = -0.65 + 2.2 * (hf - 0.45) - 1.2 * (sf - 0.3) + 0.9 * (std::log(n) - 3.45) +
                         0.6 * (density - 1.8) + 0.7 * normal(rng);
    const int y = bernoulli(rng, sigmoid(logit)) ? 1 : 0;
    ds.graphs.push_back(assemble(n, edges, labels, kProteinLabels, y, gi));
  }
  return ds;
}

}  // namespace egc2
