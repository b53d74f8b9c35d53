#pragma once

// Hierarchical pooled GCN classifier with a feature-graph read-out.
//
// Each of the L levels runs a K-step GCN (GNN_cov) and a K-step assignment
// GCN (GNN_pool) on the level input, pools both features and adjacency
// through the soft assignment, and reads the pooled features out into a
// d x 1 embedding. The L embeddings are concatenated and classified by a
// two-layer MLP.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "egc2/autodiff.hpp"
#include "egc2/graph.hpp"
#include "egc2/rng.hpp"

namespace egc2 {

enum class Readout { Feature, Mean, Max };

inline std::string to_string(Readout r) {
  switch (r) {
    case Readout::Feature: return "feature";
    case Readout::Mean: return "mean";
    case Readout::Max: return "max";
  }
  return "feature";
}

inline Readout parse_readout(const std::string& s) {
  if (s == "feature") return Readout::Feature;
  if (s == "mean") return Readout::Mean;
  if (s == "max") return Readout::Max;
  throw SchemaError("unknown readout '" + s + "' (expected feature|mean|max)");
}

struct ModelConfig {
  int L = 3;
  int K = 3;
  int d = 64;
  double r = 0.25;
  double k = 0.25;
  int n0 = 0;  // dataset max node count; fixes the pooled size schedule
  int feature_dim = 0;
  int num_classes = 2;
  double learning_rate = 0.001;
  int max_epochs = 1000;
  int patience = 100;
  int batch_size = 32;
  Readout readout = Readout::Feature;
  int readout_width = 16;  // hidden width of GNN_F
  int mlp_hidden = 64;

  void validate() const {
    auto bad = [](const std::string& what) { throw ContractError("invalid model config: " + what); };
    if (L < 1) bad("L must be >= 1");
    if (K < 1) bad("K must be >= 1");
    if (!(r >= 0.1 && r <= 0.9)) bad("r must lie in [0.1, 0.9]");
    if (!(k >= 0.05 && k <= 0.75)) bad("k must lie in [0.05, 0.75]");
    if (d != 32 && d != 64 && d != 128 && d != 256 && d != 512) bad("d must be one of 32, 64, 128, 256, 512");
    if (n0 < 1) bad("n0 must be >= 1");
    if (feature_dim < 1) bad("feature_dim must be >= 1");
    if (num_classes < 2) bad("num_classes must be >= 2");
    if (!(learning_rate > 0.0)) bad("learning_rate must be positive");
    if (max_epochs < 1 || patience < 0 || batch_size < 1) bad("epoch, patience and batch settings");
    if (readout_width < 1 || mlp_hidden < 1) bad("layer widths");
  }

  // n_0 .. n_L with n_{l+1} = max(1, floor(n_l * r)).
  std::vector<int> node_schedule() const {
    std::vector<int> n{n0};
    for (int l = 0; l < L; ++l)
      n.push_back(std::max(1, static_cast<int>(std::floor(n.back() * r + 1e-9))));
    return n;
  }
};

inline nlohmann::json to_json(const ModelConfig& c) {
  return {{"L", c.L},
          {"K", c.K},
          {"d", c.d},
          {"r", c.r},
          {"k", c.k},
          {"n0", c.n0},
          {"feature_dim", c.feature_dim},
          {"num_classes", c.num_classes},
          {"learning_rate", c.learning_rate},
          {"max_epochs", c.max_epochs},
          {"patience", c.patience},
          {"batch_size", c.batch_size},
          {"readout", to_string(c.readout)},
          {"readout_width", c.readout_width},
          {"mlp_hidden", c.mlp_hidden}};
}

inline ModelConfig model_config_from_json(const nlohmann::json& j) {
  ModelConfig c;
  c.L = j.at("L");
  c.K = j.at("K");
  c.d = j.at("d");
  c.r = j.at("r");
  c.k = j.at("k");
  c.n0 = j.at("n0");
  c.feature_dim = j.at("feature_dim");
  c.num_classes = j.at("num_classes");
  c.learning_rate = j.at("learning_rate");
  c.max_epochs = j.at("max_epochs");
  c.patience = j.at("patience");
  c.batch_size = j.at("batch_size");
  c.readout = parse_readout(j.at("readout"));
  c.readout_width = j.at("readout_width");
  c.mlp_hidden = j.at("mlp_hidden");
  return c;
}

struct EgcModel {
  ModelConfig config;
  std::uint64_t seed = 0;
  bool trained = false;
  std::vector<std::string> names;
  std::vector<Matrix> params;

  // Index of the k-th weight of each per-level block.
  int conv(int l, int k) const { return block_base(l) + k; }
  int pool(int l, int k) const { return block_base(l) + config.K + k; }
  int readout(int l, int k) const { return block_base(l) + 2 * config.K + k; }
  int mlp(int which) const { return per_level() * config.L + which; }  // W1, b1, W2, b2

  std::vector<Matrix*> parameter_pointers() {
    std::vector<Matrix*> out;
    for (auto& p : params) out.push_back(&p);
    return out;
  }

  std::size_t parameter_count() const {
    std::size_t n = 0;
    for (const auto& p : params) n += static_cast<std::size_t>(p.size());
    return n;
  }

 private:
  int per_level() const { return config.readout == Readout::Feature ? 3 * config.K : 2 * config.K; }
  int block_base(int l) const { return l * per_level(); }
};

// Builds a model with Glorot-uniform weights and zero MLP biases.
inline EgcModel make_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  EgcModel m;
  m.config = config;
  m.seed = seed;
  Rng rng(derive_seed(seed, Stream::Init));
  const auto n = config.node_schedule();
  auto add = [&](std::string name, int in, int out) {
    m.names.push_back(std::move(name));
    m.params.push_back(xavier_uniform(in, out, rng));
  };
  for (int l = 0; l < config.L; ++l) {
    const int in = l == 0 ? config.feature_dim : config.d;
    const std::string p = "level" + std::to_string(l) + ".";
    for (int k = 0; k < config.K; ++k) add(p + "conv" + std::to_string(k), k == 0 ? in : config.d, config.d);
    for (int k = 0; k < config.K; ++k)
      add(p + "pool" + std::to_string(k), k == 0 ? in : config.d, k == config.K - 1 ? n[l + 1] : config.d);
    if (config.readout == Readout::Feature)
      for (int k = 0; k < config.K; ++k)
        add(p + "readout" + std::to_string(k), k == 0 ? n[l + 1] : config.readout_width,
            k == config.K - 1 ? 1 : config.readout_width);
  }
  add("mlp.w1", config.L * config.d, config.mlp_hidden);
  m.names.push_back("mlp.b1");
  m.params.push_back(Matrix::Zero(1, config.mlp_hidden));
  add("mlp.w2", config.mlp_hidden, config.num_classes);
  m.names.push_back("mlp.b2");
  m.params.push_back(Matrix::Zero(1, config.num_classes));
  return m;
}

// --- value-level building blocks -------------------------------------------

inline Matrix normalize_adjacency(const Matrix& a) { return ad::normalize_adjacency_value(a); }

// Cosine similarity between rows; a zero row has similarity 0 with every row.
// The result is exactly symmetric.
inline Matrix cosine_similarity(const Matrix& x) {
  Matrix xn = x;
  for (Eigen::Index i = 0; i < x.rows(); ++i) {
    const double norm = x.row(i).norm();
    if (norm > 0.0)
      xn.row(i) /= norm;
    else
      xn.row(i).setZero();
  }
  Matrix s = xn * xn.transpose();
  s.triangularView<Eigen::StrictlyLower>() = s.transpose();
  return s;
}

inline constexpr long long feature_edge_budget(double k, int d) {
  return static_cast<long long>(k * d * d + 1e-9);
}

// Binary feature graph: ones at the top floor(k d^2) off-diagonal entries of
// S (descending value, ties by ascending (row, col)), then OR-symmetrised.
inline Matrix feature_adjacency(const Matrix& s, double k) {
  const int d = static_cast<int>(s.rows());
  if (s.cols() != d) throw DimensionError("feature_adjacency: similarity is not square");
  struct Entry {
    double v;
    int i, j;
  };
  // Ranked on a 2^-30 grid: with one pooled node every cosine is +-1 up to
  // rounding, and summation order must not decide which ties win.
  auto snap = [](double v) { return std::round(v * 1073741824.0) / 1073741824.0; };
  std::vector<Entry> entries;
  entries.reserve(static_cast<std::size_t>(d) * (d - 1));
  for (int i = 0; i < d; ++i)
    for (int j = 0; j < d; ++j)
      if (i != j) entries.push_back({snap(s(i, j)), i, j});
  const auto t = static_cast<std::size_t>(
      std::min<long long>(feature_edge_budget(k, d), static_cast<long long>(entries.size())));
  auto before = [](const Entry& a, const Entry& b) {
    if (a.v != b.v) return a.v > b.v;
    if (a.i != b.i) return a.i < b.i;
    return a.j < b.j;
  };
  if (t < entries.size()) std::nth_element(entries.begin(), entries.begin() + t, entries.end(), before);
  Matrix a = Matrix::Zero(d, d);
  for (std::size_t e = 0; e < t; ++e) {
    a(entries[e].i, entries[e].j) = 1.0;
    a(entries[e].j, entries[e].i) = 1.0;
  }
  return a;
}

// --- tape-level blocks ------------------------------------------------------

// K propagation steps H <- act(Â H W_k). `relu_last` selects whether the final
// step is rectified.
inline ad::Var gnn_block(ad::Var a_hat, ad::Var h, const std::vector<ad::Var>& weights, bool relu_last) {
  for (std::size_t k = 0; k < weights.size(); ++k) {
    if (h.cols() != weights[k].rows())
      throw DimensionError("gnn_block: layer " + std::to_string(k) + " expects input width " +
                           std::to_string(weights[k].rows()) + ", got " + std::to_string(h.cols()));
    // Same product either way; associate so the n x n factor meets the narrower side.
    if (weights[k].rows() < weights[k].cols())
      h = ad::matmul(ad::matmul(a_hat, h), weights[k]);
    else
      h = ad::matmul(a_hat, ad::matmul(h, weights[k]));
    if (relu_last || k + 1 < weights.size()) h = ad::relu(h);
  }
  return h;
}

inline Matrix gnn_block(const Matrix& a_hat, const Matrix& h, const std::vector<Matrix>& weights, bool relu_last = true) {
  ad::Tape t;
  std::vector<ad::Var> w;
  for (const auto& m : weights) w.push_back(t.view(m, false));
  return gnn_block(t.view(a_hat, false), t.view(h, false), w, relu_last).value();
}

struct PoolResult {
  Matrix adjacency;  // C^T A C
  Matrix features;   // C^T H
  Matrix assignment;
};

// Soft assignment C = row_softmax(GNN_pool(Â, X)); pools H and A through it.
inline PoolResult diffpool_layer(const Matrix& a, const Matrix& x, const Matrix& h, const std::vector<Matrix>& pool_weights) {
  ad::Tape t;
  std::vector<ad::Var> w;
  for (const auto& m : pool_weights) w.push_back(t.view(m, false));
  const ad::Var av = t.view(a, false);
  const ad::Var c = ad::row_softmax(gnn_block(ad::normalize_adjacency(av), t.view(x, false), w, false));
  const ad::Var ct = ad::transpose(c);
  PoolResult out;
  out.assignment = c.value();
  out.features = ad::matmul(ct, t.view(h, false)).value();
  out.adjacency = ad::matmul(ad::matmul(ct, av), c).value();
  return out;
}

struct FeatureGraph {
  Matrix adjacency;  // A_F, d x d
  Matrix features;   // X_F = H_pool^T, d x n_l
};

// Z = GNN_F(norm(A_F), H_pool^T) as a d x 1 column.
inline ad::Var feature_readout(ad::Var h_pool, double k, const std::vector<ad::Var>& theta, FeatureGraph* capture = nullptr) {
  if (h_pool.cols() < 2) throw ContractError("feature_readout needs d >= 2");
  ad::Var xf = ad::transpose(h_pool);
  Matrix af = feature_adjacency(cosine_similarity(xf.value()), k);
  ad::Var a_hat = h_pool.tape->constant(ad::normalize_adjacency_value(af));
  if (capture) {
    capture->adjacency = af;
    capture->features = xf.value();
  }
  return gnn_block(a_hat, xf, theta, false);
}

struct LevelTrace {
  Matrix adjacency;       // level input A^l
  Matrix features;        // level input H^l
  Matrix assignment;      // C^l
  Matrix pooled_features;   // H^{l+1}
  Matrix pooled_adjacency;  // A^{l+1}
  FeatureGraph feature_graph;  // empty unless the read-out is Feature
  Matrix embedding;       // Z^{l+1}, d x 1
};

struct ForwardTrace {
  std::vector<LevelTrace> levels;
  Matrix z;              // 1 x L d
  Matrix probabilities;  // 1 x num_classes
};

struct ForwardVars {
  ad::Var probabilities;
  ad::Var adjacency;
  std::vector<ad::Var> params;
};

// Records the forward pass of `graph` on `tape`. The graph is evaluated at
// its real node count; with bias-free GCN layers this equals zero-padding to
// n0 exactly, since padded rows are inert in C^T H and C^T A C.
inline ForwardVars record_forward(ad::Tape& tape, const Graph& graph, const Matrix& adjacency, const EgcModel& model,
                                  bool grad_params, bool grad_adjacency, ForwardTrace* trace = nullptr) {
  const ModelConfig& cfg = model.config;
  if (graph.feature_dim() != cfg.feature_dim)
    throw DimensionError("graph has " + std::to_string(graph.feature_dim()) + " feature columns, model expects " +
                         std::to_string(cfg.feature_dim));
  if (adjacency.rows() != graph.num_nodes() || adjacency.cols() != graph.num_nodes())
    throw DimensionError("adjacency does not match node count");
  ForwardVars fv;
  for (const auto& p : model.params) fv.params.push_back(tape.view(p, grad_params));
  fv.adjacency = tape.view(adjacency, grad_adjacency);
  if (trace) trace->levels.assign(cfg.L, {});

  ad::Var a = fv.adjacency;
  ad::Var h = tape.view(graph.features, false);
  std::vector<ad::Var> embeddings;
  auto weights = [&](auto index) {
    std::vector<ad::Var> w;
    for (int k = 0; k < cfg.K; ++k) w.push_back(fv.params[index(k)]);
    return w;
  };
  for (int l = 0; l < cfg.L; ++l) {
    const ad::Var a_hat = ad::normalize_adjacency(a);
    const ad::Var conv = gnn_block(a_hat, h, weights([&](int k) { return model.conv(l, k); }), true);
    const ad::Var c = ad::row_softmax(gnn_block(a_hat, h, weights([&](int k) { return model.pool(l, k); }), false));
    const ad::Var ct = ad::transpose(c);
    const ad::Var h_next = ad::matmul(ct, conv);
    const ad::Var a_next = ad::matmul(ad::matmul(ct, a), c);
    ad::Var z;
    FeatureGraph fg;
    switch (cfg.readout) {
      case Readout::Feature:
        z = feature_readout(h_next, cfg.k, weights([&](int k) { return model.readout(l, k); }), trace ? &fg : nullptr);
        break;
      case Readout::Mean: z = ad::transpose(ad::col_mean(h_next)); break;
      case Readout::Max: z = ad::transpose(ad::col_max(h_next)); break;
    }
    if (trace) {
      LevelTrace& lt = trace->levels[l];
      lt.adjacency = a.value();
      lt.features = h.value();
      lt.assignment = c.value();
      lt.pooled_features = h_next.value();
      lt.pooled_adjacency = a_next.value();
      lt.feature_graph = std::move(fg);
      lt.embedding = z.value();
    }
    embeddings.push_back(z);
    a = a_next;
    h = h_next;
  }
  const ad::Var zg = ad::transpose(ad::concat_rows(std::span<const ad::Var>(embeddings)));
  const ad::Var hidden =
      ad::relu(ad::add(ad::matmul(zg, fv.params[model.mlp(0)]), fv.params[model.mlp(1)]));
  const ad::Var logits = ad::add(ad::matmul(hidden, fv.params[model.mlp(2)]), fv.params[model.mlp(3)]);
  fv.probabilities = ad::row_softmax(logits);
  if (trace) {
    trace->z = zg.value();
    trace->probabilities = fv.probabilities.value();
  }
  return fv;
}

inline ForwardTrace forward(const Graph& graph, const EgcModel& model) {
  ad::Tape tape;
  ForwardTrace trace;
  record_forward(tape, graph, graph.adjacency, model, false, false, &trace);
  return trace;
}

inline Matrix predict_proba(const Graph& graph, const EgcModel& model) {
  ad::Tape tape;
  return record_forward(tape, graph, graph.adjacency, model, false, false).probabilities.value();
}

inline int argmax_row(const Matrix& probs) {
  Eigen::Index c = 0;
  probs.row(0).maxCoeff(&c);
  return static_cast<int>(c);
}

inline int predict(const Graph& graph, const EgcModel& model) { return argmax_row(predict_proba(graph, model)); }

inline double graph_loss(const Graph& graph, const EgcModel& model) {
  ad::Tape tape;
  auto fv = record_forward(tape, graph, graph.adjacency, model, false, false);
  return ad::cross_entropy(fv.probabilities, graph.label).value()(0, 0);
}

struct LossGradient {
  double loss = 0.0;
  int prediction = 0;
  std::vector<Matrix> params;  // empty unless requested
  Matrix adjacency;            // empty unless requested
};

// Cross-entropy of `graph` against its label evaluated with `adjacency` in
// place of graph.adjacency, and its gradients.
inline LossGradient loss_gradient(const Graph& graph, const Matrix& adjacency, const EgcModel& model, bool wrt_params,
                                  bool wrt_adjacency) {
  ad::Tape tape;
  auto fv = record_forward(tape, graph, adjacency, model, wrt_params, wrt_adjacency);
  const ad::Var loss = ad::cross_entropy(fv.probabilities, graph.label);
  tape.backward(loss);
  LossGradient out;
  out.loss = loss.value()(0, 0);
  out.prediction = argmax_row(fv.probabilities.value());
  if (wrt_params)
    for (const auto& p : fv.params) out.params.push_back(tape.grad(p));
  if (wrt_adjacency) out.adjacency = tape.grad(fv.adjacency);
  return out;
}

inline LossGradient loss_gradient(const Graph& graph, const EgcModel& model, bool wrt_params, bool wrt_adjacency) {
  return loss_gradient(graph, graph.adjacency, model, wrt_params, wrt_adjacency);
}

// --- checkpoints ------------------------------------------------------------

inline constexpr int kCheckpointVersion = 1;

inline nlohmann::json checkpoint_json(const EgcModel& m) {
  nlohmann::json j;
  j["format"] = "egc2-checkpoint";
  j["version"] = kCheckpointVersion;
  j["seed"] = m.seed;
  j["trained"] = m.trained;
  j["config"] = to_json(m.config);
  auto& ps = j["parameters"] = nlohmann::json::array();
  for (std::size_t i = 0; i < m.params.size(); ++i) {
    const Matrix& p = m.params[i];
    ps.push_back({{"name", m.names[i]},
                  {"rows", p.rows()},
                  {"cols", p.cols()},
                  {"data", std::vector<double>(p.data(), p.data() + p.size())}});
  }
  return j;
}

inline EgcModel model_from_checkpoint(const nlohmann::json& j) {
  if (j.value("format", "") != "egc2-checkpoint") throw SchemaError("not a model checkpoint");
  if (j.at("version").get<int>() != kCheckpointVersion) throw SchemaError("unsupported checkpoint version");
  EgcModel m = make_model(model_config_from_json(j.at("config")), j.at("seed").get<std::uint64_t>());
  m.trained = j.at("trained").get<bool>();
  const auto& ps = j.at("parameters");
  if (ps.size() != m.params.size()) throw SchemaError("checkpoint parameter count does not match its config");
  for (std::size_t i = 0; i < ps.size(); ++i) {
    const auto& jp = ps[i];
    if (jp.at("name").get<std::string>() != m.names[i]) throw SchemaError("checkpoint parameter order mismatch");
    const auto rows = jp.at("rows").get<Eigen::Index>(), cols = jp.at("cols").get<Eigen::Index>();
    if (rows != m.params[i].rows() || cols != m.params[i].cols())
      throw SchemaError("checkpoint shape mismatch for " + m.names[i]);
    const auto data = jp.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw SchemaError("checkpoint data size mismatch");
    m.params[i] = Eigen::Map<const Matrix>(data.data(), rows, cols);
  }
  return m;
}

inline void save_checkpoint(const EgcModel& m, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path.string());
  out << checkpoint_json(m).dump();
}

inline EgcModel load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open " + path.string());
  nlohmann::json j;
  in >> j;
  return model_from_checkpoint(j);
}

}  // namespace egc2
