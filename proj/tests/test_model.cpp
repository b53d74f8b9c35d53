#include <gtest/gtest.h>
#include <unistd.h>

#include <filesystem>
#include <numeric>

#include "egc2/model.hpp"
#include "egc2/synthetic.hpp"
#include "oracles.hpp"

using namespace egc2;

namespace {

ModelConfig small_config(int n0, int feature_dim, Readout readout = Readout::Feature) {
  ModelConfig c;
  c.d = 32;
  c.r = 0.5;
  c.k = 0.25;
  c.n0 = n0;
  c.feature_dim = feature_dim;
  c.readout = readout;
  return c;
}

Graph six_node_graph() {
  Graph g = make_graph(6, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 5}, {1, 4}}, 1);
  Rng rng(17);
  g.features = oracle::random_matrix(rng, 6, 3, 0, 1);
  return g;
}

}  // namespace

TEST(ModelConfig, ValidationAndSchedule) {
  ModelConfig c = small_config(14, 3);
  EXPECT_NO_THROW(c.validate());
  EXPECT_EQ(c.node_schedule(), (std::vector<int>{14, 7, 3, 1}));
  c.r = 0.25;
  c.n0 = 64;
  EXPECT_EQ(c.node_schedule(), (std::vector<int>{64, 16, 4, 1}));
  for (auto mutate : std::vector<std::function<void(ModelConfig&)>>{
           [](ModelConfig& m) { m.r = 0.05; }, [](ModelConfig& m) { m.k = 0.8; }, [](ModelConfig& m) { m.d = 48; },
           [](ModelConfig& m) { m.n0 = 0; }}) {
    ModelConfig bad = small_config(14, 3);
    mutate(bad);
    EXPECT_THROW(bad.validate(), ContractError);
  }
}

TEST(ModelConfig, JsonRoundTrip) {
  ModelConfig c = small_config(20, 5, Readout::Max);
  c.learning_rate = 0.01;
  const ModelConfig back = model_config_from_json(to_json(c));
  EXPECT_EQ(to_json(back), to_json(c));
}

TEST(GnnBlock, ZeroInputAndIdentity) {
  Rng rng(1);
  const Matrix a_hat = normalize_adjacency(six_node_graph().adjacency);
  std::vector<Matrix> w = {oracle::random_matrix(rng, 3, 32), oracle::random_matrix(rng, 32, 32)};
  EXPECT_EQ(gnn_block(a_hat, Matrix::Zero(6, 3), w), Matrix::Zero(6, 32));
  const Matrix h = oracle::random_matrix(rng, 4, 4, 0, 1);
  EXPECT_EQ(gnn_block(Matrix::Identity(4, 4), h, {Matrix::Identity(4, 4)}), h);
}

TEST(GnnBlock, PaddedRowStaysZero) {
  Rng rng(2);
  Graph g = six_node_graph();
  Matrix a = Matrix::Zero(8, 8), x = Matrix::Zero(8, 3);
  a.topLeftCorner(6, 6) = g.adjacency;
  x.topRows(6) = g.features;
  std::vector<Matrix> w = {oracle::random_matrix(rng, 3, 32), oracle::random_matrix(rng, 32, 32),
                           oracle::random_matrix(rng, 32, 32)};
  const Matrix out = gnn_block(normalize_adjacency(a), x, w);
  EXPECT_EQ(out.bottomRows(2), Matrix::Zero(2, 32));
}

TEST(GnnBlock, WidthMismatch) {
  ad::Tape t;
  EXPECT_THROW(gnn_block(t.constant(Matrix::Identity(3, 3)), t.constant(Matrix::Ones(3, 2)),
                         {t.constant(Matrix::Ones(3, 4))}, true),
               DimensionError);
}

TEST(Diffpool, OneHotAssignmentAndShapes) {
  Rng rng(3);
  // A single output cluster makes every C row one-hot (softmax of one logit).
  const Graph g = six_node_graph();
  const Matrix h = oracle::random_matrix(rng, 6, 32);
  const auto one = diffpool_layer(g.adjacency, g.features, h, {oracle::random_matrix(rng, 3, 1)});
  EXPECT_EQ(one.assignment, Matrix::Ones(6, 1));
  EXPECT_TRUE(one.features.isApprox(h.colwise().sum(), 1e-14));
  // n_l = 14, r = 0.5 -> 7 clusters.
  Graph big = oracle::random_nonempty_graph(rng, 14, 0.3, 3);
  const auto p = diffpool_layer(big.adjacency, big.features, oracle::random_matrix(rng, 14, 64),
                                {oracle::random_matrix(rng, 3, 7)});
  EXPECT_EQ(p.assignment.rows(), 14);
  EXPECT_EQ(p.assignment.cols(), 7);
  EXPECT_EQ(p.features.rows(), 7);
  EXPECT_EQ(p.features.cols(), 64);
  EXPECT_EQ(p.adjacency.rows(), 7);
  EXPECT_EQ(p.adjacency.cols(), 7);
  for (int i = 0; i < 14; ++i) EXPECT_NEAR(p.assignment.row(i).sum(), 1.0, 1e-12);
  const auto z = diffpool_layer(Matrix::Zero(14, 14), big.features, oracle::random_matrix(rng, 14, 64),
                                {oracle::random_matrix(rng, 3, 7)});
  EXPECT_EQ(z.adjacency, Matrix::Zero(7, 7));
}

TEST(FeatureGraph, CompleteWhenBudgetCoversAllPairs) {
  Rng rng(4);
  const Matrix s = cosine_similarity(oracle::random_matrix(rng, 8, 5));
  // floor(0.75 * 64) = 48 < 56 = d(d-1); OR-symmetrisation still completes
  // the graph only if every unordered pair is hit, so use d = 4: 12 >= 12.
  const Matrix s4 = cosine_similarity(oracle::random_matrix(rng, 4, 3));
  const Matrix a4 = feature_adjacency(s4, 0.75);
  Matrix want = Matrix::Ones(4, 4);
  want.diagonal().setZero();
  EXPECT_EQ(a4, want);
  EXPECT_EQ(feature_adjacency(s, 0.75).diagonal(), Matrix::Zero(8, 1));
}

TEST(FeatureGraph, IdenticalRowsSelectedFirst) {
  Matrix x(4, 3);
  x << 1, 2, 3, -1, 0, 1, 1, 2, 3, 0, 1, -2;
  const Matrix s = cosine_similarity(x);
  EXPECT_DOUBLE_EQ(s(0, 2), 1.0);
  // Budget floor(0.125 * 16) = 2 entries: (0,2) and (2,0).
  const Matrix a = feature_adjacency(s, 0.125);
  EXPECT_EQ(a(0, 2), 1.0);
  EXPECT_EQ(a.sum(), 2.0);
}

TEST(FeatureGraph, ZeroFeaturesUseTieBreakAndGiveZeroEmbedding) {
  const Matrix s = cosine_similarity(Matrix::Zero(4, 3));
  EXPECT_EQ(s, Matrix::Zero(4, 4));
  // floor(0.25 * 16) = 4 entries in (row, col) order: (0,1),(0,2),(0,3),(1,0).
  const Matrix a = feature_adjacency(s, 0.25);
  Matrix want = Matrix::Zero(4, 4);
  for (auto [i, j] : std::vector<Edge>{{0, 1}, {0, 2}, {0, 3}}) want(i, j) = want(j, i) = 1.0;
  EXPECT_EQ(a, want);
  ad::Tape t;
  Rng rng(5);
  std::vector<ad::Var> theta = {t.constant(oracle::random_matrix(rng, 3, 16)), t.constant(oracle::random_matrix(rng, 16, 16)),
                                t.constant(oracle::random_matrix(rng, 16, 1))};
  const ad::Var z = feature_readout(t.constant(Matrix::Zero(3, 4)), 0.25, theta);
  EXPECT_EQ(z.value(), Matrix::Zero(4, 1));
}

TEST(FeatureGraph, InvariantsOnRandomInputs) {
  Rng rng(6);
  for (int t = 0; t < 50; ++t) {
    const int d = 2 + static_cast<int>(uniform_below(rng, 30));
    const double k = 0.05 + 0.7 * uniform01(rng);
    const Matrix a = feature_adjacency(cosine_similarity(oracle::random_matrix(rng, d, 4)), k);
    EXPECT_EQ(a, a.transpose());
    EXPECT_EQ(a.diagonal(), Matrix::Zero(d, 1));
    EXPECT_TRUE((a.array() == 0.0 || a.array() == 1.0).all());
    const double ones = a.sum();
    EXPECT_GE(ones, static_cast<double>(std::min<long long>(feature_edge_budget(k, d), d * (d - 1))));
    EXPECT_LE(ones, d * (d - 1));
  }
}

TEST(Forward, ProbabilitiesAndShapes) {
  const GraphDataset ds = ptc_syn(8, 100);
  ModelConfig c = small_config(ds.max_nodes(), ds.feature_dim);
  c.d = 64;
  c.r = 0.25;
  const EgcModel m = make_model(c, 3);
  const auto sched = c.node_schedule();
  for (const auto& g : ds.graphs) {
    const auto tr = forward(g, m);
    EXPECT_NEAR(tr.probabilities.sum(), 1.0, 1e-12);
    EXPECT_EQ(tr.z.cols(), 192);
    ASSERT_EQ(tr.levels.size(), 3u);
    for (int l = 0; l < 3; ++l) {
      const auto& lv = tr.levels[l];
      const int rows = l == 0 ? g.num_nodes() : sched[l];
      EXPECT_EQ(lv.features.rows(), rows);
      EXPECT_EQ(lv.features.cols(), l == 0 ? c.feature_dim : c.d);
      EXPECT_EQ(lv.assignment.rows(), rows);
      EXPECT_EQ(lv.assignment.cols(), sched[l + 1]);
      for (int i = 0; i < rows; ++i) EXPECT_NEAR(lv.assignment.row(i).sum(), 1.0, 1e-12);
      EXPECT_EQ(lv.pooled_features.rows(), sched[l + 1]);
      EXPECT_EQ(lv.embedding.rows(), c.d);
      EXPECT_EQ(lv.feature_graph.adjacency.rows(), c.d);
    }
  }
}

TEST(Forward, MeanAndMaxReadouts) {
  const Graph g = six_node_graph();
  for (Readout r : {Readout::Mean, Readout::Max}) {
    const EgcModel m = make_model(small_config(6, 3, r), 11);
    const auto tr = forward(g, m);
    for (int l = 0; l < 3; ++l) {
      const Matrix& hp = tr.levels[l].pooled_features;
      const Matrix want = r == Readout::Mean ? Matrix(hp.colwise().mean().transpose()) : Matrix(hp.colwise().maxCoeff().transpose());
      EXPECT_TRUE(tr.levels[l].embedding.isApprox(want, 1e-14));
    }
  }
}

// Zero-padding to n0 leaves the output unchanged.
TEST(Forward, PaddingEquivalence) {
  Rng rng(7);
  const EgcModel m = make_model(small_config(12, 3), 5);
  for (int t = 0; t < 20; ++t) {
    const int n = 3 + t % 8;
    Graph g = oracle::random_nonempty_graph(rng, n, 0.4, 3);
    Graph padded = g;
    padded.adjacency = Matrix::Zero(12, 12);
    padded.adjacency.topLeftCorner(n, n) = g.adjacency;
    padded.features = Matrix::Zero(12, 3);
    padded.features.topRows(n) = g.features;
    const Matrix a = predict_proba(g, m), b = predict_proba(padded, m);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-12);
  }
}

TEST(Forward, IsomorphismInvariance) {
  const GraphDataset ds = ptc_syn(12, 40);
  ModelConfig c = small_config(ds.max_nodes(), ds.feature_dim);
  c.d = 64;
  c.r = 0.25;
  const EgcModel m = make_model(c, 9);
  Rng rng(8);
  for (const auto& g : ds.graphs) {
    std::vector<int> perm(g.num_nodes());
    std::iota(perm.begin(), perm.end(), 0);
    shuffle(perm.begin(), perm.end(), rng);
    const Matrix a = predict_proba(g, m), b = predict_proba(permute_nodes(g, perm), m);
    EXPECT_LE((a - b).cwiseAbs().maxCoeff(), 1e-9);
  }
}

TEST(Forward, FeatureDimensionMismatch) {
  const EgcModel m = make_model(small_config(6, 4), 1);
  EXPECT_THROW(forward(six_node_graph(), m), DimensionError);
}

// Full loss against central differences, for parameters and for raw
// adjacency entries.
TEST(LossGradient, FiniteDifferencesParameters) {
  const Graph g = six_node_graph();
  for (Readout r : {Readout::Feature, Readout::Mean}) {
    EgcModel m = make_model(small_config(6, 3, r), 21);
    const auto lg = loss_gradient(g, m, true, false);
    Rng rng(22);
    int failures = 0;
    for (int t = 0; t < 20; ++t) {
      const int p = static_cast<int>(uniform_below(rng, m.params.size()));
      const int i = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(m.params[p].rows())));
      const int j = static_cast<int>(uniform_below(rng, static_cast<std::uint64_t>(m.params[p].cols())));
      const double h = 1e-5, keep = m.params[p](i, j);
      m.params[p](i, j) = keep + h;
      const double up = graph_loss(g, m);
      m.params[p](i, j) = keep - h;
      const double down = graph_loss(g, m);
      m.params[p](i, j) = keep;
      const double fd = (up - down) / (2 * h), an = lg.params[p](i, j);
      const double rel = std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7});
      failures += rel > 1e-5;
      EXPECT_LE(rel, 1e-5) << m.names[p] << "(" << i << "," << j << ") fd " << fd << " an " << an;
    }
    EXPECT_EQ(failures, 0);
  }
}

TEST(LossGradient, FiniteDifferencesAdjacency) {
  const Graph g = six_node_graph();
  const EgcModel m = make_model(small_config(6, 3), 31);
  const auto lg = loss_gradient(g, m, false, true);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      const double h = 1e-5;
      Matrix up = g.adjacency, down = g.adjacency;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd = (loss_gradient(g, up, m, false, false).loss - loss_gradient(g, down, m, false, false).loss) / (2 * h);
      const double an = lg.adjacency(i, j);
      EXPECT_LE(std::abs(fd - an) / std::max({std::abs(fd), std::abs(an), 1e-7}), 1e-5) << i << "," << j;
    }
}

TEST(Checkpoint, RoundTrip) {
  EgcModel m = make_model(small_config(6, 3), 44);
  m.trained = true;
  const auto path = std::filesystem::temp_directory_path() / ("egc2_ckpt_" + std::to_string(::getpid()) + ".json");
  save_checkpoint(m, path);
  const EgcModel back = load_checkpoint(path);
  EXPECT_TRUE(back.trained);
  EXPECT_EQ(back.seed, 44u);
  ASSERT_EQ(back.params.size(), m.params.size());
  for (std::size_t i = 0; i < m.params.size(); ++i) EXPECT_EQ(back.params[i], m.params[i]);
  EXPECT_EQ(predict_proba(six_node_graph(), back), predict_proba(six_node_graph(), m));
  auto j = checkpoint_json(m);
  j["parameters"][0]["rows"] = 99;
  EXPECT_THROW(model_from_checkpoint(j), SchemaError);
  j = checkpoint_json(m);
  j["version"] = 7;
  EXPECT_THROW(model_from_checkpoint(j), SchemaError);
}

TEST(MakeModel, SeededAndShaped) {
  const ModelConfig c = small_config(14, 3);
  const EgcModel a = make_model(c, 1), b = make_model(c, 1), other = make_model(c, 2);
  for (std::size_t i = 0; i < a.params.size(); ++i) EXPECT_EQ(a.params[i], b.params[i]);
  EXPECT_NE(a.params[0], other.params[0]);
  EXPECT_EQ(a.params[a.pool(0, 2)].cols(), 7);
  EXPECT_EQ(a.params[a.readout(0, 0)].rows(), 7);
  EXPECT_EQ(a.params[a.readout(2, 2)].cols(), 1);
  EXPECT_EQ(a.params[a.mlp(0)].rows(), 3 * 32);
  EXPECT_EQ(a.params[a.mlp(2)].cols(), 2);
  // Glorot bound.
  const double s = std::sqrt(6.0 / (3 + 32));
  EXPECT_LE(a.params[a.conv(0, 0)].cwiseAbs().maxCoeff(), s);
}
