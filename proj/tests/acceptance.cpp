// Acceptance run: prints one PASS/FAIL line per criterion and exits nonzero
// if any criterion fails.
//
//   acceptance [--out DIR] [--only 1,5,...]
//
// Real TU data is used when EGC2_DATA_DIR holds PTC_MR (or PTC) and PROTEINS
// directories; otherwise the synthetic stand-ins are generated.

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <sstream>

#include "egc2/experiment.hpp"
#include "oracles.hpp"

using namespace egc2;
namespace fs = std::filesystem;

namespace {

constexpr std::uint64_t kSeed = 20190801;

struct Outcome {
  bool pass = false;
  std::string detail;
};

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

std::string sci(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2e", v);
  return buf;
}

std::string fmt(double v, int prec = 4) {
  std::ostringstream s;
  s.precision(prec);
  s << std::fixed << v;
  return s.str();
}

// Dataset block for a spec: a TU directory under EGC2_DATA_DIR or a generator.
nlohmann::json dataset_block(const std::vector<std::string>& tu_names, const std::string& synthetic) {
  if (const char* root = std::getenv("EGC2_DATA_DIR"))
    for (const auto& n : tu_names)
      if (fs::is_directory(fs::path(root) / n))
        return {{"source", "tu"}, {"path", (fs::path(root) / n).string()}, {"name", n}};
  return {{"source", "synthetic"}, {"name", synthetic}};
}

std::string dataset_label(const nlohmann::json& block) {
  return block["source"] == "tu" ? block["name"].get<std::string>() + " (" + block["path"].get<std::string>() + ")"
                                 : block["name"].get<std::string>() + " (synthetic)";
}

// --- 1: centrality oracles ---------------------------------------------------

Outcome centrality_oracles() {
  const auto t0 = std::chrono::steady_clock::now();
  Rng rng(kSeed);
  double worst = 0.0, worst_ec = 0.0;
  for (int t = 0; t < 200; ++t) {
    const Graph g = oracle::random_graph(rng, 1 + t % 8, 0.2 + 0.6 * uniform01(rng));
    auto err = [&](const std::vector<double>& a, const std::vector<double>& b) {
      for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
    };
    err(node_centrality(g, ScoreKind::BC), oracle::betweenness(g));
    err(node_centrality(g, ScoreKind::CC), oracle::closeness(g));
    err(node_centrality(g, ScoreKind::C), oracle::clustering(g));
    worst_ec = std::max(worst_ec, oracle::eigen_residual(g, node_centrality(g, ScoreKind::EC)));
  }
  const double secs = seconds_since(t0);
  return {worst <= 1e-12 && worst_ec <= 1e-8 && secs < 10.0,
          "max |BC/CC/C - oracle| = " + sci(worst) + ", EC residual = " + sci(worst_ec) +
              ", " + fmt(secs, 2) + " s"};
}

// --- 2: finite differences -----------------------------------------------------

using namespace egc2::ad;
using LossFn = std::function<Var(Tape&, const std::vector<Var>&)>;

Matrix rnd(int r, int c, std::uint64_t seed, double lo = -1.0, double hi = 1.0) {
  Rng rng(seed);
  return oracle::random_matrix(rng, r, c, lo, hi);
}

Var weighted_sum(Tape& t, Var x, std::uint64_t seed = 99) {
  return sum(hadamard(x, t.constant(rnd(static_cast<int>(x.rows()), static_cast<int>(x.cols()), seed))));
}

Outcome finite_differences() {
  const auto t0 = std::chrono::steady_clock::now();
  struct Case {
    std::string name;
    std::vector<Matrix> leaves;
    LossFn loss;
  };
  Matrix relu_in = rnd(4, 4, 1);
  for (int i = 0; i < relu_in.size(); ++i) relu_in.data()[i] += relu_in.data()[i] >= 0 ? 0.1 : -0.1;
  Matrix sym = rnd(5, 5, 3, 0.0, 1.0);
  sym = (0.5 * (sym + sym.transpose())).eval();
  const std::vector<Case> cases = {
      {"matmul", {rnd(3, 4, 1), rnd(4, 2, 2)}, [](Tape& t, const auto& v) { return weighted_sum(t, matmul(v[0], v[1])); }},
      {"add", {rnd(3, 2, 1), rnd(3, 2, 2)}, [](Tape& t, const auto& v) { return weighted_sum(t, add(v[0], v[1])); }},
      {"transpose", {rnd(3, 5, 1)}, [](Tape& t, const auto& v) { return weighted_sum(t, transpose(v[0])); }},
      {"relu", {relu_in}, [](Tape& t, const auto& v) { return weighted_sum(t, relu(v[0])); }},
      {"row_softmax", {rnd(3, 5, 1, -3, 3)}, [](Tape& t, const auto& v) { return weighted_sum(t, row_softmax(v[0])); }},
      {"concat_rows", {rnd(2, 3, 1), rnd(1, 3, 2)},
       [](Tape& t, const auto& v) { return weighted_sum(t, concat_rows({v[0], v[1]})); }},
      {"cross_entropy", {rnd(1, 4, 1, -2, 2)}, [](Tape&, const auto& v) { return cross_entropy(row_softmax(v[0]), 2); }},
      {"scalar_mul/hadamard/sum", {rnd(3, 3, 1), rnd(3, 3, 2)},
       [](Tape&, const auto& v) { return sum(hadamard(scalar_mul(v[0], -2.5), v[1])); }},
      {"col_mean/col_max", {rnd(5, 3, 1)},
       [](Tape& t, const auto& v) { return add(weighted_sum(t, col_mean(v[0]), 4), weighted_sum(t, col_max(v[0]), 5)); }},
      {"normalize_adjacency", {sym}, [](Tape& t, const auto& v) { return weighted_sum(t, normalize_adjacency(v[0])); }},
  };
  std::vector<std::string> bad;
  double worst = 0.0;
  for (const auto& c : cases) {
    Rng rng(7);
    const auto r = oracle::check_gradient(c.leaves, c.loss, oracle::random_coordinates(c.leaves, 20, rng));
    worst = std::max(worst, r.worst_relative);
    if (r.failures) bad.push_back(c.name);
  }

  // Full loss on a 6-node graph, with respect to parameters and adjacency.
  Graph g = make_graph(6, {{0, 1}, {1, 2}, {2, 0}, {2, 3}, {3, 4}, {4, 5}, {1, 4}}, 1);
  g.features = rnd(6, 3, 17, 0, 1);
  ModelConfig cfg;
  cfg.d = 32;
  cfg.r = 0.5;
  cfg.n0 = 6;
  cfg.feature_dim = 3;
  EgcModel m = make_model(cfg, 21);
  const auto lg = loss_gradient(g, m, true, true);
  auto rel = [](double a, double n) { return std::abs(a - n) / std::max({std::abs(a), std::abs(n), 1e-7}); };
  const double h = 1e-5;
  Rng rng(22);
  int param_fail = 0;
  for (int t = 0; t < 20; ++t) {
    const auto p = uniform_below(rng, m.params.size());
    const auto i = static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(m.params[p].rows())));
    const auto j = static_cast<Eigen::Index>(uniform_below(rng, static_cast<std::uint64_t>(m.params[p].cols())));
    const double keep = m.params[p](i, j);
    m.params[p](i, j) = keep + h;
    const double up = graph_loss(g, m);
    m.params[p](i, j) = keep - h;
    const double down = graph_loss(g, m);
    m.params[p](i, j) = keep;
    const double r = rel(lg.params[p](i, j), (up - down) / (2 * h));
    worst = std::max(worst, r);
    param_fail += r > 1e-5;
  }
  int adj_fail = 0;
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 6; ++j) {
      Matrix up = g.adjacency, down = g.adjacency;
      up(i, j) += h;
      down(i, j) -= h;
      const double fd =
          (loss_gradient(g, up, m, false, false).loss - loss_gradient(g, down, m, false, false).loss) / (2 * h);
      const double r = rel(lg.adjacency(i, j), fd);
      worst = std::max(worst, r);
      adj_fail += r > 1e-5;
    }
  if (param_fail) bad.push_back("full loss / parameters");
  if (adj_fail) bad.push_back("full loss / adjacency");
  const double secs = seconds_since(t0);
  std::string failed;
  for (const auto& b : bad) failed += " " + b;
  return {bad.empty() && secs < 60.0,
          std::to_string(cases.size()) + " primitives + full loss (20 params, 36 adjacency entries), worst relative " +
              sci(worst) + (bad.empty() ? "" : ", failing:" + failed) + ", " + fmt(secs, 2) + " s"};
}

// --- 11: compression properties --------------------------------------------------

Outcome compression_properties() {
  Rng rng(kSeed + 11);
  const std::vector<double> gammas = {0.0, 0.1, 0.15, 0.25, 0.3, 0.4, 0.5, 0.75, 0.9};
  for (int t = 0; t < 500; ++t) {
    const Graph g = oracle::random_nonempty_graph(rng, 3 + t % 14, 0.15 + 0.5 * uniform01(rng));
    for (ScoreKind k : kCentralityKinds) {
      const std::string err = oracle::check_compression(g, k, gammas);
      if (!err.empty()) return {false, "graph " + std::to_string(t) + " " + to_string(k) + ": " + err};
    }
  }
  return {true, "500 graphs x 5 indexes x 9 ratios"};
}

// --- experiment-backed criteria ------------------------------------------------

const nlohmann::json& find_eci(const nlohmann::json& eci, const std::string& kind) {
  for (const auto& e : eci["entries"])
    if (parse_score_kind(e["kind"].get<std::string>()) == parse_score_kind(kind)) return e;
  throw LookupError("no ECI entry for " + kind);
}

const nlohmann::json& find_cell(const nlohmann::json& grid, const std::string& target, const std::string& evaluated) {
  for (const auto& c : grid["cells"])
    if (c["target"] == target && c["evaluated"] == evaluated) return c;
  throw LookupError("no defense cell " + target + " -> " + evaluated);
}

double as_rate(const nlohmann::json& v) { return v.is_null() ? std::nan("") : v.get<double>(); }

nlohmann::json ptc_spec(const nlohmann::json& dataset) {
  return {{"schema_version", 1},
          {"name", "acceptance-ptc"},
          {"dataset", dataset},
          {"seed", kSeed},
          {"folds", 10},
          {"model", {{"readout", "feature"}}},
          {"compression", {{"index", "c"}, {"gamma", 0.0}}},
          {"stages", {"cv", "sweep", "eci", "attack", "defense"}},
          {"sweep", {{"index", "c"}, {"gammas", {0.0, 0.4}}}},
          {"eci", {{"kinds", {"cc", "bc", "ec", "c", "dc"}}, {"aggregate", "mean"}, {"attack_ratio", 0.3}}},
          {"attack", {{"target", "egc"}, {"ratios", {0.3}}}},
          {"defense", {{"index", "c"}, {"gamma", 0.3}, {"ratios", {0.3}}, {"variants", {"egc", "egc-com"}}}}};
}

nlohmann::json baseline_spec(const nlohmann::json& dataset) {
  return {{"schema_version", 1},
          {"name", "acceptance-ptc-mean-readout"},
          {"dataset", dataset},
          {"seed", kSeed},
          {"folds", 10},
          {"model", {{"readout", "mean"}}},
          {"stages", {"cv"}}};
}

nlohmann::json timing_spec(const nlohmann::json& dataset) {
  return {{"schema_version", 1},
          {"name", "acceptance-speed"},
          {"dataset", dataset},
          {"seed", kSeed},
          {"stages", {"timing"}},
          {"timing", {{"index", "c"}, {"gammas", {0.0, 0.4}}, {"epochs", 10}}}};
}

nlohmann::json determinism_spec() {
  return {{"schema_version", 1},
          {"name", "acceptance-determinism"},
          {"dataset", {{"source", "synthetic"}, {"name", "ptc_syn"}, {"seed", 5}, {"count", 80}}},
          {"seed", kSeed},
          {"folds", 4},
          {"model", {{"d", 32}, {"max_epochs", 4}, {"lr", 0.005}}},
          {"stages", {"cv", "sweep", "eci", "attack", "defense"}},
          {"sweep", {{"gammas", {0.0, 0.3}}}},
          {"eci", {{"attack_ratio", 0.3}}},
          {"attack", {{"target", "egc"}, {"ratios", {0.1, 0.3}}}},
          {"defense", {{"gamma", 0.3}, {"ratios", {0.3}}, {"variants", {"base", "egc", "base-com", "egc-com"}}}}};
}

ExperimentReport run_logged(const nlohmann::json& spec, const fs::path& root) {
  const auto t0 = std::chrono::steady_clock::now();
  std::cout << "  running " << spec["name"].get<std::string>() << " ..." << std::flush;
  ExperimentReport r = run_experiment_json(spec, root);
  std::cout << " " << fmt(seconds_since(t0), 1) << " s, " << r.report.value("status", "?") << " -> "
            << r.run_dir.string() << std::endl;
  if (!r.ok()) throw Error("experiment " + spec["name"].get<std::string>() + " failed in stage " +
                           r.report.value("failed_stage", "?") + ": " + r.report.value("error", ""));
  return r;
}

Outcome determinism(const fs::path& out) {
  const auto first = run_logged(determinism_spec(), out / "determinism_a");
  nlohmann::json snapshot;
  std::ifstream(first.run_dir / "spec.json") >> snapshot;
  const auto second = run_logged(snapshot, out / "determinism_b");
  nlohmann::json a = first.report, b = second.report;
  for (auto* j : {&a, &b}) j->erase("timing");
  return {first.metrics_hash == second.metrics_hash && a == b,
          "re-run from spec.json snapshot: metrics_sha256 " + first.metrics_hash.substr(0, 16) + " vs " +
              second.metrics_hash.substr(0, 16) + (a == b ? ", reports identical" : ", reports differ")};
}

}  // namespace

int main(int argc, char** argv) {
  fs::path out = fs::temp_directory_path() / "egc2_acceptance";
  std::set<int> only;
  for (int i = 1; i < argc; ++i) {
    const std::string a = argv[i];
    if (a == "--out" && i + 1 < argc) {
      out = argv[++i];
    } else if (a == "--only" && i + 1 < argc) {
      std::stringstream s(argv[++i]);
      for (std::string tok; std::getline(s, tok, ',');) only.insert(std::stoi(tok));
    } else {
      std::cerr << "usage: acceptance [--out DIR] [--only 1,2,...]\n";
      return 64;
    }
  }
  auto wanted = [&](int c) { return only.empty() || only.count(c); };
  fs::remove_all(out);
  fs::create_directories(out);

  std::map<int, Outcome> results;
  auto guarded = [&](int c, const std::function<Outcome()>& f) {
    if (!wanted(c)) return;
    try {
      results[c] = f();
    } catch (const std::exception& e) {
      results[c] = {false, std::string("error: ") + e.what()};
    }
  };

  guarded(1, centrality_oracles);
  guarded(2, finite_differences);
  guarded(11, compression_properties);

  const nlohmann::json ptc = dataset_block({"PTC_MR", "PTC"}, "ptc_syn");
  const nlohmann::json proteins = dataset_block({"PROTEINS", "DD"}, "proteins_syn");
  const bool need_ptc = wanted(3) || wanted(4) || wanted(6) || wanted(7) || wanted(8) || wanted(9);
  if (need_ptc || wanted(5)) {
    std::cout << "PTC dataset: " << dataset_label(ptc) << "\n";
    std::cout << "PROTEINS dataset: " << dataset_label(proteins) << "\n";
  }

  if (need_ptc) {
    std::optional<ExperimentReport> main_run, base_run;
    std::string err;
    try {
      main_run = run_logged(ptc_spec(ptc), out / "ptc");
      if (wanted(3)) base_run = run_logged(baseline_spec(ptc), out / "ptc");
    } catch (const std::exception& e) {
      err = e.what();
    }
    auto from_report = [&](int c, const std::function<Outcome(const nlohmann::json&)>& f) {
      if (!wanted(c)) return;
      if (!main_run) {
        results[c] = {false, "error: " + err};
        return;
      }
      guarded(c, [&] { return f(main_run->report["stages"]); });
    };
    from_report(3, [&](const nlohmann::json& s) -> Outcome {
      if (!base_run) return {false, "error: " + err};
      const double egc = s["cv"]["mean_accuracy"], sd = s["cv"]["std_accuracy"];
      const double base = base_run->report["stages"]["cv"]["mean_accuracy"];
      return {egc >= 0.60 && egc >= base - 0.02, "feature readout " + fmt(egc) + " +- " + fmt(sd) +
                                                      ", mean readout " + fmt(base) + " (need >= 0.60 and >= " +
                                                      fmt(base - 0.02) + ")"};
    });
    from_report(4, [](const nlohmann::json& s) -> Outcome {
      double a0 = 0, a4 = 0;
      for (const auto& row : s["sweep"]) (row["gamma"].get<double>() == 0.0 ? a0 : a4) = row["mean_accuracy"];
      return {a0 - a4 <= 0.15, "gamma 0: " + fmt(a0) + ", gamma 0.4: " + fmt(a4) + ", drop " + fmt(100 * (a0 - a4), 2) +
                                   " points (limit 15)"};
    });
    from_report(6, [](const nlohmann::json& s) -> Outcome {
      const double bc = find_eci(s["eci"], "bc")["eci_clean"];
      bool ok = true;
      std::string d;
      for (const char* k : {"cc", "dc", "c"}) {
        const double v = find_eci(s["eci"], k)["eci_clean"];
        ok = ok && v >= 0.4 && v > bc;
        d += std::string(k) + " " + fmt(v) + ", ";
      }
      return {ok, d + "bc " + fmt(bc) + ", ec " + fmt(find_eci(s["eci"], "ec")["eci_clean"])};
    });
    from_report(7, [](const nlohmann::json& s) -> Outcome {
      const auto& c = find_eci(s["eci"], "c");
      const double delta = c["delta"];
      return {delta > 0.0, "C index: clean " + fmt(c["eci_clean_attacked"]) + ", adversarial " +
                               fmt(c["eci_adversarial"]) + ", delta " + fmt(delta, 5) + " over " +
                               std::to_string(c["attacked_graphs"].get<int>()) + " perturbed graphs"};
    });
    from_report(8, [](const nlohmann::json& s) -> Outcome {
      const auto& row = s["attack"][0];
      const double asr = as_rate(row["asr"]);
      return {asr >= 0.30, "ASR " + fmt(asr) + " (" + std::to_string(row["successes"].get<int>()) + "/" +
                               std::to_string(row["attacked"].get<int>()) + ", need >= 0.30)"};
    });
    from_report(9, [](const nlohmann::json& s) -> Outcome {
      const auto& grid = s["defense"][0];
      const double plain = as_rate(find_cell(grid, "egc", "egc")["asr"]);
      const double com = as_rate(find_cell(grid, "egc-com", "egc-com")["asr"]);
      const double drop = plain > 0 ? 1.0 - com / plain : std::nan("");
      return {drop >= 0.25, "ASR egc " + fmt(plain) + ", egc-com " + fmt(com) + ", relative drop " +
                                fmt(100 * drop, 1) + "% (need >= 25%)"};
    });
  }

  guarded(5, [&]() -> Outcome {
    const auto r = run_logged(timing_spec(proteins), out / "speed");
    const auto& probe = r.report["timing"]["timing_probe"];
    const auto& det = r.report["stages"]["timing"];
    const double t0 = probe[0]["median_epoch_seconds"], t4 = probe[1]["median_epoch_seconds"];
    const double saving = 1.0 - t4 / t0;
    return {saving >= 0.10, "median epoch " + fmt(t0, 3) + " s -> " + fmt(t4, 3) + " s, " + fmt(100 * saving, 1) +
                                "% faster (need >= 10%); nodes " + std::to_string(det[0]["nodes"].get<long long>()) +
                                " -> " + std::to_string(det[1]["nodes"].get<long long>()) + ", edges " +
                                std::to_string(det[0]["edges"].get<long long>()) + " -> " +
                                std::to_string(det[1]["edges"].get<long long>())};
  });

  guarded(10, [&] { return determinism(out); });

  bool all = true;
  nlohmann::json summary = nlohmann::json::object();
  for (const auto& [c, o] : results) {
    std::cout << (o.pass ? "PASS" : "FAIL") << " criterion " << c << ": " << o.detail << std::endl;
    all = all && o.pass;
    summary[std::to_string(c)] = {{"pass", o.pass}, {"detail", o.detail}};
  }
  std::ofstream(out / "acceptance.json") << summary.dump(2) << '\n';
  return all ? 0 : 1;
}
