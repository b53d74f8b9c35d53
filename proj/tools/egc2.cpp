// egc2: command-line front end.
//
//   egc2 synth       write a synthetic dataset in TU layout
//   egc2 ingest      load TU files, validate, write a dataset cache
//   egc2 centrality  per-edge centrality CSV
//   egc2 compress    compress a dataset by an edge index
//   egc2 train       train (single split or k-fold) and checkpoint
//   egc2 eci         edge contributions and ECI report
//   egc2 attack      FGA adversarial set plus manifest
//   egc2 experiment  run a JSON experiment spec
//   egc2 report      summarise a finished run directory

#include <CLI11.hpp>

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include "egc2/egc2.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace egc2;

namespace {

struct DatasetRef {
  std::string dataset;
  std::string name;
};

void add_dataset_options(CLI::App* app, DatasetRef& ref) {
  app->add_option("--dataset", ref.dataset,
                  "dataset cache file, TU directory, or a synthetic name (ptc_syn, proteins_syn)")
      ->required();
  app->add_option("--name", ref.name, "TU file prefix (defaults to the directory name)");
}

// Cache file, TU directory, or synthetic generator name.
GraphDataset resolve_dataset(const DatasetRef& ref) {
  const fs::path p(ref.dataset);
  if (fs::is_directory(p)) {
    std::string name = ref.name;
    if (name.empty()) name = p.filename().empty() ? p.parent_path().filename().string() : p.filename().string();
    return load_tu_dataset(p, name);
  }
  if (fs::is_regular_file(p)) return load_dataset_cache(p);
  if (ref.dataset == "ptc_syn" || ref.dataset == "PTC_SYN") return ptc_syn();
  if (ref.dataset == "proteins_syn" || ref.dataset == "PROTEINS_SYN") return proteins_syn();
  throw IngestionError("dataset '" + ref.dataset + "' is neither a file, a directory, nor a synthetic name");
}

std::vector<ScoreKind> parse_kinds(const std::string& csv) {
  std::vector<ScoreKind> out;
  std::stringstream ss(csv);
  std::string tok;
  while (std::getline(ss, tok, ','))
    if (!tok.empty()) out.push_back(parse_score_kind(tok));
  return out;
}

void write_json(const json& j, const std::string& path) {
  if (path.empty() || path == "-") {
    std::cout << j.dump(2) << '\n';
    return;
  }
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write " + path);
  out << j.dump(2) << '\n';
}

json compression_json(const CompressionReport& r) {
  return {{"index", to_string(r.kind)},
          {"gamma", r.gamma},
          {"edges_before", r.edges_before},
          {"edges_after", r.edges_after},
          {"nodes_before", r.nodes_before},
          {"nodes_after", r.nodes_after},
          {"guarded_graphs", r.guarded_graphs}};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"graph classification with feature-graph read-out, compression and FGA"};
  app.require_subcommand(1);
  bool verbose = false, quiet = false;
  app.add_flag("-v,--verbose", verbose, "progress messages");
  app.add_flag("-q,--quiet", quiet, "suppress warnings");

  // synth
  auto* synth = app.add_subcommand("synth", "write a synthetic dataset in TU layout");
  std::string synth_name = "ptc_syn", synth_out;
  std::uint64_t synth_seed = kDefaultSynthSeed;
  synth->add_option("--name", synth_name, "ptc_syn or proteins_syn")->check(CLI::IsMember({"ptc_syn", "proteins_syn"}));
  synth->add_option("--seed", synth_seed, "generator seed");
  synth->add_option("--out", synth_out, "output directory")->required();

  // ingest
  auto* ingest = app.add_subcommand("ingest", "load a TU dataset and write a cache");
  std::string in_dir, in_name, cache_out, cache_format = "bin";
  ingest->add_option("--dir", in_dir, "TU directory")->required();
  ingest->add_option("--name", in_name, "file prefix, e.g. PTC_MR")->required();
  ingest->add_option("--cache", cache_out, "cache file to write");
  ingest->add_option("--cache-format", cache_format, "json or bin")->check(CLI::IsMember({"json", "bin"}));

  // centrality
  auto* cent = app.add_subcommand("centrality", "per-edge centrality scores as CSV");
  DatasetRef cent_ds;
  std::string cent_kinds = "cc,bc,ec,c,dc", cent_out;
  add_dataset_options(cent, cent_ds);
  cent->add_option("--kinds", cent_kinds, "comma-separated subset of cc,bc,ec,c,dc");
  cent->add_option("--out", cent_out, "CSV path (stdout if omitted)");

  // compress
  auto* comp = app.add_subcommand("compress", "remove the least important edges");
  DatasetRef comp_ds;
  std::string comp_index = "c", comp_out, comp_report;
  double comp_gamma = 0.0;
  comp->add_option("--in", comp_ds.dataset, "input dataset (cache, TU directory or synthetic name)")->required();
  comp->add_option("--name", comp_ds.name, "TU file prefix of the input");
  comp->add_option("--index", comp_index, "cc, bc, ec, c or dc")->check(CLI::IsMember({"cc", "bc", "ec", "c", "dc"}));
  comp->add_option("--gamma", comp_gamma, "fraction of edges to remove, in [0, 1)")->required();
  comp->add_option("--out", comp_out, "output TU directory")->required();
  comp->add_option("--report", comp_report, "JSON report path (stdout if omitted)");

  // train
  auto* tr = app.add_subcommand("train", "train a model (single split or k-fold)");
  DatasetRef tr_ds;
  add_dataset_options(tr, tr_ds);
  ModelConfig tcfg;
  std::string tr_readout = "feature", tr_index = "none", tr_ckpt, tr_log, tr_out;
  double tr_gamma = 0.0;
  std::uint64_t tr_seed = 1;
  int tr_folds = 10, tr_jobs = 1;
  tr->add_option("--readout", tr_readout, "feature, mean or max")->check(CLI::IsMember({"feature", "mean", "max"}));
  tr->add_option("--d", tcfg.d, "hidden width");
  tr->add_option("--r", tcfg.r, "assignment ratio");
  tr->add_option("--k", tcfg.k, "feature edge ratio");
  tr->add_option("--lr", tcfg.learning_rate, "learning rate");
  tr->add_option("--max-epochs", tcfg.max_epochs, "epoch limit");
  tr->add_option("--patience", tcfg.patience, "early-stopping patience");
  tr->add_option("--gamma", tr_gamma, "compression ratio applied before training");
  tr->add_option("--index", tr_index, "compression index")->check(CLI::IsMember({"cc", "bc", "ec", "c", "dc", "none"}));
  tr->add_option("--seed", tr_seed, "master seed");
  tr->add_option("--folds", tr_folds, "1 for a single 90/10 split, otherwise k-fold");
  tr->add_option("--jobs", tr_jobs, "parallel folds");
  tr->add_option("--checkpoint", tr_ckpt, "checkpoint file (single split) or directory (k-fold)");
  tr->add_option("--log", tr_log, "per-epoch CSV log");
  tr->add_option("--out", tr_out, "JSON summary path (stdout if omitted)");

  // eci
  auto* ec = app.add_subcommand("eci", "edge contributions and ECI per centrality");
  DatasetRef ec_ds;
  add_dataset_options(ec, ec_ds);
  std::string ec_model, ec_kinds = "cc,bc,ec,c,dc", ec_agg = "mean", ec_out, ec_csv;
  ec->add_option("--model", ec_model, "checkpoint")->required();
  ec->add_option("--kinds", ec_kinds, "centrality kinds");
  ec->add_option("--eci-aggregate", ec_agg, "mean (per graph) or concat")->check(CLI::IsMember({"mean", "concat"}));
  ec->add_option("--out", ec_out, "JSON report path (stdout if omitted)");
  ec->add_option("--contributions", ec_csv, "per-edge contribution CSV");

  // attack
  auto* at = app.add_subcommand("attack", "FGA adversarial examples");
  DatasetRef at_ds;
  add_dataset_options(at, at_ds);
  std::string at_model, at_com_model, at_target = "egc", at_out, at_index = "c";
  double at_ratio = 0.3, at_gamma = 0.3;
  int at_jobs = 1;
  at->add_option("--model", at_model, "checkpoint of the attacked (uncompressed) model")->required();
  at->add_option("--com-model", at_com_model, "checkpoint of the compressed variant, for *-com targets");
  at->add_option("--target", at_target, "base, egc, base-com or egc-com")
      ->check(CLI::IsMember({"base", "egc", "base-com", "egc-com"}));
  at->add_option("--ratio", at_ratio, "perturbation ratio");
  at->add_option("--gamma", at_gamma, "compression ratio of *-com targets");
  at->add_option("--index", at_index, "compression index of *-com targets");
  at->add_option("--jobs", at_jobs, "parallel attacks");
  at->add_option("--out", at_out, "output directory")->required();

  // experiment
  auto* ex = app.add_subcommand("experiment", "run a JSON experiment spec");
  std::string ex_spec, ex_root = "runs";
  ex->add_option("--spec", ex_spec, "spec file")->required();
  ex->add_option("--out", ex_root, "root directory for run directories");

  // report
  auto* rp = app.add_subcommand("report", "summarise a run directory");
  std::string rp_dir;
  bool rp_verify = false;
  rp->add_option("--run", rp_dir, "run directory")->required();
  rp->add_flag("--verify", rp_verify, "recompute the metrics hash");

  CLI11_PARSE(app, argc, argv);
  log::set_level(quiet ? log::Level::Quiet : verbose ? log::Level::Info : log::Level::Warn);

  try {
    if (*synth) {
      const GraphDataset ds = synth_name == "ptc_syn" ? ptc_syn(synth_seed) : proteins_syn(synth_seed);
      write_tu_dataset(ds, synth_out, ds.name);
      std::cout << dataset_summary(ds).dump(2) << '\n';
    } else if (*ingest) {
      const GraphDataset ds = load_tu_dataset(in_dir, in_name);
      for (const auto& g : ds.graphs) validate_graph(g, ds.num_classes);
      if (!cache_out.empty()) save_dataset_cache(ds, cache_out, parse_cache_format(cache_format));
      std::cout << dataset_summary(ds).dump(2) << '\n';
    } else if (*cent) {
      const GraphDataset ds = resolve_dataset(cent_ds);
      const auto kinds = parse_kinds(cent_kinds);
      std::ofstream file;
      if (!cent_out.empty()) {
        file.open(cent_out);
        if (!file) throw IngestionError("cannot write " + cent_out);
      }
      std::ostream& out = cent_out.empty() ? std::cout : file;
      out << std::setprecision(17) << "graph_id,edge_i,edge_j,kind,value\n";
      for (const auto& g : ds.graphs) {
        const EdgeList edges = canonical_edges(g);
        if (edges.empty()) continue;
        for (ScoreKind k : kinds) {
          const auto s = edge_importance(g, k);
          for (std::size_t e = 0; e < edges.size(); ++e)
            out << g.id << ',' << edges[e].first << ',' << edges[e].second << ',' << to_string(k) << ','
                << s.values[e] << '\n';
        }
      }
    } else if (*comp) {
      const GraphDataset ds = resolve_dataset(comp_ds);
      auto [out, rep] = compress_dataset(ds, {parse_score_kind(comp_index), comp_gamma});
      write_tu_dataset(out, comp_out, ds.name);
      write_json(compression_json(rep), comp_report);
    } else if (*tr) {
      GraphDataset ds = resolve_dataset(tr_ds);
      tcfg.readout = parse_readout(tr_readout);
      std::optional<CompressionConfig> cc;
      if (tr_index != "none" && tr_gamma > 0.0) cc = CompressionConfig{parse_score_kind(tr_index), tr_gamma};
      std::ofstream log_file;
      if (!tr_log.empty()) {
        log_file.open(tr_log);
        if (!log_file) throw IngestionError("cannot write " + tr_log);
        log_file << std::setprecision(17) << "fold,epoch,train_loss,val_loss,val_accuracy,seconds\n";
      }
      std::mutex log_mu;
      auto log_epoch = [&](int fold, const EpochLog& e) {
        if (tr_log.empty()) return;
        std::lock_guard lock(log_mu);
        log_file << fold << ',' << e.epoch << ',' << e.train_loss << ',' << e.val_loss << ',' << e.val_accuracy
                 << ',' << e.seconds << '\n';
      };
      json summary;
      summary["config"] = to_json(tcfg);
      summary["seed"] = tr_seed;
      if (cc) summary["compression"] = {{"index", to_string(cc->kind)}, {"gamma", cc->gamma}};
      if (tr_folds <= 1) {
        if (cc) ds = compress_dataset(ds, *cc).first;
        const ModelConfig cfg = config_for(ds, tcfg);
        const auto fold_of = assign_folds(ds, 10, tr_seed);
        std::vector<int> train_idx, val_idx;
        for (std::size_t i = 0; i < fold_of.size(); ++i) (fold_of[i] == 0 ? val_idx : train_idx).push_back(int(i));
        TrainOptions opt;
        opt.on_epoch = [&](const EpochLog& e) { log_epoch(0, e); };
        const TrainResult r = train(ds.subset(train_idx), ds.subset(val_idx), cfg, fold_seed(tr_seed, 0), opt);
        if (!tr_ckpt.empty()) save_checkpoint(r.model, tr_ckpt);
        const Evaluation ev = evaluate(r.model, ds.subset(val_idx));
        summary["config"] = to_json(cfg);
        summary["epochs"] = r.log.size();
        summary["best_epoch"] = r.best_epoch;
        summary["val_loss"] = ev.loss;
        summary["val_accuracy"] = ev.accuracy;
      } else {
        CvOptions opt;
        opt.folds = tr_folds;
        opt.jobs = tr_jobs;
        if (cc) opt.train_transform = [c = *cc](const GraphDataset& d) { return compress_dataset(d, c).first; };
        opt.on_epoch = log_epoch;
        const CvResult r = cross_validate(ds, tcfg, tr_seed, opt);
        if (!tr_ckpt.empty()) {
          fs::create_directories(tr_ckpt);
          for (const auto& f : r.folds)
            save_checkpoint(f.training.model, fs::path(tr_ckpt) / ("fold" + std::to_string(f.fold) + ".json"));
        }
        summary["mean_accuracy"] = r.mean_accuracy;
        summary["std_accuracy"] = r.std_accuracy;
        summary["fold_accuracies"] = r.accuracies();
      }
      write_json(summary, tr_out);
    } else if (*ec) {
      const GraphDataset ds = resolve_dataset(ec_ds);
      const EgcModel model = load_checkpoint(ec_model);
      const auto kinds = parse_kinds(ec_kinds);
      const auto entries = eci_over(model, ds.graphs, kinds, parse_eci_aggregate(ec_agg));
      json rep;
      rep["dataset"] = ds.name;
      rep["aggregate"] = ec_agg;
      for (const auto& e : entries)
        rep["entries"].push_back({{"kind", to_string(e.kind)}, {"eci", e.mean}, {"per_graph", e.per_graph}});
      write_json(rep, ec_out);
      if (!ec_csv.empty()) {
        std::ofstream out(ec_csv);
        if (!out) throw IngestionError("cannot write " + ec_csv);
        out << std::setprecision(17) << "graph_id,edge_i,edge_j,kind,value\n";
        for (const auto& g : ds.graphs) {
          if (g.num_edges() == 0) continue;
          const auto edges = canonical_edges(g);
          const auto rg = edge_contribution(model, g);
          for (std::size_t e = 0; e < edges.size(); ++e)
            out << g.id << ',' << edges[e].first << ',' << edges[e].second << ",GRAD," << rg.values[e] << '\n';
        }
      }
    } else if (*at) {
      const GraphDataset ds = resolve_dataset(at_ds);
      const EgcModel model = load_checkpoint(at_model);
      const bool com = at_target.size() > 4 && at_target.substr(at_target.size() - 4) == "-com";
      const AttackSetResult set = attack_dataset(EgcTarget{&model}, ds, at_ratio, at_jobs);
      write_tu_dataset(set.adversarial, at_out, ds.name + "_adv");
      json manifest;
      manifest["dataset"] = ds.name;
      manifest["ratio"] = at_ratio;
      manifest["target"] = at_target;
      json graphs = json::array();
      for (const auto& r : set.results) {
        json flips = json::array();
        for (auto [i, j] : r.flips) flips.push_back({i, j});
        graphs.push_back({{"graph_id", r.graph_id},
                          {"budget", r.budget},
                          {"status", to_string(r.status)},
                          {"flips", flips},
                          {"loss_trajectory", r.loss_trajectory}});
      }
      manifest["graphs"] = graphs;
      if (com) {
        if (at_com_model.empty()) throw ContractError("--com-model is required for " + at_target);
        const EgcModel com_model = load_checkpoint(at_com_model);
        std::vector<DefenseVariant> vs = {{"plain", &model, std::nullopt, -1},
                                          {at_target, &com_model, CompressionConfig{parse_score_kind(at_index), at_gamma}, 0}};
        const auto run = defense_run(vs, ds, at_ratio, at_jobs);
        const auto& t = run.tally[1][1];
        manifest["attacked"] = t.attacked;
        manifest["successes"] = t.successes;
        manifest["asr"] = nullable(attack_success_rate(t.successes, t.attacked));
        manifest["gamma"] = at_gamma;
        manifest["index"] = at_index;
      } else {
        manifest["attacked"] = set.attacked;
        manifest["successes"] = set.successes;
        manifest["asr"] = nullable(set.asr);
      }
      write_json(manifest, (fs::path(at_out) / "manifest.json").string());
      std::cout << json{{"attacked", manifest["attacked"]}, {"successes", manifest["successes"]}, {"asr", manifest["asr"]}}.dump()
                << '\n';
    } else if (*ex) {
      const ExperimentReport r = run_experiment(ex_spec, ex_root);
      std::cout << json{{"run_dir", r.run_dir.string()}, {"status", r.report["status"]}, {"metrics_sha256", r.metrics_hash}}.dump(2)
                << '\n';
      return r.ok() ? 0 : 2;
    } else if (*rp) {
      std::ifstream in(fs::path(rp_dir) / "report.json");
      if (!in) throw IngestionError("no report.json under " + rp_dir);
      json report;
      in >> report;
      json summary = {{"run_id", report["run_id"]}, {"status", report["status"]}, {"dataset", report["dataset"]}};
      for (auto& [stage, value] : report["stages"].items()) {
        if (stage == "cv") summary["cv"] = {{"mean_accuracy", value["mean_accuracy"]}, {"std_accuracy", value["std_accuracy"]}};
        if (stage == "eci") summary["eci"] = value["entries"];
        if (stage == "attack") summary["attack"] = value;
        if (stage == "sweep") {
          for (const auto& row : value)
            summary["sweep"].push_back({{"gamma", row["gamma"]}, {"mean_accuracy", row["mean_accuracy"]}});
        }
      }
      if (rp_verify) {
        const std::string h = metrics_hash(report);
        summary["metrics_hash_ok"] = h == report.value("metrics_sha256", "");
      }
      std::cout << summary.dump(2) << '\n';
      if (rp_verify && !summary["metrics_hash_ok"].get<bool>()) return 3;
    }
  } catch (const Error& e) {
    std::cerr << "egc2: " << e.what() << '\n';
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "egc2: unexpected error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
