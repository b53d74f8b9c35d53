#pragma once

// Batch experiment driver. An experiment is a JSON document naming a
// dataset, model hyperparameters, a master seed and a list of stages; its
// outputs go to <out_root>/<sha256(spec)[:16]>/ and are never overwritten.
//
// Stages (run in this order whatever order they are listed in):
//   cv       k-fold accuracy of the primary variant
//   sweep    k-fold accuracy for each compression ratio in sweep.gammas
//   eci      ECI per centrality on clean test graphs and on FGA adversarial
//            versions of the attacked ones (fold models of the primary variant)
//   attack   ASR of attack.target at each ratio in attack.ratios
//   defense  accuracy/ASR grid over defense.variants at each ratio
//   timing   median seconds per epoch for each ratio in timing.gammas

#include <openssl/evp.h>

#include <algorithm>
#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <tuple>
#include <vector>

#include <nlohmann/json.hpp>

#include "egc2/attack.hpp"
#include "egc2/attribution.hpp"
#include "egc2/compression.hpp"
#include "egc2/dataset_cache.hpp"
#include "egc2/synthetic.hpp"
#include "egc2/training.hpp"
#include "egc2/tu_format.hpp"

namespace egc2 {

inline constexpr int kExperimentSchemaVersion = 1;
inline constexpr const char* kLibraryVersion = "1.0.0";

inline std::string sha256_hex(const std::string& data) {
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha256(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx, data.data(), data.size()) != 1 || EVP_DigestFinal_ex(ctx, digest, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("SHA-256 computation failed");
  }
  EVP_MD_CTX_free(ctx);
  std::ostringstream out;
  for (unsigned int i = 0; i < len; ++i) out << std::hex << std::setw(2) << std::setfill('0') << int(digest[i]);
  return out.str();
}

// --- schema -----------------------------------------------------------------

namespace experiment_detail {

enum class T { Int, Num, Str, Bool, NumList, StrList, Obj };

struct Field {
  T type;
  bool required = false;
};

using Shape = std::map<std::string, Field>;

inline bool matches(const nlohmann::json& v, T t) {
  auto all = [&](auto pred) {
    if (!v.is_array()) return false;
    for (const auto& x : v)
      if (!pred(x)) return false;
    return true;
  };
  switch (t) {
    case T::Int: return v.is_number_integer();
    case T::Num: return v.is_number();
    case T::Str: return v.is_string();
    case T::Bool: return v.is_boolean();
    case T::NumList: return all([](const nlohmann::json& x) { return x.is_number(); });
    case T::StrList: return all([](const nlohmann::json& x) { return x.is_string(); });
    case T::Obj: return v.is_object();
  }
  return false;
}

inline void check_object(const nlohmann::json& obj, const Shape& shape, const std::string& prefix,
                         std::vector<std::string>& errors) {
  if (!obj.is_object()) {
    errors.push_back(prefix.empty() ? "<root>: expected an object" : prefix + ": expected an object");
    return;
  }
  for (const auto& [key, value] : obj.items()) {
    const auto it = shape.find(key);
    if (it == shape.end())
      errors.push_back(prefix + key + ": unknown key");
    else if (!matches(value, it->second.type))
      errors.push_back(prefix + key + ": wrong type");
  }
  for (const auto& [key, field] : shape)
    if (field.required && !obj.contains(key)) errors.push_back(prefix + key + ": missing");
}

inline const Shape kRoot = {{"schema_version", {T::Int, true}}, {"name", {T::Str}},
                            {"dataset", {T::Obj, true}},      {"seed", {T::Int, true}},
                            {"folds", {T::Int}},              {"jobs", {T::Int}},
                            {"model", {T::Obj}},              {"compression", {T::Obj}},
                            {"stages", {T::StrList, true}},   {"sweep", {T::Obj}},
                            {"eci", {T::Obj}},                {"attack", {T::Obj}},
                            {"defense", {T::Obj}},            {"timing", {T::Obj}},
                            {"save_models", {T::Bool}}};
inline const Shape kDataset = {{"source", {T::Str, true}}, {"name", {T::Str}}, {"path", {T::Str}},
                               {"seed", {T::Int}},         {"count", {T::Int}}};
inline const Shape kModel = {{"readout", {T::Str}},    {"d", {T::Int}},         {"r", {T::Num}},
                             {"k", {T::Num}},          {"lr", {T::Num}},        {"max_epochs", {T::Int}},
                             {"patience", {T::Int}},   {"batch_size", {T::Int}}, {"L", {T::Int}},
                             {"K", {T::Int}},          {"readout_width", {T::Int}}, {"mlp_hidden", {T::Int}}};
inline const Shape kCompression = {{"index", {T::Str}}, {"gamma", {T::Num}}};
inline const Shape kSweep = {{"index", {T::Str}}, {"gammas", {T::NumList, true}}};
inline const Shape kEci = {{"kinds", {T::StrList}}, {"aggregate", {T::Str}}, {"attack_ratio", {T::Num}}};
inline const Shape kAttack = {{"target", {T::Str}}, {"ratios", {T::NumList, true}}};
inline const Shape kDefense = {{"index", {T::Str}}, {"gamma", {T::Num}}, {"ratios", {T::NumList, true}},
                               {"variants", {T::StrList}}};
inline const Shape kTiming = {{"index", {T::Str}}, {"gammas", {T::NumList, true}}, {"epochs", {T::Int}}};

inline const std::vector<std::string> kStageOrder = {"cv", "sweep", "eci", "attack", "defense", "timing"};
inline const std::vector<std::string> kVariants = {"base", "egc", "base-com", "egc-com"};

}  // namespace experiment_detail

// Throws SchemaError listing every offending key.
inline void validate_experiment_spec(const nlohmann::json& spec) {
  using namespace experiment_detail;
  std::vector<std::string> errors;
  check_object(spec, kRoot, "", errors);
  if (!spec.is_object()) throw SchemaError(errors.front());
  auto sub = [&](const char* key, const Shape& shape) {
    if (spec.contains(key) && spec[key].is_object()) check_object(spec[key], shape, std::string(key) + ".", errors);
  };
  sub("dataset", kDataset);
  sub("model", kModel);
  sub("compression", kCompression);
  sub("sweep", kSweep);
  sub("eci", kEci);
  sub("attack", kAttack);
  sub("defense", kDefense);
  sub("timing", kTiming);
  if (spec.contains("schema_version") && spec["schema_version"].is_number_integer() &&
      spec["schema_version"].get<int>() != kExperimentSchemaVersion)
    errors.push_back("schema_version: unsupported value");
  if (spec.contains("stages") && spec["stages"].is_array())
    for (const auto& s : spec["stages"])
      if (s.is_string() && std::find(kStageOrder.begin(), kStageOrder.end(), s.get<std::string>()) == kStageOrder.end())
        errors.push_back("stages: unknown stage '" + s.get<std::string>() + "'");
  auto needs = [&](const char* stage, const char* block) {
    if (!spec.contains("stages") || !spec["stages"].is_array()) return;
    for (const auto& s : spec["stages"])
      if (s == stage && !spec.contains(block)) errors.push_back(std::string(block) + ": missing (required by stage)");
  };
  needs("sweep", "sweep");
  needs("attack", "attack");
  needs("defense", "defense");
  needs("timing", "timing");
  if (spec.contains("defense") && spec["defense"].is_object() && spec["defense"].contains("variants") &&
      spec["defense"]["variants"].is_array())
    for (const auto& v : spec["defense"]["variants"])
      if (v.is_string() && std::find(kVariants.begin(), kVariants.end(), v.get<std::string>()) == kVariants.end())
        errors.push_back("defense.variants: unknown variant '" + v.get<std::string>() + "'");
  if (!errors.empty()) {
    std::string msg = "experiment spec rejected:";
    for (const auto& e : errors) msg += "\n  " + e;
    throw SchemaError(msg);
  }
}

inline ModelConfig model_config_from_spec(const nlohmann::json& spec) {
  ModelConfig c;
  const nlohmann::json m = spec.value("model", nlohmann::json::object());
  c.readout = parse_readout(m.value("readout", "feature"));
  c.d = m.value("d", c.d);
  c.r = m.value("r", c.r);
  c.k = m.value("k", c.k);
  c.learning_rate = m.value("lr", c.learning_rate);
  c.max_epochs = m.value("max_epochs", c.max_epochs);
  c.patience = m.value("patience", c.patience);
  c.batch_size = m.value("batch_size", c.batch_size);
  c.L = m.value("L", c.L);
  c.K = m.value("K", c.K);
  c.readout_width = m.value("readout_width", c.readout_width);
  c.mlp_hidden = m.value("mlp_hidden", c.mlp_hidden);
  return c;
}

// Resolves the dataset block: synthetic generators, a TU directory, or a cache file.
inline GraphDataset load_spec_dataset(const nlohmann::json& d) {
  const std::string source = d.at("source");
  if (source == "synthetic") {
    const std::string name = d.value("name", "ptc_syn");
    const auto seed = d.value("seed", kDefaultSynthSeed);
    if (name == "ptc_syn" || name == "PTC_SYN") return ptc_syn(seed, d.value("count", 344));
    if (name == "proteins_syn" || name == "PROTEINS_SYN") return proteins_syn(seed, d.value("count", 1113));
    throw SchemaError("dataset.name: unknown synthetic dataset '" + name + "'");
  }
  if (source == "tu") return load_tu_dataset(d.at("path").get<std::string>(), d.at("name").get<std::string>());
  if (source == "cache") return load_dataset_cache(d.at("path").get<std::string>());
  throw SchemaError("dataset.source: expected synthetic|tu|cache");
}

inline nlohmann::json dataset_summary(const GraphDataset& ds) {
  double n = 0, e = 0;
  for (const auto& g : ds.graphs) {
    n += g.num_nodes();
    e += g.num_edges();
  }
  const double count = std::max<std::size_t>(1, ds.size());
  return {{"name", ds.name},
          {"graphs", ds.size()},
          {"classes", ds.num_classes},
          {"class_counts", ds.class_counts()},
          {"feature_dim", ds.feature_dim},
          {"avg_nodes", n / count},
          {"avg_edges", e / count},
          {"max_nodes", ds.max_nodes()},
          {"rejected_edgeless", ds.rejected_edgeless}};
}

// --- timing probe -------------------------------------------------------------

struct TimingRow {
  double gamma = 0.0;
  double median_epoch_seconds = 0.0;
  int epochs = 0;
  long long nodes = 0, edges = 0;
  int n0 = 0;
};

inline double median(std::vector<double> xs) {
  if (xs.empty()) return 0.0;
  std::sort(xs.begin(), xs.end());
  const std::size_t m = xs.size() / 2;
  return xs.size() % 2 ? xs[m] : 0.5 * (xs[m - 1] + xs[m]);
}

// Median optimisation-pass seconds per epoch for each compression ratio,
// training on the same fold-0 split with the same seed and no early stop.
inline std::vector<TimingRow> timing_probe(const GraphDataset& dataset, const ModelConfig& base,
                                           const std::vector<double>& gammas, ScoreKind index, int epochs,
                                           std::uint64_t seed) {
  if (epochs < 1) throw ContractError("timing probe needs at least one epoch");
  const auto fold_of = assign_folds(dataset, 10, seed);
  const FoldSplit split = fold_split(fold_of, 10, 0);
  std::vector<TimingRow> rows;
  for (double gamma : gammas) {
    const GraphDataset data = gamma > 0.0 ? compress_dataset(dataset, {index, gamma}).first : dataset;
    ModelConfig cfg = config_for(data, base);
    cfg.max_epochs = epochs;
    cfg.patience = epochs;
    const TrainResult tr = train(data.subset(split.train), data.subset(split.val), cfg, fold_seed(seed, 0));
    std::vector<double> secs;
    for (const auto& e : tr.log) secs.push_back(e.seconds);
    TimingRow row;
    row.gamma = gamma;
    row.median_epoch_seconds = median(secs);
    row.epochs = static_cast<int>(secs.size());
    row.n0 = cfg.n0;
    for (const auto& g : data.graphs) {
      row.nodes += g.num_nodes();
      row.edges += g.num_edges();
    }
    rows.push_back(row);
  }
  return rows;
}

// --- run --------------------------------------------------------------------

struct ExperimentReport {
  nlohmann::json report;
  std::filesystem::path run_dir;
  std::string metrics_hash;  // SHA-256 of the report without its timing block

  bool ok() const { return report.value("status", "") == "complete"; }
};

inline std::string metrics_hash(const nlohmann::json& report) {
  nlohmann::json j = report;
  j.erase("timing");
  j.erase("metrics_sha256");
  return sha256_hex(j.dump());
}

inline nlohmann::json nullable(const std::optional<double>& v) { return v ? nlohmann::json(*v) : nlohmann::json(); }

namespace experiment_detail {

struct VariantKey {
  Readout readout;
  ScoreKind index;
  double gamma;
  auto operator<=>(const VariantKey&) const = default;
};

class Runner {
 public:
  Runner(const nlohmann::json& spec, const std::filesystem::path& dir) : spec_(spec), dir_(dir) {
    seed_ = spec.at("seed").get<std::uint64_t>();
    folds_ = spec.value("folds", 10);
    jobs_ = spec.value("jobs", 1);
    base_ = model_config_from_spec(spec);
    const auto comp = spec.value("compression", nlohmann::json::object());
    primary_ = {base_.readout, parse_score_kind(comp.value("index", "c")), comp.value("gamma", 0.0)};
    save_models_ = spec.value("save_models", false);
  }

  nlohmann::json report;
  nlohmann::json timing = nlohmann::json::object();
  std::vector<std::string> outputs;

  void load() {
    dataset_ = load_spec_dataset(spec_.at("dataset"));
    report["dataset"] = dataset_summary(dataset_);
  }

  void run_stage(const std::string& stage) {
    const auto t0 = std::chrono::steady_clock::now();
    if (stage == "cv") stage_cv();
    if (stage == "sweep") stage_sweep();
    if (stage == "eci") stage_eci();
    if (stage == "attack") stage_attack();
    if (stage == "defense") stage_defense();
    if (stage == "timing") stage_timing();
    timing["stage_seconds"][stage] = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  }

 private:
  const nlohmann::json& spec_;
  std::filesystem::path dir_;
  std::uint64_t seed_ = 0;
  int folds_ = 10, jobs_ = 1;
  ModelConfig base_;
  VariantKey primary_{};
  bool save_models_ = false;
  GraphDataset dataset_;
  std::map<VariantKey, CvResult> cv_cache_;

  static std::string variant_label(const VariantKey& k) {
    std::ostringstream s;
    s << to_string(k.readout);
    if (k.gamma > 0.0) s << "+" << to_string(k.index) << "@" << k.gamma;
    return s.str();
  }

  const CvResult& cv(const VariantKey& key) {
    auto it = cv_cache_.find(key);
    if (it != cv_cache_.end()) return it->second;
    ModelConfig cfg = base_;
    cfg.readout = key.readout;
    CvOptions opt;
    opt.folds = folds_;
    opt.jobs = jobs_;
    if (key.gamma > 0.0) {
      const CompressionConfig cc{key.index, key.gamma};
      opt.train_transform = [cc](const GraphDataset& d) { return compress_dataset(d, cc).first; };
    }
    log::info("cross-validating " + variant_label(key) + " on " + dataset_.name);
    CvResult res = cross_validate(dataset_, cfg, seed_, opt);
    const std::string label = variant_label(key);
    std::vector<double> epoch_secs;
    for (const auto& f : res.folds) epoch_secs.push_back(f.mean_epoch_seconds);
    timing["mean_epoch_seconds"][label] = epoch_secs;
    if (save_models_) {
      std::filesystem::create_directories(dir_ / "models");
      for (const auto& f : res.folds) {
        const std::string file = "models/" + label + "_fold" + std::to_string(f.fold) + ".json";
        save_checkpoint(f.training.model, dir_ / file);
        outputs.push_back(file);
      }
    }
    return cv_cache_.emplace(key, std::move(res)).first->second;
  }

  static nlohmann::json cv_json(const CvResult& r) {
    nlohmann::json folds = nlohmann::json::array();
    for (const auto& f : r.folds)
      folds.push_back({{"fold", f.fold},
                       {"test_accuracy", f.test_accuracy},
                       {"test_loss", f.test_loss},
                       {"epochs", f.training.log.size()},
                       {"best_epoch", f.training.best_epoch},
                       {"best_val_loss", f.training.best_val_loss},
                       {"train", f.split.train.size()},
                       {"val", f.split.val.size()},
                       {"test", f.split.test.size()}});
    return {{"mean_accuracy", r.mean_accuracy}, {"std_accuracy", r.std_accuracy}, {"folds", folds}};
  }

  void write_text(const std::string& name, const std::string& text) {
    std::ofstream out(dir_ / name);
    if (!out) throw IngestionError("cannot write " + (dir_ / name).string());
    out << text;
    outputs.push_back(name);
  }

  void stage_cv() {
    const CvResult& r = cv(primary_);
    report["stages"]["cv"] = cv_json(r);
    report["stages"]["cv"]["variant"] = variant_label(primary_);
    std::ostringstream csv;
    csv << std::setprecision(17) << "fold,test_accuracy,test_loss,epochs,best_epoch\n";
    for (const auto& f : r.folds)
      csv << f.fold << ',' << f.test_accuracy << ',' << f.test_loss << ',' << f.training.log.size() << ','
          << f.training.best_epoch << '\n';
    write_text("cv.csv", csv.str());
  }

  void stage_sweep() {
    const auto& sw = spec_.at("sweep");
    const ScoreKind index = parse_score_kind(sw.value("index", "c"));
    nlohmann::json rows = nlohmann::json::array();
    std::ostringstream csv;
    csv << std::setprecision(17)
        << "dataset,index,gamma,mean_accuracy,std_accuracy,edges_kept,nodes_kept,mean_epoch_seconds\n";
    for (double gamma : sw.at("gammas").get<std::vector<double>>()) {
      check_gamma(gamma);
      const VariantKey key{primary_.readout, index, gamma};
      const CvResult& r = cv(key);
      double kept_e = 1.0, kept_n = 1.0;
      if (gamma > 0.0) {
        const auto rep = compress_dataset(dataset_, {index, gamma}).second;
        kept_e = static_cast<double>(rep.edges_after) / rep.edges_before;
        kept_n = static_cast<double>(rep.nodes_after) / rep.nodes_before;
      }
      double secs = 0.0;
      for (const auto& f : r.folds) secs += f.mean_epoch_seconds;
      secs /= std::max<std::size_t>(1, r.folds.size());
      nlohmann::json row = cv_json(r);
      row["gamma"] = gamma;
      row["index"] = to_string(index);
      row["edges_kept"] = kept_e;
      row["nodes_kept"] = kept_n;
      rows.push_back(row);
      timing["sweep_epoch_seconds"][std::to_string(gamma)] = secs;
      csv << dataset_.name << ',' << to_string(index) << ',' << gamma << ',' << r.mean_accuracy << ','
          << r.std_accuracy << ',' << kept_e << ',' << kept_n << ',' << secs << '\n';
    }
    report["stages"]["sweep"] = rows;
    write_text("fig7_sweep.csv", csv.str());
  }

  void stage_eci() {
    const auto es = spec_.value("eci", nlohmann::json::object());
    std::vector<ScoreKind> kinds;
    for (const auto& s : es.value("kinds", std::vector<std::string>{"cc", "bc", "ec", "c", "dc"}))
      kinds.push_back(parse_score_kind(s));
    const EciAggregate agg = parse_eci_aggregate(es.value("aggregate", "mean"));
    const double ratio = es.value("attack_ratio", 0.3);
    const CvResult& r = cv(primary_);
    // Clean: every test graph. Adversarial: attacked graphs only, paired with
    // their clean versions for the delta.
    std::vector<std::vector<double>> clean(kinds.size()), paired_clean(kinds.size()), adv(kinds.size());
    std::vector<std::vector<double>> cat_clean_i(kinds.size()), cat_clean_c(kinds.size());
    std::vector<double> perturb_scores_sum(kinds.size(), 0.0);
    long long perturb_count = 0;
    for (const auto& f : r.folds) {
      const EgcModel& model = f.training.model;
      const GraphDataset test = fold_test(f);
      const auto clean_entries = eci_over(model, test.graphs, kinds, agg);
      for (std::size_t k = 0; k < kinds.size(); ++k)
        clean[k].insert(clean[k].end(), clean_entries[k].per_graph.begin(), clean_entries[k].per_graph.end());
      const AttackSetResult set = attack_dataset(EgcTarget{&model}, test, ratio, jobs_);
      std::vector<Graph> adv_graphs, clean_graphs;
      for (std::size_t i = 0; i < set.results.size(); ++i) {
        const auto& res = set.results[i];
        if (!res.attacked() || res.flips.empty() || res.adversarial.num_edges() == 0) continue;
        adv_graphs.push_back(res.adversarial);
        clean_graphs.push_back(test.graphs[i]);
        // Rank of inserted edges among the adversarial graph's edges.
        std::vector<Edge> added;
        for (auto e : res.flips)
          if (res.adversarial.has_edge(e.first, e.second)) added.push_back(e);
        if (added.empty()) continue;
        for (std::size_t k = 0; k < kinds.size(); ++k) {
          const auto scores = perturbation_importance_score(res.adversarial, edge_importance(res.adversarial, kinds[k]), added);
          for (double s : scores) perturb_scores_sum[k] += s;
        }
        perturb_count += static_cast<long long>(added.size());
      }
      const auto pc = eci_over(model, clean_graphs, kinds, agg);
      const auto pa = eci_over(model, adv_graphs, kinds, agg);
      for (std::size_t k = 0; k < kinds.size(); ++k) {
        paired_clean[k].insert(paired_clean[k].end(), pc[k].per_graph.begin(), pc[k].per_graph.end());
        adv[k].insert(adv[k].end(), pa[k].per_graph.begin(), pa[k].per_graph.end());
      }
    }
    auto mean = [](const std::vector<double>& v) {
      double s = 0.0;
      for (double x : v) s += x;
      return v.empty() ? 0.0 : s / static_cast<double>(v.size());
    };
    nlohmann::json entries = nlohmann::json::array();
    std::ostringstream csv;
    csv << std::setprecision(17)
        << "dataset,kind,eci_clean,eci_clean_attacked,eci_adversarial,delta,graphs,attacked_graphs,"
           "mean_perturbation_score\n";
    for (std::size_t k = 0; k < kinds.size(); ++k) {
      const double c = mean(clean[k]), pcm = mean(paired_clean[k]), am = mean(adv[k]);
      const double ps = perturb_count ? perturb_scores_sum[k] / static_cast<double>(perturb_count) : 0.0;
      entries.push_back({{"kind", to_string(kinds[k])},
                         {"eci_clean", c},
                         {"eci_clean_attacked", pcm},
                         {"eci_adversarial", am},
                         {"delta", eci_delta(pcm, am)},
                         {"graphs", clean[k].size()},
                         {"attacked_graphs", adv[k].size()},
                         {"mean_perturbation_score", ps}});
      csv << dataset_.name << ',' << to_string(kinds[k]) << ',' << c << ',' << pcm << ',' << am << ','
          << eci_delta(pcm, am) << ',' << clean[k].size() << ',' << adv[k].size() << ',' << ps << '\n';
    }
    report["stages"]["eci"] = {{"variant", variant_label(primary_)},
                               {"aggregate", agg == EciAggregate::Concat ? "concat" : "mean"},
                               {"attack_ratio", ratio},
                               {"perturbed_edges", perturb_count},
                               {"entries", entries}};
    if (agg == EciAggregate::Concat)
      report["stages"]["eci"]["note"] = "per-graph values are listed, means are per-fold concatenated cosines";
    write_text("fig5_eci.csv", csv.str());
  }

  GraphDataset fold_test(const FoldResult& f) const { return dataset_.subset(f.split.test); }

  struct VariantSpec {
    std::string name;
    VariantKey key;
    int source;  // index into the variant list, -1 for itself
  };

  std::vector<VariantSpec> variant_specs(const std::vector<std::string>& names, ScoreKind index, double gamma) const {
    std::vector<VariantSpec> out;
    for (const auto& n : names) {
      const Readout ro = n.rfind("base", 0) == 0 ? Readout::Mean : Readout::Feature;
      const bool com = n.size() > 4 && n.substr(n.size() - 4) == "-com";
      out.push_back({n, {ro, index, com ? gamma : 0.0}, -1});
    }
    // Compressed variants reuse the adversarial set of their uncompressed
    // counterpart, which is added when missing.
    const std::size_t original = out.size();
    for (std::size_t i = 0; i < original; ++i) {
      if (out[i].key.gamma == 0.0) continue;
      const std::string plain = out[i].name.substr(0, out[i].name.size() - 4);
      int src = -1;
      for (std::size_t j = 0; j < out.size(); ++j)
        if (out[j].name == plain) src = static_cast<int>(j);
      if (src < 0) {
        out.push_back({plain, {out[i].key.readout, index, 0.0}, -1});
        src = static_cast<int>(out.size()) - 1;
      }
      out[i].source = src;
    }
    return out;
  }

  // Accumulates the defense grid over folds.
  std::vector<DefenseGrid> grids(const std::vector<VariantSpec>& specs, const std::vector<double>& ratios) {
    std::vector<const CvResult*> cvs;
    for (const auto& s : specs) cvs.push_back(&cv(s.key));
    std::vector<DefenseGrid> out;
    for (double ratio : ratios) {
      std::vector<std::vector<DefenseTally>> total;
      std::vector<DefenseVariant> variants;
      for (int f = 0; f < folds_; ++f) {
        variants.clear();
        for (std::size_t v = 0; v < specs.size(); ++v) {
          DefenseVariant dv;
          dv.name = specs[v].name;
          dv.model = &cvs[v]->folds[f].training.model;
          if (specs[v].key.gamma > 0.0) dv.compression = CompressionConfig{specs[v].key.index, specs[v].key.gamma};
          dv.attack_source = specs[v].source;
          variants.push_back(dv);
        }
        add_tallies(total, defense_run(variants, fold_test(cvs[0]->folds[f]), ratio, jobs_).tally);
      }
      out.push_back(defense_grid(variants, total, ratio));
    }
    return out;
  }

  static nlohmann::json grid_json(const DefenseGrid& g, double gamma) {
    nlohmann::json cells = nlohmann::json::array();
    for (const auto& c : g.cells)
      cells.push_back({{"target", c.target},
                       {"evaluated", c.evaluated},
                       {"accuracy", c.accuracy},
                       {"attacked", c.attacked},
                       {"successes", c.successes},
                       {"asr", nullable(c.asr)}});
    return {{"ratio", g.ratio}, {"gamma", gamma}, {"variants", g.variants}, {"cells", cells}};
  }

  void table3_rows(std::ostringstream& csv, const DefenseGrid& g, double gamma, bool diagonal_only) const {
    for (const auto& c : g.cells) {
      if (diagonal_only && c.target != c.evaluated) continue;
      csv << dataset_.name << ',' << g.ratio << ',' << gamma << ',' << c.target << ',' << c.evaluated << ','
          << c.accuracy << ',' << c.attacked << ',' << c.successes << ',';
      if (c.asr) csv << *c.asr;
      csv << '\n';
    }
  }

  std::ostringstream table3_;
  bool table3_started_ = false;

  void table3_header() {
    if (table3_started_) return;
    table3_ << std::setprecision(17) << "dataset,ratio,gamma,target,evaluated,accuracy,attacked,successes,asr\n";
    table3_started_ = true;
  }

  void stage_attack() {
    const auto& at = spec_.at("attack");
    const std::string target = at.value("target", "egc");
    if (std::find(kVariants.begin(), kVariants.end(), target) == kVariants.end())
      throw SchemaError("attack.target: unknown variant '" + target + "'");
    const auto dspec = spec_.value("defense", nlohmann::json::object());
    const ScoreKind index = parse_score_kind(dspec.value("index", "c"));
    const double gamma = dspec.value("gamma", 0.3);
    auto specs = variant_specs({target}, index, gamma);
    nlohmann::json rows = nlohmann::json::array();
    table3_header();
    for (const auto& g : grids(specs, at.at("ratios").get<std::vector<double>>())) {
      const DefenseCell& c = g.at(target, target);
      rows.push_back({{"ratio", g.ratio},
                      {"target", target},
                      {"accuracy", c.accuracy},
                      {"attacked", c.attacked},
                      {"successes", c.successes},
                      {"asr", nullable(c.asr)}});
      DefenseGrid only = g;
      only.cells = {c};
      table3_rows(table3_, only, specs[0].key.gamma, true);
    }
    report["stages"]["attack"] = rows;
    write_table3();
  }

  void stage_defense() {
    const auto& ds = spec_.at("defense");
    const ScoreKind index = parse_score_kind(ds.value("index", "c"));
    const double gamma = ds.value("gamma", 0.3);
    check_gamma(gamma);
    const auto names = ds.value("variants", kVariants);
    auto specs = variant_specs(names, index, gamma);
    nlohmann::json out = nlohmann::json::array();
    table3_header();
    for (const auto& g : grids(specs, ds.at("ratios").get<std::vector<double>>())) {
      out.push_back(grid_json(g, gamma));
      table3_rows(table3_, g, gamma, false);
    }
    report["stages"]["defense"] = out;
    write_table3();
  }

  void write_table3() {
    outputs.erase(std::remove(outputs.begin(), outputs.end(), "table3_asr.csv"), outputs.end());
    write_text("table3_asr.csv", table3_.str());
  }

  void stage_timing() {
    const auto& ts = spec_.at("timing");
    const ScoreKind index = parse_score_kind(ts.value("index", "c"));
    const auto gammas = ts.at("gammas").get<std::vector<double>>();
    for (double g : gammas) check_gamma(g);
    const int epochs = ts.value("epochs", 20);
    ModelConfig cfg = base_;
    const auto rows = timing_probe(dataset_, cfg, gammas, index, epochs, seed_);
    nlohmann::json det = nlohmann::json::array(), secs = nlohmann::json::array();
    for (const auto& r : rows) {
      det.push_back({{"gamma", r.gamma}, {"epochs", r.epochs}, {"nodes", r.nodes}, {"edges", r.edges}, {"n0", r.n0}});
      secs.push_back({{"gamma", r.gamma}, {"median_epoch_seconds", r.median_epoch_seconds}});
    }
    report["stages"]["timing"] = det;
    timing["timing_probe"] = secs;
  }
};

}  // namespace experiment_detail

inline std::string canonical_spec(const nlohmann::json& spec) { return spec.dump(); }

inline std::string run_id(const nlohmann::json& spec) { return sha256_hex(canonical_spec(spec)).substr(0, 16); }

inline ExperimentReport run_experiment_json(const nlohmann::json& spec, const std::filesystem::path& out_root) {
  validate_experiment_spec(spec);
  const std::string id = run_id(spec);
  const auto dir = out_root / id;
  if (std::filesystem::exists(dir / "report.json"))
    throw ContractError("run directory " + dir.string() + " is complete and write-once");
  std::filesystem::create_directories(dir);
  {
    std::ofstream s(dir / "spec.json");
    s << spec.dump(2) << '\n';
  }
  experiment_detail::Runner runner(spec, dir);
  nlohmann::json& report = runner.report;
  report["kind"] = "experiment";
  report["schema_version"] = kExperimentSchemaVersion;
  report["version"] = kLibraryVersion;
  report["run_id"] = id;
  report["spec"] = spec;
  report["stages"] = nlohmann::json::object();
  std::set<std::string> wanted;
  for (const auto& s : spec.at("stages")) wanted.insert(s.get<std::string>());
  std::string current = "ingest";
  try {
    runner.load();
    for (const auto& stage : experiment_detail::kStageOrder) {
      if (!wanted.count(stage)) continue;
      current = stage;
      runner.run_stage(stage);
    }
    report["status"] = "complete";
  } catch (const std::exception& e) {
    report["status"] = "failed";
    report["failed_stage"] = current;
    report["error"] = e.what();
    log::warn("experiment stage '" + current + "' failed: " + e.what());
  }
  runner.outputs.push_back("report.json");
  report["outputs"] = runner.outputs;
  report["timing"] = runner.timing;
  ExperimentReport out;
  out.metrics_hash = metrics_hash(report);
  report["metrics_sha256"] = out.metrics_hash;
  out.report = report;
  out.run_dir = dir;
  std::ofstream f(dir / "report.json");
  f << report.dump(2) << '\n';
  return out;
}

inline ExperimentReport run_experiment(const std::filesystem::path& spec_file, const std::filesystem::path& out_root) {
  std::ifstream in(spec_file);
  if (!in) throw IngestionError("cannot open " + spec_file.string());
  nlohmann::json spec;
  try {
    in >> spec;
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("experiment spec is not valid JSON: ") + e.what());
  }
  return run_experiment_json(spec, out_root);
}

}  // namespace egc2
