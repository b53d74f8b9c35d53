#pragma once

// Versioned on-disk cache of an ingested dataset, as JSON or a compact
// little-endian binary blob.

#include <array>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>

#include <nlohmann/json.hpp>

#include "egc2/graph.hpp"

namespace egc2 {

enum class CacheFormat { Json, Binary };

inline constexpr int kDatasetCacheVersion = 1;

inline CacheFormat parse_cache_format(const std::string& s) {
  if (s == "json") return CacheFormat::Json;
  if (s == "bin") return CacheFormat::Binary;
  throw SchemaError("unknown cache format '" + s + "' (expected json|bin)");
}

inline std::string to_string(FeatureSource s) {
  switch (s) {
    case FeatureSource::NodeLabels: return "node_labels";
    case FeatureSource::NodeAttributes: return "node_attributes";
    case FeatureSource::Degree: return "degree";
  }
  return "node_labels";
}

inline FeatureSource parse_feature_source(const std::string& s) {
  if (s == "node_labels") return FeatureSource::NodeLabels;
  if (s == "node_attributes") return FeatureSource::NodeAttributes;
  if (s == "degree") return FeatureSource::Degree;
  throw SchemaError("unknown feature source '" + s + "'");
}

inline nlohmann::json dataset_to_json(const GraphDataset& ds) {
  nlohmann::json j;
  j["version"] = kDatasetCacheVersion;
  j["name"] = ds.name;
  j["num_classes"] = ds.num_classes;
  j["feature_dim"] = ds.feature_dim;
  j["feature_source"] = to_string(ds.feature_source);
  j["rejected_edgeless"] = ds.rejected_edgeless;
  auto& arr = j["graphs"] = nlohmann::json::array();
  for (const auto& g : ds.graphs) {
    nlohmann::json jg;
    jg["id"] = g.id;
    jg["label"] = g.label;
    jg["n"] = g.num_nodes();
    std::vector<std::array<int, 2>> edges;
    for (auto [a, b] : canonical_edges(g).edges) edges.push_back({a, b});
    jg["edges"] = edges;
    std::vector<double> feats(g.features.data(), g.features.data() + g.features.size());
    jg["features"] = feats;  // column-major
    arr.push_back(std::move(jg));
  }
  return j;
}

inline GraphDataset dataset_from_json(const nlohmann::json& j) {
  if (j.at("version").get<int>() != kDatasetCacheVersion) throw SchemaError("unsupported dataset cache version");
  GraphDataset ds;
  ds.name = j.at("name").get<std::string>();
  ds.num_classes = j.at("num_classes").get<int>();
  ds.feature_dim = j.at("feature_dim").get<int>();
  ds.feature_source = parse_feature_source(j.at("feature_source").get<std::string>());
  ds.rejected_edgeless = j.value("rejected_edgeless", 0);
  for (const auto& jg : j.at("graphs")) {
    const int n = jg.at("n").get<int>();
    std::vector<Edge> edges;
    for (const auto& e : jg.at("edges")) edges.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
    Graph g = make_graph(n, edges, jg.at("label").get<int>(), jg.at("id").get<int>());
    const auto feats = jg.at("features").get<std::vector<double>>();
    if (static_cast<int>(feats.size()) != n * ds.feature_dim) throw SchemaError("feature block size mismatch");
    g.features = Eigen::Map<const Matrix>(feats.data(), n, ds.feature_dim);
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

namespace cache_detail {

inline constexpr char kMagic[8] = {'E', 'G', 'C', '2', 'D', 'S', 'E', 'T'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  if (!in.read(reinterpret_cast<char*>(&v), sizeof(T))) throw SchemaError("truncated binary dataset cache");
  return v;
}

inline void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

inline std::string get_string(std::istream& in) {
  const auto len = get<std::uint32_t>(in);
  std::string s(len, '\0');
  if (!in.read(s.data(), len)) throw SchemaError("truncated binary dataset cache");
  return s;
}

}  // namespace cache_detail

inline void save_dataset_cache(const GraphDataset& ds, const std::filesystem::path& path, CacheFormat format) {
  using namespace cache_detail;
  if (format == CacheFormat::Json) {
    std::ofstream out(path);
    if (!out) throw IngestionError("cannot write " + path.string());
    out << dataset_to_json(ds).dump();
    return;
  }
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IngestionError("cannot write " + path.string());
  out.write(kMagic, sizeof kMagic);
  put<std::uint32_t>(out, kDatasetCacheVersion);
  put_string(out, ds.name);
  put<std::int32_t>(out, ds.num_classes);
  put<std::int32_t>(out, ds.feature_dim);
  put<std::int32_t>(out, static_cast<std::int32_t>(ds.feature_source));
  put<std::int32_t>(out, ds.rejected_edgeless);
  put<std::uint64_t>(out, ds.graphs.size());
  for (const auto& g : ds.graphs) {
    put<std::int32_t>(out, g.id);
    put<std::int32_t>(out, g.label);
    put<std::int32_t>(out, g.num_nodes());
    const auto el = canonical_edges(g);
    put<std::uint64_t>(out, el.size());
    for (auto [a, b] : el.edges) {
      put<std::int32_t>(out, a);
      put<std::int32_t>(out, b);
    }
    out.write(reinterpret_cast<const char*>(g.features.data()),
              static_cast<std::streamsize>(sizeof(double) * g.features.size()));
  }
}

inline GraphDataset load_dataset_cache(const std::filesystem::path& path) {
  using namespace cache_detail;
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IngestionError("cannot open " + path.string());
  char magic[8] = {};
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof magic) != 0) {
    in.clear();
    in.seekg(0);
    nlohmann::json j;
    try {
      in >> j;
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError(std::string("dataset cache is neither binary nor JSON: ") + e.what());
    }
    return dataset_from_json(j);
  }
  if (get<std::uint32_t>(in) != kDatasetCacheVersion) throw SchemaError("unsupported dataset cache version");
  GraphDataset ds;
  ds.name = get_string(in);
  ds.num_classes = get<std::int32_t>(in);
  ds.feature_dim = get<std::int32_t>(in);
  ds.feature_source = static_cast<FeatureSource>(get<std::int32_t>(in));
  ds.rejected_edgeless = get<std::int32_t>(in);
  const auto count = get<std::uint64_t>(in);
  for (std::uint64_t k = 0; k < count; ++k) {
    const int id = get<std::int32_t>(in);
    const int label = get<std::int32_t>(in);
    const int n = get<std::int32_t>(in);
    const auto m = get<std::uint64_t>(in);
    std::vector<Edge> edges;
    for (std::uint64_t e = 0; e < m; ++e) {
      const int a = get<std::int32_t>(in);
      const int b = get<std::int32_t>(in);
      edges.emplace_back(a, b);
    }
    Graph g = make_graph(n, edges, label, id);
    g.features = Matrix(n, ds.feature_dim);
    if (!in.read(reinterpret_cast<char*>(g.features.data()),
                 static_cast<std::streamsize>(sizeof(double) * g.features.size())))
      throw SchemaError("truncated binary dataset cache");
    ds.graphs.push_back(std::move(g));
  }
  return ds;
}

}  // namespace egc2
