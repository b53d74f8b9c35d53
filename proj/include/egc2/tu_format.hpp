#pragma once

// Reader and writer for the TU graph-kernel benchmark layout:
//   {name}_A.txt              "u, v" per line, 1-based global node ids
//   {name}_graph_indicator.txt graph id (1-based) of every node
//   {name}_graph_labels.txt   class value of every graph
//   {name}_node_labels.txt    optional, one categorical label per node
//   {name}_node_attributes.txt optional, comma-separated reals per node

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "egc2/graph.hpp"
#include "egc2/log.hpp"

namespace egc2 {

namespace tu_detail {

inline std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r");
  return std::string(s.substr(b, e - b + 1));
}

inline std::vector<std::string> split_commas(const std::string& line) {
  std::vector<std::string> out;
  std::string_view rest = line;
  while (true) {
    const auto pos = rest.find(',');
    out.push_back(trim(rest.substr(0, pos)));
    if (pos == std::string_view::npos) break;
    rest.remove_prefix(pos + 1);
  }
  return out;
}

inline long long parse_int(const std::string& token, const std::filesystem::path& file, int line) {
  long long value = 0;
  const char* begin = token.data();
  const char* end = token.data() + token.size();
  auto [ptr, ec] = std::from_chars(begin, end, value);
  if (token.empty() || ec != std::errc() || ptr != end)
    throw FormatError(file.filename().string() + ":" + std::to_string(line) + ": non-integer token '" + token + "'");
  return value;
}

inline double parse_real(const std::string& token, const std::filesystem::path& file, int line) {
  try {
    std::size_t used = 0;
    const double v = std::stod(token, &used);
    if (used != token.size()) throw std::invalid_argument(token);
    return v;
  } catch (const std::exception&) {
    throw FormatError(file.filename().string() + ":" + std::to_string(line) + ": non-numeric token '" + token + "'");
  }
}

// Non-empty lines of a file, paired with their 1-based line numbers.
inline std::vector<std::pair<int, std::string>> read_lines(const std::filesystem::path& file) {
  std::ifstream in(file);
  if (!in) throw IngestionError("cannot open " + file.string());
  std::vector<std::pair<int, std::string>> out;
  std::string line;
  int number = 0;
  while (std::getline(in, line)) {
    ++number;
    std::string t = trim(line);
    if (!t.empty()) out.emplace_back(number, std::move(t));
  }
  return out;
}

inline std::filesystem::path require(const std::filesystem::path& dir, const std::string& name,
                                     const std::string& suffix) {
  auto p = dir / (name + suffix);
  if (!std::filesystem::exists(p)) throw IngestionError("missing mandatory file " + p.filename().string());
  return p;
}

}  // namespace tu_detail

inline GraphDataset load_tu_dataset(const std::filesystem::path& directory, const std::string& name) {
  using namespace tu_detail;
  const auto a_path = require(directory, name, "_A.txt");
  const auto ind_path = require(directory, name, "_graph_indicator.txt");
  const auto gl_path = require(directory, name, "_graph_labels.txt");
  const auto nl_path = directory / (name + "_node_labels.txt");
  const auto na_path = directory / (name + "_node_attributes.txt");

  // Node -> graph membership.
  std::vector<long long> graph_of;
  for (const auto& [ln, text] : read_lines(ind_path)) graph_of.push_back(parse_int(text, ind_path, ln));
  const long long num_nodes_total = static_cast<long long>(graph_of.size());

  std::vector<long long> raw_labels;
  for (const auto& [ln, text] : read_lines(gl_path)) raw_labels.push_back(parse_int(text, gl_path, ln));
  const long long num_graphs = static_cast<long long>(raw_labels.size());

  std::vector<int> first_node(num_graphs + 1, -1), count(num_graphs, 0);
  for (long long v = 0; v < num_nodes_total; ++v) {
    const long long g = graph_of[v];
    if (g < 1 || g > num_graphs)
      throw FormatError(ind_path.filename().string() + ":" + std::to_string(v + 1) + ": graph id out of range");
    if (first_node[g - 1] < 0) first_node[g - 1] = static_cast<int>(v);
    ++count[g - 1];
  }
  // Local index of every node inside its graph (TU files list nodes graph by graph).
  std::vector<int> local(num_nodes_total);
  {
    std::vector<int> next(num_graphs, 0);
    for (long long v = 0; v < num_nodes_total; ++v) local[v] = next[graph_of[v] - 1]++;
  }

  std::vector<Graph> graphs(num_graphs);
  for (long long g = 0; g < num_graphs; ++g) {
    graphs[g].id = static_cast<int>(g);
    graphs[g].adjacency = Matrix::Zero(count[g], count[g]);
  }

  int self_loops = 0;
  for (const auto& [ln, text] : read_lines(a_path)) {
    const auto tok = split_commas(text);
    if (tok.size() != 2)
      throw FormatError(a_path.filename().string() + ":" + std::to_string(ln) + ": expected 'u, v'");
    const long long u = parse_int(tok[0], a_path, ln);
    const long long v = parse_int(tok[1], a_path, ln);
    if (u < 1 || u > num_nodes_total || v < 1 || v > num_nodes_total)
      throw FormatError(a_path.filename().string() + ":" + std::to_string(ln) + ": node id out of range");
    if (graph_of[u - 1] != graph_of[v - 1])
      throw FormatError(a_path.filename().string() + ":" + std::to_string(ln) + ": edge crosses graphs");
    if (u == v) {
      ++self_loops;
      continue;
    }
    auto& adj = graphs[graph_of[u - 1] - 1].adjacency;
    adj(local[u - 1], local[v - 1]) = 1.0;
    adj(local[v - 1], local[u - 1]) = 1.0;
  }
  if (self_loops > 0) log::warn(name + ": dropped " + std::to_string(self_loops) + " self-loop entries");

  GraphDataset ds;
  ds.name = name;

  // Graph labels -> contiguous classes in sorted order of the raw values.
  std::map<long long, int> class_of;
  for (long long y : raw_labels) class_of.emplace(y, 0);
  {
    int c = 0;
    for (auto& [value, idx] : class_of) idx = c++;
  }
  ds.num_classes = static_cast<int>(class_of.size());
  for (long long g = 0; g < num_graphs; ++g) graphs[g].label = class_of[raw_labels[g]];

  if (std::filesystem::exists(nl_path)) {
    std::vector<long long> node_labels;
    for (const auto& [ln, text] : read_lines(nl_path)) {
      // Some dumps carry extra comma-separated columns; the first is the label.
      node_labels.push_back(parse_int(split_commas(text).front(), nl_path, ln));
    }
    if (static_cast<long long>(node_labels.size()) != num_nodes_total)
      throw FormatError(nl_path.filename().string() + ": expected one label per node");
    std::map<long long, int> column;
    for (long long l : node_labels) column.emplace(l, 0);
    int c = 0;
    for (auto& [value, idx] : column) idx = c++;
    ds.feature_dim = c;
    ds.feature_source = FeatureSource::NodeLabels;
    for (long long g = 0; g < num_graphs; ++g) graphs[g].features = Matrix::Zero(count[g], c);
    for (long long v = 0; v < num_nodes_total; ++v)
      graphs[graph_of[v] - 1].features(local[v], column[node_labels[v]]) = 1.0;
  } else if (std::filesystem::exists(na_path)) {
    auto lines = read_lines(na_path);
    if (static_cast<long long>(lines.size()) != num_nodes_total)
      throw FormatError(na_path.filename().string() + ": expected one attribute row per node");
    int dim = -1;
    std::vector<std::vector<double>> rows;
    for (const auto& [ln, text] : lines) {
      std::vector<double> row;
      for (const auto& tok : split_commas(text)) row.push_back(parse_real(tok, na_path, ln));
      if (dim < 0) dim = static_cast<int>(row.size());
      if (static_cast<int>(row.size()) != dim)
        throw FormatError(na_path.filename().string() + ":" + std::to_string(ln) + ": ragged attribute row");
      rows.push_back(std::move(row));
    }
    ds.feature_dim = dim;
    ds.feature_source = FeatureSource::NodeAttributes;
    for (long long g = 0; g < num_graphs; ++g) graphs[g].features = Matrix::Zero(count[g], dim);
    for (long long v = 0; v < num_nodes_total; ++v)
      for (int c = 0; c < dim; ++c) graphs[graph_of[v] - 1].features(local[v], c) = rows[v][c];
  } else {
    int max_degree = 0;
    for (const auto& g : graphs)
      for (int v = 0; v < g.num_nodes(); ++v) max_degree = std::max(max_degree, g.degree(v));
    ds.feature_dim = max_degree + 1;
    ds.feature_source = FeatureSource::Degree;
    for (auto& g : graphs) g.features = synthesize_degree_features(g, max_degree);
  }

  for (auto& g : graphs) {
    if (g.num_edges() == 0) {
      ++ds.rejected_edgeless;
      continue;
    }
    ds.graphs.push_back(std::move(g));
  }
  if (ds.rejected_edgeless > 0)
    log::warn(name + ": rejected " + std::to_string(ds.rejected_edgeless) + " graphs without edges");
  for (int c = 0; c < ds.num_classes; ++c)
    if (ds.class_counts()[c] == 0) log::warn(name + ": class " + std::to_string(c) + " has no graphs");
  return ds;
}

// Writes `dataset` in TU layout. Labels are written as class indices; node
// label datasets write the one-hot column index, other sources write their
// feature rows as node attributes so reloading reproduces them exactly.
inline void write_tu_dataset(const GraphDataset& dataset, const std::filesystem::path& directory,
                             const std::string& name) {
  std::filesystem::create_directories(directory);
  std::ofstream a(directory / (name + "_A.txt"));
  std::ofstream ind(directory / (name + "_graph_indicator.txt"));
  std::ofstream gl(directory / (name + "_graph_labels.txt"));
  const bool labels = dataset.feature_source == FeatureSource::NodeLabels;
  std::ofstream feat(directory / (name + (labels ? "_node_labels.txt" : "_node_attributes.txt")));
  feat << std::setprecision(17);
  if (!a || !ind || !gl || !feat) throw IngestionError("cannot write TU files under " + directory.string());

  long long offset = 0;
  for (std::size_t gi = 0; gi < dataset.graphs.size(); ++gi) {
    const Graph& g = dataset.graphs[gi];
    const int n = g.num_nodes();
    for (int i = 0; i < n; ++i) {
      ind << gi + 1 << '\n';
      if (labels) {
        Eigen::Index col = 0;
        g.features.row(i).maxCoeff(&col);
        feat << col << '\n';
      } else {
        for (int c = 0; c < g.features.cols(); ++c) feat << (c ? ", " : "") << g.features(i, c);
        feat << '\n';
      }
    }
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        if (i != j && g.adjacency(i, j) != 0.0) a << offset + i + 1 << ", " << offset + j + 1 << '\n';
    gl << g.label << '\n';
    offset += n;
  }
}

}  // namespace egc2
