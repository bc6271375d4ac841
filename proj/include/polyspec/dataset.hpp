#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyspec/errors.hpp"
#include "polyspec/graph.hpp"
#include "polyspec/rng.hpp"

namespace polyspec {

struct NodeText {
  std::string title;
  std::string text;
};

struct Split {
  std::vector<int> train, val, test;
  bool empty() const { return train.empty() && val.empty() && test.empty(); }
};

/// A graph bundle: topology, features, labels, optional per-node texts and
/// transductive splits.
struct Dataset {
  std::string name;
  Graph graph;
  Matrix features;                      // n x d
  std::vector<int> labels;              // values in [0, num_classes)
  int num_classes = 0;
  std::vector<std::string> categories;  // optional, size num_classes if present
  std::vector<NodeText> texts;          // optional, size n if present
  Split splits;

  int n() const { return graph.n; }
  int dim() const { return static_cast<int>(features.cols()); }
  bool has_texts() const { return !texts.empty(); }

  void validate() const {
    if (features.rows() != graph.n) {
      throw InvalidInputError("Dataset: feature rows " + std::to_string(features.rows()) +
                              " != node count " + std::to_string(graph.n));
    }
    if (static_cast<int>(labels.size()) != graph.n) {
      throw InvalidInputError("Dataset: label count != node count");
    }
    for (int i = 0; i < graph.n; ++i) {
      if (labels[i] < 0 || labels[i] >= num_classes) {
        throw InvalidInputError("Dataset: label " + std::to_string(labels[i]) +
                                " at node " + std::to_string(i) + " outside [0," +
                                std::to_string(num_classes) + ")");
      }
    }
    if (!categories.empty() && static_cast<int>(categories.size()) != num_classes) {
      throw InvalidInputError("Dataset: categories size != num_classes");
    }
    if (!texts.empty() && static_cast<int>(texts.size()) != graph.n) {
      throw InvalidInputError("Dataset: texts present but not one record per node");
    }
    std::unordered_set<int> seen;
    auto check_side = [&](const std::vector<int>& idx, const char* side) {
      for (int i : idx) {
        if (i < 0 || i >= graph.n) {
          throw InvalidInputError(std::string("Dataset: ") + side + " index out of range");
        }
        if (!seen.insert(i).second) {
          throw InvalidInputError("Dataset: splits are not disjoint at node " +
                                  std::to_string(i));
        }
      }
    };
    check_side(splits.train, "train");
    check_side(splits.val, "val");
    check_side(splits.test, "test");
  }
};

struct SplitFractions {
  double train = 0.6;
  double val = 0.2;  // test gets the remainder
};

/// Seeded shuffle split. Fractions follow the common 60/20/20 regime by
/// default; pass {0.2, 0.1} for a 20/10/70 split.
inline Split make_split(int n, SplitFractions f, std::uint64_t seed) {
  std::vector<int> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_combine(seed, 0x5114ULL));
  for (int i = n - 1; i > 0; --i) {
    const auto j = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(i) + 1));
    std::swap(order[i], order[j]);
  }
  const int n_train = static_cast<int>(f.train * n);
  const int n_val = static_cast<int>(f.val * n);
  Split s;
  s.train.assign(order.begin(), order.begin() + n_train);
  s.val.assign(order.begin() + n_train, order.begin() + n_train + n_val);
  s.test.assign(order.begin() + n_train + n_val, order.end());
  return s;
}

namespace detail {

inline std::ifstream open_input(const std::filesystem::path& p, std::ios::openmode mode = {}) {
  std::ifstream in(p, mode);
  if (!in) throw IoError("cannot open " + p.string());
  return in;
}

inline nlohmann::json parse_json_file(const std::filesystem::path& p) {
  auto in = open_input(p);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw IoError("invalid JSON in " + p.string() + ": " + e.what());
  }
  return j;
}

}  // namespace detail

struct LoadOptions {
  std::uint64_t split_seed = 0;
  SplitFractions fractions{};
};

/// Write a bundle directory: meta.json, edges.csv, features.bin (float32
/// little-endian, row-major), labels.csv, and optionally texts.jsonl and
/// splits.json.
inline void save_bundle(const Dataset& ds, const std::filesystem::path& dir) {
  ds.validate();
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory " + dir.string() + ": " + ec.message());

  nlohmann::json meta{
      {"name", ds.name},
      {"n", ds.graph.n},
      {"d", ds.dim()},
      {"num_classes", ds.num_classes},
      {"categories", ds.categories},
      {"feature_dtype", "f32le"},
  };
  {
    std::ofstream out(dir / "meta.json");
    if (!out) throw IoError("cannot write " + (dir / "meta.json").string());
    out << meta.dump(2) << "\n";
  }
  {
    std::ofstream out(dir / "edges.csv");
    if (!out) throw IoError("cannot write " + (dir / "edges.csv").string());
    out << "src,dst\n";
    for (const auto& [u, v] : ds.graph.edges) out << u << "," << v << "\n";
  }
  {
    std::ofstream out(dir / "features.bin", std::ios::binary);
    if (!out) throw IoError("cannot write " + (dir / "features.bin").string());
    std::vector<float> row(ds.features.cols());
    for (Eigen::Index i = 0; i < ds.features.rows(); ++i) {
      for (Eigen::Index j = 0; j < ds.features.cols(); ++j) {
        row[j] = static_cast<float>(ds.features(i, j));
      }
      out.write(reinterpret_cast<const char*>(row.data()),
                static_cast<std::streamsize>(row.size() * sizeof(float)));
    }
  }
  {
    std::ofstream out(dir / "labels.csv");
    if (!out) throw IoError("cannot write " + (dir / "labels.csv").string());
    out << "id,label\n";
    for (int i = 0; i < ds.graph.n; ++i) out << i << "," << ds.labels[i] << "\n";
  }
  if (ds.has_texts()) {
    std::ofstream out(dir / "texts.jsonl");
    if (!out) throw IoError("cannot write " + (dir / "texts.jsonl").string());
    for (int i = 0; i < ds.graph.n; ++i) {
      nlohmann::json rec{{"id", i}, {"title", ds.texts[i].title}, {"text", ds.texts[i].text}};
      out << rec.dump() << "\n";
    }
  }
  if (!ds.splits.empty()) {
    nlohmann::json sj{{"train", ds.splits.train}, {"val", ds.splits.val}, {"test", ds.splits.test}};
    std::ofstream out(dir / "splits.json");
    if (!out) throw IoError("cannot write " + (dir / "splits.json").string());
    out << sj.dump() << "\n";
  }
}

/// Load and validate a bundle directory written by save_bundle. When
/// splits.json is absent a seeded split is generated from opts.
inline Dataset load_bundle(const std::filesystem::path& dir, const LoadOptions& opts = {}) {
  const auto meta_path = dir / "meta.json";
  if (!std::filesystem::exists(meta_path)) throw IoError("missing file " + meta_path.string());
  const auto meta = detail::parse_json_file(meta_path);

  Dataset ds;
  try {
    ds.name = meta.value("name", "");
    const int n = meta.at("n").get<int>();
    const int d = meta.at("d").get<int>();
    ds.num_classes = meta.at("num_classes").get<int>();
    if (meta.contains("categories")) {
      ds.categories = meta["categories"].get<std::vector<std::string>>();
    }
    const std::string dtype = meta.value("feature_dtype", "f32le");
    if (dtype != "f32le") {
      throw IoError(meta_path.string() + ": unsupported feature_dtype '" + dtype + "'");
    }
    if (n < 0 || d < 0 || ds.num_classes <= 0) {
      throw IoError(meta_path.string() + ": invalid n/d/num_classes");
    }

    // edges.csv
    const auto edges_path = dir / "edges.csv";
    auto ein = detail::open_input(edges_path);
    std::string line;
    if (!std::getline(ein, line)) throw IoError(edges_path.string() + ": empty file");
    std::vector<std::pair<int, int>> edges;
    while (std::getline(ein, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw IoError(edges_path.string() + ": bad row '" + line + "'");
      edges.emplace_back(std::stoi(line.substr(0, comma)), std::stoi(line.substr(comma + 1)));
    }
    try {
      ds.graph = build_graph(n, edges);
    } catch (const InvalidInputError& e) {
      throw IoError(edges_path.string() + ": " + e.what());
    }

    // features.bin
    const auto feat_path = dir / "features.bin";
    auto fin = detail::open_input(feat_path, std::ios::binary);
    fin.seekg(0, std::ios::end);
    const auto bytes = static_cast<std::uint64_t>(fin.tellg());
    const std::uint64_t expected = std::uint64_t(n) * std::uint64_t(d) * sizeof(float);
    if (bytes != expected) {
      throw IoError(feat_path.string() + ": has " + std::to_string(bytes) +
                    " bytes, expected " + std::to_string(expected) + " for n=" +
                    std::to_string(n) + " d=" + std::to_string(d));
    }
    fin.seekg(0, std::ios::beg);
    std::vector<float> raw(std::size_t(n) * std::size_t(d));
    fin.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(bytes));
    if (!fin) throw IoError(feat_path.string() + ": short read");
    ds.features.resize(n, d);
    for (int i = 0; i < n; ++i) {
      for (int j = 0; j < d; ++j) ds.features(i, j) = raw[std::size_t(i) * d + j];
    }

    // labels.csv
    const auto labels_path = dir / "labels.csv";
    auto lin = detail::open_input(labels_path);
    if (!std::getline(lin, line)) throw IoError(labels_path.string() + ": empty file");
    ds.labels.assign(n, -1);
    while (std::getline(lin, line)) {
      if (line.empty()) continue;
      const auto comma = line.find(',');
      if (comma == std::string::npos) throw IoError(labels_path.string() + ": bad row '" + line + "'");
      const int id = std::stoi(line.substr(0, comma));
      const int label = std::stoi(line.substr(comma + 1));
      if (id < 0 || id >= n) throw IoError(labels_path.string() + ": node id out of range");
      if (label < 0 || label >= ds.num_classes) {
        throw IoError(labels_path.string() + ": label " + std::to_string(label) +
                      " >= num_classes " + std::to_string(ds.num_classes));
      }
      ds.labels[id] = label;
    }
    for (int i = 0; i < n; ++i) {
      if (ds.labels[i] < 0) throw IoError(labels_path.string() + ": missing label for node " + std::to_string(i));
    }

    // texts.jsonl (optional)
    const auto texts_path = dir / "texts.jsonl";
    if (std::filesystem::exists(texts_path)) {
      auto tin = detail::open_input(texts_path);
      ds.texts.assign(n, {});
      std::vector<bool> seen(n, false);
      while (std::getline(tin, line)) {
        if (line.empty()) continue;
        nlohmann::json rec;
        try {
          rec = nlohmann::json::parse(line);
        } catch (const nlohmann::json::exception& e) {
          throw IoError(texts_path.string() + ": bad line: " + e.what());
        }
        const int id = rec.at("id").get<int>();
        if (id < 0 || id >= n) throw IoError(texts_path.string() + ": node id out of range");
        if (seen[id]) throw IoError(texts_path.string() + ": duplicate record for node " + std::to_string(id));
        seen[id] = true;
        ds.texts[id] = {rec.value("title", ""), rec.value("text", "")};
      }
      for (int i = 0; i < n; ++i) {
        if (!seen[i]) throw IoError(texts_path.string() + ": missing record for node " + std::to_string(i));
      }
    }

    // splits.json (optional; generated when absent)
    const auto splits_path = dir / "splits.json";
    if (std::filesystem::exists(splits_path)) {
      const auto sj = detail::parse_json_file(splits_path);
      ds.splits.train = sj.at("train").get<std::vector<int>>();
      ds.splits.val = sj.at("val").get<std::vector<int>>();
      ds.splits.test = sj.at("test").get<std::vector<int>>();
    } else {
      ds.splits = make_split(n, opts.fractions, opts.split_seed);
    }
  } catch (const nlohmann::json::exception& e) {
    throw IoError(dir.string() + ": " + e.what());
  }

  ds.validate();
  return ds;
}

/// Stochastic block model with balanced round-robin class assignment.
/// Intra-class pairs edge with probability p_in, inter-class with p_out.
/// Features are the one-hot class centroid plus Gaussian noise, quantized
/// through float32 so a saved bundle reloads bit-for-bit.
inline Dataset gen_sbm(int n, int num_classes, double p_in, double p_out, int d,
                       double noise, std::uint64_t seed) {
  if (num_classes <= 0 || num_classes > n) {
    throw InvalidInputError("gen_sbm: need 0 < classes <= n");
  }
  if (d <= 0) throw InvalidInputError("gen_sbm: feature dim must be positive");
  if (p_in < 0 || p_in > 1 || p_out < 0 || p_out > 1) {
    throw InvalidInputError("gen_sbm: probabilities must lie in [0,1]");
  }

  Dataset ds;
  ds.name = "sbm_n" + std::to_string(n) + "_c" + std::to_string(num_classes);
  ds.num_classes = num_classes;
  ds.labels.resize(n);
  for (int i = 0; i < n; ++i) ds.labels[i] = i % num_classes;
  ds.categories.resize(num_classes);
  for (int c = 0; c < num_classes; ++c) ds.categories[c] = "class_" + std::to_string(c);

  Rng edge_rng(hash_combine(seed, 1));
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      const double p = (ds.labels[u] == ds.labels[v]) ? p_in : p_out;
      if (edge_rng.uniform() < p) edges.emplace_back(u, v);
    }
  }
  ds.graph = build_graph(n, edges);

  Rng feat_rng(hash_combine(seed, 2));
  ds.features = Matrix::Zero(n, d);
  for (int i = 0; i < n; ++i) {
    for (int j = 0; j < d; ++j) {
      double value = noise * feat_rng.normal();
      if (j == ds.labels[i] % d) value += 1.0;
      ds.features(i, j) = static_cast<double>(static_cast<float>(value));
    }
  }

  ds.splits = make_split(n, SplitFractions{}, hash_combine(seed, 3));
  return ds;
}

/// Seed-deterministic uniform sample of undirected edges without
/// replacement. m is clamped to |E|; an edgeless graph is an error.
struct EdgeSample {
  std::vector<std::pair<int, int>> edges;
  std::uint64_t seed = 0;
  int sample_size = 0;
};

inline EdgeSample sample_edges(const Graph& g, int m, std::uint64_t seed) {
  if (m < 1) throw InvalidInputError("sample_edges: m must be >= 1");
  if (g.edges.empty()) throw InvalidInputError("sample_edges: graph has no edges");
  const int total = g.num_edges();
  const int take = std::min(m, total);
  std::vector<int> order(total);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(hash_combine(seed, 0xedce5));
  // Partial Fisher-Yates: only the first `take` slots are needed.
  for (int i = 0; i < take; ++i) {
    const int j = i + static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(total - i)));
    std::swap(order[i], order[j]);
  }
  EdgeSample s;
  s.seed = seed;
  s.sample_size = take;
  s.edges.reserve(take);
  for (int i = 0; i < take; ++i) s.edges.push_back(g.edges[order[i]]);
  return s;
}

/// Homophily of the subgraph induced on edges whose two endpoints are both
/// in the training split.
inline double train_label_homophily(const Dataset& ds) {
  std::vector<char> in_train(ds.graph.n, 0);
  for (int i : ds.splits.train) in_train[i] = 1;
  std::size_t total = 0, same = 0;
  for (const auto& [u, v] : ds.graph.edges) {
    if (in_train[u] && in_train[v]) {
      ++total;
      same += (ds.labels[u] == ds.labels[v]) ? 1 : 0;
    }
  }
  if (total == 0) {
    throw UndefinedHomophilyError("train_label_homophily: no edge has both endpoints in the training split");
  }
  return static_cast<double>(same) / static_cast<double>(total);
}

}  // namespace polyspec
