#pragma once

#include <atomic>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "polyspec/dataset.hpp"
#include "polyspec/errors.hpp"
#include "polyspec/http_client.hpp"
#include "polyspec/llm.hpp"
#include "polyspec/neural.hpp"

namespace polyspec {

enum class HomophilySource { llm, mock, train_labels, fixed, ground_truth };

inline std::string to_string(HomophilySource s) {
  switch (s) {
    case HomophilySource::llm: return "llm";
    case HomophilySource::mock: return "mock";
    case HomophilySource::train_labels: return "train_labels";
    case HomophilySource::fixed: return "fixed";
    case HomophilySource::ground_truth: return "ground_truth";
  }
  return "?";
}

struct HomophilyConfig {
  HomophilySource source = HomophilySource::ground_truth;
  double fixed_value = 0.0;  // used when source == fixed
  int sample_size = 100;
  int votes = 5;
  PromptVariant strategy = PromptVariant::hybrid;
  double mock_epsilon = 0.0;
  std::uint64_t seed = 0;
  int parallelism = 1;
  int requery_budget = 0;
  CostRates rates{};
  std::string endpoint;
  std::string model = "gpt-4o-mini";
  std::string api_key;
};

/// Parse "llm" / "mock" / "train_labels" / "ground_truth" / "fixed:<value>".
inline void parse_homophily_source(const std::string& s, HomophilyConfig& cfg) {
  if (s.rfind("fixed:", 0) == 0) {
    cfg.source = HomophilySource::fixed;
    try {
      cfg.fixed_value = std::stod(s.substr(6));
    } catch (const std::exception&) {
      throw ConfigError("bad fixed homophily value in '" + s + "'");
    }
    if (cfg.fixed_value < 0.0 || cfg.fixed_value > 1.0) {
      throw ConfigError("fixed homophily must lie in [0,1]");
    }
    return;
  }
  if (s == "llm") cfg.source = HomophilySource::llm;
  else if (s == "mock") cfg.source = HomophilySource::mock;
  else if (s == "train_labels") cfg.source = HomophilySource::train_labels;
  else if (s == "ground_truth") cfg.source = HomophilySource::ground_truth;
  else throw ConfigError("unknown homophily source '" + s + "'");
}

struct ResolvedHomophily {
  double h_hat = 0.0;
  std::string source_name;
  std::optional<HomophilyEstimate> estimate;  // present for llm/mock
  int sample_size = 0;
  int votes = 1;
  std::string strategy = "none";
};

inline ResolvedHomophily resolve_homophily(const Dataset& ds, const HomophilyConfig& cfg) {
  ResolvedHomophily out;
  out.source_name = to_string(cfg.source);
  switch (cfg.source) {
    case HomophilySource::ground_truth:
      out.h_hat = edge_homophily(ds.graph, ds.labels);
      return out;
    case HomophilySource::train_labels:
      out.h_hat = train_label_homophily(ds);
      return out;
    case HomophilySource::fixed:
      out.h_hat = std::clamp(cfg.fixed_value, 0.0, 1.0);
      return out;
    case HomophilySource::mock:
    case HomophilySource::llm: {
      if (cfg.source == HomophilySource::llm && !ds.has_texts()) {
        throw ConfigError("llm homophily source needs texts.jsonl in the bundle");
      }
      const EdgeSample sample = sample_edges(ds.graph, cfg.sample_size, cfg.seed);
      EstimationOptions opts;
      opts.strategy = PromptStrategy::make(cfg.strategy, cfg.votes);
      opts.rates = cfg.rates;
      opts.parallelism = cfg.parallelism;
      opts.vote.requery_budget = cfg.requery_budget;
      HomophilyEstimate est;
      if (cfg.source == HomophilySource::mock) {
        MockClient client(ds.labels, cfg.mock_epsilon, cfg.seed);
        est = run_estimation(client, ds, sample, opts);
      } else {
        HttpClientConfig http;
        if (!cfg.endpoint.empty()) http.endpoint = cfg.endpoint;
        http.model = cfg.model;
        http.api_key = cfg.api_key;
        HttpChatClient client(http);
        est = run_estimation(client, ds, sample, opts);
      }
      out.h_hat = est.h_hat;
      out.sample_size = sample.sample_size;
      out.votes = opts.strategy.votes;
      out.strategy = to_string(cfg.strategy);
      out.estimate = std::move(est);
      return out;
    }
  }
  throw ConfigError("resolve_homophily: unreachable");
}

inline nlohmann::json homophily_report_json(const ResolvedHomophily& r) {
  if (r.estimate) {
    return estimate_to_json(*r.estimate, r.sample_size, r.votes, r.strategy);
  }
  HomophilyEstimate empty;
  empty.h_hat = r.h_hat;
  auto j = estimate_to_json(empty, 0, 0, r.source_name);
  return j;
}

inline nlohmann::json metrics_to_json(Backbone backbone, bool plus, double beta, int order,
                                      std::uint64_t seed, std::optional<double> h_hat_used,
                                      const Metrics& m) {
  return nlohmann::json{
      {"backbone", to_string(backbone)},
      {"plus", plus},
      {"beta", beta},
      {"K", order},
      {"seed", seed},
      {"h_hat_used", h_hat_used ? nlohmann::json(*h_hat_used) : nlohmann::json(nullptr)},
      {"val_curve", m.val_accuracy},
      {"test_accuracy", m.test_accuracy},
      {"per_epoch_ms", m.per_epoch_ms},
      {"total_s", m.total_s},
  };
}

inline void write_json_file(const std::filesystem::path& path, const nlohmann::json& j) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << j.dump(2) << "\n";
}

// ---------------------------------------------------------------------------
// Benchmark sweep
// ---------------------------------------------------------------------------

struct BenchmarkConfig {
  std::string dataset_path;
  std::string out_dir = ".";
  std::vector<Backbone> backbones{Backbone::gpr, Backbone::bern, Backbone::jacobi,
                                  Backbone::cheb2};
  std::vector<double> beta_grid{0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0};
  int order = 10;
  int hidden = 256;
  int jacobi_dim = 0;
  double jacobi_a = 1.0;
  double jacobi_b = 1.0;
  std::vector<std::uint64_t> seeds{0, 1, 2};
  TrainConfig train{};
  HomophilyConfig homophily{};
  int workers = 1;

  void validate() const {
    if (dataset_path.empty()) throw ConfigError("benchmark: dataset path required");
    if (backbones.empty()) throw ConfigError("benchmark: no backbones selected");
    if (seeds.empty()) throw ConfigError("benchmark: seed list is empty");
    if (beta_grid.empty()) throw ConfigError("benchmark: beta grid is empty");
    for (double b : beta_grid) {
      const double snapped = std::round(b * 10.0) / 10.0;
      if (b < -1e-9 || b > 1.0 + 1e-9 || std::abs(b - snapped) > 1e-9) {
        throw ConfigError("benchmark: beta " + std::to_string(b) +
                          " is not on the 0.0..1.0 tenth grid");
      }
    }
  }
};

/// JSON config: flat keys mirroring BenchmarkConfig, "homophily" nested.
inline BenchmarkConfig parse_benchmark_config(const nlohmann::json& j) {
  BenchmarkConfig cfg;
  try {
    if (j.contains("dataset")) cfg.dataset_path = j["dataset"].get<std::string>();
    if (j.contains("out_dir")) cfg.out_dir = j["out_dir"].get<std::string>();
    if (j.contains("backbones")) {
      cfg.backbones.clear();
      for (const auto& b : j["backbones"]) cfg.backbones.push_back(parse_backbone(b.get<std::string>()));
    }
    if (j.contains("beta_grid")) cfg.beta_grid = j["beta_grid"].get<std::vector<double>>();
    if (j.contains("order")) cfg.order = j["order"].get<int>();
    if (j.contains("hidden")) cfg.hidden = j["hidden"].get<int>();
    if (j.contains("jacobi_dim")) cfg.jacobi_dim = j["jacobi_dim"].get<int>();
    if (j.contains("jacobi_a")) cfg.jacobi_a = j["jacobi_a"].get<double>();
    if (j.contains("jacobi_b")) cfg.jacobi_b = j["jacobi_b"].get<double>();
    if (j.contains("seeds")) cfg.seeds = j["seeds"].get<std::vector<std::uint64_t>>();
    if (j.contains("epochs")) cfg.train.epochs = j["epochs"].get<int>();
    if (j.contains("learning_rate")) cfg.train.learning_rate = j["learning_rate"].get<double>();
    if (j.contains("patience")) cfg.train.patience = j["patience"].get<int>();
    if (j.contains("workers")) cfg.workers = j["workers"].get<int>();
    if (j.contains("homophily")) {
      const auto& h = j["homophily"];
      if (h.contains("source")) parse_homophily_source(h["source"].get<std::string>(), cfg.homophily);
      if (h.contains("fixed")) cfg.homophily.fixed_value = h["fixed"].get<double>();
      if (h.contains("sample_size")) cfg.homophily.sample_size = h["sample_size"].get<int>();
      if (h.contains("votes")) cfg.homophily.votes = h["votes"].get<int>();
      if (h.contains("strategy")) cfg.homophily.strategy = parse_prompt_variant(h["strategy"].get<std::string>());
      if (h.contains("epsilon")) cfg.homophily.mock_epsilon = h["epsilon"].get<double>();
      if (h.contains("seed")) cfg.homophily.seed = h["seed"].get<std::uint64_t>();
      if (h.contains("endpoint")) cfg.homophily.endpoint = h["endpoint"].get<std::string>();
      if (h.contains("model")) cfg.homophily.model = h["model"].get<std::string>();
      if (h.contains("input_rate")) cfg.homophily.rates.input_per_million = h["input_rate"].get<double>();
      if (h.contains("output_rate")) cfg.homophily.rates.output_per_million = h["output_rate"].get<double>();
    }
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("benchmark config: ") + e.what());
  }
  return cfg;
}

struct BenchRow {
  Backbone backbone = Backbone::gpr;
  double beta = 1.0;
  std::uint64_t seed = 0;
  std::string h_source;
  double h_hat = 0.0;
  double test_acc = 0.0;
  double epoch_ms = 0.0;
  double total_s = 0.0;
  bool ok = false;
  std::string error;
};

struct BenchCell {
  Backbone backbone;
  double beta;
  double mean = 0.0, stddev = 0.0;
  double mean_epoch_ms = 0.0, mean_total_s = 0.0;
};

struct BenchmarkResult {
  ResolvedHomophily homophily;
  std::vector<BenchRow> rows;
  std::vector<BenchCell> cells;
  std::vector<BenchCell> best_per_backbone;
  bool all_ok = true;
};

namespace detail {

inline std::string fmt_full(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", x);
  return buf;
}

inline std::string fmt_short(double x) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%g", x);
  return buf;
}

inline void sample_stats(const std::vector<double>& xs, double& mean, double& stddev) {
  mean = 0.0;
  for (double x : xs) mean += x;
  mean /= static_cast<double>(xs.size());
  stddev = 0.0;
  if (xs.size() > 1) {
    double acc = 0.0;
    for (double x : xs) acc += (x - mean) * (x - mean);
    stddev = std::sqrt(acc / static_cast<double>(xs.size() - 1));
  }
}

}  // namespace detail

inline constexpr const char* kResultsCsvHeader =
    "backbone,plus,beta,seed,h_source,h_hat,test_acc,epoch_ms,total_s";

inline void write_results_csv(const std::filesystem::path& path,
                              const BenchmarkResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << kResultsCsvHeader << "\n";
  for (const auto& r : result.rows) {
    out << to_string(r.backbone) << ",true," << detail::fmt_short(r.beta) << ","
        << r.seed << "," << r.h_source << "," << detail::fmt_full(r.h_hat) << ",";
    if (r.ok) {
      out << detail::fmt_full(r.test_acc) << "," << detail::fmt_full(r.epoch_ms) << ","
          << detail::fmt_full(r.total_s);
    } else {
      out << "nan,nan,nan";
    }
    out << "\n";
  }
  for (const auto& c : result.cells) {
    out << to_string(c.backbone) << ",true," << detail::fmt_short(c.beta) << ",mean,"
        << result.homophily.source_name << "," << detail::fmt_full(result.homophily.h_hat)
        << "," << detail::fmt_full(c.mean) << "," << detail::fmt_full(c.mean_epoch_ms)
        << "," << detail::fmt_full(c.mean_total_s) << "\n";
    out << to_string(c.backbone) << ",true," << detail::fmt_short(c.beta) << ",std,"
        << result.homophily.source_name << "," << detail::fmt_full(result.homophily.h_hat)
        << "," << detail::fmt_full(c.stddev) << ",," << "\n";
  }
}

inline void write_best_beta_csv(const std::filesystem::path& path,
                                const BenchmarkResult& result) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << "backbone,plus,best_beta,mean_test_acc\n";
  for (const auto& c : result.best_per_backbone) {
    out << to_string(c.backbone) << ",true," << detail::fmt_short(c.beta) << ","
        << detail::fmt_full(c.mean) << "\n";
  }
}

/// Sweep backbones x beta grid x seeds with the basis mixing enabled. The
/// homophily estimate and the heterophily basis are resolved once and shared
/// by every cell; cells run on a small worker pool and each failure is
/// recorded in its row without stopping the sweep.
inline BenchmarkResult run_benchmark(const BenchmarkConfig& cfg, const Dataset& ds) {
  cfg.validate();
  BenchmarkResult result;
  result.homophily = resolve_homophily(ds, cfg.homophily);

  const BasisMatrix basis =
      build_basis_matrix(ds.graph, ds.features, cfg.order, result.homophily.h_hat);

  struct Cell {
    Backbone backbone;
    double beta;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (Backbone b : cfg.backbones) {
    for (double beta : cfg.beta_grid) {
      for (std::uint64_t seed : cfg.seeds) cells.push_back({b, beta, seed});
    }
  }
  result.rows.resize(cells.size());

  auto run_cell = [&](std::size_t i) {
    const Cell& cell = cells[i];
    BenchRow row;
    row.backbone = cell.backbone;
    row.beta = cell.beta;
    row.seed = cell.seed;
    row.h_source = result.homophily.source_name;
    row.h_hat = result.homophily.h_hat;
    try {
      ModelSpec spec;
      spec.backbone = cell.backbone;
      spec.order = cfg.order;
      spec.plus = true;
      spec.beta = cell.beta;
      spec.hidden = cfg.hidden;
      spec.jacobi_dim = cfg.jacobi_dim;
      spec.jacobi_a = cfg.jacobi_a;
      spec.jacobi_b = cfg.jacobi_b;
      TrainConfig tc = cfg.train;
      tc.seed = cell.seed;
      const TrainResult tr = train(ds, spec, result.homophily.h_hat, tc, &basis);
      row.test_acc = tr.metrics.test_accuracy;
      row.epoch_ms = tr.metrics.per_epoch_ms;
      row.total_s = tr.metrics.total_s;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    result.rows[i] = std::move(row);
  };

  const int workers = std::max(1, cfg.workers);
  if (workers == 1) {
    for (std::size_t i = 0; i < cells.size(); ++i) run_cell(i);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const int pool_size = static_cast<int>(std::min<std::size_t>(workers, cells.size()));
    for (int w = 0; w < pool_size; ++w) {
      pool.emplace_back([&] {
        for (std::size_t i = next.fetch_add(1); i < cells.size(); i = next.fetch_add(1)) {
          run_cell(i);
        }
      });
    }
    for (auto& t : pool) t.join();
  }

  // Per-(backbone, beta) summaries over seeds.
  for (Backbone b : cfg.backbones) {
    for (double beta : cfg.beta_grid) {
      std::vector<double> accs, epochs, totals;
      for (const auto& r : result.rows) {
        if (r.backbone == b && r.beta == beta && r.ok) {
          accs.push_back(r.test_acc);
          epochs.push_back(r.epoch_ms);
          totals.push_back(r.total_s);
        }
      }
      if (accs.empty()) continue;
      BenchCell cell;
      cell.backbone = b;
      cell.beta = beta;
      detail::sample_stats(accs, cell.mean, cell.stddev);
      double ignored;
      detail::sample_stats(epochs, cell.mean_epoch_ms, ignored);
      detail::sample_stats(totals, cell.mean_total_s, ignored);
      result.cells.push_back(cell);
    }
  }
  for (Backbone b : cfg.backbones) {
    const BenchCell* best = nullptr;
    for (const auto& c : result.cells) {
      if (c.backbone == b && (!best || c.mean > best->mean)) best = &c;
    }
    if (best) result.best_per_backbone.push_back(*best);
  }
  for (const auto& r : result.rows) result.all_ok = result.all_ok && r.ok;
  return result;
}

}  // namespace polyspec
