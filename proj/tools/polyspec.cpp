// Command-line front end: synthetic dataset generation, homophily
// estimation, training, and beta sweeps over the polynomial spectral
// filters.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "polyspec/bench.hpp"
#include "polyspec/dataset.hpp"
#include "polyspec/llm.hpp"
#include "polyspec/neural.hpp"

namespace {

constexpr const char* kApiKeyEnv = "POLYSPEC_API_KEY";

std::string env_api_key() {
  const char* key = std::getenv(kApiKeyEnv);
  return key ? key : "";
}

void add_homophily_flags(CLI::App* cmd, polyspec::HomophilyConfig& h,
                         std::string& source_str) {
  cmd->add_option("--sample-size", h.sample_size, "Edges sampled for estimation")
      ->default_val(100);
  cmd->add_option("--votes", h.votes, "Queries per edge (odd)")->default_val(5);
  cmd->add_option_function<std::string>(
         "--strategy",
         [&h](const std::string& s) { h.strategy = polyspec::parse_prompt_variant(s); },
         "Prompt strategy: vanilla|cot|vote|hybrid")
      ->default_str("hybrid");
  cmd->add_option("--epsilon", h.mock_epsilon, "Mock client flip probability")
      ->default_val(0.0);
  cmd->add_option("--h-seed", h.seed, "Seed for edge sampling / mock noise")
      ->default_val(0);
  cmd->add_option("--endpoint", h.endpoint, "Chat completions URL");
  cmd->add_option("--model", h.model, "Model name")->default_val("gpt-4o-mini");
  cmd->add_option("--input-rate", h.rates.input_per_million, "USD per 1M input tokens")
      ->default_val(0.0);
  cmd->add_option("--output-rate", h.rates.output_per_million, "USD per 1M output tokens")
      ->default_val(0.0);
  cmd->add_option("--parallelism", h.parallelism, "Concurrent edge queries")
      ->default_val(1);
  cmd->add_option("--requery", h.requery_budget,
                  "Extra queries per edge to replace unparseable answers")
      ->default_val(0);
  (void)source_str;
}

int cmd_gen_sbm(int n, int classes, double p_in, double p_out, int dim, double noise,
                std::uint64_t seed, const std::string& out) {
  polyspec::Dataset ds = polyspec::gen_sbm(n, classes, p_in, p_out, dim, noise, seed);
  polyspec::save_bundle(ds, out);
  double h = 0.0;
  try {
    h = polyspec::edge_homophily(ds.graph, ds.labels);
    std::printf("wrote %s: n=%d |E|=%d edge_homophily=%.4f\n", out.c_str(), ds.n(),
                ds.graph.num_edges(), h);
  } catch (const polyspec::UndefinedHomophilyError&) {
    std::printf("wrote %s: n=%d |E|=0 (homophily undefined)\n", out.c_str(), ds.n());
  }
  return 0;
}

int cmd_estimate(const std::string& data, const std::string& source_str,
                 polyspec::HomophilyConfig h, const std::string& out) {
  h.api_key = env_api_key();
  polyspec::parse_homophily_source(source_str, h);
  const polyspec::Dataset ds = polyspec::load_bundle(data);
  const polyspec::ResolvedHomophily r = polyspec::resolve_homophily(ds, h);
  polyspec::write_json_file(out, polyspec::homophily_report_json(r));
  std::printf("h_hat=%.6f source=%s sample=%d\n", r.h_hat, r.source_name.c_str(),
              r.sample_size);
  if (r.estimate) {
    const auto& u = r.estimate->usage;
    std::printf("tokens: prompt=%ld completion=%ld cost_usd=%.6f\n", u.prompt_tokens,
                u.completion_tokens, u.cost_usd);
    if (!r.estimate->failed_edges.empty()) {
      std::fprintf(stderr, "%zu edges failed in transport; report is partial\n",
                   r.estimate->failed_edges.size());
      return 3;
    }
  }
  return 0;
}

int cmd_train(const std::string& data, const std::string& backbone_str, bool plus,
              double beta, int order, const std::string& homophily_str,
              polyspec::HomophilyConfig h, const std::vector<std::uint64_t>& seeds,
              polyspec::TrainConfig tc, int hidden, int jacobi_dim,
              const std::string& out_dir) {
  if (plus && homophily_str.empty()) {
    throw polyspec::ConfigError("--plus requires --homophily <source>");
  }
  const polyspec::Dataset ds = polyspec::load_bundle(data);
  polyspec::ModelSpec spec;
  spec.backbone = polyspec::parse_backbone(backbone_str);
  spec.order = order;
  spec.plus = plus;
  spec.beta = beta;
  spec.hidden = hidden;
  spec.jacobi_dim = jacobi_dim;

  std::optional<double> h_used;
  polyspec::BasisMatrix basis;
  const polyspec::BasisMatrix* basis_ptr = nullptr;
  if (plus) {
    h.api_key = env_api_key();
    polyspec::parse_homophily_source(homophily_str, h);
    const auto resolved = polyspec::resolve_homophily(ds, h);
    h_used = resolved.h_hat;
    basis = polyspec::build_basis_matrix(ds.graph, ds.features, order, resolved.h_hat);
    basis_ptr = &basis;
  }

  std::filesystem::create_directories(out_dir);
  std::vector<double> accs;
  for (std::uint64_t seed : seeds) {
    polyspec::TrainConfig cfg = tc;
    cfg.seed = seed;
    const polyspec::TrainResult result =
        polyspec::train(ds, spec, h_used.value_or(0.0), cfg, basis_ptr);
    const auto j = polyspec::metrics_to_json(spec.backbone, plus, plus ? beta : 1.0,
                                             order, seed, h_used, result.metrics);
    const std::string file =
        seeds.size() == 1 ? "metrics.json" : "metrics_seed" + std::to_string(seed) + ".json";
    polyspec::write_json_file(std::filesystem::path(out_dir) / file, j);
    std::printf("seed=%llu test_accuracy=%.4f per_epoch_ms=%.2f total_s=%.2f\n",
                static_cast<unsigned long long>(seed), result.metrics.test_accuracy,
                result.metrics.per_epoch_ms, result.metrics.total_s);
    accs.push_back(result.metrics.test_accuracy);
  }
  if (accs.size() > 1) {
    double mean, stddev;
    polyspec::detail::sample_stats(accs, mean, stddev);
    std::printf("mean=%.4f std=%.4f over %zu seeds\n", mean, stddev, accs.size());
  }
  return 0;
}

int cmd_benchmark(const std::string& config_path, const std::string& data_override,
                  const std::string& out_override, int workers_override,
                  int epochs_override) {
  polyspec::BenchmarkConfig cfg;
  if (!config_path.empty()) {
    cfg = polyspec::parse_benchmark_config(polyspec::detail::parse_json_file(config_path));
  }
  if (!data_override.empty()) cfg.dataset_path = data_override;
  if (!out_override.empty()) cfg.out_dir = out_override;
  if (workers_override > 0) cfg.workers = workers_override;
  if (epochs_override > 0) cfg.train.epochs = epochs_override;
  cfg.homophily.api_key = env_api_key();
  cfg.validate();

  const polyspec::Dataset ds = polyspec::load_bundle(cfg.dataset_path);
  const polyspec::BenchmarkResult result = polyspec::run_benchmark(cfg, ds);

  std::filesystem::create_directories(cfg.out_dir);
  polyspec::write_results_csv(std::filesystem::path(cfg.out_dir) / "results.csv", result);
  polyspec::write_best_beta_csv(std::filesystem::path(cfg.out_dir) / "best_beta.csv", result);

  std::printf("h_hat=%.6f (%s)\n", result.homophily.h_hat,
              result.homophily.source_name.c_str());
  for (const auto& c : result.best_per_backbone) {
    std::printf("%s: best beta=%.1f mean_test_acc=%.4f\n",
                polyspec::to_string(c.backbone).c_str(), c.beta, c.mean);
  }
  for (const auto& r : result.rows) {
    if (!r.ok) {
      std::fprintf(stderr, "cell %s beta=%.1f seed=%llu failed: %s\n",
                   polyspec::to_string(r.backbone).c_str(), r.beta,
                   static_cast<unsigned long long>(r.seed), r.error.c_str());
    }
  }
  return result.all_ok ? 0 : 4;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Homophily-guided polynomial spectral graph filters"};
  app.require_subcommand(1);

  // gen-sbm
  int n = 1000, classes = 4, dim = 16;
  double p_in = 0.02, p_out = 0.002, noise = 1.0;
  std::uint64_t seed = 0;
  std::string out_path;
  auto* gen = app.add_subcommand("gen-sbm", "Generate a stochastic block model bundle");
  gen->add_option("--n", n, "Node count")->default_val(1000);
  gen->add_option("--classes", classes, "Class count")->default_val(4);
  gen->add_option("--p-in", p_in, "Intra-class edge probability")->default_val(0.02);
  gen->add_option("--p-out", p_out, "Inter-class edge probability")->default_val(0.002);
  gen->add_option("--dim", dim, "Feature dimension")->default_val(16);
  gen->add_option("--noise", noise, "Feature noise scale")->default_val(1.0);
  gen->add_option("--seed", seed, "RNG seed")->default_val(0);
  gen->add_option("--out", out_path, "Output bundle directory")->required();

  // estimate-homophily
  std::string est_data, est_source = "mock", est_out = "homophily.json";
  polyspec::HomophilyConfig est_cfg;
  auto* est = app.add_subcommand("estimate-homophily",
                                 "Estimate edge homophily via sampled node-pair queries");
  est->add_option("--data", est_data, "Bundle directory")->required();
  est->add_option("--source", est_source,
                  "llm|mock|train_labels|ground_truth|fixed:<value>")
      ->default_val("mock");
  est->add_option("--out", est_out, "Output JSON file")->default_val("homophily.json");
  add_homophily_flags(est, est_cfg, est_source);

  // train
  std::string tr_data, tr_backbone = "gpr", tr_homophily, tr_out_dir = ".";
  bool tr_plus = false;
  double tr_beta = 1.0;
  int tr_order = 10, tr_hidden = 256, tr_jacobi_dim = 0;
  std::vector<std::uint64_t> tr_seeds{0};
  polyspec::TrainConfig tr_cfg;
  polyspec::HomophilyConfig tr_hcfg;
  auto* tr = app.add_subcommand("train", "Train one filter+MLP configuration");
  tr->add_option("--data", tr_data, "Bundle directory")->required();
  tr->add_option("--backbone", tr_backbone, "gpr|bernnet|jacobi|chebnet2")
      ->default_val("gpr");
  tr->add_flag("--plus", tr_plus, "Enable heterophily-basis mixing");
  tr->add_option("--beta", tr_beta, "Mixing weight in [0,1]")->default_val(1.0);
  tr->add_option("--order,-K", tr_order, "Polynomial order")->default_val(10);
  tr->add_option("--homophily", tr_homophily,
                 "Homophily source: llm|mock|train_labels|ground_truth|fixed:<value>");
  tr->add_option("--seeds", tr_seeds, "Training seeds")->delimiter(',');
  tr->add_option("--epochs", tr_cfg.epochs, "Training epochs")->default_val(1000);
  tr->add_option("--lr", tr_cfg.learning_rate, "Learning rate")->default_val(1e-4);
  tr->add_option("--patience", tr_cfg.patience, "Early-stop patience (0 disables)")
      ->default_val(0);
  tr->add_option("--hidden", tr_hidden, "MLP hidden width")->default_val(256);
  tr->add_option("--jacobi-dim", tr_jacobi_dim, "Jacobi transform width (0 = input dim)")
      ->default_val(0);
  tr->add_option("--out-dir", tr_out_dir, "Directory for metrics JSON")->default_val(".");
  add_homophily_flags(tr, tr_hcfg, tr_homophily);

  // benchmark
  std::string bm_config, bm_data, bm_out;
  int bm_workers = 0, bm_epochs = 0;
  auto* bm = app.add_subcommand("benchmark", "Sweep backbones x beta x seeds");
  bm->add_option("--config", bm_config, "JSON config file");
  bm->add_option("--data", bm_data, "Bundle directory (overrides config)");
  bm->add_option("--out", bm_out, "Output directory (overrides config)");
  bm->add_option("--workers", bm_workers, "Parallel cells (overrides config)");
  bm->add_option("--epochs", bm_epochs, "Training epochs (overrides config)");

  CLI11_PARSE(app, argc, argv);

  try {
    if (gen->parsed()) return cmd_gen_sbm(n, classes, p_in, p_out, dim, noise, seed, out_path);
    if (est->parsed()) return cmd_estimate(est_data, est_source, est_cfg, est_out);
    if (tr->parsed()) {
      return cmd_train(tr_data, tr_backbone, tr_plus, tr_beta, tr_order, tr_homophily,
                       tr_hcfg, tr_seeds, tr_cfg, tr_hidden, tr_jacobi_dim, tr_out_dir);
    }
    if (bm->parsed()) return cmd_benchmark(bm_config, bm_data, bm_out, bm_workers, bm_epochs);
  } catch (const polyspec::TransportError& e) {
    std::fprintf(stderr, "transport error: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
