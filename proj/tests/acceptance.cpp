// Acceptance suite: one self-contained check per release criterion, each
// printed as a PASS/FAIL line. Exit status is the number of failures.
//
// Run all:            polyspec_acceptance
// Run a single check: polyspec_acceptance 7

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "polyspec/bench.hpp"
#include "polyspec/dataset.hpp"
#include "polyspec/llm.hpp"
#include "polyspec/neural.hpp"

using namespace polyspec;

namespace {

struct CheckFailure {
  std::string message;
};

void require(bool ok, const std::string& message) {
  if (!ok) throw CheckFailure{message};
}

std::string fmt(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6g", x);
  return buf;
}

Graph random_graph(int n, double p, std::uint64_t seed) {
  Rng rng(seed);
  std::vector<std::pair<int, int>> edges;
  for (int u = 0; u < n; ++u) {
    for (int v = u + 1; v < n; ++v) {
      if (rng.uniform() < p) edges.emplace_back(u, v);
    }
  }
  return build_graph(n, edges);
}

Matrix random_matrix(int rows, int cols, std::uint64_t seed) {
  Rng rng(seed);
  Matrix x(rows, cols);
  for (int i = 0; i < rows; ++i) {
    for (int j = 0; j < cols; ++j) x(i, j) = rng.normal();
  }
  return x;
}

FilterParams random_coeff_params(Backbone b, int order, std::uint64_t seed) {
  FilterParams p = make_filter_params(b, order);
  Rng rng(seed);
  for (int k = 0; k <= order; ++k) p.coeffs[k] = rng.uniform(-1.0, 1.0);
  return p;
}

FilterParams random_jacobi_params(int order, int d_in, int d_out, std::uint64_t seed) {
  FilterParams p = make_jacobi_params(order, d_in, d_out, seed);
  Rng rng(seed + 1);
  for (int k = 0; k <= order; ++k) {
    for (int l = 0; l < d_out; ++l) p.alpha(k, l) = rng.uniform(-1.0, 1.0);
  }
  return p;
}

// -------------------------------------------------------------------------
// 1. beta = 1 reduction
// -------------------------------------------------------------------------
std::string check_beta_one_reduction() {
  double worst = 0.0;
  for (int instance = 0; instance < 10; ++instance) {
    const int n = 20 + 3 * instance;  // up to 47
    const Graph g = random_graph(n, 0.2, 900 + instance);
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      const Matrix X = random_matrix(n, 3, 1000 + 10 * instance + seed);
      const BasisMatrix basis = build_basis_matrix(g, X, 5, 0.37);
      for (Backbone b : {Backbone::gpr, Backbone::bern, Backbone::jacobi, Backbone::cheb2}) {
        FilterParams p = b == Backbone::jacobi
                             ? random_jacobi_params(5, 3, 2, 2000 + seed)
                             : random_coeff_params(b, 5, 2000 + seed);
        const Matrix original = filter_forward(p, make_workspace(g, X, p));
        p.plus_enabled = true;
        p.beta = 1.0;
        const Matrix plus = filter_forward(p, make_workspace(g, X, p, &basis));
        worst = std::max(worst, (plus - original).cwiseAbs().maxCoeff());
      }
    }
  }
  require(worst < 1e-12, "max |plus - original| = " + fmt(worst));
  return "max deviation " + fmt(worst) + " over 10 graphs x 3 seeds x 4 backbones";
}

// -------------------------------------------------------------------------
// 2. Gram property of the heterophily basis
// -------------------------------------------------------------------------
std::string check_gram_property() {
  const Graph g = random_graph(40, 0.2, 77);
  const Vector x = random_matrix(40, 1, 78).col(0);
  double worst_mid = 0.0, worst_limit = 0.0;
  for (int tenth = 0; tenth <= 10; ++tenth) {
    const double h = tenth / 10.0;
    for (int K : {2, 5, 10}) {
      const HeterophilyBasis b = build_basis(g, x, K, h);
      Matrix gram(K + 1, K + 1);
      for (int i = 0; i <= K; ++i) {
        for (int j = 0; j <= K; ++j) gram(i, j) = b.vectors[i].dot(b.vectors[j]);
      }
      const Matrix want = (1.0 - b.c) * Matrix::Identity(K + 1, K + 1) +
                          b.c * Matrix::Ones(K + 1, K + 1);
      const double dev = (gram - want).cwiseAbs().maxCoeff();
      worst_mid = std::max(worst_mid, dev);
      if (tenth == 0) {
        worst_limit = std::max(
            worst_limit, (gram - Matrix::Identity(K + 1, K + 1)).cwiseAbs().maxCoeff());
      }
      if (tenth == 10) {
        worst_limit =
            std::max(worst_limit, (gram - Matrix::Ones(K + 1, K + 1)).cwiseAbs().maxCoeff());
      }
    }
  }
  require(worst_mid < 1e-6, "gram deviation " + fmt(worst_mid));
  require(worst_limit < 1e-8, "limit-case deviation " + fmt(worst_limit));
  return "grid deviation " + fmt(worst_mid) + ", limit deviation " + fmt(worst_limit);
}

// -------------------------------------------------------------------------
// 3. Dense spectral-oracle equivalence
// -------------------------------------------------------------------------
std::string check_spectral_oracle() {
  double worst = 0.0;
  for (int n : {30, 50}) {
    const Graph g = random_graph(n, 0.15, 300 + n);
    const auto dec = dense_eigendecomposition(g);
    const Matrix X = random_matrix(n, 3, 400 + n);

    auto dense_filter = [&](const FilterParams& p, const Matrix& operand, bool per_col) {
      Matrix out(n, operand.cols());
      for (Eigen::Index l = 0; l < operand.cols(); ++l) {
        std::vector<double> lams(dec.eigenvalues.begin(), dec.eigenvalues.end());
        const auto resp = filter_response(p, lams, per_col ? static_cast<int>(l) : 0);
        Vector c = dec.eigenvectors.transpose() * operand.col(l);
        for (int i = 0; i < n; ++i) c[i] *= resp[i];
        out.col(l) = dec.eigenvectors * c;
      }
      return out;
    };

    for (Backbone b : {Backbone::gpr, Backbone::bern, Backbone::cheb2}) {
      const FilterParams p = random_coeff_params(b, 6, 500 + n);
      const Matrix got = filter_forward(p, make_workspace(g, X, p));
      worst = std::max(worst, (got - dense_filter(p, X, false)).cwiseAbs().maxCoeff());
    }
    {
      const FilterParams p = random_jacobi_params(6, 3, 2, 600 + n);
      const Matrix got = jacobi_forward(g, X, p.weight, p);
      worst = std::max(
          worst, (got - dense_filter(p, X * p.weight, true)).cwiseAbs().maxCoeff());
    }
    // Partition-of-unity / all-ones identities collapse to the identity map.
    const FilterParams bern1 = make_filter_params(Backbone::bern, 7);
    worst = std::max(worst, (bern_forward(g, X, bern1) - X).cwiseAbs().maxCoeff());
    const FilterParams cheb1 = make_filter_params(Backbone::cheb2, 7);
    worst = std::max(worst, (cheb2_forward(g, X, cheb1) - X).cwiseAbs().maxCoeff());
  }
  require(worst < 1e-6, "max oracle deviation " + fmt(worst));
  return "max deviation " + fmt(worst) + " across backbones and identity checks";
}

// -------------------------------------------------------------------------
// 4. Gradient correctness by central finite differences
// -------------------------------------------------------------------------
std::string check_gradients() {
  const Graph g = random_graph(12, 0.35, 41);
  const Matrix X = random_matrix(12, 3, 42);
  std::vector<int> labels(12);
  Rng lrng(43);
  for (auto& l : labels) l = static_cast<int>(lrng.uniform_index(3));
  const std::vector<int> train_idx{0, 1, 3, 5, 8, 11};
  const BasisMatrix basis = build_basis_matrix(g, X, 3, 0.37);

  auto pure_loss = [&](const SpectralModel& m, const FilterWorkspace& ws) {
    const Matrix logits = mlp_forward(m.mlp, filter_forward(m.filter, ws));
    return cross_entropy_loss(logits, labels, train_idx);
  };

  double worst = 0.0;
  long checked = 0;
  int case_id = 0;
  for (Backbone b : {Backbone::gpr, Backbone::bern, Backbone::jacobi, Backbone::cheb2}) {
    for (bool plus : {false, true}) {
      ModelSpec spec;
      spec.backbone = b;
      spec.order = 3;
      spec.plus = plus;
      spec.beta = 0.6;
      spec.hidden = 16;
      spec.jacobi_dim = 2;
      SpectralModel model = make_model(spec, 3, 3, 800 + case_id);
      Rng jrng(900 + case_id);
      for (auto& view : param_views(model)) {
        for (Eigen::Index j = 0; j < view.size; ++j) view.data[j] += 0.3 * jrng.normal();
      }
      const FilterWorkspace ws = make_workspace(g, X, model.filter, plus ? &basis : nullptr);
      ModelGrads grads = grad(model, ws, labels, train_idx);
      auto pviews = param_views(model);
      auto gviews = grad_views(grads, b);
      const double step = 1e-5;
      for (std::size_t t = 0; t < pviews.size(); ++t) {
        for (Eigen::Index j = 0; j < pviews[t].size; ++j) {
          double& xref = pviews[t].data[j];
          const double saved = xref;
          xref = saved + step;
          const double up = pure_loss(model, ws);
          xref = saved - step;
          const double down = pure_loss(model, ws);
          xref = saved;
          const double fd = (up - down) / (2.0 * step);
          const double analytic = gviews[t].data[j];
          const double rel =
              std::abs(fd - analytic) / std::max({std::abs(fd), std::abs(analytic), 1e-3});
          worst = std::max(worst, rel);
          ++checked;
        }
      }
      ++case_id;
    }
  }
  require(worst < 1e-4, "worst relative error " + fmt(worst));
  return std::to_string(checked) + " parameters checked, worst relative error " + fmt(worst);
}

// -------------------------------------------------------------------------
// 5. Estimator statistics under the noisy mock oracle
// -------------------------------------------------------------------------
std::string check_estimator_statistics() {
  const Dataset ds = gen_sbm(500, 4, 0.025, 0.01, 4, 0.8, 123);
  const double h = edge_homophily(ds.graph, ds.labels);
  const int m = 100, seeds = 20;

  // Exhaustive noiseless sampling reproduces the exact ratio.
  {
    MockClient client(ds.labels, 0.0, 1);
    const EdgeSample all = sample_edges(ds.graph, ds.graph.num_edges(), 2);
    const auto est = run_estimation(client, ds, all);
    require(est.h_hat == h, "exhaustive noiseless estimate " + fmt(est.h_hat) +
                                " != exact " + fmt(h));
  }

  std::string note = "h=" + fmt(h);
  for (double eps : {0.0, 0.1, 0.2}) {
    double q = 0.0;
    for (int j = 3; j <= 5; ++j) {
      double c = 1.0;
      for (int i = 1; i <= j; ++i) c *= double(5 - j + i) / double(i);
      q += c * std::pow(1.0 - eps, j) * std::pow(eps, 5 - j);
    }
    const double expected = h * q + (1.0 - h) * (1.0 - q);
    double sum = 0.0;
    for (int s = 0; s < seeds; ++s) {
      MockClient client(ds.labels, eps, 5000 + s);
      const EdgeSample sample = sample_edges(ds.graph, m, 6000 + s);
      sum += run_estimation(client, ds, sample).h_hat;
    }
    const double mean = sum / seeds;
    const double sigma = std::sqrt(expected * (1.0 - expected) / (seeds * m));
    require(std::abs(mean - expected) <= 3.0 * sigma,
            "eps=" + fmt(eps) + ": pooled mean " + fmt(mean) + " vs expected " +
                fmt(expected) + " (3 sigma = " + fmt(3 * sigma) + ")");
    note += "; eps=" + fmt(eps) + " mean " + fmt(mean) + " expected " + fmt(expected);
  }
  return note;
}

// -------------------------------------------------------------------------
// 6. Majority-rule decision table
// -------------------------------------------------------------------------
class PatternClient : public ChatClient {
 public:
  explicit PatternClient(int pattern) : pattern_(pattern) {}
  ChatResponse complete(const ChatRequest&, const QueryMeta& meta) override {
    ChatResponse r;
    r.text = ((pattern_ >> meta.query_index) & 1) ? "They belong to the same category."
                                                  : "They belong to different categories.";
    return r;
  }

 private:
  int pattern_;
};

std::string check_majority_rule() {
  const NodeText a{"A", "text a"}, b{"B", "text b"};
  const std::vector<std::string> cats{"x", "y"};
  const auto strategy = PromptStrategy::make(PromptVariant::hybrid);
  for (int pattern = 0; pattern < 32; ++pattern) {
    PatternClient client(pattern);
    const EdgeVote vote = vote_edge(client, {0, 1}, a, b, cats, strategy);
    const int ones = __builtin_popcount(static_cast<unsigned>(pattern));
    require(vote.same_count == ones, "pattern " + std::to_string(pattern) + ": r mismatch");
    require(vote.label == (ones >= 3 ? 1 : 0),
            "pattern " + std::to_string(pattern) + ": y mismatch");
  }
  return "all 32 five-vote patterns decide y = 1(r >= 3)";
}

// -------------------------------------------------------------------------
// 7. Desk-scale learning on synthetic graphs
// -------------------------------------------------------------------------
std::string check_desk_scale_learning() {
  struct Regime {
    const char* name;
    double p_in, p_out;
  };
  // Both regimes target mean degree ~5 at n=1000, C=4.
  const std::vector<Regime> regimes{{"heterophilic", 0.002, 0.006},
                                    {"homophilic", 0.018, 0.000667}};
  const std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  const double plus_beta = 0.8;

  std::string note;
  for (const Regime& regime : regimes) {
    Dataset ds = gen_sbm(1000, 4, regime.p_in, regime.p_out, 16, 0.6, 42);
    ds.splits = make_split(1000, {0.05, 0.15}, 7);  // 5% training labels
    const double h = edge_homophily(ds.graph, ds.labels);
    const BasisMatrix basis = build_basis_matrix(ds.graph, ds.features, 10, h);

    std::vector<int> counts(4, 0);
    for (int i : ds.splits.test) ++counts[ds.labels[i]];
    const double majority =
        static_cast<double>(*std::max_element(counts.begin(), counts.end())) /
        static_cast<double>(ds.splits.test.size());

    for (Backbone b : {Backbone::gpr, Backbone::bern, Backbone::jacobi, Backbone::cheb2}) {
      double mean_orig = 0.0, mean_plus = 0.0;
      for (std::uint64_t seed : seeds) {
        ModelSpec spec;
        spec.backbone = b;
        spec.order = 10;
        TrainConfig cfg;
        cfg.epochs = 600;
        cfg.learning_rate = 5e-3;
        cfg.seed = seed;
        spec.plus = false;
        mean_orig += train(ds, spec, h, cfg).metrics.test_accuracy / seeds.size();
        spec.plus = true;
        spec.beta = plus_beta;
        mean_plus += train(ds, spec, h, cfg, &basis).metrics.test_accuracy / seeds.size();
      }
      require(mean_plus >= mean_orig - 0.01,
              std::string(regime.name) + " " + to_string(b) + ": plus mean " +
                  fmt(mean_plus) + " fell more than 1 point below original " +
                  fmt(mean_orig));
      require(mean_orig >= majority + 0.20,
              std::string(regime.name) + " " + to_string(b) + ": original mean " +
                  fmt(mean_orig) + " not 20 points above majority " + fmt(majority));
      require(mean_plus >= majority + 0.20,
              std::string(regime.name) + " " + to_string(b) + ": plus mean " +
                  fmt(mean_plus) + " not 20 points above majority " + fmt(majority));
      note += std::string(regime.name[0] == 'h' && regime.name[1] == 'e' ? "het" : "hom") +
              "/" + to_string(b) + " orig " + fmt(mean_orig) + " plus " + fmt(mean_plus) +
              "; ";
    }
  }
  return note;
}

// -------------------------------------------------------------------------
// 8. Cost accounting arithmetic
// -------------------------------------------------------------------------
std::string check_cost_accounting() {
  struct Case {
    long in_tokens, out_tokens;
    double in_rate, out_rate;
  };
  const std::vector<Case> cases{
      {220000, 0, 0.15, 0.60},      // 0.22M input at $0.15/M -> $0.033
      {470000, 120000, 0.15, 0.60},
      {1, 1, 123.456, 789.012},
      {0, 0, 0.15, 0.60},
  };
  for (const Case& c : cases) {
    std::vector<ChatResponse> responses(3);
    responses[0].prompt_tokens = c.in_tokens / 2;
    responses[0].completion_tokens = c.out_tokens / 2;
    responses[1].prompt_tokens = c.in_tokens - c.in_tokens / 2;
    responses[1].completion_tokens = c.out_tokens - c.out_tokens / 2;
    responses[2].prompt_tokens = 0;
    responses[2].completion_tokens = 0;
    const Usage u = accumulate_usage(responses, {c.in_rate, c.out_rate});
    const double want = c.in_tokens * c.in_rate / 1e6 + c.out_tokens * c.out_rate / 1e6;
    require(std::abs(u.cost_usd - want) < 1e-9,
            "cost " + fmt(u.cost_usd) + " != tokens x rates " + fmt(want));
  }
  return "dollar totals equal tokens x configured rates to 1e-9";
}

// -------------------------------------------------------------------------
// 9. CLI pipeline round-trip
// -------------------------------------------------------------------------
int run_cli(const std::string& args, const std::filesystem::path& log) {
  const std::string cmd =
      std::string(POLYSPEC_CLI_PATH) + " " + args + " > " + log.string() + " 2>&1";
  return std::system(cmd.c_str());
}

nlohmann::json load_json(const std::filesystem::path& p) {
  std::ifstream in(p);
  require(in.good(), "missing artifact " + p.string());
  nlohmann::json j;
  in >> j;
  return j;
}

nlohmann::json strip_timing(nlohmann::json j) {
  j.erase("per_epoch_ms");
  j.erase("total_s");
  return j;
}

std::vector<std::string> results_rows_without_timing(const std::filesystem::path& p) {
  std::ifstream in(p);
  require(in.good(), "missing artifact " + p.string());
  std::vector<std::string> rows;
  std::string line;
  while (std::getline(in, line)) {
    std::stringstream ss(line);
    std::string cell;
    std::vector<std::string> cells;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    std::string kept;
    for (std::size_t i = 0; i < cells.size() && i < 7; ++i) {
      kept += cells[i];
      kept += ',';
    }
    rows.push_back(kept);
  }
  return rows;
}

std::string check_pipeline_round_trip() {
  const auto root = std::filesystem::temp_directory_path() / "polyspec_acceptance_pipeline";
  std::filesystem::remove_all(root);
  std::filesystem::create_directories(root);
  const auto log = root / "log.txt";
  const std::string bundle = (root / "bundle").string();

  require(run_cli("gen-sbm --n 300 --classes 3 --p-in 0.05 --p-out 0.01 --dim 8 "
                  "--noise 0.6 --seed 11 --out " + bundle, log) == 0,
          "gen-sbm failed");

  const nlohmann::json bench_cfg{
      {"dataset", bundle},
      {"backbones", {"gpr", "chebnet2"}},
      {"order", 5},
      {"hidden", 32},
      {"seeds", {0}},
      {"epochs", 15},
      {"learning_rate", 0.003},
      {"workers", 2},
      {"homophily", {{"source", "mock"}, {"epsilon", 0.1}, {"sample_size", 100}, {"seed", 3}}},
  };
  const auto cfg_path = root / "bench.json";
  std::ofstream(cfg_path) << bench_cfg.dump();

  for (int round = 1; round <= 2; ++round) {
    const std::string out = (root / ("round" + std::to_string(round))).string();
    std::filesystem::create_directories(out);
    require(run_cli("estimate-homophily --data " + bundle +
                    " --source mock --epsilon 0.1 --sample-size 100 --h-seed 3 --out " +
                    out + "/homophily.json", log) == 0,
            "estimate-homophily failed");
    require(run_cli("train --data " + bundle +
                    " --backbone gpr --order 5 --hidden 32 --epochs 40 --lr 0.003 "
                    "--plus --beta 0.6 --homophily mock --epsilon 0.1 --sample-size 100 "
                    "--h-seed 3 --seeds 0 --out-dir " + out, log) == 0,
            "train --plus failed");
    require(run_cli("benchmark --config " + cfg_path.string() + " --out " + out, log) == 0,
            "benchmark failed");
  }

  // Schema checks on round 1.
  const auto r1 = root / "round1";
  const auto hom = load_json(r1 / "homophily.json");
  for (const char* key : {"h_hat", "sample_size", "votes_per_edge", "strategy", "per_edge", "usage"}) {
    require(hom.contains(key), std::string("homophily.json missing ") + key);
  }
  require(hom["per_edge"].is_array() && hom["per_edge"].size() == 100,
          "per_edge should carry 100 records");
  for (const char* key : {"prompt_tokens", "completion_tokens", "cost_usd"}) {
    require(hom["usage"].contains(key), std::string("usage missing ") + key);
  }
  const auto met = load_json(r1 / "metrics.json");
  for (const char* key : {"backbone", "plus", "beta", "K", "seed", "h_hat_used", "val_curve",
                          "test_accuracy", "per_epoch_ms", "total_s"}) {
    require(met.contains(key), std::string("metrics.json missing ") + key);
  }
  require(met["val_curve"].is_array() && met["val_curve"].size() == 40, "val_curve length");
  const auto rows = results_rows_without_timing(r1 / "results.csv");
  require(!rows.empty() && rows[0].rfind("backbone,plus,beta,seed,h_source,h_hat,test_acc", 0) == 0,
          "results.csv header mismatch");
  require(rows.size() == 1 + 2 * 11 + 2 * 2 * 11, "results.csv row count");

  // Determinism: the two rounds agree except for wall-clock fields.
  require(load_json(r1 / "homophily.json") == load_json(root / "round2" / "homophily.json"),
          "homophily.json differs between identical runs");
  require(strip_timing(met) == strip_timing(load_json(root / "round2" / "metrics.json")),
          "metrics.json differs between identical runs (timing excluded)");
  require(rows == results_rows_without_timing(root / "round2" / "results.csv"),
          "results.csv differs between identical runs (timing columns excluded)");

  std::filesystem::remove_all(root);
  return "gen-sbm -> estimate -> train --plus -> benchmark, deterministic twice";
}

}  // namespace

int main(int argc, char** argv) {
  struct Criterion {
    int id;
    const char* name;
    std::function<std::string()> run;
  };
  const std::vector<Criterion> criteria{
      {1, "beta=1 reduction equals the original filters (<1e-12)", check_beta_one_reduction},
      {2, "heterophily-basis Gram matrix matches (1-c)I + c*11^T", check_gram_property},
      {3, "matvec filters match the dense spectral oracle (<1e-6)", check_spectral_oracle},
      {4, "analytic gradients pass central finite differences (<1e-4)", check_gradients},
      {5, "mock-estimator statistics follow the majority-vote binomial model",
       check_estimator_statistics},
      {6, "five-vote majority decision table (all 32 patterns)", check_majority_rule},
      {7, "desk-scale learning: basis mixing does not hurt, both beat majority+20",
       check_desk_scale_learning},
      {8, "usage cost equals tokens x configured rates (<1e-9)", check_cost_accounting},
      {9, "CLI pipeline round-trip is schema-valid and deterministic",
       check_pipeline_round_trip},
  };

  int only = 0;
  if (argc > 1) only = std::atoi(argv[1]);

  int failures = 0;
  for (const auto& c : criteria) {
    if (only != 0 && c.id != only) continue;
    const auto t0 = std::chrono::steady_clock::now();
    std::string note;
    bool ok = true;
    try {
      note = c.run();
    } catch (const CheckFailure& f) {
      ok = false;
      note = f.message;
    } catch (const std::exception& e) {
      ok = false;
      note = std::string("unexpected error: ") + e.what();
    }
    const double secs =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    std::printf("[%s] %d. %s (%.1fs)%s%s\n", ok ? "PASS" : "FAIL", c.id, c.name, secs,
                note.empty() ? "" : " -- ", note.c_str());
    std::fflush(stdout);
    if (!ok) ++failures;
  }
  return failures;
}
