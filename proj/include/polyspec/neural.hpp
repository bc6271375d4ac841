#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "polyspec/basis.hpp"
#include "polyspec/dataset.hpp"
#include "polyspec/errors.hpp"
#include "polyspec/filters.hpp"
#include "polyspec/graph.hpp"
#include "polyspec/rng.hpp"

namespace polyspec {

/// Three-layer MLP head applied to the filtered signal.
struct MlpParams {
  Matrix W1, W2, W3;
  Vector b1, b2, b3;

  int in_dim() const { return static_cast<int>(W1.rows()); }
  int hidden() const { return static_cast<int>(W1.cols()); }
  int out_dim() const { return static_cast<int>(W3.cols()); }

  static MlpParams init(int in_dim, int num_classes, int hidden, std::uint64_t seed) {
    MlpParams p;
    Rng rng(hash_combine(seed, 0x3199ULL));
    auto glorot = [&rng](Matrix& w, int rows, int cols) {
      w.resize(rows, cols);
      const double limit = std::sqrt(6.0 / (rows + cols));
      for (int i = 0; i < rows; ++i) {
        for (int j = 0; j < cols; ++j) w(i, j) = rng.uniform(-limit, limit);
      }
    };
    glorot(p.W1, in_dim, hidden);
    glorot(p.W2, hidden, hidden);
    glorot(p.W3, hidden, num_classes);
    p.b1 = Vector::Zero(hidden);
    p.b2 = Vector::Zero(hidden);
    p.b3 = Vector::Zero(num_classes);
    return p;
  }
};

/// Logits for every row of Z (softmax lives inside the loss).
inline Matrix mlp_forward(const MlpParams& p, const Matrix& Z) {
  if (Z.cols() != p.W1.rows()) {
    throw DimensionError("mlp_forward: input has " + std::to_string(Z.cols()) +
                         " columns, expected " + std::to_string(p.W1.rows()));
  }
  Matrix h1 = ((Z * p.W1).rowwise() + p.b1.transpose()).cwiseMax(0.0);
  Matrix h2 = ((h1 * p.W2).rowwise() + p.b2.transpose()).cwiseMax(0.0);
  return (h2 * p.W3).rowwise() + p.b3.transpose();
}

namespace detail {

inline double log_sum_exp_row(const Matrix& logits, Eigen::Index row) {
  const double m = logits.row(row).maxCoeff();
  double acc = 0.0;
  for (Eigen::Index c = 0; c < logits.cols(); ++c) acc += std::exp(logits(row, c) - m);
  return m + std::log(acc);
}

inline int argmax_row(const Matrix& logits, Eigen::Index row) {
  int best = 0;
  double best_value = logits(row, 0);
  for (Eigen::Index c = 1; c < logits.cols(); ++c) {
    if (logits(row, c) > best_value) {  // ties resolve to the lowest class
      best_value = logits(row, c);
      best = static_cast<int>(c);
    }
  }
  return best;
}

}  // namespace detail

/// Summed (not averaged) negative log-likelihood over the given node ids.
inline double cross_entropy_loss(const Matrix& logits, const std::vector<int>& labels,
                                 const std::vector<int>& node_ids) {
  if (node_ids.empty()) throw TrainingError("cross_entropy_loss: empty node set");
  double loss = 0.0;
  for (int j : node_ids) {
    loss += detail::log_sum_exp_row(logits, j) - logits(j, labels[j]);
  }
  return loss;
}

/// Argmax accuracy over the given node ids; ties break to the lowest class.
inline double accuracy(const Matrix& logits, const std::vector<int>& labels,
                       const std::vector<int>& node_ids) {
  if (node_ids.empty()) throw EvaluationError("accuracy: empty node set");
  std::size_t hits = 0;
  for (int j : node_ids) {
    if (detail::argmax_row(logits, j) == labels[j]) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(node_ids.size());
}

/// Full model: polynomial filter followed by the MLP head.
struct SpectralModel {
  FilterParams filter;
  MlpParams mlp;
};

struct ModelSpec {
  Backbone backbone = Backbone::gpr;
  int order = 10;
  bool plus = false;
  double beta = 1.0;
  double jacobi_a = 1.0;
  double jacobi_b = 1.0;
  int jacobi_dim = 0;  // output dim of the jacobi feature transform; 0 -> input dim
  int hidden = 256;
};

inline SpectralModel make_model(const ModelSpec& spec, int d, int num_classes,
                                std::uint64_t seed) {
  SpectralModel m;
  if (spec.backbone == Backbone::jacobi) {
    const int d_out = spec.jacobi_dim > 0 ? spec.jacobi_dim : d;
    m.filter = make_jacobi_params(spec.order, d, d_out, seed, spec.jacobi_a, spec.jacobi_b);
    m.mlp = MlpParams::init(d_out, num_classes, spec.hidden, seed);
  } else {
    m.filter = make_filter_params(spec.backbone, spec.order);
    m.mlp = MlpParams::init(d, num_classes, spec.hidden, seed);
  }
  m.filter.plus_enabled = spec.plus;
  m.filter.beta = spec.plus ? spec.beta : 1.0;
  return m;
}

/// Gradients for every learnable tensor. beta and the Jacobi (a, b) pair are
/// swept hyperparameters, not trained.
struct ModelGrads {
  Vector coeffs;
  Matrix alpha, weight;
  Matrix W1, W2, W3;
  Vector b1, b2, b3;

  static ModelGrads zeros_like(const SpectralModel& m) {
    ModelGrads g;
    if (m.filter.backbone == Backbone::jacobi) {
      g.alpha = Matrix::Zero(m.filter.alpha.rows(), m.filter.alpha.cols());
      g.weight = Matrix::Zero(m.filter.weight.rows(), m.filter.weight.cols());
    } else {
      g.coeffs = Vector::Zero(m.filter.coeffs.size());
    }
    g.W1 = Matrix::Zero(m.mlp.W1.rows(), m.mlp.W1.cols());
    g.W2 = Matrix::Zero(m.mlp.W2.rows(), m.mlp.W2.cols());
    g.W3 = Matrix::Zero(m.mlp.W3.rows(), m.mlp.W3.cols());
    g.b1 = Vector::Zero(m.mlp.b1.size());
    g.b2 = Vector::Zero(m.mlp.b2.size());
    g.b3 = Vector::Zero(m.mlp.b3.size());
    return g;
  }
};

struct ParamView {
  double* data;
  Eigen::Index size;
};

/// Learnable tensors in a fixed order; grad_views matches it entry for entry.
inline std::vector<ParamView> param_views(SpectralModel& m) {
  std::vector<ParamView> v;
  if (m.filter.backbone == Backbone::jacobi) {
    v.push_back({m.filter.alpha.data(), m.filter.alpha.size()});
    v.push_back({m.filter.weight.data(), m.filter.weight.size()});
  } else {
    v.push_back({m.filter.coeffs.data(), m.filter.coeffs.size()});
  }
  for (Matrix* w : {&m.mlp.W1, &m.mlp.W2, &m.mlp.W3}) v.push_back({w->data(), w->size()});
  for (Vector* b : {&m.mlp.b1, &m.mlp.b2, &m.mlp.b3}) v.push_back({b->data(), b->size()});
  return v;
}

inline std::vector<ParamView> grad_views(ModelGrads& g, Backbone backbone) {
  std::vector<ParamView> v;
  if (backbone == Backbone::jacobi) {
    v.push_back({g.alpha.data(), g.alpha.size()});
    v.push_back({g.weight.data(), g.weight.size()});
  } else {
    v.push_back({g.coeffs.data(), g.coeffs.size()});
  }
  for (Matrix* w : {&g.W1, &g.W2, &g.W3}) v.push_back({w->data(), w->size()});
  for (Vector* b : {&g.b1, &g.b2, &g.b3}) v.push_back({b->data(), b->size()});
  return v;
}

inline Matrix gather_rows(const Matrix& m, const std::vector<int>& idx) {
  Matrix out(static_cast<Eigen::Index>(idx.size()), m.cols());
  for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = m.row(idx[i]);
  return out;
}

namespace detail {

// Loss over the chosen rows plus gradients through the MLP; returns the
// gradient w.r.t. the gathered filter output rows.
inline double mlp_loss_backward(const MlpParams& p, const Matrix& Zrows,
                                const std::vector<int>& labels,
                                const std::vector<int>& node_ids, ModelGrads& grads,
                                Matrix& GZrows) {
  const Eigen::Index m = Zrows.rows();
  Matrix h1_pre = (Zrows * p.W1).rowwise() + p.b1.transpose();
  Matrix h1 = h1_pre.cwiseMax(0.0);
  Matrix h2_pre = (h1 * p.W2).rowwise() + p.b2.transpose();
  Matrix h2 = h2_pre.cwiseMax(0.0);
  Matrix logits = (h2 * p.W3).rowwise() + p.b3.transpose();

  double loss = 0.0;
  Matrix glogits(m, logits.cols());
  for (Eigen::Index i = 0; i < m; ++i) {
    const double lse = log_sum_exp_row(logits, i);
    const int y = labels[node_ids[static_cast<std::size_t>(i)]];
    loss += lse - logits(i, y);
    for (Eigen::Index c = 0; c < logits.cols(); ++c) {
      glogits(i, c) = std::exp(logits(i, c) - lse);
    }
    glogits(i, y) -= 1.0;
  }

  grads.W3 += h2.transpose() * glogits;
  grads.b3 += glogits.colwise().sum();
  Matrix gh2 = (glogits * p.W3.transpose()).cwiseProduct(
      (h2_pre.array() > 0.0).cast<double>().matrix());
  grads.W2 += h1.transpose() * gh2;
  grads.b2 += gh2.colwise().sum();
  Matrix gh1 = (gh2 * p.W2.transpose()).cwiseProduct(
      (h1_pre.array() > 0.0).cast<double>().matrix());
  grads.W1 += Zrows.transpose() * gh1;
  grads.b1 += gh1.colwise().sum();
  GZrows = gh1 * p.W1.transpose();
  return loss;
}

// Gradients for the filter coefficients (and jacobi weight) given the loss
// gradient at the gathered training rows of Z.
inline void filter_backward(const SpectralModel& model, const FilterWorkspace& ws,
                            const std::vector<int>& train_idx, const Matrix& GZtr,
                            const JacobiCache& jac, ModelGrads& grads) {
  const FilterParams& fp = model.filter;
  const int K = fp.order;
  switch (fp.backbone) {
    case Backbone::gpr: {
      const auto& source = fp.plus_enabled ? ws.mixed : ws.terms;
      for (int k = 0; k <= K; ++k) {
        grads.coeffs[k] += GZtr.cwiseProduct(gather_rows(source[k], train_idx)).sum();
      }
      break;
    }
    case Backbone::bern: {
      const auto& source = fp.plus_enabled ? ws.mixed : ws.terms;
      for (int k = 0; k <= K; ++k) {
        const double g_eff = GZtr.cwiseProduct(gather_rows(source[k], train_idx)).sum();
        grads.coeffs[k] += 2.0 * fp.coeffs[k] * g_eff;
      }
      break;
    }
    case Backbone::cheb2: {
      const double beta = fp.plus_enabled ? fp.beta : 1.0;
      const auto nodes = chebyshev_nodes(K);
      std::vector<double> q(K + 1);
      for (int k = 0; k <= K; ++k) {
        q[k] = GZtr.cwiseProduct(gather_rows(ws.terms[k], train_idx)).sum();
      }
      for (int j = 0; j <= K; ++j) {
        double acc = 0.0;
        for (int k = 0; k <= K; ++k) {
          const double pref = (k == 0 ? 1.0 : 2.0) / (K + 1);
          acc += pref * chebyshev_t(k, nodes[j]) * q[k];
        }
        grads.coeffs[j] += beta * acc;
      }
      break;
    }
    case Backbone::jacobi: {
      for (int k = 0; k <= K; ++k) {
        grads.alpha.row(k) +=
            GZtr.cwiseProduct(gather_rows(jac.mixed[k], train_idx)).colwise().sum();
      }
      // Weight gradient via the adjoint recurrence: P_k(A_hat) is symmetric,
      // so the propagated-path term is X^T P_k(A_hat) GZ scaled by alpha.
      Matrix GZ = Matrix::Zero(ws.X.rows(), GZtr.cols());
      for (std::size_t i = 0; i < train_idx.size(); ++i) {
        GZ.row(train_idx[i]) = GZtr.row(static_cast<Eigen::Index>(i));
      }
      const std::vector<Matrix> R =
          jacobi_propagate(*ws.graph, GZ, fp.jacobi_a, fp.jacobi_b, K);
      const double beta = fp.plus_enabled ? fp.beta : 1.0;
      Matrix scaled_sum = Matrix::Zero(GZ.rows(), GZ.cols());
      for (int k = 0; k <= K; ++k) scaled_sum += R[k] * fp.alpha.row(k).asDiagonal();
      grads.weight += beta * (ws.X.transpose() * scaled_sum);
      if (fp.plus_enabled) {
        for (int k = 0; k <= K; ++k) {
          grads.weight += (1.0 - fp.beta) *
                          (ws.basis->mats[k].transpose() * (GZ * fp.alpha.row(k).asDiagonal()));
        }
      }
      break;
    }
  }
}

}  // namespace detail

/// Loss at the training nodes and exact gradients for every learnable
/// tensor. `Z_out`, when non-null, receives the filter output so callers can
/// reuse it for evaluation.
inline double loss_and_grad(const SpectralModel& model, const FilterWorkspace& ws,
                            const std::vector<int>& labels,
                            const std::vector<int>& train_idx, ModelGrads& grads,
                            Matrix* Z_out = nullptr) {
  if (train_idx.empty()) throw TrainingError("loss_and_grad: empty training set");
  JacobiCache jac;
  const bool is_jacobi = model.filter.backbone == Backbone::jacobi;
  Matrix Z = filter_forward(model.filter, ws, is_jacobi ? &jac : nullptr);
  Matrix Ztr = gather_rows(Z, train_idx);
  Matrix GZtr;
  const double loss =
      detail::mlp_loss_backward(model.mlp, Ztr, labels, train_idx, grads, GZtr);
  detail::filter_backward(model, ws, train_idx, GZtr, jac, grads);
  if (Z_out) *Z_out = std::move(Z);
  return loss;
}

/// Exact gradients of the summed training loss.
inline ModelGrads grad(const SpectralModel& model, const FilterWorkspace& ws,
                       const std::vector<int>& labels, const std::vector<int>& train_idx) {
  ModelGrads grads = ModelGrads::zeros_like(model);
  loss_and_grad(model, ws, labels, train_idx, grads);
  return grads;
}

class AdamOptimizer {
 public:
  AdamOptimizer(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {}

  void step(const std::vector<ParamView>& params, const std::vector<ParamView>& grads) {
    if (m_.empty()) {
      for (const auto& p : params) {
        m_.emplace_back(p.size, 0.0);
        v_.emplace_back(p.size, 0.0);
      }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, t_);
    const double bc2 = 1.0 - std::pow(beta2_, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
      double* x = params[i].data;
      const double* g = grads[i].data;
      auto& m = m_[i];
      auto& v = v_[i];
      for (Eigen::Index j = 0; j < params[i].size; ++j) {
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * g[j];
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * g[j] * g[j];
        x[j] -= lr_ * (m[j] / bc1) / (std::sqrt(v[j] / bc2) + eps_);
      }
    }
  }

 private:
  double lr_, beta1_, beta2_, eps_;
  long t_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

struct TrainConfig {
  int epochs = 1000;
  double learning_rate = 1e-4;
  std::uint64_t seed = 0;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  int patience = 0;  // early stopping on validation accuracy; 0 disables

  void validate() const {
    if (epochs < 1) throw ConfigError("TrainConfig: epochs must be >= 1");
    if (!(learning_rate > 0.0) && learning_rate != 0.0) {
      throw ConfigError("TrainConfig: learning rate must be >= 0");
    }
  }
};

struct Metrics {
  std::vector<double> train_loss;
  std::vector<double> val_accuracy;
  double test_accuracy = 0.0;
  double per_epoch_ms = 0.0;
  double total_s = 0.0;
  int best_epoch = -1;
};

struct TrainResult {
  SpectralModel model;
  Metrics metrics;
};

/// Full-batch training with best-validation checkpointing. The heterophily
/// basis, when mixing is enabled, is built once up front (or passed in by
/// the caller when shared across runs).
inline TrainResult train(const Dataset& ds, const ModelSpec& spec, double h_hat,
                         const TrainConfig& cfg, const BasisMatrix* shared_basis = nullptr) {
  cfg.validate();
  ds.validate();
  if (ds.splits.train.empty()) throw TrainingError("train: empty training split");
  if (ds.splits.val.empty()) throw TrainingError("train: empty validation split");
  if (ds.splits.test.empty()) throw TrainingError("train: empty test split");

  const auto t_start = std::chrono::steady_clock::now();

  BasisMatrix local_basis;
  const BasisMatrix* basis = nullptr;
  if (spec.plus) {
    if (shared_basis) {
      basis = shared_basis;
    } else {
      local_basis = build_basis_matrix(ds.graph, ds.features, spec.order, h_hat);
      basis = &local_basis;
    }
  }

  SpectralModel model = make_model(spec, ds.dim(), ds.num_classes, cfg.seed);
  const FilterWorkspace ws = make_workspace(ds.graph, ds.features, model.filter, basis);

  AdamOptimizer opt(cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps);
  Metrics metrics;
  metrics.train_loss.reserve(cfg.epochs);
  metrics.val_accuracy.reserve(cfg.epochs);

  SpectralModel best_model = model;
  double best_val = -1.0;
  int since_best = 0;

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    ModelGrads grads = ModelGrads::zeros_like(model);
    Matrix Z;
    const double loss =
        loss_and_grad(model, ws, ds.labels, ds.splits.train, grads, &Z);
    if (!std::isfinite(loss)) {
      throw TrainingError("train: non-finite loss " + std::to_string(loss) +
                          " at epoch " + std::to_string(epoch));
    }
    const Matrix val_logits = mlp_forward(model.mlp, gather_rows(Z, ds.splits.val));
    std::vector<int> val_rows(ds.splits.val.size());
    for (std::size_t i = 0; i < val_rows.size(); ++i) val_rows[i] = static_cast<int>(i);
    std::vector<int> val_labels(ds.splits.val.size());
    for (std::size_t i = 0; i < val_labels.size(); ++i) val_labels[i] = ds.labels[ds.splits.val[i]];
    const double val_acc = accuracy(val_logits, val_labels, val_rows);

    metrics.train_loss.push_back(loss);
    metrics.val_accuracy.push_back(val_acc);
    if (val_acc > best_val) {
      best_val = val_acc;
      best_model = model;
      metrics.best_epoch = epoch;
      since_best = 0;
    } else if (cfg.patience > 0 && ++since_best >= cfg.patience) {
      break;
    }

    auto params = param_views(model);
    auto gviews = grad_views(grads, model.filter.backbone);
    opt.step(params, gviews);
  }

  // Test accuracy of the checkpointed model. The workspace depends only on
  // the model configuration, not on coefficient values, so it is reusable.
  const Matrix Z = filter_forward(best_model.filter, ws);
  const Matrix logits = mlp_forward(best_model.mlp, Z);
  metrics.test_accuracy = accuracy(logits, ds.labels, ds.splits.test);

  const auto t_end = std::chrono::steady_clock::now();
  metrics.total_s = std::chrono::duration<double>(t_end - t_start).count();
  metrics.per_epoch_ms =
      1000.0 * metrics.total_s / static_cast<double>(metrics.train_loss.size());

  return {std::move(best_model), std::move(metrics)};
}

/// Argmax accuracy of a model over the given node ids.
inline double evaluate(const SpectralModel& model, const Dataset& ds,
                       const std::vector<int>& node_ids,
                       const BasisMatrix* basis = nullptr) {
  if (node_ids.empty()) throw EvaluationError("evaluate: empty node set");
  const FilterWorkspace ws = make_workspace(ds.graph, ds.features, model.filter, basis);
  const Matrix logits = mlp_forward(model.mlp, filter_forward(model.filter, ws));
  return accuracy(logits, ds.labels, node_ids);
}

}  // namespace polyspec
