#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "polyspec/basis.hpp"
#include "polyspec/errors.hpp"
#include "polyspec/graph.hpp"
#include "polyspec/rng.hpp"

namespace polyspec {

enum class Backbone { gpr, bern, jacobi, cheb2 };

inline std::string to_string(Backbone b) {
  switch (b) {
    case Backbone::gpr: return "gpr";
    case Backbone::bern: return "bernnet";
    case Backbone::jacobi: return "jacobi";
    case Backbone::cheb2: return "chebnet2";
  }
  return "?";
}

inline Backbone parse_backbone(const std::string& s) {
  if (s == "gpr" || s == "gprgnn") return Backbone::gpr;
  if (s == "bern" || s == "bernnet") return Backbone::bern;
  if (s == "jacobi" || s == "jacobiconv") return Backbone::jacobi;
  if (s == "cheb2" || s == "chebnet2" || s == "chebnetii") return Backbone::cheb2;
  throw ConfigError("unknown backbone '" + s + "'");
}

/// Learnable filter state plus the mixing configuration.
///
/// coeffs is gamma for gpr/cheb2 and the raw (pre-square) theta for bern;
/// jacobi instead uses the per-output-column matrix alpha together with the
/// feature transform `weight`. `beta` blends the propagated polynomial term
/// with the heterophily basis vector of the same order when plus_enabled.
struct FilterParams {
  Backbone backbone = Backbone::gpr;
  int order = 10;  // polynomial order K; coefficient arrays have K+1 entries
  Vector coeffs;
  Matrix alpha;   // jacobi: (K+1) x d_out
  Matrix weight;  // jacobi: d x d_out
  double jacobi_a = 1.0;
  double jacobi_b = 1.0;
  double beta = 1.0;
  bool plus_enabled = false;

  /// Bernstein coefficients must stay nonnegative; raw values are squared.
  Vector effective_coeffs() const {
    if (backbone == Backbone::bern) return coeffs.array().square();
    return coeffs;
  }

  void validate() const {
    if (order < 0) throw ConfigError("FilterParams: order must be >= 0");
    if (beta < 0.0 || beta > 1.0) throw ConfigError("FilterParams: beta outside [0,1]");
    if (backbone == Backbone::jacobi) {
      if (jacobi_a <= -1.0 || jacobi_b <= -1.0) {
        throw ConfigError("FilterParams: Jacobi parameters must be > -1");
      }
      if (alpha.rows() != order + 1) throw ConfigError("FilterParams: alpha rows != order+1");
      if (weight.cols() != alpha.cols()) throw ConfigError("FilterParams: weight/alpha column mismatch");
    } else if (coeffs.size() != order + 1) {
      throw ConfigError("FilterParams: coefficient count != order+1");
    }
  }
};

/// Starting coefficients: gpr decays like a personalized-PageRank profile,
/// bern starts at an all-ones (identity) filter, cheb2's node values start
/// at one which is likewise the identity filter.
inline FilterParams make_filter_params(Backbone backbone, int order) {
  if (backbone == Backbone::jacobi) {
    throw ConfigError("make_filter_params: use make_jacobi_params for the jacobi backbone");
  }
  FilterParams p;
  p.backbone = backbone;
  p.order = order;
  p.coeffs.resize(order + 1);
  switch (backbone) {
    case Backbone::gpr:
      for (int k = 0; k <= order; ++k) p.coeffs[k] = 0.1 * std::pow(0.9, k);
      break;
    case Backbone::bern:
    case Backbone::cheb2:
      p.coeffs.setOnes();
      break;
    default: break;
  }
  return p;
}

inline FilterParams make_jacobi_params(int order, int d_in, int d_out, std::uint64_t seed,
                                       double a = 1.0, double b = 1.0) {
  FilterParams p;
  p.backbone = Backbone::jacobi;
  p.order = order;
  p.jacobi_a = a;
  p.jacobi_b = b;
  p.alpha = Matrix::Zero(order + 1, d_out);
  p.alpha.row(0).setOnes();
  p.weight.resize(d_in, d_out);
  Rng rng(hash_combine(seed, 0x3acb1ULL));
  const double limit = std::sqrt(6.0 / (d_in + d_out));
  for (int i = 0; i < d_in; ++i) {
    for (int j = 0; j < d_out; ++j) p.weight(i, j) = rng.uniform(-limit, limit);
  }
  return p;
}

/// Chebyshev nodes of T_{K+1}: x_j = cos((j + 1/2) pi / (K + 1)).
inline std::vector<double> chebyshev_nodes(int order) {
  if (order < 0) throw InvalidInputError("chebyshev_nodes: order must be >= 0");
  std::vector<double> nodes(order + 1);
  for (int j = 0; j <= order; ++j) {
    nodes[j] = std::cos((j + 0.5) * M_PI / (order + 1));
  }
  return nodes;
}

/// T_k(x) by the recurrence T_k = 2 x T_{k-1} - T_{k-2}.
inline double chebyshev_t(int k, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0, cur = x;
  for (int i = 2; i <= k; ++i) {
    const double next = 2.0 * x * cur - prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

inline double binomial_coefficient(int n, int k) {
  double value = 1.0;
  for (int i = 1; i <= k; ++i) value *= double(n - k + i) / double(i);
  return value;
}

/// Interpolation weights for the Chebyshev filter: the k-th propagated term
/// is weighted by pref_k * sum_j gamma_j T_k(x_j), with the k=0 prefactor
/// halved (1/(K+1) instead of 2/(K+1)) as Chebyshev interpolation requires.
inline std::vector<double> cheb2_weights(const Vector& gamma, int order) {
  const auto nodes = chebyshev_nodes(order);
  std::vector<double> w(order + 1, 0.0);
  for (int k = 0; k <= order; ++k) {
    double acc = 0.0;
    for (int j = 0; j <= order; ++j) acc += gamma[j] * chebyshev_t(k, nodes[j]);
    const double pref = (k == 0 ? 1.0 : 2.0) / (order + 1);
    w[k] = pref * acc;
  }
  return w;
}

/// Three-term Jacobi recurrence written as
///   P_k(x) = (ax * x + b0) P_{k-1}(x) + cm * P_{k-2}(x),  k >= 2.
struct JacobiStep {
  double ax, b0, cm;
};

inline JacobiStep jacobi_step(int k, double a, double b) {
  const double t = 2.0 * k + a + b;
  const double denom = 2.0 * k * (k + a + b) * (t - 2.0);
  return {(t - 1.0) * t * (t - 2.0) / denom,
          (t - 1.0) * (a * a - b * b) / denom,
          -(k + a - 1.0) * (k + b - 1.0) * t / (k * (k + a + b) * (t - 2.0))};
}

/// Scalar Jacobi polynomial P_k^{a,b}(x).
inline double jacobi_p(int k, double a, double b, double x) {
  if (k == 0) return 1.0;
  double prev = 1.0;
  double cur = 0.5 * a - 0.5 * b + (0.5 * a + 0.5 * b + 1.0) * x;
  for (int i = 2; i <= k; ++i) {
    const JacobiStep s = jacobi_step(i, a, b);
    const double next = (s.ax * x + s.b0) * cur + s.cm * prev;
    prev = cur;
    cur = next;
  }
  return cur;
}

/// P_k^{a,b}(A_hat) applied to `base` for k = 0..order, via graph matvecs.
inline std::vector<Matrix> jacobi_propagate(const Graph& g, const Matrix& base,
                                            double a, double b, int order) {
  std::vector<Matrix> out;
  out.reserve(order + 1);
  out.push_back(base);
  if (order >= 1) {
    out.push_back((0.5 * a + 0.5 * b + 1.0) * norm_adj_mul(g, base) +
                  (0.5 * a - 0.5 * b) * base);
  }
  for (int k = 2; k <= order; ++k) {
    const JacobiStep s = jacobi_step(k, a, b);
    out.push_back(s.ax * norm_adj_mul(g, out[k - 1]) + s.b0 * out[k - 1] +
                  s.cm * out[k - 2]);
  }
  return out;
}

/// Order-indexed propagated term matrices that stay constant during
/// training (they depend only on the graph, X and K):
///   gpr:   A_hat^k X
///   bern:  (1/2^K) C(K,k) (2I - L)^{K-k} L^k X
///   cheb2: T_k(L - I) X   (shifted operator, spectrum in [-1,1])
/// jacobi has no fixed terms (its operand XW changes as W trains).
inline std::vector<Matrix> propagated_terms(const Graph& g, const Matrix& X,
                                            const FilterParams& params) {
  detail::check_rows(g, X.rows(), "propagated_terms");
  const int K = params.order;
  std::vector<Matrix> terms;
  switch (params.backbone) {
    case Backbone::gpr: {
      terms.reserve(K + 1);
      terms.push_back(X);
      for (int k = 1; k <= K; ++k) terms.push_back(norm_adj_mul(g, terms[k - 1]));
      break;
    }
    case Backbone::bern: {
      std::vector<Matrix> lap_pow;
      lap_pow.reserve(K + 1);
      lap_pow.push_back(X);
      for (int k = 1; k <= K; ++k) lap_pow.push_back(norm_lap_mul(g, lap_pow[k - 1]));
      const double inv2k = std::pow(0.5, K);
      terms.reserve(K + 1);
      for (int k = 0; k <= K; ++k) {
        Matrix m = lap_pow[k];
        for (int i = 0; i < K - k; ++i) m = 2.0 * m - norm_lap_mul(g, m);
        terms.push_back(inv2k * binomial_coefficient(K, k) * m);
      }
      break;
    }
    case Backbone::cheb2: {
      terms.reserve(K + 1);
      terms.push_back(X);
      if (K >= 1) terms.push_back(norm_lap_mul(g, X) - X);
      for (int k = 2; k <= K; ++k) {
        terms.push_back(2.0 * (norm_lap_mul(g, terms[k - 1]) - terms[k - 1]) - terms[k - 2]);
      }
      break;
    }
    case Backbone::jacobi:
      break;
  }
  return terms;
}

/// Precomputed state for repeated forward passes over a fixed (graph, X, K).
struct FilterWorkspace {
  std::vector<Matrix> terms;  // propagated_terms output (empty for jacobi)
  std::vector<Matrix> mixed;  // gpr/bern: beta*term_k + (1-beta)*U_k
  Matrix cheb_basis_tail;     // cheb2: (1-beta)*(2/(K+1)) * sum_k U_k
  Matrix X;                   // jacobi operand before the weight transform
  const Graph* graph = nullptr;
  const BasisMatrix* basis = nullptr;
};

namespace detail {

inline void check_basis(const FilterParams& p, const BasisMatrix* basis, Eigen::Index d) {
  if (!p.plus_enabled) return;
  if (basis == nullptr) throw ConfigError("filter: plus enabled but no basis supplied");
  if (basis->order != p.order) {
    throw ConfigError("filter: basis order " + std::to_string(basis->order) +
                      " != filter order " + std::to_string(p.order));
  }
  if (basis->cols() != d) {
    throw ConfigError("filter: basis has " + std::to_string(basis->cols()) +
                      " columns, expected " + std::to_string(d));
  }
}

}  // namespace detail

inline FilterWorkspace make_workspace(const Graph& g, const Matrix& X,
                                      const FilterParams& params,
                                      const BasisMatrix* basis = nullptr) {
  params.validate();
  detail::check_basis(params, basis, X.cols());
  FilterWorkspace ws;
  ws.graph = &g;
  ws.basis = params.plus_enabled ? basis : nullptr;
  const int K = params.order;
  if (params.backbone == Backbone::jacobi) {
    detail::check_rows(g, X.rows(), "make_workspace");
    ws.X = X;
    return ws;
  }
  ws.terms = propagated_terms(g, X, params);
  if (params.plus_enabled) {
    const double beta = params.beta;
    if (params.backbone == Backbone::cheb2) {
      Matrix sum = Matrix::Zero(X.rows(), X.cols());
      for (int k = 0; k <= K; ++k) sum += basis->mats[k];
      ws.cheb_basis_tail = (1.0 - beta) * (2.0 / (K + 1)) * sum;
    } else {
      ws.mixed.reserve(K + 1);
      for (int k = 0; k <= K; ++k) {
        ws.mixed.push_back(beta * ws.terms[k] + (1.0 - beta) * basis->mats[k]);
      }
    }
  }
  return ws;
}

/// Per-call state the jacobi backward pass reuses.
struct JacobiCache {
  std::vector<Matrix> propagated;  // P_k(A_hat) X W
  std::vector<Matrix> mixed;       // beta * propagated_k + (1-beta) * U_k W
};

/// Forward pass. For jacobi, `cache` (when non-null) receives the
/// intermediate per-order matrices.
inline Matrix filter_forward(const FilterParams& params, const FilterWorkspace& ws,
                             JacobiCache* cache = nullptr) {
  const int K = params.order;
  switch (params.backbone) {
    case Backbone::gpr:
    case Backbone::bern: {
      const Vector theta = params.effective_coeffs();
      const auto& source = params.plus_enabled ? ws.mixed : ws.terms;
      Matrix z = theta[0] * source[0];
      for (int k = 1; k <= K; ++k) z += theta[k] * source[k];
      return z;
    }
    case Backbone::cheb2: {
      const auto w = cheb2_weights(params.coeffs, K);
      const double beta = params.plus_enabled ? params.beta : 1.0;
      Matrix z = (beta * w[0]) * ws.terms[0];
      for (int k = 1; k <= K; ++k) z += (beta * w[k]) * ws.terms[k];
      if (params.plus_enabled) z += ws.cheb_basis_tail;
      return z;
    }
    case Backbone::jacobi: {
      const Matrix transformed = ws.X * params.weight;
      std::vector<Matrix> propagated =
          jacobi_propagate(*ws.graph, transformed, params.jacobi_a, params.jacobi_b, K);
      const double beta = params.beta;
      Matrix z = Matrix::Zero(transformed.rows(), transformed.cols());
      std::vector<Matrix> mixed;
      if (cache) mixed.reserve(K + 1);
      for (int k = 0; k <= K; ++k) {
        Matrix m = params.plus_enabled
                       ? Matrix(beta * propagated[k] + (1.0 - beta) * (ws.basis->mats[k] * params.weight))
                       : propagated[k];
        z += m * params.alpha.row(k).asDiagonal();
        if (cache) mixed.push_back(std::move(m));
      }
      if (cache) {
        cache->propagated = std::move(propagated);
        cache->mixed = std::move(mixed);
      }
      return z;
    }
  }
  throw Error("filter_forward: unreachable");
}

inline Matrix gpr_forward(const Graph& g, const Matrix& X, const FilterParams& params,
                          const BasisMatrix* basis = nullptr) {
  if (params.backbone != Backbone::gpr) throw ConfigError("gpr_forward: wrong backbone");
  return filter_forward(params, make_workspace(g, X, params, basis));
}

inline Matrix bern_forward(const Graph& g, const Matrix& X, const FilterParams& params,
                           const BasisMatrix* basis = nullptr) {
  if (params.backbone != Backbone::bern) throw ConfigError("bern_forward: wrong backbone");
  return filter_forward(params, make_workspace(g, X, params, basis));
}

inline Matrix jacobi_forward(const Graph& g, const Matrix& X, const Matrix& W,
                             const FilterParams& params, const BasisMatrix* basis = nullptr) {
  if (params.backbone != Backbone::jacobi) throw ConfigError("jacobi_forward: wrong backbone");
  FilterParams p = params;
  p.weight = W;
  return filter_forward(p, make_workspace(g, X, p, basis));
}

inline Matrix cheb2_forward(const Graph& g, const Matrix& X, const FilterParams& params,
                            const BasisMatrix* basis = nullptr) {
  if (params.backbone != Backbone::cheb2) throw ConfigError("cheb2_forward: wrong backbone");
  return filter_forward(params, make_workspace(g, X, params, basis));
}

/// Scalar spectral response h(lambda) of the pure polynomial part, for
/// lambda in [0,2]. Only defined with the basis mixing disabled. For jacobi
/// the response of output column `jacobi_col` is evaluated.
inline std::vector<double> filter_response(const FilterParams& params,
                                           const std::vector<double>& lambdas,
                                           int jacobi_col = 0) {
  if (params.plus_enabled) {
    throw ConfigError("filter_response: undefined when basis mixing is enabled");
  }
  params.validate();
  const int K = params.order;
  std::vector<double> out;
  out.reserve(lambdas.size());
  switch (params.backbone) {
    case Backbone::gpr: {
      for (double lam : lambdas) {
        double acc = 0.0, power = 1.0;
        for (int k = 0; k <= K; ++k) {
          acc += params.coeffs[k] * power;
          power *= (1.0 - lam);
        }
        out.push_back(acc);
      }
      break;
    }
    case Backbone::bern: {
      const Vector theta = params.effective_coeffs();
      const double inv2k = std::pow(0.5, K);
      for (double lam : lambdas) {
        double acc = 0.0;
        for (int k = 0; k <= K; ++k) {
          acc += theta[k] * inv2k * binomial_coefficient(K, k) *
                 std::pow(2.0 - lam, K - k) * std::pow(lam, k);
        }
        out.push_back(acc);
      }
      break;
    }
    case Backbone::jacobi: {
      if (jacobi_col < 0 || jacobi_col >= params.alpha.cols()) {
        throw ConfigError("filter_response: jacobi column out of range");
      }
      for (double lam : lambdas) {
        double acc = 0.0;
        for (int k = 0; k <= K; ++k) {
          acc += params.alpha(k, jacobi_col) *
                 jacobi_p(k, params.jacobi_a, params.jacobi_b, 1.0 - lam);
        }
        out.push_back(acc);
      }
      break;
    }
    case Backbone::cheb2: {
      const auto w = cheb2_weights(params.coeffs, K);
      for (double lam : lambdas) {
        double acc = 0.0;
        for (int k = 0; k <= K; ++k) acc += w[k] * chebyshev_t(k, lam - 1.0);
        out.push_back(acc);
      }
      break;
    }
  }
  return out;
}

}  // namespace polyspec
