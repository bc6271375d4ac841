#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "polyspec/errors.hpp"
#include "polyspec/graph.hpp"
#include "polyspec/rng.hpp"

namespace polyspec {

/// Cosine every distinct pair of basis vectors is driven to:
/// cos(pi/2 * (1 - h)). h=1 gives 1 (all vectors collinear), h=0 gives 0
/// (orthonormal set). h is clamped to [0,1].
inline double target_cosine(double h_hat) {
  const double h = std::clamp(h_hat, 0.0, 1.0);
  return std::cos(M_PI / 2.0 * (1.0 - h));
}

/// Basis vectors u_0..u_K for one signal column. Unit norm, pairwise inner
/// product equal to `c`. A zero input signal yields all-zero vectors with
/// the degenerate flag set.
struct HeterophilyBasis {
  std::vector<Vector> vectors;
  double c = 1.0;
  double h_hat = 1.0;
  int order = 0;
  bool degenerate = false;
};

namespace detail {

// Two classical Gram-Schmidt passes against an orthonormal frame.
inline void orthogonalize_against(const std::vector<Vector>& frame, Vector& v) {
  for (int pass = 0; pass < 2; ++pass) {
    for (const Vector& f : frame) v -= f.dot(v) * f;
  }
}

inline constexpr double kSpanCollapseTol = 1e-10;
inline constexpr std::uint64_t kFallbackSeed = 0x6b617369736b6579ULL;

// Fresh unit direction orthogonal to the frame, used when the propagated
// signal stays inside the current span. Seeded from a fixed constant so the
// construction is deterministic.
inline Vector fallback_direction(int n, const std::vector<Vector>& frame, int k) {
  for (std::uint64_t attempt = 0;; ++attempt) {
    Rng rng(hash_combine(kFallbackSeed, (std::uint64_t(k) << 20) + attempt));
    Vector f(n);
    for (int i = 0; i < n; ++i) f[i] = rng.normal();
    orthogonalize_against(frame, f);
    const double norm = f.norm();
    if (norm > kSpanCollapseTol) return f / norm;
    if (attempt > 64) throw Error("heterophily basis: could not find a fresh direction");
  }
}

}  // namespace detail

/// Build the basis for one signal column.
///
/// u_0 is the normalized signal. Each later u_k starts from the propagated
/// previous vector t = A_hat u_{k-1}; the component of t orthogonal to
/// span(u_0..u_{k-1}) gives a fresh unit direction f, and
///   u_k = a * sum(u_0..u_{k-1}) + b * f,
///   a = c / (1 + (k-1) c),   b = sqrt(1 - c^2 k / (1 + (k-1) c)),
/// the unique nonnegative pair making every new pairwise inner product equal
/// to c while keeping unit norm.
inline HeterophilyBasis build_basis(const Graph& g, const Vector& signal, int order,
                                    double h_hat) {
  if (order < 0) throw InvalidInputError("build_basis: order must be >= 0");
  if (signal.size() != g.n) {
    throw DimensionError("build_basis: signal length " + std::to_string(signal.size()) +
                         " != node count " + std::to_string(g.n));
  }

  HeterophilyBasis basis;
  basis.h_hat = std::clamp(h_hat, 0.0, 1.0);
  basis.c = target_cosine(basis.h_hat);
  basis.order = order;
  basis.vectors.assign(order + 1, Vector::Zero(g.n));

  const double signal_norm = signal.norm();
  if (signal_norm == 0.0) {
    basis.degenerate = true;
    return basis;
  }

  const double c = basis.c;
  basis.vectors[0] = signal / signal_norm;

  std::vector<Vector> frame;
  frame.push_back(basis.vectors[0]);
  Vector running_sum = basis.vectors[0];

  for (int k = 1; k <= order; ++k) {
    const double a = c / (1.0 + (k - 1) * c);
    double radicand = 1.0 - c * c * k / (1.0 + (k - 1) * c);
    if (radicand < 0.0) {
      if (radicand < -1e-12) {
        throw Error("build_basis: negative radicand " + std::to_string(radicand));
      }
      radicand = 0.0;
    }
    const double b = std::sqrt(radicand);

    if (b == 0.0) {
      // Collinear limit: no fresh direction enters the span.
      basis.vectors[k] = a * running_sum;
      running_sum += basis.vectors[k];
      continue;
    }
    if (static_cast<int>(frame.size()) >= g.n) {
      throw InvalidInputError(
          "build_basis: order " + std::to_string(order) + " needs " +
          std::to_string(order + 1) + " directions at this angle but the graph has only " +
          std::to_string(g.n) + " nodes");
    }

    Vector t = norm_adj_matvec(g, basis.vectors[k - 1]);
    detail::orthogonalize_against(frame, t);
    const double residual = t.norm();
    Vector f = (residual < detail::kSpanCollapseTol)
                   ? detail::fallback_direction(g.n, frame, k)
                   : Vector(t / residual);

    basis.vectors[k] = a * running_sum + b * f;
    frame.push_back(std::move(f));
    running_sum += basis.vectors[k];
  }
  return basis;
}

/// Per-column bases for a feature matrix: mats[k].col(l) is u_k of column l.
/// Zero columns stay zero and are flagged; they contribute nothing when
/// mixed into a filter.
struct BasisMatrix {
  std::vector<Matrix> mats;  // order+1 matrices, each n x d
  double c = 1.0;
  double h_hat = 1.0;
  int order = 0;
  std::vector<bool> degenerate_cols;

  int cols() const { return mats.empty() ? 0 : static_cast<int>(mats.front().cols()); }
};

inline BasisMatrix build_basis_matrix(const Graph& g, const Matrix& X, int order,
                                      double h_hat) {
  BasisMatrix out;
  out.h_hat = std::clamp(h_hat, 0.0, 1.0);
  out.c = target_cosine(out.h_hat);
  out.order = order;
  const auto d = X.cols();
  out.mats.assign(order + 1, Matrix::Zero(g.n, d));
  out.degenerate_cols.assign(d, false);
  for (Eigen::Index l = 0; l < d; ++l) {
    const HeterophilyBasis column = build_basis(g, X.col(l), order, h_hat);
    out.degenerate_cols[l] = column.degenerate;
    for (int k = 0; k <= order; ++k) out.mats[k].col(l) = column.vectors[k];
  }
  return out;
}

}  // namespace polyspec
