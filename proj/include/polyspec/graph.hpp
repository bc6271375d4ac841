#pragma once

#include <algorithm>
#include <cmath>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <Eigen/Dense>
#include <Eigen/Eigenvalues>

#include "polyspec/errors.hpp"

namespace polyspec {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

/// Immutable simple undirected graph.
///
/// Undirected edges are stored once with u < v; the CSR arrays hold both
/// directions with each row sorted ascending. Nodes may be isolated; the
/// normalized operators below treat a zero-degree node by defining
/// D^{-1/2}_{ii} = 0, which zeroes its row and column of the normalized
/// adjacency and makes the normalized Laplacian act as the identity there.
struct Graph {
  int n = 0;
  std::vector<std::pair<int, int>> edges;  // canonical (u < v), each once
  std::vector<int> csr_offsets;            // size n+1, last entry = 2|E|
  std::vector<int> csr_targets;
  std::vector<int> degrees;
  std::vector<double> inv_sqrt_degree;     // 0.0 for isolated nodes

  int num_nodes() const { return n; }
  int num_edges() const { return static_cast<int>(edges.size()); }

  std::span<const int> neighbors(int u) const {
    return {csr_targets.data() + csr_offsets[u],
            csr_targets.data() + csr_offsets[u + 1]};
  }
};

/// Build a Graph from an arbitrary edge list: self-loops are dropped,
/// duplicates and reversed copies collapse to one undirected edge.
/// Throws InvalidInputError if an endpoint is out of [0, n).
inline Graph build_graph(int n, const std::vector<std::pair<int, int>>& edge_list) {
  if (n < 0) throw InvalidInputError("build_graph: negative node count");
  std::vector<std::pair<int, int>> canon;
  canon.reserve(edge_list.size());
  for (const auto& [u, v] : edge_list) {
    if (u < 0 || u >= n || v < 0 || v >= n) {
      throw InvalidInputError("build_graph: edge (" + std::to_string(u) + "," +
                              std::to_string(v) + ") out of range for n=" +
                              std::to_string(n));
    }
    if (u == v) continue;
    canon.emplace_back(std::min(u, v), std::max(u, v));
  }
  std::sort(canon.begin(), canon.end());
  canon.erase(std::unique(canon.begin(), canon.end()), canon.end());

  Graph g;
  g.n = n;
  g.edges = std::move(canon);
  g.degrees.assign(n, 0);
  for (const auto& [u, v] : g.edges) {
    ++g.degrees[u];
    ++g.degrees[v];
  }
  g.csr_offsets.assign(n + 1, 0);
  for (int i = 0; i < n; ++i) g.csr_offsets[i + 1] = g.csr_offsets[i] + g.degrees[i];
  g.csr_targets.assign(g.csr_offsets[n], 0);
  std::vector<int> cursor(g.csr_offsets.begin(), g.csr_offsets.end() - 1);
  for (const auto& [u, v] : g.edges) {
    g.csr_targets[cursor[u]++] = v;
    g.csr_targets[cursor[v]++] = u;
  }
  for (int i = 0; i < n; ++i) {
    std::sort(g.csr_targets.begin() + g.csr_offsets[i],
              g.csr_targets.begin() + g.csr_offsets[i + 1]);
  }
  g.inv_sqrt_degree.assign(n, 0.0);
  for (int i = 0; i < n; ++i) {
    if (g.degrees[i] > 0) g.inv_sqrt_degree[i] = 1.0 / std::sqrt(double(g.degrees[i]));
  }
  return g;
}

namespace detail {
inline void check_rows(const Graph& g, Eigen::Index rows, const char* who) {
  if (rows != g.n) {
    throw DimensionError(std::string(who) + ": vector length " +
                         std::to_string(rows) + " != node count " +
                         std::to_string(g.n));
  }
}
}  // namespace detail

/// y = D^{-1/2} A D^{-1/2} x, column by column. Rows and columns of
/// zero-degree nodes are identically zero.
inline Matrix norm_adj_mul(const Graph& g, const Matrix& x) {
  detail::check_rows(g, x.rows(), "norm_adj_mul");
  Matrix scaled = x;
  for (int i = 0; i < g.n; ++i) scaled.row(i) *= g.inv_sqrt_degree[i];
  Matrix out = Matrix::Zero(x.rows(), x.cols());
  for (int u = 0; u < g.n; ++u) {
    const int begin = g.csr_offsets[u], end = g.csr_offsets[u + 1];
    for (int e = begin; e < end; ++e) out.row(u) += scaled.row(g.csr_targets[e]);
    out.row(u) *= g.inv_sqrt_degree[u];
  }
  return out;
}

inline Vector norm_adj_matvec(const Graph& g, const Vector& x) {
  detail::check_rows(g, x.size(), "norm_adj_matvec");
  return norm_adj_mul(g, x);
}

/// y = (I - D^{-1/2} A D^{-1/2}) x.
inline Matrix norm_lap_mul(const Graph& g, const Matrix& x) {
  detail::check_rows(g, x.rows(), "norm_lap_mul");
  return x - norm_adj_mul(g, x);
}

inline Vector norm_lap_matvec(const Graph& g, const Vector& x) {
  detail::check_rows(g, x.size(), "norm_lap_matvec");
  return x - norm_adj_mul(g, x);
}

/// Fraction of undirected edges whose endpoints carry the same label.
/// Throws UndefinedHomophilyError when the graph has no edges.
inline double edge_homophily(const Graph& g, const std::vector<int>& labels) {
  if (static_cast<int>(labels.size()) != g.n) {
    throw DimensionError("edge_homophily: labels size " + std::to_string(labels.size()) +
                         " != node count " + std::to_string(g.n));
  }
  if (g.edges.empty()) {
    throw UndefinedHomophilyError("edge_homophily: graph has no edges");
  }
  std::size_t same = 0;
  for (const auto& [u, v] : g.edges) same += (labels[u] == labels[v]) ? 1 : 0;
  return static_cast<double>(same) / static_cast<double>(g.edges.size());
}

inline Matrix dense_norm_adjacency(const Graph& g) {
  Matrix a = Matrix::Zero(g.n, g.n);
  for (const auto& [u, v] : g.edges) {
    const double w = g.inv_sqrt_degree[u] * g.inv_sqrt_degree[v];
    a(u, v) = w;
    a(v, u) = w;
  }
  return a;
}

inline Matrix dense_norm_laplacian(const Graph& g) {
  return Matrix::Identity(g.n, g.n) - dense_norm_adjacency(g);
}

/// Eigendecomposition of the normalized Laplacian, eigenvalues ascending.
struct SpectralDecomposition {
  Vector eigenvalues;
  Matrix eigenvectors;  // columns are orthonormal eigenvectors
};

inline constexpr int kDenseEigenLimit = 500;

/// Dense symmetric eigendecomposition of the normalized Laplacian. Intended
/// as a reference path for testing the matvec-based filters; guarded to
/// small graphs.
inline SpectralDecomposition dense_eigendecomposition(const Graph& g) {
  if (g.n > kDenseEigenLimit) {
    throw InvalidInputError("dense_eigendecomposition: n=" + std::to_string(g.n) +
                            " exceeds the dense size guard of " +
                            std::to_string(kDenseEigenLimit));
  }
  Eigen::SelfAdjointEigenSolver<Matrix> solver(dense_norm_laplacian(g));
  if (solver.info() != Eigen::Success) {
    throw Error("dense_eigendecomposition: eigensolver failed");
  }
  return {solver.eigenvalues(), solver.eigenvectors()};
}

}  // namespace polyspec
