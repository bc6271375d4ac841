#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "polyspec/graph.hpp"
#include "test_util.hpp"

using namespace polyspec;

TEST_CASE("build_graph deduplicates, symmetrizes and drops self-loops") {
  const Graph g = build_graph(3, {{0, 1}, {1, 0}, {1, 1}, {1, 2}});
  REQUIRE(g.edges == std::vector<std::pair<int, int>>{{0, 1}, {1, 2}});
  REQUIRE(g.degrees == std::vector<int>{1, 2, 1});
}

TEST_CASE("build_graph with no edges") {
  const Graph g = build_graph(2, {});
  REQUIRE(g.degrees == std::vector<int>{0, 0});
  REQUIRE(g.csr_offsets == std::vector<int>{0, 0, 0});
}

TEST_CASE("build_graph path degrees") {
  const Graph g = build_graph(4, {{0, 1}, {1, 2}, {2, 3}});
  REQUIRE(g.degrees == std::vector<int>{1, 2, 2, 1});
}

TEST_CASE("build_graph rejects out-of-range endpoints") {
  REQUIRE_THROWS_AS(build_graph(3, {{0, 3}}), InvalidInputError);
  REQUIRE_THROWS_AS(build_graph(3, {{-1, 1}}), InvalidInputError);
}

TEST_CASE("CSR structure invariants on random graphs") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Graph g = testutil::random_graph(40, 0.15, seed);
    REQUIRE(g.csr_offsets.back() == 2 * g.num_edges());
    REQUIRE(std::is_sorted(g.csr_offsets.begin(), g.csr_offsets.end()));
    for (int u = 0; u < g.n; ++u) {
      const auto nbrs = g.neighbors(u);
      REQUIRE(static_cast<int>(nbrs.size()) == g.degrees[u]);
      REQUIRE(std::is_sorted(nbrs.begin(), nbrs.end()));
      for (int v : nbrs) {
        const auto back = g.neighbors(v);
        REQUIRE(std::binary_search(back.begin(), back.end(), u));
      }
    }
  }
}

TEST_CASE("norm_adj_matvec on a single edge swaps the unit signals") {
  const Graph g = build_graph(2, {{0, 1}});
  Vector x(2);
  x << 1.0, 0.0;
  const Vector y = norm_adj_matvec(g, x);
  REQUIRE(y[0] == Catch::Approx(0.0).margin(1e-15));
  REQUIRE(y[1] == Catch::Approx(1.0).margin(1e-15));
}

TEST_CASE("zero-degree nodes produce zero output rows") {
  const Graph g = build_graph(3, {{0, 1}});  // node 2 isolated
  const Vector x = testutil::random_vector(3, 7);
  const Vector adj = norm_adj_matvec(g, x);
  REQUIRE(adj[2] == 0.0);
  const Vector lap = norm_lap_matvec(g, x);
  REQUIRE(lap[2] == x[2]);
}

TEST_CASE("matvec agrees with the dense reference") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Graph g = testutil::random_graph(30, 0.2, 100 + seed);
    const Matrix dense = testutil::dense_adjacency_reference(g);
    const Vector x = testutil::random_vector(30, 200 + seed);
    const Vector got = norm_adj_matvec(g, x);
    const Vector want = dense * x;
    REQUIRE((got - want).cwiseAbs().maxCoeff() < 1e-12);
    const Vector lap_got = norm_lap_matvec(g, x);
    const Vector lap_want = x - dense * x;
    REQUIRE((lap_got - lap_want).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("laplacian is the identity minus adjacency, exactly") {
  const Graph g = testutil::random_graph(25, 0.2, 42);
  const Vector x = testutil::random_vector(25, 43);
  const Vector lhs = norm_lap_matvec(g, x);
  const Vector rhs = x - norm_adj_matvec(g, x);
  REQUIRE((lhs - rhs).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("constant vector on a connected regular graph is in the nullspace") {
  // 6-cycle: 2-regular and connected.
  const Graph g = build_graph(6, {{0, 1}, {1, 2}, {2, 3}, {3, 4}, {4, 5}, {5, 0}});
  const Vector ones = Vector::Ones(6);
  REQUIRE(norm_lap_matvec(g, ones).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("normalized adjacency is symmetric as an operator") {
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const Graph g = testutil::random_graph(35, 0.15, 300 + seed);
    const Vector x = testutil::random_vector(35, 400 + seed);
    const Vector y = testutil::random_vector(35, 500 + seed);
    const double lhs = norm_adj_matvec(g, x).dot(y);
    const double rhs = x.dot(norm_adj_matvec(g, y));
    REQUIRE(std::abs(lhs - rhs) < 1e-10);
  }
}

TEST_CASE("matvec rejects mismatched lengths") {
  const Graph g = build_graph(3, {{0, 1}});
  REQUIRE_THROWS_AS(norm_adj_matvec(g, Vector::Zero(2)), DimensionError);
  REQUIRE_THROWS_AS(norm_lap_matvec(g, Vector::Zero(5)), DimensionError);
}

TEST_CASE("edge homophily on small labelled graphs") {
  const Graph triangle = build_graph(3, {{0, 1}, {1, 2}, {0, 2}});
  REQUIRE(edge_homophily(triangle, {0, 0, 0}) == 1.0);

  const Graph path = build_graph(3, {{0, 1}, {1, 2}});
  REQUIRE(edge_homophily(path, {0, 1, 0}) == 0.0);

  const Graph cycle = build_graph(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  REQUIRE(edge_homophily(cycle, {0, 0, 1, 1}) == 0.5);
}

TEST_CASE("edge homophily of an edgeless graph is undefined") {
  const Graph g = build_graph(4, {});
  REQUIRE_THROWS_AS(edge_homophily(g, {0, 1, 0, 1}), UndefinedHomophilyError);
}

TEST_CASE("edge homophily is invariant under class relabeling") {
  const Graph g = testutil::random_graph(30, 0.2, 9);
  Rng rng(10);
  std::vector<int> labels(30);
  for (auto& l : labels) l = static_cast<int>(rng.uniform_index(4));
  const double base = edge_homophily(g, labels);
  std::vector<int> perm{2, 0, 3, 1};  // bijection on class ids
  std::vector<int> relabeled(30);
  for (int i = 0; i < 30; ++i) relabeled[i] = perm[labels[i]];
  REQUIRE(edge_homophily(g, relabeled) == base);
}

TEST_CASE("dense eigendecomposition of a single edge") {
  const auto dec = dense_eigendecomposition(build_graph(2, {{0, 1}}));
  REQUIRE(dec.eigenvalues[0] == Catch::Approx(0.0).margin(1e-12));
  REQUIRE(dec.eigenvalues[1] == Catch::Approx(2.0).margin(1e-12));
}

TEST_CASE("dense eigendecomposition of an edgeless graph is the identity") {
  const auto dec = dense_eigendecomposition(build_graph(3, {}));
  for (int i = 0; i < 3; ++i) REQUIRE(dec.eigenvalues[i] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("dense eigendecomposition of the triangle") {
  const auto dec = dense_eigendecomposition(build_graph(3, {{0, 1}, {1, 2}, {0, 2}}));
  REQUIRE(dec.eigenvalues[0] == Catch::Approx(0.0).margin(1e-10));
  REQUIRE(dec.eigenvalues[1] == Catch::Approx(1.5).margin(1e-10));
  REQUIRE(dec.eigenvalues[2] == Catch::Approx(1.5).margin(1e-10));
}

TEST_CASE("spectral decomposition invariants") {
  const Graph g = testutil::random_graph(40, 0.15, 77);
  const auto dec = dense_eigendecomposition(g);
  REQUIRE(std::is_sorted(dec.eigenvalues.begin(), dec.eigenvalues.end()));
  const Matrix gram = dec.eigenvectors.transpose() * dec.eigenvectors;
  REQUIRE((gram - Matrix::Identity(g.n, g.n)).cwiseAbs().maxCoeff() < 1e-8);
  const Matrix rebuilt =
      dec.eigenvectors * dec.eigenvalues.asDiagonal() * dec.eigenvectors.transpose();
  REQUIRE((rebuilt - dense_norm_laplacian(g)).cwiseAbs().maxCoeff() < 1e-6);
}

TEST_CASE("laplacian spectrum lies in [0, 2]") {
  for (std::uint64_t seed = 0; seed < 6; ++seed) {
    const int n = 20 + static_cast<int>(seed) * 15;  // up to 95
    const Graph g = testutil::random_graph(n, 0.1, 600 + seed);
    const auto dec = dense_eigendecomposition(g);
    REQUIRE(dec.eigenvalues.minCoeff() > -1e-8);
    REQUIRE(dec.eigenvalues.maxCoeff() < 2.0 + 1e-8);
  }
}

TEST_CASE("dense eigendecomposition refuses oversized graphs") {
  Graph g;
  g.n = 501;
  REQUIRE_THROWS_AS(dense_eigendecomposition(g), InvalidInputError);
}
