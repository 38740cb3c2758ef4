#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "hypermux/errors.hpp"
#include "hypermux/graph.hpp"
#include "hypermux/rng.hpp"

using namespace hypermux;
namespace fs = std::filesystem;

namespace {

Matrix dense(const SparseMatrix& s) { return Matrix(s); }

SparseMatrix sparse(const Matrix& m) { return m.sparseView(); }

// Direct evaluation of D^{-1/2}(A + I)D^{-1/2} on a dense matrix.
Matrix normalize_oracle(const Matrix& a) {
  Matrix s = a + Matrix::Identity(a.rows(), a.cols());
  Eigen::VectorXd deg = s.rowwise().sum();
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    for (Eigen::Index j = 0; j < s.cols(); ++j) s(i, j) /= std::sqrt(deg[i] * deg[j]);
  }
  return s;
}

SparseMatrix random_symmetric(std::size_t n, double p, Rng& rng) {
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) {
      if (uniform01(rng) < p) edges.push_back({i, j});
    }
  }
  return adjacency_from_edges(n, edges);
}

struct TempDir {
  fs::path path;
  explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / ("hypermux_test_" + name)) {
    fs::remove_all(path);
    fs::create_directories(path);
  }
  ~TempDir() { fs::remove_all(path); }
};

MultiplexGraph small_graph() {
  MultiplexGraph g;
  g.n_nodes = 4;
  g.dims.push_back(adjacency_from_edges(4, {{0, 1}, {1, 2}}));
  g.dims.push_back(adjacency_from_edges(4, {{2, 3}, {0, 3}}));
  g.features = structural_features(g.dims);
  return g;
}

}  // namespace

TEST_CASE("normalize: two-node edge gives uniform halves") {
  Matrix a(2, 2);
  a << 0, 1, 1, 0;
  const Matrix got = dense(normalize_adjacency(sparse(a)));
  CHECK((got - Matrix::Constant(2, 2, 0.5)).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize: isolated node keeps its self-loop") {
  const Matrix got = dense(normalize_adjacency(SparseMatrix(1, 1)));
  CHECK(got(0, 0) == doctest::Approx(1.0));
}

TEST_CASE("normalize: star with three leaves") {
  const SparseMatrix star = adjacency_from_edges(4, {{0, 1}, {0, 2}, {0, 3}});
  const Matrix got = dense(normalize_adjacency(star));
  CHECK(got(0, 0) == doctest::Approx(0.25).epsilon(1e-14));
  for (int j = 1; j < 4; ++j) CHECK(got(0, j) == doctest::Approx(1.0 / std::sqrt(8.0)).epsilon(1e-14));
  CHECK((got - normalize_oracle(dense(star))).cwiseAbs().maxCoeff() < 1e-15);
}

TEST_CASE("normalize: weighted random graphs match the dense oracle and stay symmetric") {
  Rng rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    Matrix a = dense(random_symmetric(12, 0.3, rng));
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      for (Eigen::Index j = i + 1; j < a.cols(); ++j) {
        if (a(i, j) != 0.0) a(i, j) = a(j, i) = uniform(rng, 0.1, 2.0);
      }
    }
    const Matrix got = dense(normalize_adjacency(sparse(a)));
    CHECK((got - normalize_oracle(a)).cwiseAbs().maxCoeff() < 1e-14);
    CHECK((got - got.transpose()).cwiseAbs().maxCoeff() < 1e-12);
  }
}

TEST_CASE("normalize: rows of a regular graph sum to one") {
  // Cycle: every node has degree 2.
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < 9; ++i) edges.push_back({i, (i + 1) % 9});
  const Matrix got = dense(normalize_adjacency(adjacency_from_edges(9, edges)));
  CHECK((got.rowwise().sum().array() - 1.0).abs().maxCoeff() < 1e-12);
}

TEST_CASE("normalize: rejects asymmetric, negative and non-square input") {
  Matrix a(2, 2);
  a << 0, 1, 0, 0;
  CHECK_THROWS_AS(normalize_adjacency(sparse(a)), ValidationError);
  a << 0, -1, -1, 0;
  CHECK_THROWS_AS(normalize_adjacency(sparse(a)), ValidationError);
  CHECK_THROWS_AS(normalize_adjacency(SparseMatrix(2, 3)), ValidationError);
}

TEST_CASE("adjacency_from_edges collapses duplicates and reversed pairs") {
  const Matrix a = dense(adjacency_from_edges(3, {{0, 1}, {1, 0}, {0, 1}}));
  Matrix expected = Matrix::Zero(3, 3);
  expected(0, 1) = expected(1, 0) = 1.0;
  CHECK(a == expected);
  CHECK_THROWS_AS(adjacency_from_edges(3, {{0, 3}}), ValidationError);
}

TEST_CASE("corrupt_features permutes rows") {
  Rng rng(3);
  Matrix x(20, 4);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = uniform01(rng);

  SUBCASE("single row is unchanged") {
    Matrix one = x.topRows(1);
    CHECK(corrupt_features(one, 11) == one);
  }
  SUBCASE("deterministic for a seed") { CHECK(corrupt_features(x, 5) == corrupt_features(x, 5)); }
  SUBCASE("column sums preserved") {
    CHECK((corrupt_features(x, 9).colwise().sum() - x.colwise().sum()).cwiseAbs().maxCoeff() < 1e-12);
  }
  SUBCASE("row multiset preserved") {
    auto sorted_rows = [](const Matrix& m) {
      std::vector<std::vector<double>> rows;
      for (Eigen::Index i = 0; i < m.rows(); ++i) rows.emplace_back(m.row(i).data(), m.row(i).data() + m.cols());
      std::sort(rows.begin(), rows.end());
      return rows;
    };
    CHECK(sorted_rows(corrupt_features(x, 13)) == sorted_rows(x));
  }
  SUBCASE("matches the published permutation") {
    const auto perm = corruption_permutation(20, 21);
    const Matrix c = corrupt_features(x, 21);
    for (Eigen::Index i = 0; i < 20; ++i) CHECK(c.row(i) == x.row(static_cast<Eigen::Index>(perm[static_cast<std::size_t>(i)])));
  }
}

TEST_CASE("structural features are standardized degrees") {
  const MultiplexGraph g = small_graph();
  const Matrix& f = g.features;
  REQUIRE(f.rows() == 4);
  REQUIRE(f.cols() == 2);
  CHECK(std::abs(f.col(0).mean()) < 1e-12);
  // Degrees in dimension 0 are (1, 2, 1, 0): node 1 is highest, node 3 lowest.
  CHECK(f(1, 0) > f(0, 0));
  CHECK(f(3, 0) < f(0, 0));

  std::vector<SparseMatrix> flat{adjacency_from_edges(3, {{0, 1}, {1, 2}, {0, 2}})};
  CHECK(structural_features(flat).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("graph directory round trip") {
  TempDir dir("roundtrip");
  MultiplexGraph g = small_graph();
  g.labels = {{0}, {1}, {0, 1}, {1}};
  save_multiplex(g, dir.path);
  CHECK(load_multiplex(dir.path) == g);

  // Without labels the stale labels file is removed.
  g.labels.clear();
  save_multiplex(g, dir.path);
  CHECK_FALSE(fs::exists(dir.path / "labels.csv"));
  CHECK(load_multiplex(dir.path) == g);
}

TEST_CASE("round trip holds for random graphs") {
  Rng rng(99);
  for (int trial = 0; trial < 3; ++trial) {
    TempDir dir("roundtrip_random");
    MultiplexGraph g;
    g.n_nodes = 15;
    for (int d = 0; d < 3; ++d) g.dims.push_back(random_symmetric(15, 0.2, rng));
    g.features = Matrix(15, 3);
    for (Eigen::Index i = 0; i < g.features.size(); ++i) g.features.data()[i] = uniform(rng, -5, 5);
    save_multiplex(g, dir.path);
    CHECK(load_multiplex(dir.path) == g);
  }
}

TEST_CASE("loading edge files") {
  TempDir dir("load");
  fs::create_directories(dir.path / "dims");
  {
    std::ofstream meta(dir.path / "meta.json");
    meta << R"({"n_nodes": 2, "n_dims": 1, "n_features": 1})";
  }
  SUBCASE("single edge") {
    std::ofstream(dir.path / "dims" / "0.edges") << "0 1\n";
    const MultiplexGraph g = load_multiplex(dir.path);
    Matrix expected(2, 2);
    expected << 0, 1, 1, 0;
    CHECK(dense(g.dims[0]) == expected);
    CHECK(g.features.cols() == 1);  // structural fallback
  }
  SUBCASE("duplicate lines collapse") {
    std::ofstream(dir.path / "dims" / "0.edges") << "0 1\n0 1\n1 0\n";
    CHECK(load_multiplex(dir.path).dims[0].nonZeros() == 2);
  }
  SUBCASE("out-of-range node reports the line") {
    std::ofstream(dir.path / "dims" / "0.edges") << "0 1\n1 2\n";
    try {
      load_multiplex(dir.path);
      FAIL("expected a parse error");
    } catch (const ParseError& e) {
      CHECK(e.line() == 2);
    }
  }
  SUBCASE("garbage reports the line") {
    std::ofstream(dir.path / "dims" / "0.edges") << "0 1\n\nx y\n";
    CHECK_THROWS_AS(load_multiplex(dir.path), ParseError);
  }
}

TEST_CASE("missing meta file is a validation error") {
  TempDir dir("nometa");
  CHECK_THROWS_AS(load_multiplex(dir.path), ValidationError);
}
