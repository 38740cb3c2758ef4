#pragma once

#include <Eigen/Dense>
#include <Eigen/Sparse>

#include <cstdint>
#include <filesystem>
#include <utility>
#include <vector>

namespace hypermux {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using Vector = Eigen::VectorXd;
using SparseMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Class ids of one node; a single entry for single-label data.
using LabelSet = std::vector<int>;

// D adjacency structures over one shared node set plus a dense feature matrix.
struct MultiplexGraph {
  std::size_t n_nodes = 0;
  std::vector<SparseMatrix> dims;
  Matrix features;
  std::vector<LabelSet> labels;  // empty when unlabeled

  std::size_t n_dims() const { return dims.size(); }
  std::size_t n_features() const { return static_cast<std::size_t>(features.cols()); }
  bool has_labels() const { return !labels.empty(); }
  bool multi_label() const;

  // Throws ValidationError when any invariant is broken.
  void validate() const;

  friend bool operator==(const MultiplexGraph& a, const MultiplexGraph& b);
};

using Edge = std::pair<std::size_t, std::size_t>;

// Builds a symmetric {0,1} adjacency; duplicate and reversed edges collapse.
SparseMatrix adjacency_from_edges(std::size_t n, const std::vector<Edge>& edges);

// Undirected edges (i <= j) of a symmetric adjacency, in row-major order.
std::vector<Edge> edge_list(const SparseMatrix& adjacency);

bool is_symmetric(const SparseMatrix& a, double tol = 1e-12);

// Symmetric GCN normalization D^{-1/2}(A + I)D^{-1/2}, D = diag((A + I) 1).
// Accepts nonnegative real weights; degrees are weighted.
SparseMatrix normalize_adjacency(const SparseMatrix& adjacency);

// Row permutation used by corrupt_features for a given seed.
std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed);

// Rows of X shuffled by a seed-deterministic uniform permutation.
Matrix corrupt_features(const Matrix& features, std::uint64_t seed);

// Per-node degree in every dimension, standardized per column. Columns with
// zero variance are set to zero.
Matrix structural_features(const std::vector<SparseMatrix>& dims);

// Directory format: meta.json, dims/<k>.edges, features.csv, labels.csv.
MultiplexGraph load_multiplex(const std::filesystem::path& dir);
void save_multiplex(const MultiplexGraph& graph, const std::filesystem::path& dir);

}  // namespace hypermux
