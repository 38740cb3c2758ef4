#include "hypermux/graph.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {

bool MultiplexGraph::multi_label() const {
  return std::any_of(labels.begin(), labels.end(), [](const LabelSet& s) { return s.size() != 1; });
}

void MultiplexGraph::validate() const {
  if (dims.empty()) throw ValidationError("multiplex graph needs at least one dimension");
  if (features.cols() < 1) throw ValidationError("multiplex graph needs at least one feature column");
  if (static_cast<std::size_t>(features.rows()) != n_nodes) {
    throw ValidationError("feature matrix has " + std::to_string(features.rows()) + " rows, expected " +
                          std::to_string(n_nodes));
  }
  for (std::size_t d = 0; d < dims.size(); ++d) {
    const auto& a = dims[d];
    if (static_cast<std::size_t>(a.rows()) != n_nodes || static_cast<std::size_t>(a.cols()) != n_nodes) {
      throw ValidationError("dimension " + std::to_string(d) + " is not " + std::to_string(n_nodes) + "x" +
                            std::to_string(n_nodes));
    }
    if (!is_symmetric(a)) throw ValidationError("dimension " + std::to_string(d) + " is not symmetric");
  }
  if (!labels.empty() && labels.size() != n_nodes) {
    throw ValidationError("label count " + std::to_string(labels.size()) + " differs from node count");
  }
}

bool operator==(const MultiplexGraph& a, const MultiplexGraph& b) {
  if (a.n_nodes != b.n_nodes || a.dims.size() != b.dims.size() || a.labels != b.labels) return false;
  if (a.features.rows() != b.features.rows() || a.features.cols() != b.features.cols()) return false;
  if (a.features != b.features) return false;
  for (std::size_t d = 0; d < a.dims.size(); ++d) {
    if (edge_list(a.dims[d]) != edge_list(b.dims[d])) return false;
  }
  return true;
}

SparseMatrix adjacency_from_edges(std::size_t n, const std::vector<Edge>& edges) {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(edges.size() * 2);
  for (auto [i, j] : edges) {
    if (i >= n || j >= n) {
      throw ValidationError("edge (" + std::to_string(i) + ", " + std::to_string(j) + ") out of range for " +
                            std::to_string(n) + " nodes");
    }
    triplets.emplace_back(static_cast<int>(i), static_cast<int>(j), 1.0);
    if (i != j) triplets.emplace_back(static_cast<int>(j), static_cast<int>(i), 1.0);
  }
  SparseMatrix a(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  // Duplicates collapse to a single 1.
  a.setFromTriplets(triplets.begin(), triplets.end(), [](double, double) { return 1.0; });
  a.makeCompressed();
  return a;
}

std::vector<Edge> edge_list(const SparseMatrix& adjacency) {
  std::vector<Edge> out;
  for (Eigen::Index r = 0; r < adjacency.outerSize(); ++r) {
    for (SparseMatrix::InnerIterator it(adjacency, r); it; ++it) {
      if (it.col() >= r && it.value() != 0.0) {
        out.emplace_back(static_cast<std::size_t>(r), static_cast<std::size_t>(it.col()));
      }
    }
  }
  return out;
}

bool is_symmetric(const SparseMatrix& a, double tol) {
  if (a.rows() != a.cols()) return false;
  SparseMatrix t = a.transpose();
  SparseMatrix diff = a - t;
  for (Eigen::Index k = 0; k < diff.nonZeros(); ++k) {
    if (std::abs(diff.valuePtr()[k]) > tol) return false;
  }
  return true;
}

SparseMatrix normalize_adjacency(const SparseMatrix& adjacency) {
  if (adjacency.rows() != adjacency.cols()) {
    throw ValidationError("normalize_adjacency: matrix is " + std::to_string(adjacency.rows()) + "x" +
                          std::to_string(adjacency.cols()) + ", expected square");
  }
  if (!is_symmetric(adjacency)) throw ValidationError("normalize_adjacency: matrix is not symmetric");
  const Eigen::Index n = adjacency.rows();
  SparseMatrix eye(n, n);
  eye.setIdentity();
  SparseMatrix with_loops = adjacency + eye;
  Vector inv_sqrt_deg(n);
  for (Eigen::Index r = 0; r < n; ++r) {
    double deg = 0.0;
    for (SparseMatrix::InnerIterator it(with_loops, r); it; ++it) {
      if (it.value() < 0.0) throw ValidationError("normalize_adjacency: negative edge weight");
      deg += it.value();
    }
    inv_sqrt_deg[r] = 1.0 / std::sqrt(deg);
  }
  for (Eigen::Index r = 0; r < n; ++r) {
    for (SparseMatrix::InnerIterator it(with_loops, r); it; ++it) {
      it.valueRef() *= inv_sqrt_deg[r] * inv_sqrt_deg[it.col()];
    }
  }
  with_loops.makeCompressed();
  return with_loops;
}

std::vector<std::size_t> corruption_permutation(std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  return random_permutation(n, rng);
}

Matrix corrupt_features(const Matrix& features, std::uint64_t seed) {
  const auto perm = corruption_permutation(static_cast<std::size_t>(features.rows()), seed);
  Matrix out(features.rows(), features.cols());
  for (std::size_t i = 0; i < perm.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = features.row(perm[i]);
  return out;
}

Matrix structural_features(const std::vector<SparseMatrix>& dims) {
  if (dims.empty()) return {};
  const Eigen::Index n = dims.front().rows();
  Matrix x(n, static_cast<Eigen::Index>(dims.size()));
  for (std::size_t d = 0; d < dims.size(); ++d) {
    for (Eigen::Index r = 0; r < n; ++r) {
      double deg = 0.0;
      for (SparseMatrix::InnerIterator it(dims[d], r); it; ++it) deg += it.value();
      x(r, static_cast<Eigen::Index>(d)) = deg;
    }
  }
  for (Eigen::Index c = 0; c < x.cols(); ++c) {
    const double mean = x.col(c).mean();
    x.col(c).array() -= mean;
    const double sd = std::sqrt(x.col(c).squaredNorm() / static_cast<double>(n));
    if (sd > 0.0) {
      x.col(c) /= sd;
    } else {
      x.col(c).setZero();
    }
  }
  return x;
}

}  // namespace hypermux
