#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "hypermux/graph.hpp"
#include "hypermux/manifold.hpp"

namespace hypermux {

struct TwoNNResult {
  double id = 0.0;
  std::size_t n_points = 0;      // after deduplication
  std::size_t n_duplicates = 0;  // rows removed as exact duplicates
  std::size_t n_fitted = 0;      // ratios kept after trimming
  double trim = 0.1;
};

// TwoNN estimate: slope through the origin of -log(1 - F(mu)) against log(mu),
// mu = r2 / r1 per point, after dropping the `trim` fraction of largest ratios.
// Exact duplicates are collapsed first; nearest-neighbour ties go to the lower
// index. Needs at least 10 distinct points.
TwoNNResult twonn(const Matrix& points, double trim = 0.1);
double twonn_id(const Matrix& points, double trim = 0.1);

// The regression step alone, on precomputed ratios (all >= 1).
double twonn_from_ratios(std::vector<double> ratios, double trim = 0.1);

struct LinearIdResult {
  int components = 1;
  bool zero_variance = false;
  std::vector<double> explained;  // per-component variance ratios, descending
};

// Smallest number of principal components whose cumulative explained variance
// reaches `threshold`.
LinearIdResult linear_id_detail(const Matrix& points, double threshold = 0.9);
// Same; prints a warning to stderr when every point is identical.
int linear_id(const Matrix& points, double threshold = 0.9);

struct GeoReport {
  double id = 0.0;
  int lid = 1;
  double gap = 0.0;  // lid - id
  std::size_t n_duplicates = 0;
  double trim = 0.1;
  // Context
  long long epoch = -1;
  long long d = -1;
  std::uint64_t seed = 0;
  std::string model;
};

GeoReport curvature_gap(const Matrix& points, double trim = 0.1, double threshold = 0.9);
// Maps manifold points to the tangent space at the base point first.
GeoReport curvature_gap(const Matrix& points, ManifoldKind kind, double trim = 0.1, double threshold = 0.9);

}  // namespace hypermux
