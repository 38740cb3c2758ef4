#include "hypermux/geo.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <iostream>
#include <limits>
#include <numeric>

#include "hypermux/errors.hpp"

namespace hypermux {
namespace {

// Row indices of the distinct rows, lowest index kept per duplicate group.
std::vector<Eigen::Index> distinct_rows(const Matrix& points) {
  std::vector<Eigen::Index> order(static_cast<std::size_t>(points.rows()));
  std::iota(order.begin(), order.end(), Eigen::Index{0});
  auto less = [&](Eigen::Index a, Eigen::Index b) {
    for (Eigen::Index c = 0; c < points.cols(); ++c) {
      if (points(a, c) != points(b, c)) return points(a, c) < points(b, c);
    }
    return a < b;
  };
  std::sort(order.begin(), order.end(), less);
  std::vector<Eigen::Index> keep;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i > 0 && points.row(order[i]) == points.row(order[i - 1])) continue;
    keep.push_back(order[i]);
  }
  std::sort(keep.begin(), keep.end());
  return keep;
}

}  // namespace

double twonn_from_ratios(std::vector<double> ratios, double trim) {
  if (!(trim >= 0.0 && trim < 1.0)) throw ValidationError("twonn: trim fraction must lie in [0, 1)");
  const std::size_t n = ratios.size();
  if (n < 10) throw ValidationError("twonn: need at least 10 usable points, got " + std::to_string(n));
  for (double mu : ratios) {
    if (!(mu >= 1.0) || !std::isfinite(mu)) throw ValidationError("twonn: ratios must be finite and >= 1");
  }
  std::sort(ratios.begin(), ratios.end());
  // F(mu_(i)) = i / n; the last point has F = 1 and is always dropped.
  const auto keep = std::min(n - 1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - trim))));
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < keep; ++i) {
    const double x = std::log(ratios[i]);
    const double y = -std::log(1.0 - static_cast<double>(i + 1) / static_cast<double>(n));
    sxy += x * y;
    sxx += x * x;
  }
  if (sxx <= 0.0) throw ValidationError("twonn: degenerate ratios (all equal to 1)");
  return sxy / sxx;
}

TwoNNResult twonn(const Matrix& points, double trim) {
  const auto keep = distinct_rows(points);
  TwoNNResult result;
  result.trim = trim;
  result.n_points = keep.size();
  result.n_duplicates = static_cast<std::size_t>(points.rows()) - keep.size();
  if (keep.size() < 10) throw ValidationError("twonn: need at least 10 distinct points, got " + std::to_string(keep.size()));

  const std::size_t n = keep.size();
  const Eigen::Index m = points.cols();
  Matrix x(static_cast<Eigen::Index>(n), m);
  for (std::size_t i = 0; i < n; ++i) x.row(static_cast<Eigen::Index>(i)) = points.row(keep[i]);

  constexpr double inf = std::numeric_limits<double>::infinity();
  std::vector<double> r1(n, inf), r2(n, inf);
  auto offer = [&](std::size_t i, double d) {
    // Strict comparisons keep the lower index on ties, since j ascends.
    if (d < r1[i]) {
      r2[i] = r1[i];
      r1[i] = d;
    } else if (d < r2[i]) {
      r2[i] = d;
    }
  };
  const double* data = x.data();
  for (std::size_t i = 0; i < n; ++i) {
    const double* xi = data + i * static_cast<std::size_t>(m);
    for (std::size_t j = i + 1; j < n; ++j) {
      const double* xj = data + j * static_cast<std::size_t>(m);
      double d = 0.0;
      for (Eigen::Index c = 0; c < m; ++c) {
        const double diff = xi[c] - xj[c];
        d += diff * diff;
      }
      offer(i, d);
      offer(j, d);
    }
  }
  std::vector<double> ratios(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(r1[i] > 0.0)) throw ValidationError("twonn: zero nearest-neighbour distance after deduplication");
    ratios[i] = std::sqrt(r2[i] / r1[i]);
  }
  result.n_fitted = std::min(n - 1, static_cast<std::size_t>(std::floor(static_cast<double>(n) * (1.0 - trim))));
  result.id = twonn_from_ratios(std::move(ratios), trim);
  return result;
}

double twonn_id(const Matrix& points, double trim) { return twonn(points, trim).id; }

LinearIdResult linear_id_detail(const Matrix& points, double threshold) {
  if (points.rows() < 2) throw ValidationError("linear_id: need at least 2 points");
  if (!(threshold > 0.0 && threshold <= 1.0)) throw ValidationError("linear_id: threshold must lie in (0, 1]");
  Eigen::MatrixXd centered = points.rowwise() - points.colwise().mean();
  Eigen::MatrixXd cov = centered.transpose() * centered / static_cast<double>(points.rows() - 1);
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(cov, Eigen::EigenvaluesOnly);
  std::vector<double> eig(solver.eigenvalues().data(), solver.eigenvalues().data() + solver.eigenvalues().size());
  for (auto& e : eig) e = std::max(e, 0.0);
  std::sort(eig.begin(), eig.end(), std::greater<>());
  const double total = std::accumulate(eig.begin(), eig.end(), 0.0);
  LinearIdResult result;
  if (!(total > 0.0)) {
    result.zero_variance = true;
    result.components = 1;
    return result;
  }
  double cum = 0.0;
  result.components = static_cast<int>(eig.size());
  bool found = false;
  for (std::size_t k = 0; k < eig.size(); ++k) {
    result.explained.push_back(eig[k] / total);
    cum += eig[k];
    if (!found && cum >= threshold * total * (1.0 - 1e-12)) {
      result.components = static_cast<int>(k + 1);
      found = true;
    }
  }
  return result;
}

int linear_id(const Matrix& points, double threshold) {
  const auto r = linear_id_detail(points, threshold);
  if (r.zero_variance) std::cerr << "warning: linear_id: all points are identical (zero variance)\n";
  return r.components;
}

GeoReport curvature_gap(const Matrix& points, double trim, double threshold) {
  const auto nn = twonn(points, trim);
  GeoReport report;
  report.id = nn.id;
  report.n_duplicates = nn.n_duplicates;
  report.trim = trim;
  report.lid = linear_id(points, threshold);
  report.gap = static_cast<double>(report.lid) - report.id;
  return report;
}

GeoReport curvature_gap(const Matrix& points, ManifoldKind kind, double trim, double threshold) {
  return curvature_gap(manifold::to_euclidean(points, kind), trim, threshold);
}

}  // namespace hypermux
