#include "hypermux/manifold.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>

#include "hypermux/errors.hpp"

namespace hypermux {

std::string to_string(ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean:
      return "euclidean";
    case ManifoldKind::PoincareBall:
      return "poincare";
    case ManifoldKind::Lorentz:
      return "lorentz";
  }
  return "unknown";
}

ManifoldKind parse_manifold(const std::string& name) {
  std::string lower(name);
  std::transform(lower.begin(), lower.end(), lower.begin(), [](unsigned char c) { return std::tolower(c); });
  if (lower == "euclidean") return ManifoldKind::Euclidean;
  if (lower == "poincare" || lower == "poincareball" || lower == "poincare_ball") return ManifoldKind::PoincareBall;
  if (lower == "lorentz" || lower == "hyperboloid") return ManifoldKind::Lorentz;
  throw ConfigError("unknown manifold '" + name + "' (expected euclidean, poincare or lorentz)");
}

namespace manifold {
namespace {

void check_ball(const Vector& p, const char* op) {
  if (!(p.norm() < 1.0)) throw DomainError(std::string(op) + ": point outside the open unit ball");
}

}  // namespace

Vector mobius_add(const Vector& x, const Vector& y) {
  if (x.size() != y.size()) throw ShapeError("mobius_add: length mismatch");
  check_ball(x, "mobius_add");
  check_ball(y, "mobius_add");
  const double xy = x.dot(y);
  const double x2 = x.squaredNorm();
  const double y2 = y.squaredNorm();
  Vector out = ((1.0 + 2.0 * xy + y2) * x + (1.0 - x2) * y) / (1.0 + 2.0 * xy + x2 * y2);
  const double n = out.norm();
  if (n > kBallMaxNorm) out *= kBallMaxNorm / n;
  return out;
}

Vector poincare_exp0(const Vector& tangent) {
  const double n = tangent.norm();
  if (n == 0.0) return Vector::Zero(tangent.size());
  return std::min(std::tanh(n), kBallMaxNorm) / n * tangent;
}

Vector poincare_log0(const Vector& point) {
  const double n = point.norm();
  if (!(n < 1.0)) throw DomainError("poincare_log0: point outside the open unit ball");
  if (n == 0.0) return Vector::Zero(point.size());
  return std::atanh(std::min(n, kBallMaxNorm)) / n * point;
}

double minkowski_inner(const Vector& u, const Vector& v) {
  if (u.size() != v.size()) throw ShapeError("minkowski_inner: length mismatch");
  if (u.size() < 2) throw ShapeError("minkowski_inner: vectors need at least 2 coordinates");
  return -u[0] * v[0] + u.tail(u.size() - 1).dot(v.tail(v.size() - 1));
}

Vector lorentz_exp0(const Vector& tangent) {
  if (tangent.size() < 2) throw ShapeError("lorentz_exp0: vectors need at least 2 coordinates");
  if (std::abs(tangent[0]) > 1e-12) throw DomainError("lorentz_exp0: tangent vector has a nonzero time component");
  const auto spatial = tangent.tail(tangent.size() - 1);
  const double n = spatial.norm();  // sqrt(<h, h>_L) when h_0 = 0
  Vector out(tangent.size());
  out[0] = std::cosh(n);
  if (n == 0.0) {
    out.tail(out.size() - 1).setZero();
  } else {
    out.tail(out.size() - 1) = std::sinh(n) / n * spatial;
  }
  return out;
}

Vector lorentz_log0(const Vector& point) {
  check_hyperboloid(point);
  // arcosh(p_0) / sqrt(p_0^2 - 1) equals asinh(|p_s|) / |p_s| on the sheet; the
  // second form has no singularity at the base point.
  const auto spatial = point.tail(point.size() - 1);
  const double n = spatial.norm();
  Vector out = Vector::Zero(point.size());
  if (n > 0.0) out.tail(out.size() - 1) = std::asinh(n) / n * spatial;
  return out;
}

double hyperboloid_violation(const Vector& point) { return std::abs(minkowski_inner(point, point) + 1.0); }

void check_hyperboloid(const Vector& point) {
  if (point.size() < 2) throw ShapeError("hyperboloid point needs at least 2 coordinates");
  if (!point.allFinite()) throw DomainError("hyperboloid point is not finite");
  if (point[0] < 1.0 - kHyperboloidTol) throw DomainError("hyperboloid point is not on the upper sheet");
  if (hyperboloid_violation(point) > kHyperboloidTol * std::max(1.0, point[0] * point[0])) {
    throw DomainError("point is off the hyperboloid: |<p,p>_L + 1| = " + std::to_string(hyperboloid_violation(point)));
  }
}

Vector lorentz_to_ball(const Vector& point) {
  check_hyperboloid(point);
  return point.tail(point.size() - 1) / (1.0 + point[0]);
}

double fermi_dirac_score(const Vector& zi, const Vector& zj, ManifoldKind kind, double r, double t) {
  if (!(t > 0.0)) throw ValidationError("fermi_dirac_score: temperature must be positive");
  Vector a, b;
  switch (kind) {
    case ManifoldKind::PoincareBall:
      a = zi;
      b = zj;
      break;
    case ManifoldKind::Lorentz:
      a = lorentz_to_ball(zi);
      b = lorentz_to_ball(zj);
      break;
    case ManifoldKind::Euclidean:
      throw DomainError("fermi_dirac_score: not defined on the flat manifold");
  }
  const double n = std::min(mobius_add(-a, b).norm(), kBallMaxNorm);
  const double dist = std::atanh(n);
  return 1.0 / (std::exp((dist * dist - r) / t) + 1.0);
}

double edge_score(const Vector& zi, const Vector& zj, ManifoldKind kind, double r, double t) {
  if (kind == ManifoldKind::Euclidean) {
    if (zi.size() != zj.size()) throw ShapeError("edge_score: length mismatch");
    return 1.0 / (1.0 + std::exp(-zi.dot(zj)));
  }
  return fermi_dirac_score(zi, zj, kind, r, t);
}

Vector base_point(ManifoldKind kind, Eigen::Index ambient_dim) {
  Vector x = Vector::Zero(ambient_dim);
  if (kind == ManifoldKind::Lorentz && ambient_dim > 0) x[0] = 1.0;
  return x;
}

Matrix to_euclidean(const Matrix& points, ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean:
      return points;
    case ManifoldKind::PoincareBall: {
      Matrix out(points.rows(), points.cols());
      for (Eigen::Index i = 0; i < points.rows(); ++i) out.row(i) = poincare_log0(points.row(i).transpose()).transpose();
      return out;
    }
    case ManifoldKind::Lorentz: {
      if (points.cols() < 2) throw ShapeError("to_euclidean: Lorentz points need at least 2 coordinates");
      Matrix out(points.rows(), points.cols() - 1);
      for (Eigen::Index i = 0; i < points.rows(); ++i) {
        const Vector t = lorentz_log0(points.row(i).transpose());
        out.row(i) = t.tail(t.size() - 1).transpose();
      }
      return out;
    }
  }
  return points;
}

Matrix lift(const Matrix& tangent, ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean:
      return tangent;
    case ManifoldKind::PoincareBall: {
      Matrix out(tangent.rows(), tangent.cols());
      for (Eigen::Index i = 0; i < tangent.rows(); ++i) out.row(i) = poincare_exp0(tangent.row(i).transpose()).transpose();
      return out;
    }
    case ManifoldKind::Lorentz: {
      Matrix out(tangent.rows(), tangent.cols() + 1);
      for (Eigen::Index i = 0; i < tangent.rows(); ++i) {
        Vector h(tangent.cols() + 1);
        h[0] = 0.0;
        h.tail(tangent.cols()) = tangent.row(i).transpose();
        out.row(i) = lorentz_exp0(h).transpose();
      }
      return out;
    }
  }
  return tangent;
}

double max_hyperboloid_violation(const Matrix& points) {
  double worst = 0.0;
  for (Eigen::Index i = 0; i < points.rows(); ++i) {
    worst = std::max(worst, hyperboloid_violation(points.row(i).transpose()));
  }
  return worst;
}

}  // namespace manifold
}  // namespace hypermux
