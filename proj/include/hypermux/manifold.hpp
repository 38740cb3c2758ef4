#pragma once

#include <string>

#include "hypermux/graph.hpp"

namespace hypermux {

enum class ManifoldKind { Euclidean, PoincareBall, Lorentz };

std::string to_string(ManifoldKind kind);
// Accepts "euclidean", "poincare", "lorentz" (case-insensitive). Throws ConfigError.
ManifoldKind parse_manifold(const std::string& name);

// Curvature is fixed at -1 everywhere. Maps are taken at the base point:
// the origin of the ball, (1, 0, ..., 0) on the hyperboloid.
namespace manifold {

inline constexpr double kBallMaxNorm = 1.0 - 1e-7;
inline constexpr double kHyperboloidTol = 1e-6;

Vector mobius_add(const Vector& x, const Vector& y);

Vector poincare_exp0(const Vector& tangent);
Vector poincare_log0(const Vector& point);

double minkowski_inner(const Vector& u, const Vector& v);

// Tangent vectors at (1, 0, ..., 0) carry M + 1 coordinates with a zero time
// component.
Vector lorentz_exp0(const Vector& tangent);
Vector lorentz_log0(const Vector& point);

// |<p, p>_L + 1|
double hyperboloid_violation(const Vector& point);

// Throws DomainError when p is not on the upper sheet. The constraint is
// checked relative to p_0^2 since rounding in <p, p>_L scales with it.
void check_hyperboloid(const Vector& point);

// Diffeomorphism onto the ball, y_s / (1 + y_0).
Vector lorentz_to_ball(const Vector& point);

// [exp((artanh(|-z_i (+) z_j|)^2 - r) / t) + 1]^{-1}. Lorentz points are carried
// to the ball first. Not defined for the flat kind.
double fermi_dirac_score(const Vector& zi, const Vector& zj, ManifoldKind kind, double r, double t);

// Fermi-Dirac on curved kinds; sigmoid of the inner product on the flat kind.
double edge_score(const Vector& zi, const Vector& zj, ManifoldKind kind, double r, double t);

Vector base_point(ManifoldKind kind, Eigen::Index ambient_dim);

// Row-wise log map at the base point; Lorentz drops the (zero) time column.
Matrix to_euclidean(const Matrix& points, ManifoldKind kind);

// Row-wise exp map at the base point; Lorentz prepends a zero time column first.
Matrix lift(const Matrix& tangent, ManifoldKind kind);

// Largest hyperboloid violation over the rows of a Lorentz point matrix.
double max_hyperboloid_violation(const Matrix& points);

}  // namespace manifold
}  // namespace hypermux
