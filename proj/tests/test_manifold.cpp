#include <doctest.h>

#include <cmath>

#include "hypermux/errors.hpp"
#include "hypermux/manifold.hpp"
#include "hypermux/rng.hpp"

using namespace hypermux;
using namespace hypermux::manifold;

namespace {

Vector vec(std::initializer_list<double> xs) {
  Vector v(static_cast<Eigen::Index>(xs.size()));
  Eigen::Index i = 0;
  for (double x : xs) v[i++] = x;
  return v;
}

// Uniform direction scaled to a uniform norm in [0, max_norm].
Vector random_vector(Rng& rng, Eigen::Index n, double max_norm) {
  Vector v(n);
  std::normal_distribution<double> normal;
  for (Eigen::Index i = 0; i < n; ++i) v[i] = normal(rng);
  return v.normalized() * uniform(rng, 0.0, max_norm);
}

Vector random_ball_point(Rng& rng, Eigen::Index n, double max_norm = 0.95) { return random_vector(rng, n, max_norm); }

Vector tangent_at_base(const Vector& spatial) {
  Vector t(spatial.size() + 1);
  t[0] = 0.0;
  t.tail(spatial.size()) = spatial;
  return t;
}

}  // namespace

TEST_CASE("manifold names") {
  CHECK(parse_manifold("Lorentz") == ManifoldKind::Lorentz);
  CHECK(parse_manifold("poincare") == ManifoldKind::PoincareBall);
  CHECK(parse_manifold(to_string(ManifoldKind::Euclidean)) == ManifoldKind::Euclidean);
  CHECK_THROWS_AS(parse_manifold("sphere"), ConfigError);
}

TEST_CASE("mobius addition") {
  SUBCASE("left identity and inverse") {
    const Vector y = vec({0.3, -0.2, 0.1});
    CHECK((mobius_add(Vector::Zero(3), y) - y).norm() < 1e-15);
    CHECK(mobius_add(-y, y).norm() < 1e-15);
  }
  SUBCASE("collinear halves") {
    const Vector r = mobius_add(vec({0.5, 0.0}), vec({0.5, 0.0}));
    CHECK(r[0] == doctest::Approx(0.8).epsilon(1e-14));
    CHECK(r[1] == 0.0);
  }
  SUBCASE("stays inside the ball") {
    Rng rng(1);
    for (int i = 0; i < 10000; ++i) {
      const Vector x = random_ball_point(rng, 4, 0.999999), y = random_ball_point(rng, 4, 0.999999);
      CHECK(mobius_add(x, y).norm() < 1.0);
    }
  }
  SUBCASE("outside the ball is a domain error") {
    CHECK_THROWS_AS(mobius_add(vec({1.0, 0.0}), vec({0.1, 0.0})), DomainError);
  }
}

TEST_CASE("poincare maps at the origin") {
  CHECK(poincare_exp0(Vector::Zero(3)).norm() == 0.0);
  CHECK(poincare_log0(Vector::Zero(3)).norm() == 0.0);
  const Vector p = poincare_exp0(vec({1.0, 0.0}));
  CHECK(p[0] == doctest::Approx(0.76159).epsilon(1e-5));
  CHECK(p[0] == doctest::Approx(std::tanh(1.0)).epsilon(1e-15));
  CHECK(p[1] == 0.0);
  CHECK_THROWS_AS(poincare_log0(vec({0.6, 0.8})), DomainError);
}

TEST_CASE("minkowski inner product") {
  CHECK(minkowski_inner(vec({1, 0, 0}), vec({1, 0, 0})) == -1.0);
  CHECK(minkowski_inner(vec({0, 1, 0}), vec({0, 0, 1})) == 0.0);
  CHECK(minkowski_inner(vec({2, 1, 1}), vec({1, 2, 0})) == 0.0);
  CHECK_THROWS_AS(minkowski_inner(vec({1, 0}), vec({1, 0, 0})), ShapeError);
}

TEST_CASE("lorentz maps at the base point") {
  SUBCASE("unit tangent") {
    const Vector y = lorentz_exp0(vec({0, 1, 0}));
    CHECK(y[0] == doctest::Approx(std::cosh(1.0)).epsilon(1e-15));
    CHECK(y[1] == doctest::Approx(std::sinh(1.0)).epsilon(1e-15));
    CHECK(y[0] == doctest::Approx(1.5431).epsilon(1e-4));
    CHECK(y[1] == doctest::Approx(1.1752).epsilon(1e-4));
    CHECK(y[2] == 0.0);
  }
  SUBCASE("base point and zero tangent") {
    CHECK(lorentz_log0(vec({1, 0, 0})).norm() == 0.0);
    CHECK((lorentz_exp0(Vector::Zero(3)) - vec({1, 0, 0})).norm() == 0.0);
  }
  SUBCASE("outputs lie on the hyperboloid") {
    Rng rng(2);
    for (int i = 0; i < 1000; ++i) {
      const Vector y = lorentz_exp0(tangent_at_base(random_vector(rng, 5, 5.0)));
      CHECK(hyperboloid_violation(y) < 1e-9 * y[0] * y[0]);
      CHECK_NOTHROW(check_hyperboloid(y));
    }
  }
  SUBCASE("points off the hyperboloid are rejected") {
    CHECK_THROWS_AS(lorentz_log0(vec({1.0, 0.5, 0.0})), DomainError);
    CHECK_THROWS_AS(lorentz_log0(vec({-1.0, 0.0, 0.0})), DomainError);
    CHECK_THROWS_AS(lorentz_exp0(vec({0.5, 1.0, 0.0})), DomainError);
  }
}

TEST_CASE("round trips on both manifolds") {
  Rng rng(3);
  double worst_ball = 0, worst_lorentz = 0;
  for (int i = 0; i < 10000; ++i) {
    const Vector h = random_vector(rng, 4, 3.0);
    worst_ball = std::max(worst_ball, (poincare_log0(poincare_exp0(h)) - h).norm());
    const Vector th = tangent_at_base(h);
    worst_lorentz = std::max(worst_lorentz, (lorentz_log0(lorentz_exp0(th)) - th).norm());

    const Vector p = poincare_exp0(random_vector(rng, 4, 3.0));
    worst_ball = std::max(worst_ball, (poincare_exp0(poincare_log0(p)) - p).norm());
    const Vector y = lorentz_exp0(tangent_at_base(random_vector(rng, 4, 3.0)));
    worst_lorentz = std::max(worst_lorentz, (lorentz_exp0(lorentz_log0(y)) - y).norm());
  }
  CHECK(worst_ball < 1e-9);
  CHECK(worst_lorentz < 1e-9);
}

TEST_CASE("lorentz to ball carries the base point to the origin and stays inside") {
  CHECK(lorentz_to_ball(vec({1, 0, 0})).norm() == 0.0);
  Rng rng(4);
  for (int i = 0; i < 100; ++i) {
    const Vector y = lorentz_exp0(tangent_at_base(random_vector(rng, 3, 4.0)));
    const Vector b = lorentz_to_ball(y);
    CHECK(b.norm() < 1.0);
    // Same distance to the base point on both models: |b| = tanh(d / 2).
    CHECK(b.norm() == doctest::Approx(std::tanh(std::acosh(y[0]) / 2)).epsilon(1e-9));
  }
}

TEST_CASE("fermi-dirac decoder") {
  const Vector z = vec({0.2, -0.3});
  SUBCASE("zero distance") {
    CHECK(fermi_dirac_score(z, z, ManifoldKind::PoincareBall, 2.0, 1.0) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-2.0))).epsilon(1e-12));
    CHECK(fermi_dirac_score(z, z, ManifoldKind::PoincareBall, 2.0, 1.0) == doctest::Approx(0.88080).epsilon(1e-5));
  }
  SUBCASE("boundary limit") {
    CHECK(fermi_dirac_score(vec({0, 0}), vec({0.9999999, 0}), ManifoldKind::PoincareBall, 2.0, 1.0) < 1e-6);
  }
  SUBCASE("symmetric") {
    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
      const Vector a = random_ball_point(rng, 3), b = random_ball_point(rng, 3);
      CHECK(std::abs(fermi_dirac_score(a, b, ManifoldKind::PoincareBall, 2, 1) -
                     fermi_dirac_score(b, a, ManifoldKind::PoincareBall, 2, 1)) < 1e-9);
    }
  }
  SUBCASE("strictly decreasing along a ray") {
    double prev = 1.0;
    for (double s = 0.0; s < 0.99; s += 0.01) {
      const double score = fermi_dirac_score(z, z + s * vec({0.6, 0.8}) * 0.5, ManifoldKind::PoincareBall, 2, 1);
      if (s > 0) CHECK(score < prev);
      prev = score;
    }
  }
  SUBCASE("lorentz inputs score as their ball images") {
    const Vector a = lorentz_exp0(vec({0, 0.3, 0.4})), b = lorentz_exp0(vec({0, -0.5, 0.1}));
    CHECK(fermi_dirac_score(a, b, ManifoldKind::Lorentz, 2, 1) ==
          doctest::Approx(fermi_dirac_score(lorentz_to_ball(a), lorentz_to_ball(b), ManifoldKind::PoincareBall, 2, 1))
              .epsilon(1e-14));
  }
  SUBCASE("flat kind uses the inner product sigmoid") {
    CHECK_THROWS_AS(fermi_dirac_score(z, z, ManifoldKind::Euclidean, 2, 1), DomainError);
    CHECK(edge_score(vec({1, 0}), vec({1, 0}), ManifoldKind::Euclidean, 2, 1) ==
          doctest::Approx(1.0 / (1.0 + std::exp(-1.0))));
  }
  SUBCASE("non-positive temperature") { CHECK_THROWS_AS(fermi_dirac_score(z, z, ManifoldKind::PoincareBall, 2, 0), ValidationError); }
}

TEST_CASE("to_euclidean and lift") {
  Rng rng(6);
  Matrix h(5, 3);
  for (Eigen::Index i = 0; i < h.size(); ++i) h.data()[i] = uniform(rng, -1, 1);
  CHECK(to_euclidean(h, ManifoldKind::Euclidean) == h);
  CHECK((to_euclidean(lift(h, ManifoldKind::PoincareBall), ManifoldKind::PoincareBall) - h).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix y = lift(h, ManifoldKind::Lorentz);
  CHECK(y.cols() == 4);
  CHECK(max_hyperboloid_violation(y) < 1e-12);
  CHECK((to_euclidean(y, ManifoldKind::Lorentz) - h).cwiseAbs().maxCoeff() < 1e-12);
  const Matrix base = base_point(ManifoldKind::Lorentz, 4).transpose();
  CHECK(to_euclidean(base, ManifoldKind::Lorentz) == Matrix::Zero(1, 3));
}
