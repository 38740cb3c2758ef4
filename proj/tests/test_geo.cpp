#include <doctest.h>

#include <cmath>

#include "hypermux/errors.hpp"
#include "hypermux/geo.hpp"
#include "hypermux/rng.hpp"

using namespace hypermux;

namespace {

Matrix gaussian(Rng& rng, Eigen::Index n, Eigen::Index m) {
  std::normal_distribution<double> normal;
  Matrix x(n, m);
  for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
  return x;
}

// Random orthonormal m x m matrix.
Matrix rotation(Rng& rng, Eigen::Index m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(Eigen::MatrixXd(gaussian(rng, m, m)));
  return Matrix(qr.householderQ());
}

// n points uniform in [0,1]^k embedded into m ambient dimensions by a random
// isometry.
Matrix uniform_manifold(Rng& rng, Eigen::Index n, Eigen::Index k, Eigen::Index m) {
  Matrix x = Matrix::Zero(n, m);
  for (Eigen::Index i = 0; i < n; ++i) {
    for (Eigen::Index j = 0; j < k; ++j) x(i, j) = uniform01(rng);
  }
  return x * rotation(rng, m);
}

}  // namespace

TEST_CASE("TwoNN recovers the dimension of flat samples") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    CHECK(twonn_id(uniform_manifold(rng, 5000, 2, 10)) == doctest::Approx(2.0).epsilon(0.1));
    CHECK(twonn_id(uniform_manifold(rng, 5000, 1, 5)) == doctest::Approx(1.0).epsilon(0.1));
  }
}

TEST_CASE("TwoNN regression on Pareto ratios") {
  for (std::uint64_t seed = 0; seed < 3; ++seed) {
    Rng rng(seed);
    std::vector<double> mu(5000);
    // Inverse CDF of Pareto(shape 3, scale 1): (1 - u)^(-1/3).
    for (auto& m : mu) m = std::pow(1.0 - uniform01(rng), -1.0 / 3.0);
    const double d = twonn_from_ratios(mu);
    CHECK(d >= 2.85);
    CHECK(d <= 3.15);
  }
}

TEST_CASE("TwoNN is invariant under isometries and scaling") {
  Rng rng(4);
  const Matrix x = uniform_manifold(rng, 400, 3, 6);
  const double base = twonn_id(x);
  Matrix shifted = x;
  shifted.rowwise() += Eigen::RowVectorXd::Constant(6, 3.7);
  CHECK(std::abs(twonn_id(shifted) - base) < 1e-9);
  CHECK(std::abs(twonn_id(x * rotation(rng, 6)) - base) < 1e-9);
  CHECK(std::abs(twonn_id(x * 0.25) - base) < 1e-9);
}

TEST_CASE("TwoNN bookkeeping") {
  Rng rng(5);
  Matrix x = uniform_manifold(rng, 100, 2, 3);
  Matrix with_dups(103, 3);
  with_dups << x, x.topRows(3);
  const TwoNNResult r = twonn(with_dups, 0.1);
  CHECK(r.n_duplicates == 3);
  CHECK(r.n_points == 100);
  CHECK(r.n_fitted == 90);
  CHECK(r.trim == 0.1);
  CHECK(r.id == doctest::Approx(twonn_id(x)).epsilon(1e-12));

  CHECK_THROWS_AS(twonn(x.topRows(9)), ValidationError);
  Matrix same = Matrix::Ones(20, 3);
  CHECK_THROWS_AS(twonn(same), ValidationError);
  CHECK_THROWS_AS(twonn_from_ratios({1.5, 2.0}), ValidationError);
  CHECK_THROWS_AS(twonn_from_ratios(std::vector<double>(20, 0.5)), ValidationError);
}

TEST_CASE("linear intrinsic dimension") {
  Rng rng(6);
  SUBCASE("noise-free subspace") {
    const Matrix x = gaussian(rng, 500, 3) * gaussian(rng, 3, 10);
    CHECK(linear_id(x) == 3);
  }
  SUBCASE("isotropic gaussian needs ceil(0.9 M) components") {
    const int got = linear_id(gaussian(rng, 20000, 10));
    CHECK(got >= 8);
    CHECK(got <= 10);
    CHECK(got == 9);
  }
  SUBCASE("one-dimensional data") {
    Matrix x(50, 4);
    for (Eigen::Index i = 0; i < 50; ++i) x.row(i) = static_cast<double>(i) * Eigen::RowVectorXd::LinSpaced(4, 1, 4);
    for (double thr : {0.5, 0.9, 0.999}) CHECK(linear_id(x, thr) == 1);
  }
  SUBCASE("identical points") {
    const LinearIdResult r = linear_id_detail(Matrix::Ones(10, 3));
    CHECK(r.components == 1);
    CHECK(r.zero_variance);
  }
  SUBCASE("invariant under rotation, translation and scaling") {
    const Matrix x = gaussian(rng, 300, 6) * Eigen::VectorXd::LinSpaced(6, 3, 0.2).asDiagonal();
    const int base = linear_id(x);
    Matrix moved = (x * rotation(rng, 6)) * 5.0;
    moved.rowwise() += Eigen::RowVectorXd::Constant(6, -2.0);
    CHECK(linear_id(moved) == base);
  }
  SUBCASE("explained ratios sum to one") {
    const LinearIdResult r = linear_id_detail(gaussian(rng, 100, 5));
    double total = 0;
    for (double e : r.explained) total += e;
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("curvature gap") {
  Rng rng(7);
  SUBCASE("flat subspace") {
    const Matrix x = uniform_manifold(rng, 3000, 3, 10);
    const GeoReport g = curvature_gap(x);
    CHECK(g.lid == 3);
    CHECK(std::abs(g.gap) <= 0.3);
  }
  SUBCASE("circle") {
    Matrix x = Matrix::Zero(2000, 10);
    for (Eigen::Index i = 0; i < 2000; ++i) {
      const double t = uniform(rng, 0, 2 * M_PI);
      x(i, 0) = std::cos(t);
      x(i, 1) = std::sin(t);
    }
    x = x * rotation(rng, 10);
    const GeoReport g = curvature_gap(x);
    CHECK(g.lid == 2);
    CHECK(g.id == doctest::Approx(1.0).epsilon(0.1));
    CHECK(g.gap == doctest::Approx(1.0).epsilon(0.15));
  }
  SUBCASE("gap is lid minus id exactly") {
    const GeoReport g = curvature_gap(gaussian(rng, 500, 10));
    CHECK(g.gap == static_cast<double>(g.lid) - g.id);
  }
  SUBCASE("manifold points are mapped to tangent space first") {
    const Matrix t = uniform_manifold(rng, 300, 2, 4) * 0.5;
    const Matrix y = manifold::lift(t, ManifoldKind::Lorentz);
    const GeoReport a = curvature_gap(y, ManifoldKind::Lorentz);
    const GeoReport b = curvature_gap(t);
    CHECK(a.id == doctest::Approx(b.id).epsilon(1e-6));
    CHECK(a.lid == b.lid);
  }
}
