#include <doctest.h>

#include <cmath>
#include <map>

#include "hypermux/autodiff.hpp"
#include "hypermux/rng.hpp"

using namespace hypermux;
namespace ad = hypermux::ad;

namespace {

Matrix random_matrix(Rng& rng, Eigen::Index r, Eigen::Index c, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = uniform(rng, lo, hi);
  return m;
}

using Unary = std::function<ad::Var(const ad::Var&)>;

// Sum of the op output weighted by a fixed random matrix, so every output
// coordinate contributes a distinct cotangent.
ad::ScalarFn weighted(const Unary& op, const Matrix& weights) {
  return [op, weights](ad::Tape& tape, const std::vector<ad::Var>& in) {
    return ad::sum(ad::hadamard(op(in[0]), tape.constant(weights)));
  };
}

}  // namespace

TEST_CASE("forward values") {
  ad::Tape tape;
  Rng rng(1);
  const ad::Var a = tape.variable(random_matrix(rng, 2, 3));
  const ad::Var b = tape.variable(random_matrix(rng, 3, 2));
  CHECK(ad::matmul(a, b).rows() == 2);
  CHECK(ad::matmul(a, b).cols() == 2);
  const Matrix sm = ad::softmax_rows(tape.constant(Matrix::Zero(1, 3))).value();
  for (int j = 0; j < 3; ++j) CHECK(sm(0, j) == doctest::Approx(1.0 / 3.0));
  CHECK(ad::sigmoid(tape.scalar_constant(0.0)).scalar() == 0.5);
}

TEST_CASE("shape mismatches name the primitive") {
  ad::Tape tape;
  const ad::Var a = tape.variable(Matrix::Zero(2, 3));
  try {
    ad::matmul(a, a);
    FAIL("expected a shape error");
  } catch (const std::exception& e) {
    CHECK(std::string(e.what()).find("matmul") != std::string::npos);
  }
  CHECK_THROWS(ad::add(a, tape.variable(Matrix::Zero(3, 2))));
  CHECK_THROWS(tape.backward(a, Matrix::Zero(1, 1)));
}

TEST_CASE("simple gradients") {
  SUBCASE("square at 3") {
    ad::Tape tape;
    const ad::Var x = tape.variable(Matrix::Constant(1, 1, 3.0));
    tape.backward(ad::square(x));
    CHECK(x.grad()(0, 0) == 6.0);
  }
  SUBCASE("tanh at 0") {
    ad::Tape tape;
    const ad::Var x = tape.variable(Matrix::Zero(1, 1));
    tape.backward(ad::sum(ad::tanh(x)));
    CHECK(x.grad()(0, 0) == 1.0);
  }
  SUBCASE("sum(A W) gives A^T 1") {
    Rng rng(2);
    ad::Tape tape;
    const Matrix a = random_matrix(rng, 4, 3);
    const ad::Var av = tape.constant(a);
    const ad::Var w = tape.variable(random_matrix(rng, 3, 2));
    tape.backward(ad::sum(ad::matmul(av, w)));
    const Matrix expected = a.transpose() * Matrix::Ones(4, 2);
    CHECK((w.grad() - expected).cwiseAbs().maxCoeff() < 1e-14);
  }
  SUBCASE("leaves off the output path get zero gradients") {
    ad::Tape tape;
    const ad::Var x = tape.variable(Matrix::Constant(2, 2, 1.0));
    const ad::Var unused = tape.variable(Matrix::Constant(3, 1, 1.0));
    tape.backward(ad::sum(x));
    CHECK(unused.grad().rows() == 3);
    CHECK(unused.grad().cwiseAbs().maxCoeff() == 0.0);
  }
  SUBCASE("gradients accumulate over shared use") {
    ad::Tape tape;
    const ad::Var x = tape.variable(Matrix::Constant(1, 1, 2.0));
    tape.backward(ad::sum(ad::add(ad::square(x), ad::scale(x, 3.0))));
    CHECK(x.grad()(0, 0) == doctest::Approx(7.0));
  }
}

TEST_CASE("backward is linear in the seed") {
  Rng rng(3);
  const Matrix a0 = random_matrix(rng, 3, 4);
  const Matrix seed = random_matrix(rng, 3, 4);
  auto grad_for = [&](const Matrix& s) {
    ad::Tape tape;
    const ad::Var a = tape.variable(a0);
    const ad::Var out = ad::tanh(ad::hadamard(a, a));
    tape.backward(out, s);
    return Matrix(a.grad());
  };
  CHECK((grad_for(2.5 * seed) - 2.5 * grad_for(seed)).cwiseAbs().maxCoeff() < 1e-14);
}

TEST_CASE("every primitive passes a finite-difference check") {
  Rng rng(4);
  const double eps = 1e-6;
  const Matrix w34 = random_matrix(rng, 3, 4);

  std::map<std::string, Unary> unary{
      {"tanh", [](const ad::Var& a) { return ad::tanh(a); }},
      {"artanh", [](const ad::Var& a) { return ad::artanh(ad::scale(a, 0.8)); }},
      {"sinh", [](const ad::Var& a) { return ad::sinh(a); }},
      {"cosh", [](const ad::Var& a) { return ad::cosh(a); }},
      {"arcosh", [](const ad::Var& a) { return ad::arcosh(ad::add_scalar(ad::square(a), 1.5)); }},
      {"exp", [](const ad::Var& a) { return ad::exp(a); }},
      {"log", [](const ad::Var& a) { return ad::log(ad::add_scalar(ad::square(a), 0.5)); }},
      {"log_clamped", [](const ad::Var& a) { return ad::log_clamped(ad::add_scalar(ad::square(a), 0.5), 1e-12); }},
      {"sigmoid", [](const ad::Var& a) { return ad::sigmoid(a); }},
      {"leaky_relu", [](const ad::Var& a) { return ad::leaky_relu(a, 0.1); }},
      {"relu", [](const ad::Var& a) { return ad::relu(a); }},
      {"square", [](const ad::Var& a) { return ad::square(a); }},
      {"neg", [](const ad::Var& a) { return ad::neg(a); }},
      {"scale", [](const ad::Var& a) { return ad::scale(a, -1.7); }},
      {"softmax_rows", [](const ad::Var& a) { return ad::softmax_rows(a); }},
      {"transpose_twice", [](const ad::Var& a) { return ad::transpose(ad::transpose(a)); }},
      {"row_norm_broadcast",
       [](const ad::Var& a) { return ad::scale_by(a, ad::sum(ad::row_norm(a))); }},
      {"clip_row_norm", [](const ad::Var& a) { return ad::clip_row_norm(ad::scale(a, 3.0), 2.0); }},
      {"concat_cols", [](const ad::Var& a) { return ad::hadamard(ad::concat_cols(a, a), ad::concat_cols(a, a)); }},
      {"poincare_exp0", [](const ad::Var& a) { return ad::poincare_exp0(a); }},
      {"poincare_log0", [](const ad::Var& a) { return ad::poincare_log0(ad::scale(a, 0.4)); }},
      {"mobius_add", [](const ad::Var& a) { return ad::mobius_add(ad::scale(a, 0.3), ad::scale(ad::tanh(a), 0.2)); }},
      {"lorentz_roundtrip",
       [](const ad::Var& a) { return ad::lorentz_log0(ad::lorentz_exp0(a)); }},
  };

  for (const auto& [name, op] : unary) {
    CAPTURE(name);
    for (int trial = 0; trial < 10; ++trial) {
      Matrix x = random_matrix(rng, 3, 4);
      // Keep away from the kinks of relu-type ops.
      for (Eigen::Index i = 0; i < x.size(); ++i) {
        if (std::abs(x.data()[i]) < 0.05) x.data()[i] = 0.3;
      }
      // Test values for outputs shaped like the input, except concat (3 x 8).
      Matrix weights = name == "concat_cols" ? random_matrix(rng, 3, 8) : w34;
      const auto r = ad::grad_check(weighted(op, weights), {x}, eps, 12);
      CHECK(r.max_rel_error < 1e-5);
    }
  }
}

TEST_CASE("binary primitives and reductions pass a finite-difference check") {
  Rng rng(5);
  const double eps = 1e-6;
  for (int trial = 0; trial < 10; ++trial) {
    const Matrix a = random_matrix(rng, 3, 4), b = random_matrix(rng, 4, 2), c = random_matrix(rng, 3, 4);
    CHECK(ad::grad_check([](ad::Tape&, const std::vector<ad::Var>& in) { return ad::sum(ad::tanh(ad::matmul(in[0], in[1]))); },
                         {a, b}, eps)
              .max_rel_error < 1e-5);
    CHECK(ad::grad_check(
              [](ad::Tape&, const std::vector<ad::Var>& in) {
                return ad::mean(ad::hadamard(ad::sub(in[0], in[1]), ad::add(in[0], in[1])));
              },
              {a, c}, eps)
              .max_rel_error < 1e-5);
    CHECK(ad::grad_check(
              [](ad::Tape&, const std::vector<ad::Var>& in) {
                return ad::sum(ad::square(ad::col_mean(ad::tanh(in[0]))));
              },
              {a}, eps)
              .max_rel_error < 1e-5);
    CHECK(ad::grad_check(
              [](ad::Tape&, const std::vector<ad::Var>& in) {
                return ad::sum(ad::square(ad::scale_by(ad::row(in[0], 1), ad::element(in[0], 2, 3))));
              },
              {a}, eps)
              .max_rel_error < 1e-5);
  }
}

TEST_CASE("sparse products and adjacency kernels") {
  Rng rng(6);
  std::vector<SparseMatrix> inputs;
  for (int k = 0; k < 3; ++k) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < 6; ++i) {
      for (std::size_t j = i + 1; j < 6; ++j) {
        if (uniform01(rng) < 0.4) edges.push_back({i, j});
      }
    }
    inputs.push_back(adjacency_from_edges(6, edges));
  }
  auto shared = std::make_shared<const std::vector<SparseMatrix>>(inputs);
  auto pattern = ad::SparsePattern::from_union(inputs);
  auto s = std::make_shared<const SparseMatrix>(inputs[0]);
  const Matrix h = random_matrix(rng, 6, 3);

  SUBCASE("spmm") {
    CHECK(ad::grad_check(
              [s](ad::Tape&, const std::vector<ad::Var>& in) { return ad::sum(ad::tanh(ad::spmm(s, in[0]))); }, {h}, 1e-6)
              .max_rel_error < 1e-5);
  }
  for (const bool dense : {true, false}) {
    CAPTURE(dense);
    auto pat = dense ? nullptr : pattern;
    const auto r = ad::grad_check(
        [&](ad::Tape& tape, const std::vector<ad::Var>& in) {
          const ad::Var w = ad::softmax_rows(in[0]);
          const ad::Var adj = ad::relu(ad::combine_adjacency(w, shared, pat));
          const ad::Var norm = ad::sym_normalize(adj, pat);
          return ad::sum(ad::tanh(ad::propagate(norm, pat, tape.constant(h))));
        },
        {random_matrix(rng, 1, 3)}, 1e-6);
    CHECK(r.max_rel_error < 1e-5);
  }
  SUBCASE("pattern and dense forms agree") {
    ad::Tape tape;
    const ad::Var w = ad::softmax_rows(tape.variable(random_matrix(rng, 1, 3)));
    const ad::Var hv = tape.constant(h);
    const Matrix a = ad::propagate(ad::sym_normalize(ad::combine_adjacency(w, shared, nullptr), nullptr), nullptr, hv).value();
    const Matrix b = ad::propagate(ad::sym_normalize(ad::combine_adjacency(w, shared, pattern), pattern), pattern, hv).value();
    CHECK((a - b).cwiseAbs().maxCoeff() < 1e-14);
  }
}

TEST_CASE("softmax-weighted sum") {
  Rng rng(7);
  const Matrix x1 = random_matrix(rng, 4, 3), x2 = random_matrix(rng, 4, 3), x3 = random_matrix(rng, 4, 3);
  const auto r = ad::grad_check(
      [](ad::Tape&, const std::vector<ad::Var>& in) {
        return ad::sum(ad::tanh(ad::combine(ad::softmax_rows(in[0]), {in[1], in[2], in[3]})));
      },
      {random_matrix(rng, 1, 3), x1, x2, x3}, 1e-6);
  CHECK(r.max_rel_error < 1e-6);
}

TEST_CASE("a linear map checks exactly") {
  Rng rng(8);
  const Matrix a = random_matrix(rng, 5, 5);
  const auto r = ad::grad_check(
      [a](ad::Tape& tape, const std::vector<ad::Var>& in) { return ad::sum(ad::matmul(tape.constant(a), in[0])); },
      {random_matrix(rng, 5, 2)}, 1e-3);
  CHECK(r.max_rel_error < 1e-9);
  CHECK(r.coordinates == 10);
}

TEST_CASE("clip_row_norm") {
  ad::Tape tape;
  Matrix x(2, 2);
  x << 3, 4, 0.3, 0.4;
  const ad::Var v = tape.variable(x);
  const ad::Var c = ad::clip_row_norm(v, 1.0);
  CHECK(c.value()(0, 0) == doctest::Approx(0.6));
  CHECK(c.value()(0, 1) == doctest::Approx(0.8));
  CHECK(c.value().row(1) == x.row(1));
  // Along the radial direction the clipped row does not move.
  tape.backward(c, (Matrix(2, 2) << 0.6, 0.8, 1.0, 1.0).finished());
  CHECK(std::abs(v.grad()(0, 0)) < 1e-15);
  CHECK(std::abs(v.grad()(0, 1)) < 1e-15);
  CHECK(v.grad()(1, 0) == 1.0);
}

TEST_CASE("evaluation is deterministic") {
  Rng rng(9);
  const Matrix x = random_matrix(rng, 4, 4);
  auto run = [&] {
    ad::Tape tape;
    const ad::Var v = tape.variable(x);
    const ad::Var out = ad::sum(ad::softmax_rows(ad::matmul(v, ad::transpose(v))));
    tape.backward(out);
    return std::make_pair(out.scalar(), Matrix(v.grad()));
  };
  const auto a = run(), b = run();
  CHECK(a.first == b.first);
  CHECK(a.second == b.second);
}
