#include "hypermux/autodiff.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux::ad {
namespace {

constexpr double kArtanhMax = 1.0 - 1e-7;
constexpr double kArcoshMin = 1.0 + 1e-12;

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void same_tape(const Var& a, const Var& b, const char* op) {
  if (!a.valid() || !b.valid() || &a.tape() != &b.tape()) {
    throw ShapeError(std::string(op) + ": operands belong to different tapes");
  }
}

void same_shape(const Var& a, const Var& b, const char* op) {
  same_tape(a, b, op);
  if (a.rows() != b.rows() || a.cols() != b.cols()) {
    throw ShapeError(std::string(op) + ": shapes " + shape(a.value()) + " and " + shape(b.value()) + " differ");
  }
}

// Elementwise op with derivative computed from the (input, output) pair.
template <typename F, typename DF>
Var unary(const Var& a, const char* op, F f, DF df) {
  Matrix out = a.value().unaryExpr(f);
  return a.tape().record(std::move(out), op, {a}, [df, pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    const Matrix& y = t.value(self);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index i = 0; i < x.size(); ++i) d.data()[i] = df(x.data()[i], y.data()[i]);
    t.accumulate(pa, t.grad(self).cwiseProduct(d));
  });
}

}  // namespace

// ---- Var / Tape -------------------------------------------------------------------

const Matrix& Var::value() const { return tape_->value(id_); }
const Matrix& Var::grad() const { return tape_->grad(id_); }

double Var::scalar() const {
  const Matrix& v = value();
  if (v.size() != 1) throw ShapeError("scalar(): node has shape " + shape(v));
  return v(0, 0);
}

Var Tape::variable(Matrix value, std::string name) {
  Node n;
  n.value = std::move(value);
  n.op = "variable";
  n.name = std::move(name);
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::constant(Matrix value) {
  Node n;
  n.value = std::move(value);
  n.op = "constant";
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Tape::scalar_constant(double value) {
  Matrix m(1, 1);
  m(0, 0) = value;
  return constant(std::move(m));
}

Var Tape::record(Matrix value, std::string op, std::vector<Var> parents, Adjoint adjoint) {
  Node n;
  n.value = std::move(value);
  n.op = std::move(op);
  for (const auto& p : parents) {
    if (&p.tape() != this) throw ShapeError(n.op + ": parent belongs to a different tape");
    n.parents.push_back(p.id());
    n.requires_grad = n.requires_grad || nodes_[p.id()].requires_grad;
  }
  if (n.requires_grad) n.adjoint = std::move(adjoint);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

const Matrix& Tape::grad(std::size_t id) const {
  const Node& n = nodes_[id];
  if (n.has_grad) return n.grad;
  auto& self = const_cast<Node&>(n);
  self.grad = Matrix::Zero(n.value.rows(), n.value.cols());
  self.has_grad = true;
  return self.grad;
}

void Tape::accumulate(const Var& v, const Matrix& g) { accumulate(v.id(), g); }

void Tape::accumulate(std::size_t id, const Matrix& g) {
  Node& n = nodes_[id];
  if (!n.requires_grad) return;
  if (g.rows() != n.value.rows() || g.cols() != n.value.cols()) {
    throw ShapeError(n.op + ": gradient shape " + shape(g) + " does not match value shape " + shape(n.value));
  }
  if (n.has_grad) {
    n.grad += g;
  } else {
    n.grad = g;
    n.has_grad = true;
  }
}

void Tape::backward(const Var& output, const Matrix& seed) {
  if (&output.tape() != this) throw ShapeError("backward: output belongs to a different tape");
  const Matrix& out = nodes_[output.id()].value;
  if (seed.rows() != out.rows() || seed.cols() != out.cols()) {
    throw ShapeError("backward: seed shape " + shape(seed) + " does not match output shape " + shape(out));
  }
  for (auto& n : nodes_) {
    n.has_grad = false;
    n.grad.resize(0, 0);
  }
  accumulate(output.id(), seed);
  for (std::size_t id = output.id() + 1; id-- > 0;) {
    Node& n = nodes_[id];
    if (n.has_grad && n.adjoint) n.adjoint(*this, id);
  }
}

void Tape::backward(const Var& scalar_output) {
  Matrix seed = Matrix::Ones(1, 1);
  backward(scalar_output, seed);
}

// ---- dense primitives ----------------------------------------------------------------

Var matmul(const Var& a, const Var& b) {
  same_tape(a, b, "matmul");
  if (a.cols() != b.rows()) {
    throw ShapeError("matmul: shapes " + shape(a.value()) + " and " + shape(b.value()) + " are incompatible");
  }
  Matrix out = a.value() * b.value();
  return a.tape().record(std::move(out), "matmul", {a, b}, [pa = a.id(), pb = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(pa)) t.accumulate(pa, g * t.value(pb).transpose());
    if (t.requires_grad(pb)) t.accumulate(pb, t.value(pa).transpose() * g);
  });
}

Var transpose(const Var& a) {
  Matrix out = a.value().transpose();
  return a.tape().record(std::move(out), "transpose", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad(self).transpose());
  });
}

Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& b) {
  if (s->cols() != b.rows()) {
    throw ShapeError("spmm: shapes " + std::to_string(s->rows()) + "x" + std::to_string(s->cols()) + " and " +
                     shape(b.value()) + " are incompatible");
  }
  Matrix out = (*s) * b.value();
  return b.tape().record(std::move(out), "spmm", {b}, [s, pb = b.id()](Tape& t, std::size_t self) {
    t.accumulate(pb, Matrix(s->transpose() * t.grad(self)));
  });
}

Var add(const Var& a, const Var& b) {
  same_shape(a, b, "add");
  Matrix out = a.value() + b.value();
  return a.tape().record(std::move(out), "add", {a, b}, [pa = a.id(), pb = b.id()](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad(self));
    t.accumulate(pb, t.grad(self));
  });
}

Var sub(const Var& a, const Var& b) {
  same_shape(a, b, "sub");
  Matrix out = a.value() - b.value();
  return a.tape().record(std::move(out), "sub", {a, b}, [pa = a.id(), pb = b.id()](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad(self));
    t.accumulate(pb, -t.grad(self));
  });
}

Var hadamard(const Var& a, const Var& b) {
  same_shape(a, b, "hadamard");
  Matrix out = a.value().cwiseProduct(b.value());
  return a.tape().record(std::move(out), "hadamard", {a, b}, [pa = a.id(), pb = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(pa)) t.accumulate(pa, g.cwiseProduct(t.value(pb)));
    if (t.requires_grad(pb)) t.accumulate(pb, g.cwiseProduct(t.value(pa)));
  });
}

Var scale(const Var& a, double s) {
  Matrix out = a.value() * s;
  return a.tape().record(std::move(out), "scale", {a}, [s, pa = a.id()](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad(self) * s);
  });
}

Var add_scalar(const Var& a, double s) {
  Matrix out = a.value().array() + s;
  return a.tape().record(std::move(out), "add_scalar", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    t.accumulate(pa, t.grad(self));
  });
}

Var neg(const Var& a) { return scale(a, -1.0); }

Var scale_by(const Var& a, const Var& s) {
  same_tape(a, s, "scale_by");
  if (s.value().size() != 1) throw ShapeError("scale_by: factor has shape " + shape(s.value()) + ", expected 1x1");
  Matrix out = a.value() * s.scalar();
  return a.tape().record(std::move(out), "scale_by", {a, s}, [pa = a.id(), ps = s.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    if (t.requires_grad(pa)) t.accumulate(pa, g * t.value(ps)(0, 0));
    if (t.requires_grad(ps)) t.accumulate(ps, Matrix::Constant(1, 1, g.cwiseProduct(t.value(pa)).sum()));
  });
}

Var element(const Var& a, Eigen::Index r, Eigen::Index c) {
  if (r < 0 || c < 0 || r >= a.rows() || c >= a.cols()) {
    throw ShapeError("element: index (" + std::to_string(r) + ", " + std::to_string(c) + ") outside " + shape(a.value()));
  }
  Matrix out = Matrix::Constant(1, 1, a.value()(r, c));
  return a.tape().record(std::move(out), "element", {a}, [r, c, pa = a.id()](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(pa).rows(), t.value(pa).cols());
    g(r, c) = t.grad(self)(0, 0);
    t.accumulate(pa, g);
  });
}

Var row(const Var& a, Eigen::Index r) {
  if (r < 0 || r >= a.rows()) throw ShapeError("row: index " + std::to_string(r) + " outside " + shape(a.value()));
  Matrix out = a.value().row(r);
  return a.tape().record(std::move(out), "row", {a}, [r, pa = a.id()](Tape& t, std::size_t self) {
    Matrix g = Matrix::Zero(t.value(pa).rows(), t.value(pa).cols());
    g.row(r) = t.grad(self);
    t.accumulate(pa, g);
  });
}

Var concat_cols(const Var& a, const Var& b) {
  same_tape(a, b, "concat_cols");
  if (a.rows() != b.rows()) {
    throw ShapeError("concat_cols: shapes " + shape(a.value()) + " and " + shape(b.value()) + " have different row counts");
  }
  Matrix out(a.rows(), a.cols() + b.cols());
  out << a.value(), b.value();
  const Eigen::Index ca = a.cols();
  return a.tape().record(std::move(out), "concat_cols", {a, b}, [ca, pa = a.id(), pb = b.id()](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    t.accumulate(pa, g.leftCols(ca));
    t.accumulate(pb, g.rightCols(g.cols() - ca));
  });
}

Var tanh(const Var& a) {
  return unary(a, "tanh", [](double x) { return std::tanh(x); }, [](double, double y) { return 1.0 - y * y; });
}

Var artanh(const Var& a) {
  return unary(
      a, "artanh", [](double x) { return std::atanh(std::clamp(x, -kArtanhMax, kArtanhMax)); },
      [](double x, double) {
        const double c = std::clamp(x, -kArtanhMax, kArtanhMax);
        return 1.0 / (1.0 - c * c);
      });
}

Var sinh(const Var& a) {
  return unary(a, "sinh", [](double x) { return std::sinh(x); }, [](double x, double) { return std::cosh(x); });
}

Var cosh(const Var& a) {
  return unary(a, "cosh", [](double x) { return std::cosh(x); }, [](double x, double) { return std::sinh(x); });
}

Var arcosh(const Var& a) {
  return unary(
      a, "arcosh", [](double x) { return std::acosh(std::max(x, kArcoshMin)); },
      [](double x, double) {
        const double c = std::max(x, kArcoshMin);
        return 1.0 / std::sqrt(c * c - 1.0);
      });
}

Var exp(const Var& a) {
  return unary(a, "exp", [](double x) { return std::exp(x); }, [](double, double y) { return y; });
}

Var log(const Var& a) {
  return unary(a, "log", [](double x) { return std::log(x); }, [](double x, double) { return 1.0 / x; });
}

Var log_clamped(const Var& a, double floor) {
  return unary(
      a, "log_clamped", [floor](double x) { return std::log(std::max(x, floor)); },
      [floor](double x, double) { return 1.0 / std::max(x, floor); });
}

Var sigmoid(const Var& a) {
  return unary(
      a, "sigmoid",
      [](double x) {
        if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
        const double e = std::exp(x);
        return e / (1.0 + e);
      },
      [](double, double y) { return y * (1.0 - y); });
}

Var leaky_relu(const Var& a, double slope) {
  return unary(
      a, "leaky_relu", [slope](double x) { return x > 0.0 ? x : slope * x; },
      [slope](double x, double) { return x > 0.0 ? 1.0 : slope; });
}

Var relu(const Var& a) {
  return unary(a, "relu", [](double x) { return x > 0.0 ? x : 0.0; }, [](double x, double) { return x > 0.0 ? 1.0 : 0.0; });
}

Var square(const Var& a) {
  return unary(a, "square", [](double x) { return x * x; }, [](double x, double) { return 2.0 * x; });
}

Var softmax_rows(const Var& a) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    const double m = x.row(r).maxCoeff();
    out.row(r) = (x.row(r).array() - m).exp();
    out.row(r) /= out.row(r).sum();
  }
  return a.tape().record(std::move(out), "softmax_rows", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix d(y.rows(), y.cols());
    for (Eigen::Index r = 0; r < y.rows(); ++r) {
      const double inner = g.row(r).dot(y.row(r));
      d.row(r) = y.row(r).cwiseProduct((g.row(r).array() - inner).matrix());
    }
    t.accumulate(pa, d);
  });
}

Var sum(const Var& a) {
  Matrix out = Matrix::Constant(1, 1, a.value().sum());
  return a.tape().record(std::move(out), "sum", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    t.accumulate(pa, Matrix::Constant(x.rows(), x.cols(), t.grad(self)(0, 0)));
  });
}

Var mean(const Var& a) {
  const double n = static_cast<double>(a.value().size());
  if (n == 0.0) throw ShapeError("mean: empty input");
  return scale(sum(a), 1.0 / n);
}

Var col_mean(const Var& a) {
  if (a.rows() == 0) throw ShapeError("col_mean: empty input");
  Matrix out = a.value().colwise().mean();
  return a.tape().record(std::move(out), "col_mean", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    Matrix g = t.grad(self).replicate(x.rows(), 1) / static_cast<double>(x.rows());
    t.accumulate(pa, g);
  });
}

Var row_norm(const Var& a) {
  Matrix out = a.value().rowwise().norm();
  return a.tape().record(std::move(out), "row_norm", {a}, [pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    const Matrix& y = t.value(self);
    const Matrix& g = t.grad(self);
    Matrix d = Matrix::Zero(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      if (y(r, 0) > 0.0) d.row(r) = x.row(r) * (g(r, 0) / y(r, 0));
    }
    t.accumulate(pa, d);
  });
}

Var clip_row_norm(const Var& a, double max_norm) {
  if (!(max_norm > 0.0)) throw DomainError("clip_row_norm: max norm must be > 0");
  Matrix out = a.value();
  std::vector<Eigen::Index> clipped;
  for (Eigen::Index r = 0; r < out.rows(); ++r) {
    const double n = out.row(r).norm();
    if (n > max_norm) {
      out.row(r) *= max_norm / n;
      clipped.push_back(r);
    }
  }
  if (clipped.empty()) {
    return a.tape().record(std::move(out), "clip_row_norm", {a}, [pa = a.id()](Tape& t, std::size_t self) {
      t.accumulate(pa, t.grad(self));
    });
  }
  return a.tape().record(std::move(out), "clip_row_norm", {a},
                         [pa = a.id(), max_norm, clipped = std::move(clipped)](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    Matrix d = t.grad(self);
    // y = R x / n on clipped rows: dx = R / n (g - (g.u) u), u = x / n.
    for (Eigen::Index r : clipped) {
      const double n = x.row(r).norm();
      const Eigen::RowVectorXd u = x.row(r) / n;
      const Eigen::RowVectorXd g = d.row(r);
      d.row(r) = (max_norm / n) * (g - g.dot(u) * u);
    }
    t.accumulate(pa, d);
  });
}

Var combine(const Var& weights, const std::vector<Var>& inputs) {
  if (inputs.empty()) throw ShapeError("combine: no inputs");
  if (weights.rows() != 1 || weights.cols() != static_cast<Eigen::Index>(inputs.size())) {
    throw ShapeError("combine: weights have shape " + shape(weights.value()) + ", expected 1x" +
                     std::to_string(inputs.size()));
  }
  for (const auto& in : inputs) same_shape(inputs.front(), in, "combine");
  same_tape(weights, inputs.front(), "combine");
  Matrix out = Matrix::Zero(inputs.front().rows(), inputs.front().cols());
  for (std::size_t k = 0; k < inputs.size(); ++k) out += weights.value()(0, static_cast<Eigen::Index>(k)) * inputs[k].value();
  std::vector<Var> parents{weights};
  parents.insert(parents.end(), inputs.begin(), inputs.end());
  std::vector<std::size_t> ids;
  for (const auto& in : inputs) ids.push_back(in.id());
  return weights.tape().record(std::move(out), "combine", parents, [pw = weights.id(), ids](Tape& t, std::size_t self) {
    const Matrix& g = t.grad(self);
    const Matrix& w = t.value(pw);
    Matrix gw(1, static_cast<Eigen::Index>(ids.size()));
    for (std::size_t k = 0; k < ids.size(); ++k) {
      const auto kk = static_cast<Eigen::Index>(k);
      gw(0, kk) = g.cwiseProduct(t.value(ids[k])).sum();
      if (t.requires_grad(ids[k])) t.accumulate(ids[k], g * w(0, kk));
    }
    t.accumulate(pw, gw);
  });
}

// ---- finite-difference check ---------------------------------------------------------

GradCheckResult grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, double epsilon, std::size_t min_coords,
                           std::uint64_t seed) {
  std::vector<Matrix> analytic;
  {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : inputs) vars.push_back(tape.variable(m));
    Var out = f(tape, vars);
    tape.backward(out);
    for (const auto& v : vars) analytic.push_back(v.grad());
  }
  auto evaluate = [&](const std::vector<Matrix>& values) {
    Tape tape;
    std::vector<Var> vars;
    for (const auto& m : values) vars.push_back(tape.variable(m));
    return f(tape, vars).scalar();
  };

  std::vector<std::pair<std::size_t, Eigen::Index>> coords;
  for (std::size_t k = 0; k < inputs.size(); ++k) {
    for (Eigen::Index i = 0; i < inputs[k].size(); ++i) coords.emplace_back(k, i);
  }
  if (coords.size() > min_coords) {
    Rng rng(seed);
    auto perm = random_permutation(coords.size(), rng);
    std::vector<std::pair<std::size_t, Eigen::Index>> picked;
    for (std::size_t i = 0; i < min_coords; ++i) picked.push_back(coords[perm[i]]);
    std::sort(picked.begin(), picked.end());
    coords = std::move(picked);
  }

  GradCheckResult result;
  std::vector<Matrix> work = inputs;
  for (auto [k, i] : coords) {
    const double orig = work[k].data()[i];
    work[k].data()[i] = orig + epsilon;
    const double up = evaluate(work);
    work[k].data()[i] = orig - epsilon;
    const double down = evaluate(work);
    work[k].data()[i] = orig;
    const double numeric = (up - down) / (2.0 * epsilon);
    const double a = analytic[k].data()[i];
    const double err = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-6});
    ++result.coordinates;
    if (err > result.max_rel_error || result.worst.empty()) {
      if (err >= result.max_rel_error) {
        result.max_rel_error = err;
        const Eigen::Index cols = inputs[k].cols();
        result.worst = "input[" + std::to_string(k) + "](" + std::to_string(i / cols) + "," + std::to_string(i % cols) + ")";
      }
    }
  }
  return result;
}

}  // namespace hypermux::ad
