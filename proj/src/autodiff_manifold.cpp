// Manifold and adjacency kernels as composite differentiable ops.
//
// Every radial map here has the form y = f(|x|) x per row, so its adjoint is
// g_x = f(n) g + c(n) (g . x) x with c(n) = f'(n) / n. Small-n branches use
// the Taylor expansion of c to avoid cancellation.

#include <algorithm>
#include <cmath>
#include <set>

#include "hypermux/autodiff.hpp"
#include "hypermux/errors.hpp"
#include "hypermux/manifold.hpp"

namespace hypermux::ad {
namespace {

constexpr double kSeriesCutoff = 1e-3;
constexpr double kBallMax = manifold::kBallMaxNorm;

struct Radial {
  double f;
  double c;
};

// Poincare exp at the origin: tanh(n) / n, clamped inside the ball.
Radial tanh_radial(double n) {
  if (n < kSeriesCutoff) return {1.0 - n * n / 3.0, -2.0 / 3.0 + 8.0 * n * n / 15.0};
  const double th = std::tanh(n);
  const double sech2 = 1.0 - th * th;
  return {std::min(th, kBallMax) / n, (n * sech2 - th) / (n * n * n)};
}

// Poincare log at the origin: artanh(n) / n with n clamped inside the ball.
Radial artanh_radial(double n) {
  if (n < kSeriesCutoff) return {1.0 + n * n / 3.0, 2.0 / 3.0 + 4.0 * n * n / 5.0};
  const double m = std::min(n, kBallMax);
  const double at = std::atanh(m);
  return {at / n, (m / (1.0 - m * m) - at) / (m * m * m)};
}

// Lorentz exp at the base point, spatial part: sinh(n) / n.
Radial sinh_radial(double n) {
  if (n < kSeriesCutoff) return {1.0 + n * n / 6.0, 1.0 / 3.0 + n * n / 30.0};
  return {std::sinh(n) / n, (n * std::cosh(n) - std::sinh(n)) / (n * n * n)};
}

// Lorentz log at the base point, spatial part: asinh(n) / n.
Radial asinh_radial(double n) {
  if (n < kSeriesCutoff) return {1.0 - n * n / 6.0, -1.0 / 3.0 + 3.0 * n * n / 10.0};
  return {std::asinh(n) / n, (n / std::sqrt(1.0 + n * n) - std::asinh(n)) / (n * n * n)};
}

template <typename R>
Var radial_map(const Var& a, const char* op, R radial) {
  const Matrix& x = a.value();
  Matrix out(x.rows(), x.cols());
  for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = radial(x.row(r).norm()).f * x.row(r);
  return a.tape().record(std::move(out), op, {a}, [radial, pa = a.id()](Tape& t, std::size_t self) {
    const Matrix& x = t.value(pa);
    const Matrix& g = t.grad(self);
    Matrix d(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) {
      const Radial rd = radial(x.row(r).norm());
      d.row(r) = rd.f * g.row(r) + (rd.c * g.row(r).dot(x.row(r))) * x.row(r);
    }
    t.accumulate(pa, d);
  });
}

std::string shape(const Matrix& m) { return std::to_string(m.rows()) + "x" + std::to_string(m.cols()); }

void check_adjacency(const Var& a, const SparsePattern* pattern, const char* op) {
  if (pattern) {
    if (a.rows() != 1 || a.cols() != static_cast<Eigen::Index>(pattern->nnz())) {
      throw ShapeError(std::string(op) + ": values row has shape " + shape(a.value()) + ", pattern has " +
                       std::to_string(pattern->nnz()) + " entries");
    }
  } else if (a.rows() != a.cols()) {
    throw ShapeError(std::string(op) + ": adjacency has shape " + shape(a.value()) + ", expected square");
  }
}

}  // namespace

// ---- manifold kernels ---------------------------------------------------------------

Var poincare_exp0(const Var& tangent) { return radial_map(tangent, "poincare_exp0", tanh_radial); }

Var poincare_log0(const Var& points) {
  const Matrix& x = points.value();
  for (Eigen::Index r = 0; r < x.rows(); ++r) {
    if (!(x.row(r).norm() < 1.0)) throw DomainError("poincare_log0: row " + std::to_string(r) + " is outside the unit ball");
  }
  return radial_map(points, "poincare_log0", artanh_radial);
}

Var lorentz_exp0(const Var& tangent) {
  const Matrix& h = tangent.value();
  Matrix out(h.rows(), h.cols() + 1);
  for (Eigen::Index r = 0; r < h.rows(); ++r) {
    const double n = h.row(r).norm();
    out(r, 0) = std::cosh(n);
    out.row(r).tail(h.cols()) = sinh_radial(n).f * h.row(r);
  }
  return tangent.tape().record(std::move(out), "lorentz_exp0", {tangent}, [pa = tangent.id()](Tape& t, std::size_t self) {
    const Matrix& h = t.value(pa);
    const Matrix& g = t.grad(self);
    Matrix d(h.rows(), h.cols());
    for (Eigen::Index r = 0; r < h.rows(); ++r) {
      const Radial rd = sinh_radial(h.row(r).norm());
      const auto gs = g.row(r).tail(h.cols());
      d.row(r) = rd.f * gs + (rd.c * gs.dot(h.row(r)) + g(r, 0) * rd.f) * h.row(r);
    }
    t.accumulate(pa, d);
  });
}

Var lorentz_log0(const Var& points) {
  const Matrix& p = points.value();
  if (p.cols() < 2) throw ShapeError("lorentz_log0: points have shape " + shape(p) + ", need at least 2 columns");
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    try {
      manifold::check_hyperboloid(p.row(r).transpose());
    } catch (const DomainError& e) {
      throw DomainError("lorentz_log0: row " + std::to_string(r) + ": " + e.what());
    }
  }
  const Eigen::Index m = p.cols() - 1;
  Matrix out(p.rows(), m);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    const auto s = p.row(r).tail(m);
    out.row(r) = asinh_radial(s.norm()).f * s;
  }
  return points.tape().record(std::move(out), "lorentz_log0", {points}, [m, pa = points.id()](Tape& t, std::size_t self) {
    const Matrix& p = t.value(pa);
    const Matrix& g = t.grad(self);
    Matrix d = Matrix::Zero(p.rows(), p.cols());
    for (Eigen::Index r = 0; r < p.rows(); ++r) {
      const auto s = p.row(r).tail(m);
      const Radial rd = asinh_radial(s.norm());
      d.row(r).tail(m) = rd.f * g.row(r) + (rd.c * g.row(r).dot(s)) * s;
    }
    t.accumulate(pa, d);
  });
}

Var mobius_add(const Var& x, const Var& y) {
  if (&x.tape() != &y.tape()) throw ShapeError("mobius_add: operands belong to different tapes");
  if (x.rows() != y.rows() || x.cols() != y.cols()) {
    throw ShapeError("mobius_add: shapes " + shape(x.value()) + " and " + shape(y.value()) + " differ");
  }
  const Matrix& xv = x.value();
  const Matrix& yv = y.value();
  Matrix out(xv.rows(), xv.cols());
  for (Eigen::Index r = 0; r < xv.rows(); ++r) {
    if (!(xv.row(r).norm() < 1.0) || !(yv.row(r).norm() < 1.0)) {
      throw DomainError("mobius_add: row " + std::to_string(r) + " is outside the unit ball");
    }
    const double a = xv.row(r).dot(yv.row(r));
    const double u = xv.row(r).squaredNorm();
    const double v = yv.row(r).squaredNorm();
    const double den = 1.0 + 2.0 * a + u * v;
    out.row(r) = ((1.0 + 2.0 * a + v) * xv.row(r) + (1.0 - u) * yv.row(r)) / den;
    const double n = out.row(r).norm();
    if (n > kBallMax) out.row(r) *= kBallMax / n;
  }
  return x.tape().record(std::move(out), "mobius_add", {x, y}, [px = x.id(), py = y.id()](Tape& t, std::size_t self) {
    const Matrix& xv = t.value(px);
    const Matrix& yv = t.value(py);
    const Matrix& g = t.grad(self);
    Matrix gx(xv.rows(), xv.cols());
    Matrix gy(yv.rows(), yv.cols());
    for (Eigen::Index r = 0; r < xv.rows(); ++r) {
      const auto xr = xv.row(r);
      const auto yr = yv.row(r);
      const auto gr = g.row(r);
      const double a = xr.dot(yr);
      const double u = xr.squaredNorm();
      const double v = yr.squaredNorm();
      const double den = 1.0 + 2.0 * a + u * v;
      const Eigen::RowVectorXd num = (1.0 + 2.0 * a + v) * xr + (1.0 - u) * yr;
      const double gx_dot = gr.dot(xr);
      const double gy_dot = gr.dot(yr);
      const double gnum = gr.dot(num) / (den * den);
      gx.row(r) = ((1.0 + 2.0 * a + v) * gr + 2.0 * gx_dot * yr - 2.0 * gy_dot * xr) / den - gnum * (2.0 * yr + 2.0 * v * xr);
      gy.row(r) = (2.0 * gx_dot * (xr + yr) + (1.0 - u) * gr) / den - gnum * (2.0 * xr + 2.0 * u * yr);
    }
    t.accumulate(px, gx);
    t.accumulate(py, gy);
  });
}

// ---- sparse pattern ---------------------------------------------------------------------

double SparsePattern::density() const {
  if (n == 0) return 0.0;
  return static_cast<double>(nnz()) / (static_cast<double>(n) * static_cast<double>(n));
}

std::shared_ptr<const SparsePattern> SparsePattern::from_union(const std::vector<SparseMatrix>& inputs) {
  if (inputs.empty()) throw ShapeError("SparsePattern: no inputs");
  auto p = std::make_shared<SparsePattern>();
  p->n = inputs.front().rows();
  for (const auto& a : inputs) {
    if (a.rows() != p->n || a.cols() != p->n) throw ShapeError("SparsePattern: inputs must share one square shape");
  }
  p->row_ptr.assign(static_cast<std::size_t>(p->n) + 1, 0);
  p->diag.assign(static_cast<std::size_t>(p->n), -1);
  std::vector<int> row_cols;
  for (Eigen::Index r = 0; r < p->n; ++r) {
    row_cols.clear();
    row_cols.push_back(static_cast<int>(r));
    for (const auto& a : inputs) {
      for (SparseMatrix::InnerIterator it(a, r); it; ++it) row_cols.push_back(static_cast<int>(it.col()));
    }
    std::sort(row_cols.begin(), row_cols.end());
    row_cols.erase(std::unique(row_cols.begin(), row_cols.end()), row_cols.end());
    for (int c : row_cols) {
      if (c == r) p->diag[static_cast<std::size_t>(r)] = static_cast<int>(p->cols.size());
      p->cols.push_back(c);
      p->rows.push_back(static_cast<int>(r));
    }
    p->row_ptr[static_cast<std::size_t>(r) + 1] = static_cast<int>(p->cols.size());
  }
  for (const auto& a : inputs) {
    std::vector<int> pos;
    pos.reserve(static_cast<std::size_t>(a.nonZeros()));
    for (Eigen::Index r = 0; r < p->n; ++r) {
      const auto begin = p->cols.begin() + p->row_ptr[static_cast<std::size_t>(r)];
      const auto end = p->cols.begin() + p->row_ptr[static_cast<std::size_t>(r) + 1];
      for (SparseMatrix::InnerIterator it(a, r); it; ++it) {
        pos.push_back(static_cast<int>(std::lower_bound(begin, end, static_cast<int>(it.col())) - p->cols.begin()));
      }
    }
    p->positions.push_back(std::move(pos));
  }
  return p;
}

SparseMatrix SparsePattern::to_sparse(const Matrix& values) const {
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(nnz());
  for (std::size_t e = 0; e < nnz(); ++e) triplets.emplace_back(rows[e], cols[e], values(0, static_cast<Eigen::Index>(e)));
  SparseMatrix s(n, n);
  s.setFromTriplets(triplets.begin(), triplets.end());
  return s;
}

// ---- adjacency kernels --------------------------------------------------------------------

Var combine_adjacency(const Var& weights, std::shared_ptr<const std::vector<SparseMatrix>> inputs,
                      std::shared_ptr<const SparsePattern> pattern) {
  const auto k = static_cast<Eigen::Index>(inputs->size());
  if (k == 0) throw ShapeError("combine_adjacency: no inputs");
  if (weights.rows() != 1 || weights.cols() != k) {
    throw ShapeError("combine_adjacency: weights have shape " + shape(weights.value()) + ", expected 1x" + std::to_string(k));
  }
  const Eigen::Index n = inputs->front().rows();
  if (pattern && (pattern->n != n || pattern->positions.size() != inputs->size())) {
    throw ShapeError("combine_adjacency: pattern was not built from these inputs");
  }
  const Matrix& w = weights.value();
  Matrix out = pattern ? Matrix::Zero(1, static_cast<Eigen::Index>(pattern->nnz())) : Matrix::Zero(n, n);
  for (Eigen::Index i = 0; i < k; ++i) {
    const auto& a = (*inputs)[static_cast<std::size_t>(i)];
    if (a.rows() != n || a.cols() != n) throw ShapeError("combine_adjacency: inputs must share one square shape");
    if (pattern) {
      const auto& pos = pattern->positions[static_cast<std::size_t>(i)];
      for (Eigen::Index e = 0; e < a.nonZeros(); ++e) out(0, pos[static_cast<std::size_t>(e)]) += w(0, i) * a.valuePtr()[e];
    } else {
      for (Eigen::Index r = 0; r < n; ++r) {
        for (SparseMatrix::InnerIterator it(a, r); it; ++it) out(r, it.col()) += w(0, i) * it.value();
      }
    }
  }
  return weights.tape().record(std::move(out), "combine_adjacency", {weights},
                               [inputs, pattern, pw = weights.id()](Tape& t, std::size_t self) {
                                 const Matrix& g = t.grad(self);
                                 Matrix gw = Matrix::Zero(1, static_cast<Eigen::Index>(inputs->size()));
                                 for (std::size_t i = 0; i < inputs->size(); ++i) {
                                   const auto& a = (*inputs)[i];
                                   double acc = 0.0;
                                   if (pattern) {
                                     const auto& pos = pattern->positions[i];
                                     for (Eigen::Index e = 0; e < a.nonZeros(); ++e) {
                                       acc += g(0, pos[static_cast<std::size_t>(e)]) * a.valuePtr()[e];
                                     }
                                   } else {
                                     for (Eigen::Index r = 0; r < a.outerSize(); ++r) {
                                       for (SparseMatrix::InnerIterator it(a, r); it; ++it) acc += g(r, it.col()) * it.value();
                                     }
                                   }
                                   gw(0, static_cast<Eigen::Index>(i)) = acc;
                                 }
                                 t.accumulate(pw, gw);
                               });
}

Var sym_normalize(const Var& adjacency, std::shared_ptr<const SparsePattern> pattern) {
  check_adjacency(adjacency, pattern.get(), "sym_normalize");
  const Matrix& a = adjacency.value();
  if (!pattern) {
    const Eigen::Index n = a.rows();
    Vector deg = a.rowwise().sum().array() + 1.0;
    if ((deg.array() <= 0.0).any()) throw DomainError("sym_normalize: nonpositive degree");
    Vector s = deg.array().rsqrt();
    Matrix out = a + Matrix::Identity(n, n);
    out = s.asDiagonal() * out * s.asDiagonal();
    return adjacency.tape().record(std::move(out), "sym_normalize", {adjacency}, [deg, s, pa = adjacency.id()](Tape& t, std::size_t self) {
      const Matrix& g = t.grad(self);
      const Matrix& y = t.value(self);
      const Matrix gy = g.cwiseProduct(y);
      Vector gd = -0.5 * (gy.rowwise().sum() + gy.colwise().sum().transpose()).cwiseQuotient(deg);
      Matrix d = s.asDiagonal() * g * s.asDiagonal();
      d.colwise() += gd;
      t.accumulate(pa, d);
    });
  }
  const auto& p = *pattern;
  const auto n = static_cast<std::size_t>(p.n);
  std::vector<double> deg(n, 1.0);
  for (std::size_t e = 0; e < p.nnz(); ++e) deg[static_cast<std::size_t>(p.rows[e])] += a(0, static_cast<Eigen::Index>(e));
  std::vector<double> s(n);
  for (std::size_t i = 0; i < n; ++i) {
    if (!(deg[i] > 0.0)) throw DomainError("sym_normalize: nonpositive degree");
    s[i] = 1.0 / std::sqrt(deg[i]);
  }
  Matrix out(1, static_cast<Eigen::Index>(p.nnz()));
  for (std::size_t e = 0; e < p.nnz(); ++e) {
    const auto r = static_cast<std::size_t>(p.rows[e]);
    const auto c = static_cast<std::size_t>(p.cols[e]);
    out(0, static_cast<Eigen::Index>(e)) = (a(0, static_cast<Eigen::Index>(e)) + (r == c ? 1.0 : 0.0)) * s[r] * s[c];
  }
  return adjacency.tape().record(std::move(out), "sym_normalize", {adjacency},
                                 [pattern, deg, s, pa = adjacency.id()](Tape& t, std::size_t self) {
                                   const auto& p = *pattern;
                                   const Matrix& g = t.grad(self);
                                   const Matrix& y = t.value(self);
                                   std::vector<double> gd(deg.size(), 0.0);
                                   for (std::size_t e = 0; e < p.nnz(); ++e) {
                                     const double gy = g(0, static_cast<Eigen::Index>(e)) * y(0, static_cast<Eigen::Index>(e));
                                     gd[static_cast<std::size_t>(p.rows[e])] += gy;
                                     gd[static_cast<std::size_t>(p.cols[e])] += gy;
                                   }
                                   for (std::size_t i = 0; i < gd.size(); ++i) gd[i] *= -0.5 / deg[i];
                                   Matrix d(1, static_cast<Eigen::Index>(p.nnz()));
                                   for (std::size_t e = 0; e < p.nnz(); ++e) {
                                     const auto r = static_cast<std::size_t>(p.rows[e]);
                                     const auto c = static_cast<std::size_t>(p.cols[e]);
                                     d(0, static_cast<Eigen::Index>(e)) = g(0, static_cast<Eigen::Index>(e)) * s[r] * s[c] + gd[r];
                                   }
                                   t.accumulate(pa, d);
                                 });
}

Var propagate(const Var& adjacency, std::shared_ptr<const SparsePattern> pattern, const Var& dense) {
  check_adjacency(adjacency, pattern.get(), "propagate");
  if (!pattern) return matmul(adjacency, dense);
  const auto& p = *pattern;
  if (dense.rows() != p.n) {
    throw ShapeError("propagate: pattern is " + std::to_string(p.n) + "x" + std::to_string(p.n) + ", operand is " +
                     shape(dense.value()));
  }
  const Matrix& v = adjacency.value();
  const Matrix& x = dense.value();
  Matrix out = Matrix::Zero(p.n, x.cols());
  for (Eigen::Index r = 0; r < p.n; ++r) {
    for (int e = p.row_ptr[static_cast<std::size_t>(r)]; e < p.row_ptr[static_cast<std::size_t>(r) + 1]; ++e) {
      out.row(r) += v(0, e) * x.row(p.cols[static_cast<std::size_t>(e)]);
    }
  }
  return adjacency.tape().record(std::move(out), "propagate", {adjacency, dense},
                                 [pattern, pa = adjacency.id(), pd = dense.id()](Tape& t, std::size_t self) {
                                   const auto& p = *pattern;
                                   const Matrix& g = t.grad(self);
                                   const Matrix& v = t.value(pa);
                                   const Matrix& x = t.value(pd);
                                   if (t.requires_grad(pa)) {
                                     Matrix dv(1, static_cast<Eigen::Index>(p.nnz()));
                                     for (std::size_t e = 0; e < p.nnz(); ++e) {
                                       dv(0, static_cast<Eigen::Index>(e)) = g.row(p.rows[e]).dot(x.row(p.cols[e]));
                                     }
                                     t.accumulate(pa, dv);
                                   }
                                   if (t.requires_grad(pd)) {
                                     Matrix dx = Matrix::Zero(x.rows(), x.cols());
                                     for (std::size_t e = 0; e < p.nnz(); ++e) {
                                       dx.row(p.cols[e]) += v(0, static_cast<Eigen::Index>(e)) * g.row(p.rows[e]);
                                     }
                                     t.accumulate(pd, dx);
                                   }
                                 });
}

}  // namespace hypermux::ad
