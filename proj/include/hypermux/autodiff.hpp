#pragma once

#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "hypermux/graph.hpp"

// Reverse-mode differentiation over dense row-major matrices.
//
// A Tape owns every node created during a forward evaluation, in creation
// order, which is a topological order. backward() walks the nodes in reverse
// and calls each node's adjoint rule. Scalars are 1x1 matrices.
namespace hypermux::ad {

class Tape;

class Var {
 public:
  Var() = default;

  bool valid() const { return tape_ != nullptr; }
  std::size_t id() const { return id_; }
  Tape& tape() const { return *tape_; }

  const Matrix& value() const;
  // Zero-filled when the node received no gradient.
  const Matrix& grad() const;
  Eigen::Index rows() const { return value().rows(); }
  Eigen::Index cols() const { return value().cols(); }
  double scalar() const;

 private:
  friend class Tape;
  Var(Tape* tape, std::size_t id) : tape_(tape), id_(id) {}

  Tape* tape_ = nullptr;
  std::size_t id_ = 0;
};

class Tape {
 public:
  // Receives the node id; reads grad(id) and accumulates into parents.
  using Adjoint = std::function<void(Tape&, std::size_t)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Leaf that receives a gradient.
  Var variable(Matrix value, std::string name = {});
  // Leaf without a gradient.
  Var constant(Matrix value);
  Var scalar_constant(double value);

  // Records an interior node. The node requires a gradient when any parent does.
  Var record(Matrix value, std::string op, std::vector<Var> parents, Adjoint adjoint);

  const Matrix& value(std::size_t id) const { return nodes_[id].value; }
  const Matrix& grad(std::size_t id) const;
  bool requires_grad(std::size_t id) const { return nodes_[id].requires_grad; }
  const std::string& op(std::size_t id) const { return nodes_[id].op; }
  const std::string& name(std::size_t id) const { return nodes_[id].name; }
  std::size_t size() const { return nodes_.size(); }

  // Adds g into the gradient of v; no-op when v does not require a gradient.
  void accumulate(const Var& v, const Matrix& g);
  void accumulate(std::size_t id, const Matrix& g);

  // Clears all gradients, seeds `output` and propagates to every leaf. Leaves
  // off every path to `output` end with zero gradients.
  void backward(const Var& output, const Matrix& seed);
  void backward(const Var& scalar_output);

 private:
  struct Node {
    Matrix value;
    Matrix grad;
    std::string op;
    std::string name;
    std::vector<std::size_t> parents;
    Adjoint adjoint;
    bool requires_grad = false;
    bool has_grad = false;
  };

  std::deque<Node> nodes_;
  Matrix empty_;
};

// ---- dense primitives -------------------------------------------------------

Var matmul(const Var& a, const Var& b);
Var transpose(const Var& a);
// Constant sparse matrix times a dense node.
Var spmm(std::shared_ptr<const SparseMatrix> s, const Var& b);

Var add(const Var& a, const Var& b);
Var sub(const Var& a, const Var& b);
Var hadamard(const Var& a, const Var& b);
Var scale(const Var& a, double s);
Var add_scalar(const Var& a, double s);
Var neg(const Var& a);
// Matrix times a 1x1 node.
Var scale_by(const Var& a, const Var& s);

Var element(const Var& a, Eigen::Index r, Eigen::Index c);
Var row(const Var& a, Eigen::Index r);
Var concat_cols(const Var& a, const Var& b);

Var tanh(const Var& a);
// Clamped to |x| <= 1 - 1e-7; the adjoint uses the clamped value.
Var artanh(const Var& a);
Var sinh(const Var& a);
Var cosh(const Var& a);
// Clamped to x >= 1 + 1e-12; the adjoint uses the clamped value.
Var arcosh(const Var& a);
Var exp(const Var& a);
Var log(const Var& a);
// log(max(x, floor)); gradient 1 / max(x, floor).
Var log_clamped(const Var& a, double floor);
Var sigmoid(const Var& a);
Var leaky_relu(const Var& a, double slope);
Var relu(const Var& a);
Var square(const Var& a);

// Softmax of every row independently.
Var softmax_rows(const Var& a);

Var sum(const Var& a);
Var mean(const Var& a);
// 1 x cols mean over rows.
Var col_mean(const Var& a);
// rows x 1 Euclidean norm of every row.
Var row_norm(const Var& a);
// Rows with norm above max_norm are rescaled onto the sphere of that radius.
Var clip_row_norm(const Var& a, double max_norm);

// sum_k w_k * inputs[k] for a 1 x K weight row; inputs share one shape.
Var combine(const Var& weights, const std::vector<Var>& inputs);

// ---- manifold kernels, applied row-wise ---------------------------------------

Var poincare_exp0(const Var& tangent);
Var poincare_log0(const Var& points);
// N x M spatial tangent coordinates -> N x (M + 1) hyperboloid points.
Var lorentz_exp0(const Var& tangent);
// N x (M + 1) hyperboloid points -> N x M spatial tangent coordinates.
Var lorentz_log0(const Var& points);
Var mobius_add(const Var& x, const Var& y);

// ---- adjacency kernels ----------------------------------------------------------

// Union support of a set of N x N adjacencies plus the full diagonal, in CSR
// order. Adjacency values on this support are stored as a 1 x nnz row.
struct SparsePattern {
  Eigen::Index n = 0;
  std::vector<int> row_ptr;
  std::vector<int> cols;
  std::vector<int> rows;  // row of every entry
  std::vector<int> diag;  // entry index of (i, i)
  // positions[k][e]: pattern index of the e-th stored entry of input k.
  std::vector<std::vector<int>> positions;

  std::size_t nnz() const { return cols.size(); }
  double density() const;
  static std::shared_ptr<const SparsePattern> from_union(const std::vector<SparseMatrix>& inputs);
  // Values row -> sparse matrix.
  SparseMatrix to_sparse(const Matrix& values) const;
};

// sum_k w_k * inputs[k] for constant sparse inputs. The result is dense N x N
// when `pattern` is null, otherwise a 1 x nnz values row on the pattern (which
// must have been built from the same inputs).
Var combine_adjacency(const Var& weights, std::shared_ptr<const std::vector<SparseMatrix>> inputs,
                      std::shared_ptr<const SparsePattern> pattern);

// D^{-1/2}(A + I)D^{-1/2} on a dense N x N node or a pattern values row.
Var sym_normalize(const Var& adjacency, std::shared_ptr<const SparsePattern> pattern);

// adjacency * dense for a dense N x N node or a pattern values row.
Var propagate(const Var& adjacency, std::shared_ptr<const SparsePattern> pattern, const Var& dense);

// ---- finite-difference check ------------------------------------------------------

using ScalarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::size_t coordinates = 0;
  std::string worst;  // "input[k](r,c)"
};

// Central differences with step epsilon against backward() on a sampled
// subset of at least `min_coords` coordinates (all when there are fewer).
// Relative error is |a - n| / max(|a|, |n|, 1e-6).
GradCheckResult grad_check(const ScalarFn& f, const std::vector<Matrix>& inputs, double epsilon,
                           std::size_t min_coords = 50, std::uint64_t seed = 0);

}  // namespace hypermux::ad
