#include "hypermux/hgnn.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {
namespace {

// Keeps cosh(n)^2 near 1e8 at most, so the Minkowski constraint still holds to
// well under 1e-6 in double precision.
constexpr double kLorentzMaxTangentNorm = 10.0;

ad::Var log_map(const ad::Var& points, ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean:
      return points;
    case ManifoldKind::PoincareBall:
      return ad::poincare_log0(points);
    case ManifoldKind::Lorentz:
      return ad::lorentz_log0(points);
  }
  return points;
}

ad::Var exp_map(const ad::Var& tangent, ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean:
      return tangent;
    case ManifoldKind::PoincareBall:
      return ad::poincare_exp0(tangent);
    case ManifoldKind::Lorentz:
      return ad::lorentz_exp0(ad::clip_row_norm(tangent, kLorentzMaxTangentNorm));
  }
  return tangent;
}

double softmax_deviation(const Matrix& weights) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < weights.rows(); ++r) worst = std::max(worst, std::abs(weights.row(r).sum() - 1.0));
  return worst;
}

// Dense value of a latent adjacency (dense node or pattern values row).
Matrix latent_dense(const PreparedGraph& graph, const ad::Var& adjacency) {
  if (graph.dense_latent()) return adjacency.value();
  return Matrix(graph.pattern->to_sparse(adjacency.value()));
}

}  // namespace

std::vector<int> ModelConfig::resolved_schedule(std::size_t input_dims) const {
  if (!dim_schedule.empty()) return dim_schedule;
  std::vector<int> s{static_cast<int>(input_dims)};
  const double d = static_cast<double>(input_dims);
  for (int l = 1; l <= n_layers; ++l) {
    const int floor_value = l < n_layers ? 2 : 1;
    const int proposed = std::max(static_cast<int>(std::ceil(d / std::pow(2.0, l))), floor_value);
    s.push_back(std::min(s.back(), proposed));
  }
  return s;
}

void ModelConfig::validate(std::size_t input_dims) const {
  if (n_layers < 1) throw ConfigError("model needs at least one layer");
  if (embed_size < 1) throw ConfigError("embedding size must be positive");
  if (!(leaky_slope >= 0.0)) throw ConfigError("leaky slope must be nonnegative");
  const auto s = resolved_schedule(input_dims);
  if (s.size() != static_cast<std::size_t>(n_layers) + 1) {
    throw ConfigError("dimension schedule has " + std::to_string(s.size()) + " entries, expected L + 1 = " +
                      std::to_string(n_layers + 1));
  }
  if (s.front() != static_cast<int>(input_dims)) {
    throw ConfigError("dimension schedule must start at the input dimension count " + std::to_string(input_dims));
  }
  for (std::size_t l = 1; l < s.size(); ++l) {
    if (s[l] < 1 || s[l] > s[l - 1]) throw ConfigError("dimension schedule must be non-increasing and positive");
  }
}

ModelParams init_params(const ModelConfig& config, std::size_t n_features, std::size_t n_dims, std::uint64_t seed) {
  config.validate(n_dims);
  const auto schedule = config.resolved_schedule(n_dims);
  Rng rng(seed);
  ModelParams params;
  std::size_t f_in = n_features;
  const auto m = static_cast<std::size_t>(config.embed_size);
  for (int l = 1; l <= config.n_layers; ++l) {
    LayerParams layer;
    const int d_prev = schedule[static_cast<std::size_t>(l - 1)];
    const int d_next = schedule[static_cast<std::size_t>(l)];
    const double bound = std::sqrt(6.0 / static_cast<double>(f_in + m));
    for (int d = 0; d < d_prev; ++d) {
      Matrix w(static_cast<Eigen::Index>(f_in), static_cast<Eigen::Index>(m));
      for (Eigen::Index i = 0; i < w.size(); ++i) w.data()[i] = uniform(rng, -bound, bound);
      layer.weights.push_back(std::move(w));
    }
    layer.alpha_logits = Matrix::Zero(d_next, d_prev);
    layer.beta_logits = Matrix::Zero(1, d_prev);
    params.layers.push_back(std::move(layer));
    f_in = m;
  }
  return params;
}

PreparedGraph PreparedGraph::from(const MultiplexGraph& graph, double dense_threshold) {
  graph.validate();
  PreparedGraph p;
  p.n_nodes = graph.n_nodes;
  p.raw = std::make_shared<const std::vector<SparseMatrix>>(graph.dims);
  for (const auto& a : graph.dims) p.normalized.push_back(std::make_shared<const SparseMatrix>(normalize_adjacency(a)));
  auto pattern = ad::SparsePattern::from_union(graph.dims);
  if (pattern->density() <= dense_threshold) p.pattern = std::move(pattern);
  return p;
}

ParamVars bind_params(ad::Tape& tape, const ModelParams& params, bool freeze_alpha) {
  ParamVars v;
  for (std::size_t l = 0; l < params.layers.size(); ++l) {
    const auto& layer = params.layers[l];
    const std::string prefix = "layer" + std::to_string(l + 1) + ".";
    std::vector<ad::Var> ws;
    for (std::size_t d = 0; d < layer.weights.size(); ++d) ws.push_back(tape.variable(layer.weights[d], prefix + "W." + std::to_string(d)));
    v.weights.push_back(std::move(ws));
    v.alpha_logits.push_back(freeze_alpha ? tape.constant(layer.alpha_logits) : tape.variable(layer.alpha_logits, prefix + "alpha"));
    v.beta_logits.push_back(tape.variable(layer.beta_logits, prefix + "beta"));
  }
  return v;
}

ForwardTrace forward(ad::Tape& tape, const PreparedGraph& graph, const Matrix& features, const ParamVars& params,
                     const ModelConfig& config, const ForwardTrace* shared) {
  const std::size_t n_dims = graph.raw->size();
  config.validate(n_dims);
  const auto schedule = config.resolved_schedule(n_dims);
  if (params.weights.size() != static_cast<std::size_t>(config.n_layers)) {
    throw ShapeError("forward: parameters have " + std::to_string(params.weights.size()) + " layers, config has " +
                     std::to_string(config.n_layers));
  }
  if (static_cast<std::size_t>(features.rows()) != graph.n_nodes) {
    throw ShapeError("forward: feature matrix has " + std::to_string(features.rows()) + " rows, graph has " +
                     std::to_string(graph.n_nodes) + " nodes");
  }
  const ManifoldKind kind = config.manifold;
  const bool lorentz = kind == ManifoldKind::Lorentz;
  ForwardTrace trace;
  auto track = [&](const ad::Var& points) {
    if (lorentz) {
      trace.max_hyperboloid_violation = std::max(trace.max_hyperboloid_violation, manifold::max_hyperboloid_violation(points.value()));
    }
  };

  ad::Var h = tape.constant(manifold::lift(features, kind));
  track(h);
  std::vector<ad::Var> prev_latent;

  for (int l = 1; l <= config.n_layers; ++l) {
    const auto li = static_cast<std::size_t>(l - 1);
    const int d_prev = schedule[li];
    const int d_next = schedule[li + 1];
    const auto& weights = params.weights[li];
    if (static_cast<int>(weights.size()) != d_prev) {
      throw ShapeError("forward: layer " + std::to_string(l) + " has " + std::to_string(weights.size()) +
                       " weight matrices, expected " + std::to_string(d_prev));
    }
    const ad::Var tangent = log_map(h, kind);

    std::vector<ad::Var> normalized;
    if (l > 1 && shared) {
      normalized = shared->normalized_latent[li - 1];
      trace.normalized_latent.push_back(normalized);
    } else if (l > 1) {
      for (const auto& a : prev_latent) normalized.push_back(ad::sym_normalize(a, graph.pattern));
      trace.normalized_latent.push_back(normalized);
    }

    std::vector<ad::Var> per_dim_tangent;
    for (int d = 0; d < d_prev; ++d) {
      const auto& w = weights[static_cast<std::size_t>(d)];
      if (w.rows() != tangent.cols()) {
        throw ShapeError("forward: layer " + std::to_string(l) + " dimension " + std::to_string(d) + " weight has " +
                         std::to_string(w.rows()) + " rows, input has " + std::to_string(tangent.cols()) + " columns");
      }
      auto prop = [&](const ad::Var& x) {
        return l == 1 ? ad::spmm(graph.normalized[static_cast<std::size_t>(d)], x)
                      : ad::propagate(normalized[static_cast<std::size_t>(d)], graph.pattern, x);
      };
      // Multiply on the narrower side first.
      ad::Var pre = w.rows() <= w.cols() ? ad::matmul(prop(tangent), w) : prop(ad::matmul(tangent, w));
      ad::Var act = ad::leaky_relu(pre, config.leaky_slope);
      try {
        ad::Var point = exp_map(act, kind);
        track(point);
        per_dim_tangent.push_back(kind == ManifoldKind::Euclidean ? point : log_map(point, kind));
      } catch (const DomainError& e) {
        throw DomainError("layer " + std::to_string(l) + ", dimension " + std::to_string(d) + ": " + e.what());
      }
    }

    ad::Var beta = ad::softmax_rows(params.beta_logits[li]);
    trace.beta.push_back(beta);
    trace.max_softmax_deviation = std::max(trace.max_softmax_deviation, softmax_deviation(beta.value()));
    h = exp_map(ad::combine(beta, per_dim_tangent), kind);
    track(h);
    trace.layer_outputs.push_back(h);

    if (shared) {
      trace.alpha.push_back(shared->alpha[li]);
      trace.latent.push_back(shared->latent[li]);
      prev_latent = shared->latent[li];
      continue;
    }
    const ad::Var& alpha_logits = params.alpha_logits[li];
    if (alpha_logits.rows() != d_next || alpha_logits.cols() != d_prev) {
      throw ShapeError("forward: layer " + std::to_string(l) + " aggregation logits are " + std::to_string(alpha_logits.rows()) +
                       "x" + std::to_string(alpha_logits.cols()) + ", expected " + std::to_string(d_next) + "x" +
                       std::to_string(d_prev));
    }
    ad::Var alpha = ad::softmax_rows(alpha_logits);
    trace.alpha.push_back(alpha);
    trace.max_softmax_deviation = std::max(trace.max_softmax_deviation, softmax_deviation(alpha.value()));
    std::vector<ad::Var> next_latent;
    for (int j = 0; j < d_next; ++j) {
      ad::Var weights_j = ad::row(alpha, j);
      ad::Var combined = l == 1 ? ad::combine_adjacency(weights_j, graph.raw, graph.pattern) : ad::combine(weights_j, prev_latent);
      next_latent.push_back(ad::relu(combined));
    }
    trace.latent.push_back(next_latent);
    prev_latent = std::move(next_latent);
  }
  trace.z = h;
  return trace;
}

Matrix embed(const PreparedGraph& graph, const Matrix& features, const ModelParams& params, const ModelConfig& config) {
  ad::Tape tape;
  const ParamVars vars = bind_params(tape, params, config.freeze_alpha);
  return forward(tape, graph, features, vars, config).z.value();
}

Matrix hyperbolic_gcn_layer(const Matrix& points, const SparseMatrix& normalized_adjacency, const Matrix& weights,
                            ManifoldKind kind, double leaky_slope) {
  ad::Tape tape;
  const ad::Var h = tape.constant(points);
  const ad::Var w = tape.constant(weights);
  const ad::Var tangent = log_map(h, kind);
  if (tangent.cols() != w.rows()) throw ShapeError("hyperbolic_gcn_layer: weight rows do not match the tangent width");
  auto a = std::make_shared<const SparseMatrix>(normalized_adjacency);
  const ad::Var pre = ad::matmul(ad::spmm(a, tangent), w);
  return exp_map(ad::leaky_relu(pre, leaky_slope), kind).value();
}

std::vector<SparseMatrix> hierarchical_aggregate(const std::vector<SparseMatrix>& adjacencies, const Matrix& alpha_logits) {
  if (adjacencies.empty()) throw ShapeError("hierarchical_aggregate: no input adjacencies");
  if (alpha_logits.cols() != static_cast<Eigen::Index>(adjacencies.size())) {
    throw ShapeError("hierarchical_aggregate: logits have " + std::to_string(alpha_logits.cols()) + " columns for " +
                     std::to_string(adjacencies.size()) + " inputs");
  }
  const Eigen::Index n = adjacencies.front().rows();
  for (const auto& a : adjacencies) {
    if (a.rows() != n || a.cols() != n) throw ShapeError("hierarchical_aggregate: inputs must share one square shape");
  }
  ad::Tape tape;
  auto inputs = std::make_shared<const std::vector<SparseMatrix>>(adjacencies);
  auto pattern = ad::SparsePattern::from_union(adjacencies);
  const ad::Var alpha = ad::softmax_rows(tape.constant(alpha_logits));
  std::vector<SparseMatrix> out;
  for (Eigen::Index j = 0; j < alpha.rows(); ++j) {
    const ad::Var combined = ad::relu(ad::combine_adjacency(ad::row(alpha, j), inputs, pattern));
    out.push_back(pattern->to_sparse(combined.value()));
    out.back().prune(0.0);
  }
  return out;
}

Matrix consensus(const std::vector<Matrix>& per_dim, const Matrix& beta_logits, ManifoldKind kind) {
  if (per_dim.empty()) throw ShapeError("consensus: no inputs");
  if (beta_logits.rows() != 1 || beta_logits.cols() != static_cast<Eigen::Index>(per_dim.size())) {
    throw ShapeError("consensus: logits must be 1x" + std::to_string(per_dim.size()));
  }
  ad::Tape tape;
  std::vector<ad::Var> tangents;
  for (const auto& h : per_dim) {
    if (h.rows() != per_dim.front().rows() || h.cols() != per_dim.front().cols()) {
      throw ShapeError("consensus: inputs have different shapes");
    }
    tangents.push_back(log_map(tape.constant(h), kind));
  }
  const ad::Var beta = ad::softmax_rows(tape.constant(beta_logits));
  return exp_map(ad::combine(beta, tangents), kind).value();
}

Matrix latent_connectivity(const PreparedGraph& graph, const ForwardTrace& trace) {
  const auto n = static_cast<Eigen::Index>(graph.n_nodes);
  Matrix total = Matrix::Identity(n, n);
  for (std::size_t l = 0; l < trace.beta.size(); ++l) {
    const Matrix& beta = trace.beta[l].value();
    Matrix layer = Matrix::Zero(n, n);
    for (Eigen::Index d = 0; d < beta.cols(); ++d) {
      const auto dd = static_cast<std::size_t>(d);
      if (l == 0) {
        layer += beta(0, d) * Matrix(*graph.normalized[dd]);
      } else {
        layer += beta(0, d) * latent_dense(graph, trace.normalized_latent[l - 1][dd]);
      }
    }
    total = layer * total;
  }
  return total;
}

SparseMatrix latent_to_sparse(const PreparedGraph& graph, const ad::Var& adjacency) {
  SparseMatrix s = graph.dense_latent() ? SparseMatrix(adjacency.value().sparseView()) : graph.pattern->to_sparse(adjacency.value());
  s.prune(0.0);
  return s;
}

}  // namespace hypermux
