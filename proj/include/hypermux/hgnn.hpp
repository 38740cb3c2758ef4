#pragma once

#include <cstdint>
#include <memory>
#include <vector>

#include "hypermux/autodiff.hpp"
#include "hypermux/graph.hpp"
#include "hypermux/manifold.hpp"

namespace hypermux {

struct ModelConfig {
  int n_layers = 2;
  int embed_size = 96;
  // D_0 > D_1 > ... > D_L; empty means the default halving schedule.
  std::vector<int> dim_schedule;
  ManifoldKind manifold = ManifoldKind::Lorentz;
  // Negative slope of the leaky-ReLU activation; 1.0 makes it the identity.
  double leaky_slope = 0.01;
  // Weights ablation: aggregation logits stay at zero and receive no updates.
  bool freeze_alpha = false;
  // Latent adjacencies are stored dense when the union support of the input
  // dimensions is denser than this.
  double dense_threshold = 0.25;

  // D_l = min(D_{l-1}, max(ceil(D / 2^l), l < L ? 2 : 1)) unless given.
  std::vector<int> resolved_schedule(std::size_t input_dims) const;
  void validate(std::size_t input_dims) const;
};

// Trainable parameters of one layer l.
struct LayerParams {
  std::vector<Matrix> weights;  // D_{l-1} matrices, F_in x M
  Matrix alpha_logits;          // D_l x D_{l-1}, softmax over each row
  Matrix beta_logits;           // 1 x D_{l-1}
};

struct ModelParams {
  std::vector<LayerParams> layers;
};

// W uniform in +-sqrt(6 / (F_in + F_out)); aggregation and consensus logits zero.
ModelParams init_params(const ModelConfig& config, std::size_t n_features, std::size_t n_dims, std::uint64_t seed);

// Input adjacencies in the forms the forward pass needs.
struct PreparedGraph {
  std::size_t n_nodes = 0;
  std::shared_ptr<const std::vector<SparseMatrix>> raw;
  std::vector<std::shared_ptr<const SparseMatrix>> normalized;
  // Shared support of every latent adjacency; null when they are stored dense.
  std::shared_ptr<const ad::SparsePattern> pattern;

  static PreparedGraph from(const MultiplexGraph& graph, double dense_threshold = 0.25);
  bool dense_latent() const { return pattern == nullptr; }
};

// Parameters bound as tape leaves.
struct ParamVars {
  std::vector<std::vector<ad::Var>> weights;
  std::vector<ad::Var> alpha_logits;
  std::vector<ad::Var> beta_logits;
};

// Aggregation logits become constants when `freeze_alpha` is set.
ParamVars bind_params(ad::Tape& tape, const ModelParams& params, bool freeze_alpha);

struct ForwardTrace {
  ad::Var z;  // N x M (flat, ball) or N x (M + 1) (hyperboloid)
  std::vector<ad::Var> layer_outputs;
  // latent[l]: the D_{l+1} aggregated adjacencies produced by layer l + 1,
  // dense N x N or values rows on PreparedGraph::pattern.
  std::vector<std::vector<ad::Var>> latent;
  // normalized_latent[l]: normalized adjacencies consumed by layer l + 2.
  std::vector<std::vector<ad::Var>> normalized_latent;
  std::vector<ad::Var> alpha;  // softmax weights per layer
  std::vector<ad::Var> beta;
  double max_hyperboloid_violation = 0.0;
  double max_softmax_deviation = 0.0;  // max |sum of a weight vector - 1|
};

// Forward pass over all layers. The aggregation hierarchy depends
// only on the parameters, so a second pass on the same tape can reuse the one
// built by `shared`.
ForwardTrace forward(ad::Tape& tape, const PreparedGraph& graph, const Matrix& features, const ParamVars& params,
                     const ModelConfig& config, const ForwardTrace* shared = nullptr);

// Convenience: forward on a private tape, returning Z.
Matrix embed(const PreparedGraph& graph, const Matrix& features, const ModelParams& params, const ModelConfig& config);

// exp_x(sigma(A_hat log_x(H) W)) for one dimension; sigma acts in tangent space.
Matrix hyperbolic_gcn_layer(const Matrix& points, const SparseMatrix& normalized_adjacency, const Matrix& weights,
                            ManifoldKind kind, double leaky_slope);

// phi(sum_i alpha_ij A_i) with alpha = row-softmax(logits), logits D_l x D_{l-1}.
// Outputs are not normalized.
std::vector<SparseMatrix> hierarchical_aggregate(const std::vector<SparseMatrix>& adjacencies, const Matrix& alpha_logits);

// sum_d beta_d H_d with beta = softmax(logits), taken in tangent space at the
// base point for curved kinds.
Matrix consensus(const std::vector<Matrix>& per_dim, const Matrix& beta_logits, ManifoldKind kind);

// Product over layers of the consensus-weighted normalized adjacencies,
// P_L ... P_1 with P_l = sum_d beta_d A_hat_d. Entry (u, v) > 0 means v's input
// features reach u's embedding through the latent hierarchy.
Matrix latent_connectivity(const PreparedGraph& graph, const ForwardTrace& trace);

// Latent adjacency as a sparse matrix for export.
SparseMatrix latent_to_sparse(const PreparedGraph& graph, const ad::Var& adjacency);

}  // namespace hypermux
