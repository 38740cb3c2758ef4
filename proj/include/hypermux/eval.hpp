#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hypermux/graph.hpp"
#include "hypermux/manifold.hpp"

namespace hypermux {

struct EvalOptions {
  std::string task = "link";  // "link" or "classify"
  double train_ratio = 0.85;
  double test_ratio = 0.15;
  double fd_r = 2.0;
  double fd_t = 1.0;
  int repetitions = 5;
  double class_train_fraction = 0.8;
  // Rebuild degree features on the training graph after the edge split.
  bool recompute_structural = true;
};

struct EdgeSplit {
  MultiplexGraph train;  // input graph with the test positives removed
  std::vector<Edge> test_positive;
  std::vector<std::size_t> test_positive_dim;
  std::vector<Edge> test_negative;
  std::vector<std::size_t> test_negative_dim;
  double train_ratio = 0.85;
  double test_ratio = 0.15;
  std::uint64_t seed = 0;
};

// Per dimension: removes round(test_ratio * E_d) uniformly chosen edges and
// samples as many verified non-edges of that dimension. Node features are
// carried over unchanged; with `recompute_structural` they are rebuilt from
// the training adjacencies so held-out edges do not leak through degrees.
EdgeSplit split_edges(const MultiplexGraph& graph, double train_ratio, double test_ratio, std::uint64_t seed,
                      bool recompute_structural = false);

struct AucAp {
  double auc = 0.0;
  double ap = 0.0;
};

// AUC by the rank statistic (ties count 1/2); AP summed over tie groups of the
// descending score order.
AucAp auc_ap(const std::vector<double>& scores, const std::vector<int>& labels);

struct LogRegConfig {
  double l2 = 1e-4;
  double tolerance = 1e-5;  // gradient norm
  int max_iterations = 5000;
};

struct Classifier {
  Matrix weights;  // C x E
  Vector bias;     // C
  bool multi_label = false;
  int iterations = 0;  // largest iteration count over the fitted problems
  double final_gradient_norm = 0.0;
  std::vector<double> objective_trace;  // first problem only
};

// Multinomial logistic regression (one-vs-rest binary problems when any node
// has several labels), mean loss plus l2/2 |W|^2, gradient descent with
// backtracking line search. Classes are 0 .. n_classes - 1.
Classifier fit_logreg(const Matrix& embeddings, const std::vector<LabelSet>& labels, int n_classes,
                      const LogRegConfig& config = {});
std::vector<LabelSet> predict(const Classifier& classifier, const Matrix& embeddings);

struct F1 {
  double macro = 0.0;
  double micro = 0.0;
};
F1 f1_scores(const std::vector<LabelSet>& predicted, const std::vector<LabelSet>& actual, int n_classes);

// Fermi-Dirac scores (sigmoid of the dot product for Euclidean embeddings) on
// the split's test pairs, pooled over dimensions.
AucAp link_prediction_eval(const Matrix& z, const EdgeSplit& split, ManifoldKind kind, double r = 2.0, double t = 1.0);

struct ClassificationResult {
  double f1_macro = 0.0;
  double f1_micro = 0.0;
  double f1_macro_std = 0.0;
  double f1_micro_std = 0.0;
  int repetitions = 0;
};

// Stratified train/test node split (by first label), logistic regression on
// to_euclidean(z), mean and population std over repetitions.
ClassificationResult classification_eval(const Matrix& z, const std::vector<LabelSet>& labels, ManifoldKind kind,
                                         std::uint64_t seed, int repetitions = 5, double train_fraction = 0.8,
                                         const LogRegConfig& config = {});

struct Metrics {
  std::string task;  // "link_prediction" or "classification"
  std::optional<double> auc, ap, f1_macro, f1_micro;
  std::uint64_t seed = 0;
  std::string config_hash;
};

void write_metrics_json(const Metrics& m, std::ostream& out);
void write_metrics_csv_header(std::ostream& out);
void write_metrics_csv_row(const Metrics& m, std::ostream& out);

}  // namespace hypermux
