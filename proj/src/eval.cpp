#include "hypermux/eval.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <map>
#include <numeric>
#include <ostream>
#include <set>

#include <json.hpp>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {
namespace {

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

// Objective and gradient of one convex problem over parameters theta.
struct Problem {
  virtual ~Problem() = default;
  virtual double value(const Matrix& theta) const = 0;
  virtual Matrix gradient(const Matrix& theta) const = 0;
};

// theta = [W | b], C x (E + 1). Softmax cross-entropy, mean over rows.
struct SoftmaxProblem : Problem {
  const Matrix& x;
  const std::vector<int>& y;
  double l2;
  SoftmaxProblem(const Matrix& x_, const std::vector<int>& y_, double l2_) : x(x_), y(y_), l2(l2_) {}

  Matrix logits(const Matrix& theta) const {
    const Eigen::Index e = x.cols();
    Matrix out = x * theta.leftCols(e).transpose();
    out.rowwise() += theta.col(e).transpose();
    return out;
  }
  double value(const Matrix& theta) const override {
    const Matrix s = logits(theta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < s.rows(); ++i) {
      const double mx = s.row(i).maxCoeff();
      const double lse = mx + std::log((s.row(i).array() - mx).exp().sum());
      total += lse - s(i, y[static_cast<std::size_t>(i)]);
    }
    const Eigen::Index e = x.cols();
    return total / static_cast<double>(x.rows()) + 0.5 * l2 * theta.leftCols(e).squaredNorm();
  }
  Matrix gradient(const Matrix& theta) const override {
    Matrix p = logits(theta);
    for (Eigen::Index i = 0; i < p.rows(); ++i) {
      const double mx = p.row(i).maxCoeff();
      p.row(i) = (p.row(i).array() - mx).exp();
      p.row(i) /= p.row(i).sum();
      p(i, y[static_cast<std::size_t>(i)]) -= 1.0;
    }
    p /= static_cast<double>(x.rows());
    const Eigen::Index e = x.cols();
    Matrix g(theta.rows(), theta.cols());
    g.leftCols(e) = p.transpose() * x + l2 * theta.leftCols(e);
    g.col(e) = p.colwise().sum().transpose();
    return g;
  }
};

// theta = [w | b], 1 x (E + 1). Binary logistic loss, mean over rows.
struct BinaryProblem : Problem {
  const Matrix& x;
  std::vector<double> y;
  double l2;
  BinaryProblem(const Matrix& x_, std::vector<double> y_, double l2_) : x(x_), y(std::move(y_)), l2(l2_) {}

  Vector margins(const Matrix& theta) const {
    const Eigen::Index e = x.cols();
    return (x * theta.leftCols(e).transpose()).col(0).array() + theta(0, e);
  }
  double value(const Matrix& theta) const override {
    const Vector m = margins(theta);
    double total = 0.0;
    for (Eigen::Index i = 0; i < m.size(); ++i) {
      // log(1 + exp(-s m)) with s = +-1, computed stably.
      const double a = (y[static_cast<std::size_t>(i)] > 0.5 ? 1.0 : -1.0) * m[i];
      total += a > 0 ? std::log1p(std::exp(-a)) : -a + std::log1p(std::exp(a));
    }
    const Eigen::Index e = x.cols();
    return total / static_cast<double>(x.rows()) + 0.5 * l2 * theta.leftCols(e).squaredNorm();
  }
  Matrix gradient(const Matrix& theta) const override {
    const Vector m = margins(theta);
    Vector r(m.size());
    for (Eigen::Index i = 0; i < m.size(); ++i) r[i] = (1.0 / (1.0 + std::exp(-m[i])) - y[static_cast<std::size_t>(i)]) / static_cast<double>(x.rows());
    const Eigen::Index e = x.cols();
    Matrix g(1, theta.cols());
    g.leftCols(e) = (x.transpose() * r).transpose() + l2 * theta.leftCols(e);
    g(0, e) = r.sum();
    return g;
  }
};

struct Minimized {
  Matrix theta;
  int iterations = 0;
  double gradient_norm = 0.0;
  std::vector<double> trace;
};

// Gradient descent with Armijo backtracking; the step grows by 2 after every
// accepted iteration.
Minimized minimize(const Problem& problem, Matrix theta, const LogRegConfig& config) {
  Minimized out;
  double f = problem.value(theta);
  double step = 1.0;
  out.trace.push_back(f);
  for (int it = 0; it < config.max_iterations; ++it) {
    const Matrix g = problem.gradient(theta);
    const double gn2 = g.squaredNorm();
    out.gradient_norm = std::sqrt(gn2);
    if (out.gradient_norm < config.tolerance) break;
    bool accepted = false;
    for (int tries = 0; tries < 60; ++tries) {
      Matrix candidate = theta - step * g;
      const double fc = problem.value(candidate);
      if (std::isfinite(fc) && fc <= f - 0.5 * step * gn2) {
        theta = std::move(candidate);
        f = fc;
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    out.iterations = it + 1;
    if (!accepted) break;  // no descent at machine precision
    out.trace.push_back(f);
    step *= 2.0;
  }
  out.gradient_norm = std::sqrt(problem.gradient(theta).squaredNorm());
  out.theta = std::move(theta);
  return out;
}

void check_labels(const std::vector<LabelSet>& labels, int n_classes, const char* where) {
  for (const auto& set : labels) {
    if (set.empty()) throw ValidationError(std::string(where) + ": every node needs at least one label");
    for (int c : set) {
      if (c < 0 || c >= n_classes) throw ValidationError(std::string(where) + ": label " + std::to_string(c) + " out of range");
    }
  }
}

}  // namespace

EdgeSplit split_edges(const MultiplexGraph& graph, double train_ratio, double test_ratio, std::uint64_t seed,
                      bool recompute_structural) {
  graph.validate();
  if (train_ratio < 0.0 || test_ratio < 0.0 || std::abs(train_ratio + test_ratio - 1.0) > 1e-9) {
    throw ValidationError("split_edges: ratios must be nonnegative and sum to 1");
  }
  EdgeSplit split;
  split.train = graph;
  split.train_ratio = train_ratio;
  split.test_ratio = test_ratio;
  split.seed = seed;
  const std::size_t n = graph.n_nodes;
  for (std::size_t d = 0; d < graph.dims.size(); ++d) {
    Rng rng(derive_seed(seed, d));
    std::vector<Edge> edges;
    for (const auto& e : edge_list(graph.dims[d])) {
      if (e.first != e.second) edges.push_back(e);
    }
    const auto n_test = static_cast<std::size_t>(std::llround(test_ratio * static_cast<double>(edges.size())));
    if (test_ratio > 0.0 && edges.size() < n_test + 1) {
      throw ValidationError("split_edges: dimension " + std::to_string(d) + " has too few edges (" + std::to_string(edges.size()) +
                            ") to hold out " + std::to_string(n_test));
    }
    if (n_test == 0) continue;
    const auto order = random_permutation(edges.size(), rng);
    std::set<Edge> held;
    for (std::size_t k = 0; k < n_test; ++k) {
      const Edge& e = edges[order[k]];
      held.insert(e);
      split.test_positive.push_back(e);
      split.test_positive_dim.push_back(d);
    }
    std::vector<Edge> kept;
    for (const auto& e : edge_list(graph.dims[d])) {
      if (!held.count(e)) kept.push_back(e);
    }
    split.train.dims[d] = adjacency_from_edges(n, kept);

    const std::size_t max_pairs = n * (n - 1) / 2;
    if (edges.size() + n_test > max_pairs) {
      throw ValidationError("split_edges: dimension " + std::to_string(d) + " is too dense to sample " + std::to_string(n_test) +
                            " non-edges");
    }
    std::set<Edge> negatives;
    const std::size_t max_attempts = 1000 * n_test + 100000;
    std::size_t attempts = 0;
    while (negatives.size() < n_test) {
      if (++attempts > max_attempts) {
        throw ValidationError("split_edges: could not sample enough non-edges in dimension " + std::to_string(d));
      }
      auto i = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(n) - 1));
      auto j = static_cast<std::size_t>(uniform_int(rng, 0, static_cast<long long>(n) - 1));
      if (i == j) continue;
      if (i > j) std::swap(i, j);
      if (graph.dims[d].coeff(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) != 0.0) continue;
      if (negatives.insert(Edge{i, j}).second) {
        split.test_negative.push_back(Edge{i, j});
        split.test_negative_dim.push_back(d);
      }
    }
  }
  if (recompute_structural) split.train.features = structural_features(split.train.dims);
  return split;
}

AucAp auc_ap(const std::vector<double>& scores, const std::vector<int>& labels) {
  if (scores.size() != labels.size()) throw ShapeError("auc_ap: scores and labels differ in length");
  std::size_t n_pos = 0;
  for (int l : labels) {
    if (l != 0 && l != 1) throw ValidationError("auc_ap: labels must be 0 or 1");
    n_pos += static_cast<std::size_t>(l);
  }
  const std::size_t n_neg = labels.size() - n_pos;
  if (n_pos == 0 || n_neg == 0) throw ValidationError("auc_ap: both classes must be present");

  std::vector<std::size_t> order(scores.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return scores[a] < scores[b]; });

  // Midranks, ascending.
  double pos_rank_sum = 0.0;
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j < order.size() && scores[order[j]] == scores[order[i]]) ++j;
    const double midrank = 0.5 * (static_cast<double>(i + 1) + static_cast<double>(j));
    for (std::size_t k = i; k < j; ++k) {
      if (labels[order[k]]) pos_rank_sum += midrank;
    }
    i = j;
  }
  const double p = static_cast<double>(n_pos), q = static_cast<double>(n_neg);
  AucAp out;
  out.auc = (pos_rank_sum - p * (p + 1.0) / 2.0) / (p * q);

  // Descending tie groups.
  double tp = 0.0, seen = 0.0;
  for (std::size_t i = order.size(); i > 0;) {
    std::size_t j = i;
    double group_pos = 0.0, group = 0.0;
    while (j > 0 && scores[order[j - 1]] == scores[order[i - 1]]) {
      --j;
      group_pos += labels[order[j]];
      group += 1.0;
    }
    tp += group_pos;
    seen += group;
    out.ap += (tp / seen) * (group_pos / p);
    i = j;
  }
  return out;
}

Classifier fit_logreg(const Matrix& embeddings, const std::vector<LabelSet>& labels, int n_classes, const LogRegConfig& config) {
  if (static_cast<std::size_t>(embeddings.rows()) != labels.size()) throw ShapeError("fit_logreg: embeddings and labels differ in length");
  if (n_classes < 2) throw ValidationError("fit_logreg: need at least 2 classes");
  if (!embeddings.allFinite()) throw ValidationError("fit_logreg: embeddings are not finite");
  check_labels(labels, n_classes, "fit_logreg");
  std::set<int> present;
  bool multi = false;
  for (const auto& set : labels) {
    present.insert(set.begin(), set.end());
    multi = multi || set.size() > 1;
  }
  if (present.size() < 2) throw ValidationError("fit_logreg: labels cover a single class");

  const Eigen::Index e = embeddings.cols();
  Classifier clf;
  clf.multi_label = multi;
  clf.weights = Matrix::Zero(n_classes, e);
  clf.bias = Vector::Zero(n_classes);
  if (!multi) {
    std::vector<int> y;
    for (const auto& set : labels) y.push_back(set.front());
    SoftmaxProblem problem(embeddings, y, config.l2);
    const Minimized m = minimize(problem, Matrix::Zero(n_classes, e + 1), config);
    clf.weights = m.theta.leftCols(e);
    clf.bias = m.theta.col(e);
    clf.iterations = m.iterations;
    clf.final_gradient_norm = m.gradient_norm;
    clf.objective_trace = m.trace;
    return clf;
  }
  for (int c = 0; c < n_classes; ++c) {
    std::vector<double> y;
    for (const auto& set : labels) y.push_back(std::find(set.begin(), set.end(), c) != set.end() ? 1.0 : 0.0);
    BinaryProblem problem(embeddings, std::move(y), config.l2);
    const Minimized m = minimize(problem, Matrix::Zero(1, e + 1), config);
    clf.weights.row(c) = m.theta.leftCols(e);
    clf.bias[c] = m.theta(0, e);
    clf.iterations = std::max(clf.iterations, m.iterations);
    clf.final_gradient_norm = std::max(clf.final_gradient_norm, m.gradient_norm);
    if (c == 0) clf.objective_trace = m.trace;
  }
  return clf;
}

std::vector<LabelSet> predict(const Classifier& classifier, const Matrix& embeddings) {
  if (embeddings.cols() != classifier.weights.cols()) throw ShapeError("predict: embedding width does not match the classifier");
  Matrix s = embeddings * classifier.weights.transpose();
  s.rowwise() += classifier.bias.transpose();
  std::vector<LabelSet> out(static_cast<std::size_t>(s.rows()));
  for (Eigen::Index i = 0; i < s.rows(); ++i) {
    auto& set = out[static_cast<std::size_t>(i)];
    if (classifier.multi_label) {
      for (Eigen::Index c = 0; c < s.cols(); ++c) {
        if (s(i, c) > 0.0) set.push_back(static_cast<int>(c));
      }
    } else {
      Eigen::Index best = 0;
      s.row(i).maxCoeff(&best);
      set.push_back(static_cast<int>(best));
    }
  }
  return out;
}

F1 f1_scores(const std::vector<LabelSet>& predicted, const std::vector<LabelSet>& actual, int n_classes) {
  if (predicted.size() != actual.size()) throw ShapeError("f1_scores: predicted and actual differ in length");
  std::vector<double> tp(static_cast<std::size_t>(n_classes)), fp(tp.size()), fn(tp.size());
  for (std::size_t i = 0; i < actual.size(); ++i) {
    const std::set<int> a(actual[i].begin(), actual[i].end());
    const std::set<int> p(predicted[i].begin(), predicted[i].end());
    for (int c : p) {
      if (c < 0 || c >= n_classes) throw ValidationError("f1_scores: label out of range");
      (a.count(c) ? tp : fp)[static_cast<std::size_t>(c)] += 1.0;
    }
    for (int c : a) {
      if (c < 0 || c >= n_classes) throw ValidationError("f1_scores: label out of range");
      if (!p.count(c)) fn[static_cast<std::size_t>(c)] += 1.0;
    }
  }
  F1 out;
  double TP = 0, FP = 0, FN = 0;
  for (std::size_t c = 0; c < tp.size(); ++c) {
    const double denom = 2 * tp[c] + fp[c] + fn[c];
    out.macro += denom > 0 ? 2 * tp[c] / denom : 0.0;
    TP += tp[c];
    FP += fp[c];
    FN += fn[c];
  }
  out.macro /= static_cast<double>(n_classes);
  out.micro = (2 * TP + FP + FN) > 0 ? 2 * TP / (2 * TP + FP + FN) : 0.0;
  return out;
}

AucAp link_prediction_eval(const Matrix& z, const EdgeSplit& split, ManifoldKind kind, double r, double t) {
  std::vector<double> scores;
  std::vector<int> labels;
  auto add = [&](const std::vector<Edge>& pairs, int label) {
    for (const auto& [i, j] : pairs) {
      if (i >= static_cast<std::size_t>(z.rows()) || j >= static_cast<std::size_t>(z.rows())) {
        throw ShapeError("link_prediction_eval: pair index beyond the embedding rows");
      }
      scores.push_back(manifold::edge_score(z.row(static_cast<Eigen::Index>(i)).transpose(),
                                            z.row(static_cast<Eigen::Index>(j)).transpose(), kind, r, t));
      labels.push_back(label);
    }
  };
  add(split.test_positive, 1);
  add(split.test_negative, 0);
  return auc_ap(scores, labels);
}

ClassificationResult classification_eval(const Matrix& z, const std::vector<LabelSet>& labels, ManifoldKind kind,
                                         std::uint64_t seed, int repetitions, double train_fraction, const LogRegConfig& config) {
  if (static_cast<std::size_t>(z.rows()) != labels.size()) throw ShapeError("classification_eval: embeddings and labels differ in length");
  if (repetitions < 1) throw ValidationError("classification_eval: repetitions must be >= 1");
  if (!(train_fraction > 0.0 && train_fraction < 1.0)) throw ValidationError("classification_eval: train fraction must lie in (0, 1)");
  int n_classes = 0;
  for (const auto& set : labels) {
    if (set.empty()) throw ValidationError("classification_eval: unlabeled node");
    for (int c : set) n_classes = std::max(n_classes, c + 1);
  }
  const Matrix x = manifold::to_euclidean(z, kind);
  std::map<int, std::vector<std::size_t>> strata;
  for (std::size_t i = 0; i < labels.size(); ++i) strata[labels[i].front()].push_back(i);

  std::vector<double> macro, micro;
  for (int rep = 0; rep < repetitions; ++rep) {
    Rng rng(derive_seed(seed, static_cast<std::uint64_t>(rep)));
    std::vector<std::size_t> train_idx, test_idx;
    for (const auto& [cls, members] : strata) {
      const auto order = random_permutation(members.size(), rng);
      auto n_train = static_cast<std::size_t>(std::llround(train_fraction * static_cast<double>(members.size())));
      if (members.size() >= 2) n_train = std::clamp<std::size_t>(n_train, 1, members.size() - 1);
      for (std::size_t k = 0; k < members.size(); ++k) (k < n_train ? train_idx : test_idx).push_back(members[order[k]]);
    }
    std::sort(train_idx.begin(), train_idx.end());
    std::sort(test_idx.begin(), test_idx.end());
    Matrix xtr(static_cast<Eigen::Index>(train_idx.size()), x.cols()), xte(static_cast<Eigen::Index>(test_idx.size()), x.cols());
    std::vector<LabelSet> ytr, yte;
    for (std::size_t k = 0; k < train_idx.size(); ++k) {
      xtr.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(train_idx[k]));
      ytr.push_back(labels[train_idx[k]]);
    }
    for (std::size_t k = 0; k < test_idx.size(); ++k) {
      xte.row(static_cast<Eigen::Index>(k)) = x.row(static_cast<Eigen::Index>(test_idx[k]));
      yte.push_back(labels[test_idx[k]]);
    }
    if (test_idx.empty()) throw ValidationError("classification_eval: test split is empty");
    const Classifier clf = fit_logreg(xtr, ytr, n_classes, config);
    const F1 f1 = f1_scores(predict(clf, xte), yte, n_classes);
    macro.push_back(f1.macro);
    micro.push_back(f1.micro);
  }
  auto mean_std = [](const std::vector<double>& v) {
    const double m = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
    double var = 0.0;
    for (double x : v) var += (x - m) * (x - m);
    return std::pair{m, std::sqrt(var / static_cast<double>(v.size()))};
  };
  ClassificationResult out;
  out.repetitions = repetitions;
  std::tie(out.f1_macro, out.f1_macro_std) = mean_std(macro);
  std::tie(out.f1_micro, out.f1_micro_std) = mean_std(micro);
  return out;
}

void write_metrics_json(const Metrics& m, std::ostream& out) {
  nlohmann::ordered_json j;
  j["task"] = m.task;
  auto put = [&](const char* key, const std::optional<double>& v) {
    if (v) j[key] = *v;
    else j[key] = nullptr;
  };
  put("auc", m.auc);
  put("ap", m.ap);
  put("f1_macro", m.f1_macro);
  put("f1_micro", m.f1_micro);
  j["seed"] = m.seed;
  j["config_hash"] = m.config_hash;
  out << j.dump(2) << '\n';
}

void write_metrics_csv_header(std::ostream& out) { out << "task,auc,ap,f1_macro,f1_micro,seed,config_hash\n"; }

void write_metrics_csv_row(const Metrics& m, std::ostream& out) {
  auto put = [&](const std::optional<double>& v) {
    if (v) out << format_double(*v);
    out << ',';
  };
  out << m.task << ',';
  put(m.auc);
  put(m.ap);
  put(m.f1_macro);
  put(m.f1_micro);
  out << m.seed << ',' << m.config_hash << '\n';
}

}  // namespace hypermux
