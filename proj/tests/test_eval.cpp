#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include <json.hpp>

#include "hypermux/errors.hpp"
#include "hypermux/eval.hpp"
#include "hypermux/rng.hpp"

using namespace hypermux;

namespace {

// First `count` pairs of a fixed enumeration order.
MultiplexGraph graph_with_edges(std::size_t n, const std::vector<std::size_t>& counts) {
  MultiplexGraph g;
  g.n_nodes = n;
  for (std::size_t d = 0; d < counts.size(); ++d) {
    std::vector<Edge> edges;
    for (std::size_t i = 0; i < n && edges.size() < counts[d]; ++i) {
      for (std::size_t j = i + 1 + d; j < n && edges.size() < counts[d]; j += 2) edges.push_back({i, j});
    }
    REQUIRE(edges.size() == counts[d]);
    g.dims.push_back(adjacency_from_edges(n, edges));
  }
  g.features = structural_features(g.dims);
  return g;
}

// Exact pairwise statistic: P(score_pos > score_neg) + P(tie) / 2.
double brute_force_auc(const std::vector<double>& s, const std::vector<int>& y) {
  double wins = 0, pairs = 0;
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (y[i] != 1) continue;
    for (std::size_t j = 0; j < s.size(); ++j) {
      if (y[j] != 0) continue;
      pairs += 1;
      wins += s[i] > s[j] ? 1.0 : (s[i] == s[j] ? 0.5 : 0.0);
    }
  }
  return wins / pairs;
}

Matrix blobs(Rng& rng, std::size_t per_class, std::vector<LabelSet>& labels) {
  std::normal_distribution<double> normal(0.0, 0.3);
  Matrix x(static_cast<Eigen::Index>(2 * per_class), 2);
  labels.clear();
  for (std::size_t i = 0; i < 2 * per_class; ++i) {
    const int c = i < per_class ? 0 : 1;
    const double cx = c == 0 ? -2.0 : 2.0;
    x(static_cast<Eigen::Index>(i), 0) = cx + normal(rng);
    x(static_cast<Eigen::Index>(i), 1) = normal(rng);
    labels.push_back({c});
  }
  return x;
}

}  // namespace

TEST_CASE("edge split") {
  SUBCASE("no test share leaves the graph unchanged") {
    const MultiplexGraph g = graph_with_edges(30, {40, 25});
    const EdgeSplit s = split_edges(g, 1.0, 0.0, 1);
    CHECK(s.test_positive.empty());
    CHECK(s.test_negative.empty());
    CHECK(s.train == g);
  }
  SUBCASE("counts, disjointness and verified negatives") {
    const MultiplexGraph g = graph_with_edges(40, {100, 60});
    const EdgeSplit s = split_edges(g, 0.9, 0.1, 2);
    std::vector<std::size_t> pos_per_dim(2, 0), neg_per_dim(2, 0);
    for (std::size_t k = 0; k < s.test_positive.size(); ++k) {
      const auto [u, v] = s.test_positive[k];
      const std::size_t d = s.test_positive_dim[k];
      ++pos_per_dim[d];
      CHECK(g.dims[d].coeff(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) != 0.0);
      CHECK(s.train.dims[d].coeff(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) == 0.0);
      CHECK(s.train.dims[d].coeff(static_cast<Eigen::Index>(v), static_cast<Eigen::Index>(u)) == 0.0);
    }
    std::set<std::pair<std::size_t, Edge>> negatives;
    for (std::size_t k = 0; k < s.test_negative.size(); ++k) {
      const auto [u, v] = s.test_negative[k];
      const std::size_t d = s.test_negative_dim[k];
      ++neg_per_dim[d];
      CHECK(u != v);
      CHECK(g.dims[d].coeff(static_cast<Eigen::Index>(u), static_cast<Eigen::Index>(v)) == 0.0);
      negatives.insert({d, {std::min(u, v), std::max(u, v)}});
    }
    CHECK(pos_per_dim == std::vector<std::size_t>{10, 6});
    CHECK(neg_per_dim == std::vector<std::size_t>{10, 6});
    CHECK(negatives.size() == 16);
    CHECK(s.train.dims[0].nonZeros() == 2 * 90);
    CHECK(s.train.dims[1].nonZeros() == 2 * 54);
  }
  SUBCASE("deterministic per seed") {
    const MultiplexGraph g = graph_with_edges(40, {100});
    CHECK(split_edges(g, 0.85, 0.15, 3).test_positive == split_edges(g, 0.85, 0.15, 3).test_positive);
    CHECK(split_edges(g, 0.85, 0.15, 3).test_positive != split_edges(g, 0.85, 0.15, 4).test_positive);
  }
  SUBCASE("structural features are rebuilt from the training graph") {
    const MultiplexGraph g = graph_with_edges(40, {100});
    const EdgeSplit s = split_edges(g, 0.85, 0.15, 5, true);
    CHECK(s.train.features == structural_features(s.train.dims));
  }
  SUBCASE("too few edges names the dimension") {
    const MultiplexGraph g = graph_with_edges(20, {30, 1});
    try {
      split_edges(g, 0.5, 0.5, 6);
      FAIL("expected a validation error");
    } catch (const ValidationError& e) {
      CHECK(std::string(e.what()).find("dimension 1") != std::string::npos);
    }
  }
  SUBCASE("ratios must sum to one") { CHECK_THROWS_AS(split_edges(graph_with_edges(20, {10}), 0.5, 0.4, 0), ValidationError); }
}

TEST_CASE("AUC and AP") {
  SUBCASE("perfect separation") {
    const AucAp r = auc_ap({0.9, 0.8, 0.3, 0.1}, {1, 1, 0, 0});
    CHECK(r.auc == 1.0);
    CHECK(r.ap == 1.0);
  }
  SUBCASE("all ties") { CHECK(auc_ap({0.4, 0.4, 0.4, 0.4}, {1, 0, 1, 0}).auc == 0.5); }
  SUBCASE("interleaved") {
    const AucAp r = auc_ap({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0});
    CHECK(r.auc == doctest::Approx(0.75));
    CHECK(r.auc == doctest::Approx(brute_force_auc({0.9, 0.8, 0.7, 0.6}, {1, 0, 1, 0})));
    // Precision at each positive: 1/1 and 2/3.
    CHECK(r.ap == doctest::Approx((1.0 + 2.0 / 3.0) / 2));
  }
  SUBCASE("matches the pairwise statistic on random data with ties") {
    Rng rng(7);
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<double> s(40);
      std::vector<int> y(40);
      for (std::size_t i = 0; i < 40; ++i) {
        s[i] = std::round(uniform01(rng) * 10) / 10;
        y[i] = i < 2 ? static_cast<int>(i) : (uniform01(rng) < 0.4 ? 1 : 0);
      }
      CHECK(auc_ap(s, y).auc == doctest::Approx(brute_force_auc(s, y)).epsilon(1e-14));
    }
  }
  SUBCASE("order of pairs does not matter") {
    std::vector<double> s{0.2, 0.9, 0.5, 0.5, 0.1, 0.7};
    std::vector<int> y{0, 1, 1, 0, 0, 1};
    const AucAp a = auc_ap(s, y);
    std::reverse(s.begin(), s.end());
    std::reverse(y.begin(), y.end());
    const AucAp b = auc_ap(s, y);
    CHECK(a.auc == b.auc);
    CHECK(a.ap == doctest::Approx(b.ap).epsilon(1e-15));
  }
  SUBCASE("single class is an error") { CHECK_THROWS_AS(auc_ap({0.1, 0.2}, {1, 1}), ValidationError); }
}

TEST_CASE("F1 scores") {
  const std::vector<LabelSet> actual{{0}, {1}, {0}, {1}};
  SUBCASE("perfect") {
    const F1 f = f1_scores(actual, actual, 2);
    CHECK(f.macro == 1.0);
    CHECK(f.micro == 1.0);
  }
  SUBCASE("all predicted as class 0") {
    const F1 f = f1_scores({{0}, {0}, {0}, {0}}, actual, 2);
    CHECK(f.micro == doctest::Approx(0.5));
    CHECK(f.macro == doctest::Approx(1.0 / 3.0));
  }
  SUBCASE("micro equals accuracy for single-label data") {
    const std::vector<LabelSet> truth{{0}, {1}, {2}, {2}, {1}, {0}, {2}};
    const std::vector<LabelSet> pred{{0}, {2}, {2}, {1}, {1}, {0}, {0}};
    CHECK(f1_scores(pred, truth, 3).micro == doctest::Approx(4.0 / 7.0));
  }
}

TEST_CASE("logistic regression") {
  Rng rng(8);
  std::vector<LabelSet> labels;
  SUBCASE("separable blobs are fitted perfectly") {
    const Matrix x = blobs(rng, 50, labels);
    const Classifier c = fit_logreg(x, labels, 2);
    const F1 f = f1_scores(predict(c, x), labels, 2);
    CHECK(f.macro == 1.0);
    CHECK(c.weights.allFinite());
  }
  SUBCASE("objective decreases monotonically") {
    const Matrix x = blobs(rng, 30, labels);
    const Classifier c = fit_logreg(x, labels, 2);
    REQUIRE(c.objective_trace.size() >= 2);
    for (std::size_t i = 1; i < c.objective_trace.size(); ++i) CHECK(c.objective_trace[i] <= c.objective_trace[i - 1]);
  }
  SUBCASE("duplicating the data leaves the fit unchanged") {
    const Matrix x = blobs(rng, 30, labels);
    Matrix xx(2 * x.rows(), x.cols());
    xx << x, x;
    std::vector<LabelSet> ll = labels;
    ll.insert(ll.end(), labels.begin(), labels.end());
    LogRegConfig cfg;
    cfg.tolerance = 1e-9;
    cfg.max_iterations = 20000;
    const Classifier a = fit_logreg(x, labels, 2, cfg), b = fit_logreg(xx, ll, 2, cfg);
    CHECK((a.weights - b.weights).cwiseAbs().maxCoeff() < 1e-5);
    CHECK((a.bias - b.bias).cwiseAbs().maxCoeff() < 1e-5);
  }
  SUBCASE("random labels give about the majority rate") {
    std::normal_distribution<double> normal;
    Matrix x(2000, 3);
    for (Eigen::Index i = 0; i < x.size(); ++i) x.data()[i] = normal(rng);
    labels.clear();
    for (int i = 0; i < 2000; ++i) labels.push_back({uniform01(rng) < 0.7 ? 0 : 1});
    const double majority =
        static_cast<double>(std::count_if(labels.begin(), labels.end(), [](const LabelSet& l) { return l[0] == 0; })) / 2000.0;
    const F1 f = f1_scores(predict(fit_logreg(x, labels, 2), x), labels, 2);
    CHECK(f.micro == doctest::Approx(majority).epsilon(0.03));
  }
  SUBCASE("multi-label one-vs-rest") {
    const Matrix x = blobs(rng, 40, labels);
    for (std::size_t i = 0; i < labels.size(); ++i) {
      if (i % 2 == 0) labels[i].push_back(2);
    }
    const Classifier c = fit_logreg(x, labels, 3);
    CHECK(c.multi_label);
    CHECK(c.weights.rows() == 3);
  }
  SUBCASE("single class is an error") {
    const Matrix x = blobs(rng, 10, labels);
    for (auto& l : labels) l = {0};
    CHECK_THROWS_AS(fit_logreg(x, labels, 2), ValidationError);
  }
}

TEST_CASE("link prediction on embeddings") {
  MultiplexGraph g;
  g.n_nodes = 20;
  std::vector<Edge> edges;
  for (std::size_t i = 0; i < 10; ++i) {
    for (std::size_t j = i + 1; j < 10; ++j) {
      edges.push_back({i, j});
      edges.push_back({i + 10, j + 10});
    }
  }
  g.dims.push_back(adjacency_from_edges(20, edges));
  g.features = structural_features(g.dims);
  const EdgeSplit split = split_edges(g, 0.85, 0.15, 9);

  SUBCASE("two separated ball clusters") {
    Matrix z(20, 2);
    for (Eigen::Index i = 0; i < 20; ++i) {
      z(i, 0) = i < 10 ? -0.6 : 0.6;
      z(i, 1) = 0.01 * static_cast<double>(i % 10);
    }
    const AucAp r = link_prediction_eval(z, split, ManifoldKind::PoincareBall);
    CHECK(r.auc == 1.0);
  }
  SUBCASE("identical embeddings tie") {
    const Matrix z = Matrix::Constant(20, 2, 0.1);
    CHECK(link_prediction_eval(z, split, ManifoldKind::PoincareBall).auc == 0.5);
  }
}

TEST_CASE("classification protocol") {
  Rng rng(10);
  std::vector<LabelSet> labels;
  const Matrix x = blobs(rng, 50, labels);
  const ClassificationResult r = classification_eval(x, labels, ManifoldKind::Euclidean, 1, 5, 0.8);
  CHECK(r.repetitions == 5);
  CHECK(r.f1_macro == 1.0);
  CHECK(r.f1_micro_std == 0.0);
}

TEST_CASE("metrics output") {
  Metrics m;
  m.task = "link_prediction";
  m.auc = 0.75;
  m.ap = 0.5;
  m.seed = 3;
  m.config_hash = "0123456789abcdef";
  std::ostringstream json, csv;
  write_metrics_json(m, json);
  const auto parsed = nlohmann::json::parse(json.str());
  CHECK(parsed["task"] == "link_prediction");
  CHECK(parsed["auc"] == 0.75);
  CHECK(parsed["f1_macro"].is_null());
  CHECK(parsed["config_hash"] == "0123456789abcdef");
  write_metrics_csv_header(csv);
  write_metrics_csv_row(m, csv);
  CHECK(csv.str() == "task,auc,ap,f1_macro,f1_micro,seed,config_hash\nlink_prediction,0.75,0.5,,,3,0123456789abcdef\n");
}
