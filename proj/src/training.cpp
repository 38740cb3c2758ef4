#include "hypermux/training.hpp"

#include <charconv>
#include <cmath>
#include <limits>
#include <ostream>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {
namespace {

constexpr double kLogFloor = 1e-12;

// Seed streams under TrainConfig::seed.
constexpr std::uint64_t kInitStream = 1;
constexpr std::uint64_t kCorruptStream = 2;

ad::Var tangent_coords(const ad::Var& points, ManifoldKind kind) {
  switch (kind) {
    case ManifoldKind::Euclidean: return points;
    case ManifoldKind::PoincareBall: return ad::poincare_log0(points);
    case ManifoldKind::Lorentz: return ad::lorentz_log0(points);
  }
  return points;
}

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

double softmax_sum_deviation(const Matrix& logits) {
  double worst = 0.0;
  for (Eigen::Index r = 0; r < logits.rows(); ++r) {
    const double mx = logits.row(r).maxCoeff();
    const Eigen::RowVectorXd e = (logits.row(r).array() - mx).exp();
    const Eigen::RowVectorXd w = e / e.sum();
    worst = std::max(worst, std::abs(w.sum() - 1.0));
  }
  return worst;
}

}  // namespace

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) throw ConfigError("train: learning rate must be > 0");
  if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay)) throw ConfigError("train: weight decay must be >= 0");
  if (max_epochs < 1) throw ConfigError("train: max epochs must be >= 1");
  if (patience < 1) throw ConfigError("train: patience must be >= 1");
  if (!(min_delta >= 0.0)) throw ConfigError("train: min delta must be >= 0");
  if (!(twonn_trim >= 0.0 && twonn_trim < 1.0)) throw ConfigError("train: TwoNN trim must lie in [0, 1)");
  if (!(lid_threshold > 0.0 && lid_threshold <= 1.0)) throw ConfigError("train: LID threshold must lie in (0, 1]");
  if (!(adam_beta1 >= 0.0 && adam_beta1 < 1.0) || !(adam_beta2 >= 0.0 && adam_beta2 < 1.0) || !(adam_eps > 0.0)) {
    throw ConfigError("train: invalid Adam constants");
  }
}

Discriminator Discriminator::identity(Eigen::Index m) { return Discriminator{Matrix::Identity(m, m)}; }

Vector readout(const Matrix& z, ManifoldKind kind) {
  if (z.rows() < 1) throw ShapeError("readout: no embeddings");
  return manifold::to_euclidean(z, kind).colwise().mean().transpose();
}

double discriminate(const Vector& s, const Vector& z, const Matrix& q) {
  if (q.rows() != z.size() || q.cols() != s.size()) {
    throw ShapeError("discriminate: Q is " + std::to_string(q.rows()) + "x" + std::to_string(q.cols()) + ", z has " +
                     std::to_string(z.size()) + " entries, s has " + std::to_string(s.size()));
  }
  const double logit = z.dot(q * s);
  return 1.0 / (1.0 + std::exp(-logit));
}

double dgi_objective_from_scores(const Vector& positive, const Vector& negative) {
  double total = 0.0;
  for (Eigen::Index i = 0; i < positive.size(); ++i) total += std::log(std::max(positive[i], kLogFloor));
  for (Eigen::Index j = 0; j < negative.size(); ++j) total += std::log(std::max(1.0 - negative[j], kLogFloor));
  return total;
}

double dgi_objective(const Matrix& z, const Matrix& z_corrupt, const Matrix& q, ManifoldKind kind) {
  if (z.rows() != z_corrupt.rows() || z.cols() != z_corrupt.cols()) throw ShapeError("dgi_objective: Z and corrupted Z differ in shape");
  const Vector s = readout(z, kind);
  const Matrix zt = manifold::to_euclidean(z, kind);
  const Matrix zc = manifold::to_euclidean(z_corrupt, kind);
  Vector pos(zt.rows()), neg(zc.rows());
  for (Eigen::Index i = 0; i < zt.rows(); ++i) pos[i] = discriminate(s, zt.row(i).transpose(), q);
  for (Eigen::Index i = 0; i < zc.rows(); ++i) neg[i] = discriminate(s, zc.row(i).transpose(), q);
  return dgi_objective_from_scores(pos, neg);
}

ad::Var dgi_loss(const ad::Var& z, const ad::Var& z_corrupt, const ad::Var& q, ManifoldKind kind) {
  if (z.rows() != z_corrupt.rows() || z.cols() != z_corrupt.cols()) throw ShapeError("dgi_loss: Z and corrupted Z differ in shape");
  const ad::Var zt = tangent_coords(z, kind);
  const ad::Var zc = tangent_coords(z_corrupt, kind);
  if (q.rows() != zt.cols() || q.cols() != zt.cols()) throw ShapeError("dgi_loss: Q does not match the embedding width");
  const ad::Var qs = ad::matmul(q, ad::transpose(ad::col_mean(zt)));
  const ad::Var pos = ad::sigmoid(ad::matmul(zt, qs));
  const ad::Var neg = ad::sigmoid(ad::matmul(zc, qs));
  const ad::Var objective = ad::add(ad::sum(ad::log_clamped(pos, kLogFloor)),
                                    ad::sum(ad::log_clamped(ad::add_scalar(ad::neg(neg), 1.0), kLogFloor)));
  return ad::neg(objective);
}

void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, const std::vector<std::string>& names,
               AdamState& state, const TrainConfig& config) {
  if (params.size() != grads.size() || params.size() != names.size()) throw ShapeError("adam_step: parameter, gradient and name counts differ");
  for (std::size_t k = 0; k < params.size(); ++k) {
    if (params[k]->rows() != grads[k].rows() || params[k]->cols() != grads[k].cols()) {
      throw ShapeError("adam_step: gradient shape does not match parameter '" + names[k] + "'");
    }
    if (!grads[k].allFinite()) throw NumericalError("non-finite gradient for parameter '" + names[k] + "'");
  }
  if (state.m.empty()) {
    for (const auto* p : params) {
      state.m.push_back(Matrix::Zero(p->rows(), p->cols()));
      state.v.push_back(Matrix::Zero(p->rows(), p->cols()));
    }
  }
  if (state.m.size() != params.size()) throw ShapeError("adam_step: optimizer state does not match the parameter list");
  ++state.step;
  const double b1 = config.adam_beta1, b2 = config.adam_beta2;
  const double c1 = 1.0 - std::pow(b1, static_cast<double>(state.step));
  const double c2 = 1.0 - std::pow(b2, static_cast<double>(state.step));
  const double decay = 1.0 - config.learning_rate * config.weight_decay;
  for (std::size_t k = 0; k < params.size(); ++k) {
    Matrix& m = state.m[k];
    Matrix& v = state.v[k];
    m = b1 * m + (1.0 - b1) * grads[k];
    v = b2 * v + (1.0 - b2) * grads[k].cwiseProduct(grads[k]);
    Matrix& p = *params[k];
    p *= decay;
    p.array() -= config.learning_rate * (m.array() / c1) / ((v.array() / c2).sqrt() + config.adam_eps);
  }
}

EarlyStopper::EarlyStopper(int patience, double min_delta)
    : patience_(patience), min_delta_(min_delta), best_(std::numeric_limits<double>::infinity()) {
  if (patience < 1) throw ConfigError("early stopping patience must be >= 1");
}

bool EarlyStopper::update(double value) {
  if (!seen_ || value <= best_ - min_delta_) {
    seen_ = true;
    best_ = value;
    stale_ = 0;
    return false;
  }
  ++stale_;
  return stale_ >= patience_;
}

TrainResult train(const MultiplexGraph& graph, const ModelConfig& model, const TrainConfig& config, const EpochCallback& on_epoch) {
  graph.validate();
  config.validate();
  model.validate(graph.dims.size());
  const PreparedGraph prepared = PreparedGraph::from(graph, model.dense_threshold);
  const Matrix& features = graph.features;
  const ManifoldKind kind = model.manifold;

  TrainResult result;
  result.params = init_params(model, static_cast<std::size_t>(features.cols()), graph.dims.size(), derive_seed(config.seed, kInitStream));
  result.discriminator = Discriminator::identity(model.embed_size);
  const std::uint64_t corrupt_seed = derive_seed(config.seed, kCorruptStream);

  ModelParams last_good = result.params;
  Discriminator last_good_q = result.discriminator;
  EarlyStopper stopper(config.patience, config.min_delta);
  AdamState adam;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    ad::Tape tape;
    const ParamVars vars = bind_params(tape, result.params, model.freeze_alpha);
    const ad::Var q = tape.variable(result.discriminator.q, "discriminator.Q");
    const Matrix corrupted = corrupt_features(features, derive_seed(corrupt_seed, static_cast<std::uint64_t>(epoch)));

    EpochRecord record;
    record.epoch = epoch;
    ad::Var loss;
    try {
      const ForwardTrace clean = forward(tape, prepared, features, vars, model);
      const ForwardTrace corrupt = forward(tape, prepared, corrupted, vars, model, &clean);
      result.max_hyperboloid_violation =
          std::max({result.max_hyperboloid_violation, clean.max_hyperboloid_violation, corrupt.max_hyperboloid_violation});
      result.max_softmax_deviation = std::max(result.max_softmax_deviation, clean.max_softmax_deviation);
      loss = dgi_loss(clean.z, corrupt.z, q, kind);
      record.loss = loss.scalar();
      if (!std::isfinite(record.loss)) throw NumericalError("non-finite loss at epoch " + std::to_string(epoch));
      if (config.telemetry) {
        const GeoReport geo = curvature_gap(clean.z.value(), kind, config.twonn_trim, config.lid_threshold);
        record.id = geo.id;
        record.lid = geo.lid;
      }

      last_good = result.params;
      last_good_q = result.discriminator;
      tape.backward(loss);

      std::vector<Matrix*> params;
      std::vector<Matrix> grads;
      std::vector<std::string> names;
      auto add = [&](Matrix& p, const ad::Var& v, std::string name) {
        params.push_back(&p);
        grads.push_back(v.grad());
        names.push_back(std::move(name));
      };
      for (std::size_t l = 0; l < result.params.layers.size(); ++l) {
        auto& layer = result.params.layers[l];
        const std::string prefix = "layer" + std::to_string(l + 1) + ".";
        for (std::size_t d = 0; d < layer.weights.size(); ++d) add(layer.weights[d], vars.weights[l][d], prefix + "W." + std::to_string(d));
        if (!model.freeze_alpha) add(layer.alpha_logits, vars.alpha_logits[l], prefix + "alpha");
        add(layer.beta_logits, vars.beta_logits[l], prefix + "beta");
      }
      add(result.discriminator.q, q, "discriminator.Q");
      adam_step(params, grads, names, adam, config);
    } catch (const NumericalError& e) {
      result.status = TrainStatus::Aborted;
      result.error = e.what();
      result.params = std::move(last_good);
      result.discriminator = std::move(last_good_q);
      break;
    } catch (const DomainError& e) {
      result.status = TrainStatus::Aborted;
      result.error = std::string("epoch ") + std::to_string(epoch) + ": " + e.what();
      result.params = std::move(last_good);
      result.discriminator = std::move(last_good_q);
      break;
    }

    for (const auto& layer : result.params.layers) {
      result.max_softmax_deviation = std::max({result.max_softmax_deviation, softmax_sum_deviation(layer.alpha_logits),
                                               softmax_sum_deviation(layer.beta_logits)});
    }
    result.history.push_back(record);
    result.epochs_run = epoch;
    if (on_epoch) on_epoch(record);
    if (stopper.update(record.loss)) {
      result.status = TrainStatus::EarlyStopped;
      break;
    }
  }

  ad::Tape tape;
  const ParamVars vars = bind_params(tape, result.params, model.freeze_alpha);
  const ForwardTrace final_trace = forward(tape, prepared, features, vars, model);
  result.z = final_trace.z.value();
  result.max_hyperboloid_violation = std::max(result.max_hyperboloid_violation, final_trace.max_hyperboloid_violation);
  result.max_softmax_deviation = std::max(result.max_softmax_deviation, final_trace.max_softmax_deviation);
  return result;
}

void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out) {
  out << "epoch,loss,id,lid\n";
  for (const auto& r : history) {
    out << r.epoch << ',' << format_double(r.loss) << ',';
    if (r.id) out << format_double(*r.id);
    out << ',';
    if (r.lid) out << *r.lid;
    out << '\n';
  }
}

std::string to_string(TrainStatus status) {
  switch (status) {
    case TrainStatus::Completed: return "completed";
    case TrainStatus::EarlyStopped: return "early_stopped";
    case TrainStatus::Aborted: return "aborted";
  }
  return "unknown";
}

}  // namespace hypermux
