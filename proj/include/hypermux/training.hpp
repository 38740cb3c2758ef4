#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "hypermux/autodiff.hpp"
#include "hypermux/geo.hpp"
#include "hypermux/graph.hpp"
#include "hypermux/hgnn.hpp"
#include "hypermux/manifold.hpp"

namespace hypermux {

struct TrainConfig {
  double learning_rate = 1e-3;
  double weight_decay = 1e-5;
  int max_epochs = 1000;
  int patience = 20;
  double min_delta = 1e-5;
  std::uint64_t seed = 0;
  // Per-epoch ID / LID of the embeddings.
  bool telemetry = false;
  double twonn_trim = 0.1;
  double lid_threshold = 0.9;

  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;

  void validate() const;
};

// Bilinear discriminator sigmoid(z^T Q s).
struct Discriminator {
  Matrix q;

  static Discriminator identity(Eigen::Index m);
};

// Mean of the rows of to_euclidean(z).
Vector readout(const Matrix& z, ManifoldKind kind);
double discriminate(const Vector& s, const Vector& z, const Matrix& q);

// sum log D(s, z_i) + sum log(1 - D(s, zc_j)), s read out from z, every log
// argument clamped to >= 1e-12.
double dgi_objective(const Matrix& z, const Matrix& z_corrupt, const Matrix& q, ManifoldKind kind);
double dgi_objective_from_scores(const Vector& positive, const Vector& negative);
// Traced negation of dgi_objective, the quantity minimized in training.
ad::Var dgi_loss(const ad::Var& z, const ad::Var& z_corrupt, const ad::Var& q, ManifoldKind kind);

struct AdamState {
  long long step = 0;
  std::vector<Matrix> m;
  std::vector<Matrix> v;
};

// One Adam update with decoupled weight decay: p <- p (1 - lr wd) - lr mhat / (sqrt(vhat) + eps).
// Throws NumericalError naming the parameter when a gradient is not finite;
// nothing is modified in that case.
void adam_step(const std::vector<Matrix*>& params, const std::vector<Matrix>& grads, const std::vector<std::string>& names,
               AdamState& state, const TrainConfig& config);

// Stop once the monitored value has failed to improve on the best seen by at
// least min_delta for `patience` consecutive updates.
class EarlyStopper {
 public:
  EarlyStopper(int patience, double min_delta);
  // Returns true when training should stop.
  bool update(double value);
  int stale() const { return stale_; }
  double best() const { return best_; }

 private:
  int patience_;
  double min_delta_;
  double best_;
  int stale_ = 0;
  bool seen_ = false;
};

struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;
  std::optional<double> id;
  std::optional<int> lid;
};

enum class TrainStatus { Completed, EarlyStopped, Aborted };

struct TrainResult {
  Matrix z;  // embeddings under the returned parameters
  ModelParams params;
  Discriminator discriminator;
  std::vector<EpochRecord> history;
  TrainStatus status = TrainStatus::Completed;
  std::string error;  // set when aborted
  int epochs_run = 0;
  double max_hyperboloid_violation = 0.0;
  double max_softmax_deviation = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&)>;

// Full-graph DGI training. The corrupted pass reuses the clean pass's
// aggregation hierarchy. A non-finite loss or gradient aborts the run and
// returns the parameters from the last finite epoch.
TrainResult train(const MultiplexGraph& graph, const ModelConfig& model, const TrainConfig& config,
                  const EpochCallback& on_epoch = {});

// Columns epoch,loss,id,lid; id and lid are empty without telemetry.
void write_history_csv(const std::vector<EpochRecord>& history, std::ostream& out);

std::string to_string(TrainStatus status);

}  // namespace hypermux
