#pragma once

#include <cstdint>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "hypermux/eval.hpp"
#include "hypermux/geo.hpp"
#include "hypermux/hgnn.hpp"
#include "hypermux/synthetic.hpp"
#include "hypermux/training.hpp"

namespace hypermux {

// Model variants compared in the ablations and the geometric sweep.
enum class Variant {
  Full,             // configured model as given
  Euclidean,        // Euclidean backbone, same hierarchy
  WeightsAblation,  // aggregation logits frozen at zero (uniform, untrainable)
  LayersAblation,   // one layer, schedule (D, 1)
  EuclideanFlat,    // Euclidean backbone with a single aggregation, schedule (D, 1)
};

std::string to_string(Variant v);
Variant parse_variant(const std::string& name);
ModelConfig apply_variant(const ModelConfig& base, Variant v, std::size_t n_dims);

struct SweepRow {
  std::size_t d = 0;
  std::string model;
  std::uint64_t seed = 0;  // seed index within the sweep
  GeoReport geo;
  double loss_final = 0.0;
  int epochs = 0;
  double max_hyperboloid_violation = 0.0;
  double max_softmax_deviation = 0.0;
  bool ok = false;
  std::string error;
};

struct SweepOptions {
  std::vector<GenParams> specs;
  std::vector<Variant> models{Variant::Full};
  int n_seeds = 1;
  ModelConfig model;
  TrainConfig train;
  int workers = 1;
};

// Graph for (spec, seed index) and the training seed used with it.
GenParams sweep_graph_params(const GenParams& spec, int seed_index);
std::uint64_t sweep_train_seed(const GenParams& spec, int seed_index);

// One row per (spec, seed, model), ordered that way regardless of worker
// count. Failed runs are recorded with ok = false and the sweep continues.
std::vector<SweepRow> run_sweep(const SweepOptions& options, const std::function<void(const SweepRow&)>& progress = {});

// Columns d,model,seed,id,lid,gap,loss_final; failed runs leave the measured
// columns empty.
void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out);

double median(std::vector<double> values);

struct LinkRun {
  AucAp metrics;
  TrainResult train;
  EdgeSplit split;
};

// Splits the edges, trains on the training graph and scores the held-out pairs.
LinkRun run_link_prediction(const MultiplexGraph& graph, const ModelConfig& model, const TrainConfig& train,
                            const EvalOptions& eval, std::uint64_t seed);

}  // namespace hypermux
