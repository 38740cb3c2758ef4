#include "hypermux/sweep.hpp"

#include <algorithm>
#include <atomic>
#include <charconv>
#include <mutex>
#include <optional>
#include <ostream>
#include <thread>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {
namespace {

constexpr std::uint64_t kGraphStream = 0x67726170;
constexpr std::uint64_t kTrainStream = 0x74726169;

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

}  // namespace

std::string to_string(Variant v) {
  switch (v) {
    case Variant::Full: return "full";
    case Variant::Euclidean: return "euclidean";
    case Variant::WeightsAblation: return "weights-ablation";
    case Variant::LayersAblation: return "layers-ablation";
    case Variant::EuclideanFlat: return "euclidean-flat";
  }
  return "unknown";
}

Variant parse_variant(const std::string& name) {
  for (Variant v : {Variant::Full, Variant::Euclidean, Variant::WeightsAblation, Variant::LayersAblation, Variant::EuclideanFlat}) {
    if (to_string(v) == name) return v;
  }
  throw ConfigError("unknown model variant '" + name +
                    "' (expected full, euclidean, weights-ablation, layers-ablation or euclidean-flat)");
}

ModelConfig apply_variant(const ModelConfig& base, Variant v, std::size_t n_dims) {
  ModelConfig m = base;
  const int d = static_cast<int>(n_dims);
  switch (v) {
    case Variant::Full:
      break;
    case Variant::Euclidean:
      m.manifold = ManifoldKind::Euclidean;
      break;
    case Variant::WeightsAblation:
      m.freeze_alpha = true;
      break;
    case Variant::LayersAblation:
      m.n_layers = 1;
      m.dim_schedule = {d, 1};
      break;
    case Variant::EuclideanFlat:
      m.manifold = ManifoldKind::Euclidean;
      m.n_layers = 1;
      m.dim_schedule = {d, 1};
      break;
  }
  return m;
}

GenParams sweep_graph_params(const GenParams& spec, int seed_index) {
  GenParams p = spec;
  p.seed = derive_seed(derive_seed(spec.seed, kGraphStream), static_cast<std::uint64_t>(seed_index));
  return p;
}

std::uint64_t sweep_train_seed(const GenParams& spec, int seed_index) {
  return derive_seed(derive_seed(spec.seed, kTrainStream), static_cast<std::uint64_t>(seed_index));
}

std::vector<SweepRow> run_sweep(const SweepOptions& options, const std::function<void(const SweepRow&)>& progress) {
  if (options.specs.empty()) throw ValidationError("sweep: no graph specs");
  if (options.models.empty()) throw ValidationError("sweep: no models");
  if (options.n_seeds < 1) throw ValidationError("sweep: seed count must be >= 1");
  if (options.workers < 1) throw ValidationError("sweep: worker count must be >= 1");

  struct Job {
    std::size_t spec;
    int seed;
    Variant variant;
  };
  std::vector<Job> jobs;
  for (std::size_t s = 0; s < options.specs.size(); ++s) {
    for (int k = 0; k < options.n_seeds; ++k) {
      for (Variant v : options.models) jobs.push_back({s, k, v});
    }
  }
  std::vector<SweepRow> rows(jobs.size());

  // One graph per (spec, seed), shared by every model and generated on first use.
  const std::size_t n_graphs = options.specs.size() * static_cast<std::size_t>(options.n_seeds);
  std::vector<std::optional<GeneratedGraph>> graphs(n_graphs);
  std::vector<std::string> graph_errors(n_graphs);
  std::vector<std::once_flag> graph_once(n_graphs);

  std::mutex progress_mutex;
  auto run_job = [&](std::size_t j) {
    const Job& job = jobs[j];
    const GenParams& spec = options.specs[job.spec];
    SweepRow& row = rows[j];
    row.d = spec.n_dims;
    row.model = to_string(job.variant);
    row.seed = static_cast<std::uint64_t>(job.seed);
    row.geo.d = static_cast<long long>(spec.n_dims);
    row.geo.seed = row.seed;
    row.geo.model = row.model;
    const std::size_t g = job.spec * static_cast<std::size_t>(options.n_seeds) + static_cast<std::size_t>(job.seed);
    std::call_once(graph_once[g], [&] {
      try {
        graphs[g] = generate(sweep_graph_params(spec, job.seed));
      } catch (const std::exception& e) {
        graph_errors[g] = std::string("generation failed: ") + e.what();
      }
    });
    try {
      if (!graphs[g]) throw ValidationError(graph_errors[g]);
      const ModelConfig model = apply_variant(options.model, job.variant, spec.n_dims);
      TrainConfig train = options.train;
      train.seed = sweep_train_seed(spec, job.seed);
      const TrainResult result = hypermux::train(graphs[g]->graph, model, train);
      row.epochs = result.epochs_run;
      row.max_hyperboloid_violation = result.max_hyperboloid_violation;
      row.max_softmax_deviation = result.max_softmax_deviation;
      if (result.status == TrainStatus::Aborted) throw NumericalError(result.error);
      row.loss_final = result.history.empty() ? 0.0 : result.history.back().loss;
      const GeoReport geo = curvature_gap(result.z, model.manifold, train.twonn_trim, train.lid_threshold);
      row.geo.id = geo.id;
      row.geo.lid = geo.lid;
      row.geo.gap = geo.gap;
      row.geo.n_duplicates = geo.n_duplicates;
      row.geo.trim = geo.trim;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
    }
    if (progress) {
      std::lock_guard<std::mutex> lock(progress_mutex);
      progress(row);
    }
  };

  if (options.workers == 1) {
    for (std::size_t j = 0; j < jobs.size(); ++j) run_job(j);
  } else {
    std::atomic<std::size_t> next{0};
    std::vector<std::thread> pool;
    const auto n_threads = std::min<std::size_t>(static_cast<std::size_t>(options.workers), jobs.size());
    for (std::size_t t = 0; t < n_threads; ++t) {
      pool.emplace_back([&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) run_job(j);
      });
    }
    for (auto& t : pool) t.join();
  }
  return rows;
}

void write_sweep_csv(const std::vector<SweepRow>& rows, std::ostream& out) {
  out << "d,model,seed,id,lid,gap,loss_final\n";
  for (const auto& r : rows) {
    out << r.d << ',' << r.model << ',' << r.seed << ',';
    if (r.ok) out << format_double(r.geo.id) << ',' << r.geo.lid << ',' << format_double(r.geo.gap) << ',' << format_double(r.loss_final);
    else out << ",,,";
    out << '\n';
  }
}

double median(std::vector<double> values) {
  if (values.empty()) throw ValidationError("median of an empty set");
  std::sort(values.begin(), values.end());
  const std::size_t n = values.size();
  return n % 2 ? values[n / 2] : 0.5 * (values[n / 2 - 1] + values[n / 2]);
}

LinkRun run_link_prediction(const MultiplexGraph& graph, const ModelConfig& model, const TrainConfig& train,
                            const EvalOptions& eval, std::uint64_t seed) {
  LinkRun run;
  run.split = split_edges(graph, eval.train_ratio, eval.test_ratio, seed, eval.recompute_structural);
  run.train = hypermux::train(run.split.train, model, train);
  if (run.train.status == TrainStatus::Aborted) throw NumericalError("training aborted: " + run.train.error);
  run.metrics = link_prediction_eval(run.train.z, run.split, model.manifold, eval.fd_r, eval.fd_t);
  return run;
}

}  // namespace hypermux
