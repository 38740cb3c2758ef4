#include "hypermux/cli.hpp"

#include <CLI11.hpp>

#include <charconv>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <sstream>

#include "hypermux/checkpoint.hpp"
#include "hypermux/config.hpp"
#include "hypermux/errors.hpp"
#include "hypermux/eval.hpp"
#include "hypermux/geo.hpp"
#include "hypermux/graph.hpp"
#include "hypermux/rng.hpp"
#include "hypermux/sweep.hpp"
#include "hypermux/synthetic.hpp"
#include "hypermux/training.hpp"

namespace hypermux::cli {
namespace {

namespace fs = std::filesystem;
using json = nlohmann::json;

std::string format_double(double x) {
  char buf[64];
  auto res = std::to_chars(buf, buf + sizeof(buf), x);
  return std::string(buf, res.ptr);
}

std::ofstream open_out(const fs::path& path) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  if (!out) throw ValidationError("cannot write " + path.string());
  return out;
}

void write_matrix_csv(const Matrix& m, const fs::path& path) {
  auto out = open_out(path);
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) out << (c ? "," : "") << format_double(m(r, c));
    out << '\n';
  }
}

// Flags shared by every subcommand, plus the per-command flags that map onto
// dotted config keys.
struct Common {
  std::optional<std::string> config;
  std::vector<std::string> sets;
  std::map<std::string, json> flags;
  // Deferred setters: CLI11 fills the optionals, collect() moves them into `flags`.
  std::vector<std::function<void()>> collectors;

  template <typename T>
  void bind(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<std::optional<T>>();
    app->add_option(flag, *value, help);
    collectors.push_back([this, value, key] {
      if (*value) flags[key] = json(**value);
    });
  }
  void bind_flag(CLI::App* app, const std::string& flag, const std::string& key, const std::string& help) {
    auto value = std::make_shared<bool>(false);
    app->add_flag(flag, *value, help);
    collectors.push_back([this, value, key] {
      if (*value) flags[key] = true;
    });
  }

  json overrides() {
    for (auto& c : collectors) c();
    json o = json::object();
    for (const auto& s : sets) {
      const auto eq = s.find('=');
      if (eq == std::string::npos || eq == 0) throw ConfigError("--set expects key=value, got '" + s + "'");
      const std::string key = s.substr(0, eq), text = s.substr(eq + 1);
      json v = json::parse(text, nullptr, false);
      o[key] = v.is_discarded() ? json(text) : v;
    }
    for (const auto& [k, v] : flags) o[k] = v;
    return o;
  }

  RunConfig resolve() {
    const json o = overrides();
    return resolve_config(config ? std::optional<fs::path>(*config) : std::nullopt, o);
  }
};

void add_common(CLI::App* app, Common& c) {
  app->add_option("--config", c.config, "JSON config file with dotted keys");
  app->add_option("--set", c.sets, "Override any config key: key=value (value parsed as JSON when possible)");
  c.bind<std::uint64_t>(app, "--seed", "run.seed", "Master seed (default: HYPERMUX_SEED or 0)");
}

void add_model_flags(CLI::App* app, Common& c) {
  c.bind<std::string>(app, "--manifold", "model.manifold", "euclidean, poincare or lorentz");
  c.bind<int>(app, "--layers", "model.n_layers", "Number of hierarchy layers");
  c.bind<int>(app, "--embed", "model.embed_size", "Embedding size M");
  c.bind_flag(app, "--freeze-alpha", "model.freeze_alpha", "Keep aggregation weights uniform and untrainable");
}

void add_train_flags(CLI::App* app, Common& c) {
  c.bind<double>(app, "--lr", "train.learning_rate", "Adam learning rate");
  c.bind<double>(app, "--wd", "train.weight_decay", "Decoupled weight decay");
  c.bind<int>(app, "--epochs", "train.max_epochs", "Maximum epochs");
  c.bind<int>(app, "--patience", "train.patience", "Early-stopping patience in epochs");
  c.bind_flag(app, "--telemetry", "train.telemetry", "Record ID and LID of the embeddings every epoch");
}

void add_gen_flags(CLI::App* app, Common& c) {
  c.bind<std::size_t>(app, "--n", "gen.n_nodes", "Number of nodes");
  c.bind<std::size_t>(app, "--k", "gen.n_clusters", "Number of clusters");
  c.bind<std::size_t>(app, "--d", "gen.n_dims", "Number of dimensions");
  c.bind<double>(app, "--p-in", "gen.p_in", "Within-cluster edge probability");
  c.bind<double>(app, "--p-out", "gen.p_out", "Between-cluster edge probability");
}

MultiplexGraph load_graph(const RunConfig& cfg) {
  if (cfg.graph.empty()) throw ValidationError("no graph given (--graph or run.graph)");
  return load_multiplex(cfg.graph);
}

void require_out(const RunConfig& cfg) {
  if (cfg.out.empty()) throw ValidationError("no output location given (--out or run.out)");
}

json summary_json(const TrainResult& r) {
  json j;
  j["status"] = to_string(r.status);
  j["epochs"] = r.epochs_run;
  j["loss_final"] = r.history.empty() ? json(nullptr) : json(r.history.back().loss);
  j["max_hyperboloid_violation"] = r.max_hyperboloid_violation;
  j["max_softmax_deviation"] = r.max_softmax_deviation;
  if (!r.error.empty()) j["error"] = r.error;
  return j;
}

void write_train_outputs(const TrainResult& r, const fs::path& dir) {
  fs::create_directories(dir);
  save_checkpoint(make_checkpoint(r.params, r.discriminator.q), dir / "checkpoint");
  {
    auto out = open_out(dir / "history.csv");
    write_history_csv(r.history, out);
  }
  write_matrix_csv(r.z, dir / "embeddings.csv");
  auto out = open_out(dir / "summary.json");
  out << summary_json(r).dump(2) << '\n';
}

int cmd_generate(Common& c, std::ostream& out) {
  RunConfig cfg = c.resolve();
  require_out(cfg);
  const GeneratedGraph g = generate(cfg.gen);
  save_generated(g, cfg.out);
  write_resolved_config(cfg, cfg.out);
  out << "wrote " << cfg.out << ": " << g.graph.n_nodes << " nodes, " << g.graph.dims.size() << " dimensions, p_in "
      << format_double(g.p_in) << ", p_out " << format_double(g.p_out) << '\n';
  return kOk;
}

int cmd_train(Common& c, const std::optional<std::string>& variant, std::ostream& out, std::ostream& err) {
  RunConfig cfg = c.resolve();
  require_out(cfg);
  const MultiplexGraph graph = load_graph(cfg);
  if (variant) cfg.model = apply_variant(cfg.model, parse_variant(*variant), graph.dims.size());
  write_resolved_config(cfg, cfg.out);
  const TrainResult r = train(graph, cfg.model, cfg.train);
  write_train_outputs(r, cfg.out);
  if (r.status == TrainStatus::Aborted) {
    err << "error: training aborted: " << r.error << " (last finite checkpoint written)\n";
    return kRuntimeError;
  }
  out << "trained " << r.epochs_run << " epochs (" << to_string(r.status) << "), final loss "
      << format_double(r.history.back().loss) << "; wrote " << cfg.out << '\n';
  return kOk;
}

int cmd_diagnose(Common& c, const std::string& checkpoint, std::ostream& out) {
  // Model settings come from the run's resolved config unless one is given.
  const fs::path ckpt(checkpoint);
  if (!c.config) {
    const fs::path beside = ckpt.parent_path() / "config.json";
    if (fs::exists(beside)) c.config = beside.string();
  }
  RunConfig cfg = c.resolve();
  const MultiplexGraph graph = load_graph(cfg);
  const RestoredParams params = restore_params(load_checkpoint(ckpt));
  const PreparedGraph prepared = PreparedGraph::from(graph, cfg.model.dense_threshold);
  const Matrix z = embed(prepared, graph.features, params.model, cfg.model);
  GeoReport geo = curvature_gap(z, cfg.model.manifold, cfg.train.twonn_trim, cfg.train.lid_threshold);
  nlohmann::ordered_json j;
  j["id"] = geo.id;
  j["lid"] = geo.lid;
  j["gap"] = geo.gap;
  j["n_duplicates"] = geo.n_duplicates;
  j["trim"] = geo.trim;
  j["manifold"] = to_string(cfg.model.manifold);
  j["checkpoint"] = ckpt.string();
  const std::string text = j.dump(2) + "\n";
  out << text;
  if (!cfg.out.empty()) {
    write_resolved_config(cfg, cfg.out);
    auto f = open_out(fs::path(cfg.out) / "diagnose.json");
    f << text;
  }
  return kOk;
}

int cmd_eval(Common& c, std::ostream& out) {
  RunConfig cfg = c.resolve();
  require_out(cfg);
  const MultiplexGraph graph = load_graph(cfg);
  write_resolved_config(cfg, cfg.out);
  Metrics m;
  m.seed = cfg.seed;
  m.config_hash = config_hash(cfg);
  if (cfg.eval.task == "link") {
    const LinkRun run = run_link_prediction(graph, cfg.model, cfg.train, cfg.eval, cfg.seed);
    m.task = "link_prediction";
    m.auc = run.metrics.auc;
    m.ap = run.metrics.ap;
    auto h = open_out(fs::path(cfg.out) / "history.csv");
    write_history_csv(run.train.history, h);
  } else if (cfg.eval.task == "classify") {
    if (!graph.has_labels()) throw ValidationError("classification needs node labels (labels.csv)");
    const TrainResult r = train(graph, cfg.model, cfg.train);
    if (r.status == TrainStatus::Aborted) throw NumericalError("training aborted: " + r.error);
    const ClassificationResult cr = classification_eval(r.z, graph.labels, cfg.model.manifold, cfg.seed, cfg.eval.repetitions,
                                                        cfg.eval.class_train_fraction);
    m.task = "classification";
    m.f1_macro = cr.f1_macro;
    m.f1_micro = cr.f1_micro;
    auto h = open_out(fs::path(cfg.out) / "history.csv");
    write_history_csv(r.history, h);
  } else {
    throw ConfigError("eval.task must be 'link' or 'classify', got '" + cfg.eval.task + "'");
  }
  {
    auto f = open_out(fs::path(cfg.out) / "metrics.json");
    write_metrics_json(m, f);
  }
  {
    auto f = open_out(fs::path(cfg.out) / "metrics.csv");
    write_metrics_csv_header(f);
    write_metrics_csv_row(m, f);
  }
  write_metrics_json(m, out);
  return kOk;
}

std::vector<Variant> parse_models(const std::vector<std::string>& names) {
  std::vector<Variant> v;
  for (const auto& n : names) v.push_back(parse_variant(n));
  if (v.empty()) throw ConfigError("no models given");
  return v;
}

void print_medians(const std::vector<SweepRow>& rows, std::ostream& out) {
  std::map<std::pair<std::size_t, std::string>, std::vector<double>> groups;
  for (const auto& r : rows) {
    if (r.ok) groups[{r.d, r.model}].push_back(r.geo.gap);
  }
  out << "d,model,runs,median_gap\n";
  for (const auto& [key, gaps] : groups) {
    out << key.first << ',' << key.second << ',' << gaps.size() << ',' << format_double(median(gaps)) << '\n';
  }
}

int cmd_sweep(Common& c, std::ostream& out, std::ostream& err) {
  RunConfig cfg = c.resolve();
  require_out(cfg);
  SweepOptions opts;
  opts.specs = sweep_specs(cfg.gen, cfg.sweep.d);
  opts.models = parse_models(cfg.sweep.models);
  opts.n_seeds = cfg.sweep.seeds;
  opts.model = cfg.model;
  opts.train = cfg.train;
  opts.workers = cfg.workers;
  const fs::path csv(cfg.out);
  const fs::path dir = csv.has_parent_path() ? csv.parent_path() : fs::path(".");
  fs::create_directories(dir);
  {
    auto f = open_out(dir / (csv.stem().string() + ".config.json"));
    f << to_flat_json(cfg).dump(2) << '\n';
  }
  const auto rows = run_sweep(opts, [&](const SweepRow& r) {
    err << "d=" << r.d << " model=" << r.model << " seed=" << r.seed;
    if (r.ok) err << " gap=" << format_double(r.geo.gap) << " epochs=" << r.epochs << '\n';
    else err << " failed: " << r.error << '\n';
  });
  {
    auto f = open_out(csv);
    write_sweep_csv(rows, f);
  }
  print_medians(rows, out);
  std::size_t failed = 0;
  for (const auto& r : rows) failed += r.ok ? 0 : 1;
  if (failed == rows.size()) {
    err << "error: every sweep run failed\n";
    return kRuntimeError;
  }
  return kOk;
}

int cmd_ablate(Common& c, std::ostream& out, std::ostream& err) {
  RunConfig cfg = c.resolve();
  require_out(cfg);
  const MultiplexGraph graph = cfg.graph.empty() ? generate(cfg.gen).graph : load_multiplex(cfg.graph);
  write_resolved_config(cfg, cfg.out);
  const std::vector<Variant> variants{Variant::Full, Variant::Euclidean, Variant::WeightsAblation, Variant::LayersAblation};
  std::ostringstream table;
  table << "model,seed,auc,ap,id,lid,gap,loss_final\n";
  bool any_ok = false;
  for (int s = 0; s < std::max(1, cfg.sweep.seeds); ++s) {
    const std::uint64_t seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(s));
    for (Variant v : variants) {
      const ModelConfig model = apply_variant(cfg.model, v, graph.dims.size());
      TrainConfig tc = cfg.train;
      tc.seed = seed;
      table << to_string(v) << ',' << s << ',';
      try {
        const LinkRun run = run_link_prediction(graph, model, tc, cfg.eval, seed);
        const GeoReport geo = curvature_gap(run.train.z, model.manifold, tc.twonn_trim, tc.lid_threshold);
        table << format_double(run.metrics.auc) << ',' << format_double(run.metrics.ap) << ',' << format_double(geo.id) << ','
              << geo.lid << ',' << format_double(geo.gap) << ',' << format_double(run.train.history.back().loss) << '\n';
        any_ok = true;
      } catch (const std::exception& e) {
        table << ",,,,,\n";
        err << "warning: " << to_string(v) << " seed " << s << " failed: " << e.what() << '\n';
      }
    }
  }
  auto f = open_out(fs::path(cfg.out) / "ablation.csv");
  f << table.str();
  out << table.str();
  return any_ok ? kOk : kRuntimeError;
}

}  // namespace

std::vector<std::size_t> parse_d_values(const std::string& text) {
  auto parse_one = [&](const std::string& s) {
    std::size_t v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size() || v == 0) throw ConfigError("bad D value '" + s + "' in '" + text + "'");
    return v;
  };
  std::vector<std::size_t> out;
  if (text.find(':') != std::string::npos) {
    std::vector<std::string> parts;
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ':');) parts.push_back(p);
    if (parts.size() != 3) throw ConfigError("D range must be start:stop:step, got '" + text + "'");
    const std::size_t a = parse_one(parts[0]), b = parse_one(parts[1]), step = parse_one(parts[2]);
    for (std::size_t d = a; d <= b; d += step) out.push_back(d);
  } else {
    std::stringstream ss(text);
    for (std::string p; std::getline(ss, p, ',');) out.push_back(parse_one(p));
  }
  if (out.empty()) throw ConfigError("empty D list '" + text + "'");
  return out;
}

int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Hierarchical hyperbolic multiplex-graph embedding", "hypermux"};
  app.require_subcommand(1, 1);

  Common c_gen, c_train, c_diag, c_eval, c_sweep, c_ablate;

  auto* gen = app.add_subcommand("generate", "Write a synthetic multiplex graph directory");
  add_common(gen, c_gen);
  add_gen_flags(gen, c_gen);
  c_gen.bind<std::string>(gen, "--out", "run.out", "Output graph directory");

  auto* tr = app.add_subcommand("train", "Train embeddings; writes checkpoint and history.csv");
  add_common(tr, c_train);
  add_model_flags(tr, c_train);
  add_train_flags(tr, c_train);
  std::optional<std::string> variant;
  tr->add_option("--variant", variant, "Model variant: full, euclidean, weights-ablation, layers-ablation, euclidean-flat");
  c_train.bind<std::string>(tr, "--graph", "run.graph", "Graph directory");
  c_train.bind<std::string>(tr, "--out", "run.out", "Output run directory");

  auto* diag = app.add_subcommand("diagnose", "ID, LID and curvature gap of a checkpoint's embeddings");
  add_common(diag, c_diag);
  std::string checkpoint;
  diag->add_option("--checkpoint", checkpoint, "Checkpoint file")->required();
  c_diag.bind<std::string>(diag, "--graph", "run.graph", "Graph directory (default: from the run's config.json)");
  c_diag.bind<std::string>(diag, "--out", "run.out", "Optional output directory");

  auto* ev = app.add_subcommand("eval", "Link prediction or node classification metrics");
  add_common(ev, c_eval);
  add_model_flags(ev, c_eval);
  add_train_flags(ev, c_eval);
  c_eval.bind<std::string>(ev, "--task", "eval.task", "link or classify");
  c_eval.bind<std::string>(ev, "--graph", "run.graph", "Graph directory");
  c_eval.bind<std::string>(ev, "--out", "run.out", "Output directory");

  auto* sw = app.add_subcommand("sweep", "Curvature-gap sweep over the number of dimensions");
  add_common(sw, c_sweep);
  add_model_flags(sw, c_sweep);
  add_train_flags(sw, c_sweep);
  std::optional<std::string> d_text;
  std::optional<std::string> models_text;
  sw->add_option("--d", d_text, "D values: start:stop:step or a comma list");
  sw->add_option("--models", models_text, "Comma-separated model variants");
  c_sweep.bind<int>(sw, "--seeds", "sweep.seeds", "Seeds per (D, model)");
  c_sweep.bind<std::size_t>(sw, "--n", "gen.n_nodes", "Number of nodes");
  c_sweep.bind<std::size_t>(sw, "--k", "gen.n_clusters", "Number of clusters");
  c_sweep.bind<int>(sw, "--workers", "run.workers", "Concurrent runs");
  c_sweep.bind<std::string>(sw, "--out", "run.out", "Output CSV path");

  auto* ab = app.add_subcommand("ablate", "Compare full, euclidean, weights-ablation and layers-ablation");
  add_common(ab, c_ablate);
  add_model_flags(ab, c_ablate);
  add_train_flags(ab, c_ablate);
  add_gen_flags(ab, c_ablate);
  c_ablate.bind<int>(ab, "--seeds", "sweep.seeds", "Repetitions per variant");
  c_ablate.bind<std::string>(ab, "--graph", "run.graph", "Graph directory (default: generate one)");
  c_ablate.bind<std::string>(ab, "--out", "run.out", "Output directory");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kOk;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return kOk;
  } catch (const CLI::ParseError& e) {
    const CLI::App* sub = app.get_subcommands().empty() ? &app : app.get_subcommands().front();
    err << "error: " << e.what() << "\n\n" << sub->help();
    return kValidationError;
  }

  try {
    if (*gen) return cmd_generate(c_gen, out);
    if (*tr) return cmd_train(c_train, variant, out, err);
    if (*diag) return cmd_diagnose(c_diag, checkpoint, out);
    if (*ev) return cmd_eval(c_eval, out);
    if (*sw) {
      if (d_text) c_sweep.flags["sweep.d"] = parse_d_values(*d_text);
      if (models_text) {
        std::vector<std::string> names;
        std::stringstream ss(*models_text);
        for (std::string p; std::getline(ss, p, ',');) names.push_back(p);
        c_sweep.flags["sweep.models"] = names;
      }
      return cmd_sweep(c_sweep, out, err);
    }
    if (*ab) return cmd_ablate(c_ablate, out, err);
  } catch (const ValidationError& e) {
    err << "error: " << e.what() << '\n';
    return kValidationError;
  } catch (const std::exception& e) {
    err << "error: " << e.what() << '\n';
    return kRuntimeError;
  }
  err << app.help();
  return kValidationError;
}

int main(int argc, char** argv) {
  std::vector<std::string> args;
  for (int i = 1; i < argc; ++i) args.emplace_back(argv[i]);
  return dispatch(args, std::cout, std::cerr);
}

}  // namespace hypermux::cli
