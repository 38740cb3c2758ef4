#include "hypermux/config.hpp"

#include <cstdio>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>

#include "hypermux/errors.hpp"

namespace hypermux {
namespace {

using json = nlohmann::json;

struct Field {
  const char* key;
  std::function<json(const RunConfig&)> get;
  std::function<void(RunConfig&, const json&)> set;
};

template <typename T>
T as(const json& v, const char* key) {
  try {
    return v.get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("config key '") + key + "' has the wrong type: " + v.dump());
  }
}

std::size_t as_count(const json& v, const char* key) {
  if (!v.is_number_integer() || v.get<long long>() < 0) throw ConfigError(std::string("config key '") + key + "' must be a nonnegative integer");
  return v.get<std::size_t>();
}

json range_json(const IntRange& r) { return json::array({r.min, r.max}); }
json range_json(const RealRange& r) { return json::array({r.min, r.max}); }

template <typename R, typename T>
R parse_range(const json& v, const char* key) {
  if (!v.is_array() || v.size() != 2) throw ConfigError(std::string("config key '") + key + "' must be a [min, max] pair");
  return R{as<T>(v[0], key), as<T>(v[1], key)};
}

template <typename T>
json optional_json(const std::optional<T>& v) {
  return v ? json(*v) : json(nullptr);
}

const std::vector<Field>& fields() {
  static const std::vector<Field> table = {
      // Generator
      {"gen.n_nodes", [](const RunConfig& c) { return json(c.gen.n_nodes); },
       [](RunConfig& c, const json& v) { c.gen.n_nodes = as_count(v, "gen.n_nodes"); }},
      {"gen.n_clusters", [](const RunConfig& c) { return json(c.gen.n_clusters); },
       [](RunConfig& c, const json& v) { c.gen.n_clusters = as_count(v, "gen.n_clusters"); }},
      {"gen.n_dims", [](const RunConfig& c) { return json(c.gen.n_dims); },
       [](RunConfig& c, const json& v) { c.gen.n_dims = as_count(v, "gen.n_dims"); }},
      {"gen.p_in", [](const RunConfig& c) { return optional_json(c.gen.p_in); },
       [](RunConfig& c, const json& v) { c.gen.p_in = v.is_null() ? std::nullopt : std::optional(as<double>(v, "gen.p_in")); }},
      {"gen.p_out", [](const RunConfig& c) { return optional_json(c.gen.p_out); },
       [](RunConfig& c, const json& v) { c.gen.p_out = v.is_null() ? std::nullopt : std::optional(as<double>(v, "gen.p_out")); }},
      {"gen.p_in_range", [](const RunConfig& c) { return range_json(c.gen.p_in_range); },
       [](RunConfig& c, const json& v) { c.gen.p_in_range = parse_range<RealRange, double>(v, "gen.p_in_range"); }},
      {"gen.p_out_range", [](const RunConfig& c) { return range_json(c.gen.p_out_range); },
       [](RunConfig& c, const json& v) { c.gen.p_out_range = parse_range<RealRange, double>(v, "gen.p_out_range"); }},
      {"gen.sf_range", [](const RunConfig& c) { return c.gen.sf_range ? range_json(*c.gen.sf_range) : json(nullptr); },
       [](RunConfig& c, const json& v) {
         c.gen.sf_range = v.is_null() ? std::nullopt : std::optional(parse_range<IntRange, int>(v, "gen.sf_range"));
       }},
      {"gen.cluster_size_range",
       [](const RunConfig& c) { return c.gen.cluster_size_range ? range_json(*c.gen.cluster_size_range) : json(nullptr); },
       [](RunConfig& c, const json& v) {
         c.gen.cluster_size_range =
             v.is_null() ? std::nullopt : std::optional(parse_range<IntRange, int>(v, "gen.cluster_size_range"));
       }},
      {"gen.group_overlap", [](const RunConfig& c) { return json(c.gen.group_overlap); },
       [](RunConfig& c, const json& v) { c.gen.group_overlap = as<double>(v, "gen.group_overlap"); }},
      {"gen.cluster_seed", [](const RunConfig& c) { return optional_json(c.gen.cluster_seed); },
       [](RunConfig& c, const json& v) {
         c.gen.cluster_seed = v.is_null() ? std::nullopt : std::optional(as<std::uint64_t>(v, "gen.cluster_seed"));
       }},
      // Model
      {"model.n_layers", [](const RunConfig& c) { return json(c.model.n_layers); },
       [](RunConfig& c, const json& v) { c.model.n_layers = as<int>(v, "model.n_layers"); }},
      {"model.embed_size", [](const RunConfig& c) { return json(c.model.embed_size); },
       [](RunConfig& c, const json& v) { c.model.embed_size = as<int>(v, "model.embed_size"); }},
      {"model.dim_schedule", [](const RunConfig& c) { return json(c.model.dim_schedule); },
       [](RunConfig& c, const json& v) {
         c.model.dim_schedule = v.is_null() ? std::vector<int>{} : as<std::vector<int>>(v, "model.dim_schedule");
       }},
      {"model.manifold", [](const RunConfig& c) { return json(to_string(c.model.manifold)); },
       [](RunConfig& c, const json& v) {
         try {
           c.model.manifold = parse_manifold(as<std::string>(v, "model.manifold"));
         } catch (const ConfigError&) {
           throw;
         } catch (const std::exception& e) {
           throw ConfigError(std::string("model.manifold: ") + e.what());
         }
       }},
      {"model.leaky_slope", [](const RunConfig& c) { return json(c.model.leaky_slope); },
       [](RunConfig& c, const json& v) { c.model.leaky_slope = as<double>(v, "model.leaky_slope"); }},
      {"model.freeze_alpha", [](const RunConfig& c) { return json(c.model.freeze_alpha); },
       [](RunConfig& c, const json& v) { c.model.freeze_alpha = as<bool>(v, "model.freeze_alpha"); }},
      {"model.dense_threshold", [](const RunConfig& c) { return json(c.model.dense_threshold); },
       [](RunConfig& c, const json& v) { c.model.dense_threshold = as<double>(v, "model.dense_threshold"); }},
      // Training
      {"train.learning_rate", [](const RunConfig& c) { return json(c.train.learning_rate); },
       [](RunConfig& c, const json& v) { c.train.learning_rate = as<double>(v, "train.learning_rate"); }},
      {"train.weight_decay", [](const RunConfig& c) { return json(c.train.weight_decay); },
       [](RunConfig& c, const json& v) { c.train.weight_decay = as<double>(v, "train.weight_decay"); }},
      {"train.max_epochs", [](const RunConfig& c) { return json(c.train.max_epochs); },
       [](RunConfig& c, const json& v) { c.train.max_epochs = as<int>(v, "train.max_epochs"); }},
      {"train.patience", [](const RunConfig& c) { return json(c.train.patience); },
       [](RunConfig& c, const json& v) { c.train.patience = as<int>(v, "train.patience"); }},
      {"train.min_delta", [](const RunConfig& c) { return json(c.train.min_delta); },
       [](RunConfig& c, const json& v) { c.train.min_delta = as<double>(v, "train.min_delta"); }},
      {"train.telemetry", [](const RunConfig& c) { return json(c.train.telemetry); },
       [](RunConfig& c, const json& v) { c.train.telemetry = as<bool>(v, "train.telemetry"); }},
      {"train.twonn_trim", [](const RunConfig& c) { return json(c.train.twonn_trim); },
       [](RunConfig& c, const json& v) { c.train.twonn_trim = as<double>(v, "train.twonn_trim"); }},
      {"train.lid_threshold", [](const RunConfig& c) { return json(c.train.lid_threshold); },
       [](RunConfig& c, const json& v) { c.train.lid_threshold = as<double>(v, "train.lid_threshold"); }},
      // Evaluation
      {"eval.task", [](const RunConfig& c) { return json(c.eval.task); },
       [](RunConfig& c, const json& v) { c.eval.task = as<std::string>(v, "eval.task"); }},
      {"eval.train_ratio", [](const RunConfig& c) { return json(c.eval.train_ratio); },
       [](RunConfig& c, const json& v) { c.eval.train_ratio = as<double>(v, "eval.train_ratio"); }},
      {"eval.test_ratio", [](const RunConfig& c) { return json(c.eval.test_ratio); },
       [](RunConfig& c, const json& v) { c.eval.test_ratio = as<double>(v, "eval.test_ratio"); }},
      {"eval.fd_r", [](const RunConfig& c) { return json(c.eval.fd_r); },
       [](RunConfig& c, const json& v) { c.eval.fd_r = as<double>(v, "eval.fd_r"); }},
      {"eval.fd_t", [](const RunConfig& c) { return json(c.eval.fd_t); },
       [](RunConfig& c, const json& v) { c.eval.fd_t = as<double>(v, "eval.fd_t"); }},
      {"eval.repetitions", [](const RunConfig& c) { return json(c.eval.repetitions); },
       [](RunConfig& c, const json& v) { c.eval.repetitions = as<int>(v, "eval.repetitions"); }},
      {"eval.class_train_fraction", [](const RunConfig& c) { return json(c.eval.class_train_fraction); },
       [](RunConfig& c, const json& v) { c.eval.class_train_fraction = as<double>(v, "eval.class_train_fraction"); }},
      {"eval.recompute_structural", [](const RunConfig& c) { return json(c.eval.recompute_structural); },
       [](RunConfig& c, const json& v) { c.eval.recompute_structural = as<bool>(v, "eval.recompute_structural"); }},
      // Sweep
      {"sweep.d", [](const RunConfig& c) { return json(c.sweep.d); },
       [](RunConfig& c, const json& v) { c.sweep.d = as<std::vector<std::size_t>>(v, "sweep.d"); }},
      {"sweep.seeds", [](const RunConfig& c) { return json(c.sweep.seeds); },
       [](RunConfig& c, const json& v) { c.sweep.seeds = as<int>(v, "sweep.seeds"); }},
      {"sweep.models", [](const RunConfig& c) { return json(c.sweep.models); },
       [](RunConfig& c, const json& v) { c.sweep.models = as<std::vector<std::string>>(v, "sweep.models"); }},
      // Run
      {"run.seed", [](const RunConfig& c) { return json(c.seed); },
       [](RunConfig& c, const json& v) { c.seed = as<std::uint64_t>(v, "run.seed"); }},
      {"run.workers", [](const RunConfig& c) { return json(c.workers); },
       [](RunConfig& c, const json& v) { c.workers = as<int>(v, "run.workers"); }},
      {"run.out", [](const RunConfig& c) { return json(c.out); },
       [](RunConfig& c, const json& v) { c.out = as<std::string>(v, "run.out"); }},
      {"run.graph", [](const RunConfig& c) { return json(c.graph); },
       [](RunConfig& c, const json& v) { c.graph = as<std::string>(v, "run.graph"); }},
      {"run.checkpoint", [](const RunConfig& c) { return json(c.checkpoint); },
       [](RunConfig& c, const json& v) { c.checkpoint = as<std::string>(v, "run.checkpoint"); }},
  };
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& f : fields()) {
    if (key == f.key) return &f;
  }
  return nullptr;
}

}  // namespace

void RunConfig::propagate_seed() {
  gen.seed = seed;
  train.seed = seed;
}

nlohmann::ordered_json to_flat_json(const RunConfig& config) {
  nlohmann::ordered_json out;
  for (const auto& f : fields()) out[f.key] = f.get(config);
  return out;
}

void apply_flat_json(RunConfig& config, const nlohmann::json& flat) {
  if (!flat.is_object()) throw ConfigError("config must be a JSON object with dotted keys");
  std::vector<std::string> unknown;
  for (const auto& [key, value] : flat.items()) {
    if (!find_field(key)) unknown.push_back(key);
  }
  if (!unknown.empty()) {
    std::string list;
    for (const auto& k : unknown) list += (list.empty() ? "" : ", ") + k;
    throw ConfigError("unknown config keys: " + list);
  }
  for (const auto& [key, value] : flat.items()) find_field(key)->set(config, value);
}

RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides) {
  RunConfig config;
  bool seed_given = false;
  if (file) {
    std::ifstream in(*file);
    if (!in) throw ConfigError("cannot open config file " + file->string());
    nlohmann::json parsed;
    try {
      std::stringstream buf;
      buf << in.rdbuf();
      const std::string text = buf.str();
      parsed = text.find_first_not_of(" \t\r\n") == std::string::npos ? nlohmann::json::object() : nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
      throw ConfigError("cannot parse " + file->string() + ": " + e.what());
    }
    apply_flat_json(config, parsed);
    seed_given = parsed.contains("run.seed");
  }
  if (!overrides.is_null()) {
    apply_flat_json(config, overrides);
    seed_given = seed_given || overrides.contains("run.seed");
  }
  if (!seed_given) {
    if (const char* env = std::getenv("HYPERMUX_SEED")) {
      char* end = nullptr;
      const unsigned long long v = std::strtoull(env, &end, 10);
      if (end == env || *end != '\0') throw ConfigError(std::string("HYPERMUX_SEED is not an unsigned integer: ") + env);
      config.seed = v;
    }
  }
  config.propagate_seed();
  return config;
}

std::string config_hash(const RunConfig& config) {
  const std::string text = to_flat_json(config).dump();
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

void write_resolved_config(const RunConfig& config, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  std::ofstream out(dir / "config.json");
  if (!out) throw ValidationError("cannot write " + (dir / "config.json").string());
  out << to_flat_json(config).dump(2) << '\n';
}

}  // namespace hypermux
