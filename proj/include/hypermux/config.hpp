#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "hypermux/eval.hpp"
#include "hypermux/hgnn.hpp"
#include "hypermux/synthetic.hpp"
#include "hypermux/training.hpp"

namespace hypermux {

struct SweepConfig {
  std::vector<std::size_t> d{5, 10, 15, 20, 25, 30, 35, 40};
  int seeds = 3;
  std::vector<std::string> models{"full", "euclidean-flat"};
};

// Everything one run needs. Serialized as flat JSON with dotted keys
// (gen.n_nodes, model.manifold, train.learning_rate, ...).
struct RunConfig {
  GenParams gen;
  ModelConfig model;
  TrainConfig train;
  EvalOptions eval;
  SweepConfig sweep;
  std::uint64_t seed = 0;  // run.seed; seeds generation, training and evaluation
  int workers = 1;
  std::string out;
  std::string graph;
  std::string checkpoint;

  // Copies run.seed into the generator and trainer.
  void propagate_seed();
};

nlohmann::ordered_json to_flat_json(const RunConfig& config);
// Applies the given keys; throws ConfigError listing every unknown key.
void apply_flat_json(RunConfig& config, const nlohmann::json& flat);

// Defaults, then `file` (when given), then `overrides`. run.seed falls back to
// HYPERMUX_SEED when neither source sets it.
RunConfig resolve_config(const std::optional<std::filesystem::path>& file, const nlohmann::json& overrides);

// FNV-1a 64 of the resolved flat JSON, as 16 hex digits.
std::string config_hash(const RunConfig& config);

// Writes <dir>/config.json.
void write_resolved_config(const RunConfig& config, const std::filesystem::path& dir);

}  // namespace hypermux
