#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <vector>

#include <json.hpp>

#include "hypermux/graph.hpp"

namespace hypermux {

struct IntRange {
  int min = 0;
  int max = 0;
  friend bool operator==(const IntRange&, const IntRange&) = default;
};

struct RealRange {
  double min = 0.0;
  double max = 0.0;
  friend bool operator==(const RealRange&, const RealRange&) = default;
};

// Parameters of the multiplex block-model generator. Unset optionals resolve to
// defaults that depend on the other fields (see the resolved_* accessors).
struct GenParams {
  std::size_t n_nodes = 2000;
  std::size_t n_clusters = 5;
  std::size_t n_dims = 10;
  std::optional<double> p_in;   // drawn once per graph from p_in_range when unset
  std::optional<double> p_out;  // drawn once per graph from p_out_range when unset
  RealRange p_in_range{0.1, 0.2};
  RealRange p_out_range{0.01, 0.02};
  std::optional<IntRange> sf_range;            // default [1, min(10, D)]
  std::optional<IntRange> cluster_size_range;  // default [floor(N/2K), ceil(3N/2K)]
  double group_overlap = 0.25;
  std::uint64_t seed = 0;
  // When set, cluster assignment uses this seed instead of `seed`, so a sweep
  // can keep one assignment across D values.
  std::optional<std::uint64_t> cluster_seed;

  IntRange resolved_sf_range() const;
  IntRange resolved_cluster_range() const;

  // Throws ConfigError on infeasible or inconsistent settings.
  void validate() const;

  friend bool operator==(const GenParams&, const GenParams&) = default;
};

// One within-cluster block: the union of a cluster's groups that landed in
// the same dimension.
struct ClusterBlock {
  int cluster = 0;
  std::size_t dim = 0;
  std::vector<std::size_t> nodes;  // sorted
};

struct GeneratedGraph {
  MultiplexGraph graph;
  std::vector<int> clusters;
  double p_in = 0.0;
  double p_out = 0.0;
  std::vector<int> spread_factors;
  std::vector<std::size_t> cluster_sizes;
  std::vector<ClusterBlock> blocks;
  GenParams params;
};

// Cluster id per node; sizes drawn uniformly in the size range then rescaled
// to sum to N by largest remainder, staying inside the range.
std::vector<int> assign_clusters(const GenParams& params);

GeneratedGraph generate(const GenParams& params);

// One spec per D value; seeds derived from the base seed and D.
std::vector<GenParams> sweep_specs(const GenParams& base, const std::vector<std::size_t>& d_values);

// Every resolved generator setting, including the drawn p_in, p_out and SF_k.
nlohmann::json gen_report_json(const GeneratedGraph& generated);

// Graph directory plus gen_params.json.
void save_generated(const GeneratedGraph& generated, const std::filesystem::path& dir);

}  // namespace hypermux
