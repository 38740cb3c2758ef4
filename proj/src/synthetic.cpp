#include "hypermux/synthetic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <numeric>
#include <string>

#include "hypermux/errors.hpp"
#include "hypermux/rng.hpp"

namespace hypermux {
namespace {

enum Stream : std::uint64_t { kAssign = 1, kProbabilities = 2, kBetween = 3, kWithin = 4 };

// Real-valued sizes summing to n with each entry in [lo, hi]: scale the free
// entries, pin the ones that leave the range, repeat.
std::vector<double> fit_sizes(std::vector<double> raw, double n, double lo, double hi) {
  const std::size_t k = raw.size();
  std::vector<double> out(k, 0.0);
  std::vector<bool> pinned(k, false);
  for (std::size_t iter = 0; iter <= k; ++iter) {
    double pinned_total = 0.0, free_raw = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
      if (pinned[i]) {
        pinned_total += out[i];
      } else {
        free_raw += raw[i];
      }
    }
    const double scale = free_raw > 0.0 ? (n - pinned_total) / free_raw : 0.0;
    bool changed = false;
    for (std::size_t i = 0; i < k; ++i) {
      if (pinned[i]) continue;
      out[i] = raw[i] * scale;
      if (out[i] > hi) {
        out[i] = hi;
        pinned[i] = true;
        changed = true;
      } else if (out[i] < lo) {
        out[i] = lo;
        pinned[i] = true;
        changed = true;
      }
    }
    if (!changed) break;
  }
  return out;
}

std::vector<std::size_t> largest_remainder(const std::vector<double>& sizes, std::size_t total) {
  std::vector<std::size_t> out(sizes.size());
  std::size_t assigned = 0;
  for (std::size_t i = 0; i < sizes.size(); ++i) {
    out[i] = static_cast<std::size_t>(std::floor(sizes[i] + 1e-9));
    assigned += out[i];
  }
  std::vector<std::size_t> order(sizes.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return sizes[a] - std::floor(sizes[a]) > sizes[b] - std::floor(sizes[b]);
  });
  for (std::size_t r = 0; assigned < total; r = (r + 1) % order.size()) {
    ++out[order[r]];
    ++assigned;
  }
  return out;
}

std::vector<std::size_t> draw_cluster_sizes(const GenParams& params, Rng& rng) {
  const IntRange range = params.resolved_cluster_range();
  std::vector<double> raw(params.n_clusters);
  for (auto& r : raw) r = static_cast<double>(uniform_int(rng, range.min, range.max));
  auto fitted = fit_sizes(raw, static_cast<double>(params.n_nodes), range.min, range.max);
  return largest_remainder(fitted, params.n_nodes);
}

void sample_pair(std::vector<Edge>& edges, std::size_t i, std::size_t j, double p, Rng& rng) {
  if (uniform01(rng) < p) edges.emplace_back(i, j);
}

}  // namespace

IntRange GenParams::resolved_sf_range() const {
  if (sf_range) return *sf_range;
  return {1, static_cast<int>(std::min<std::size_t>(10, std::max<std::size_t>(n_dims, 1)))};
}

IntRange GenParams::resolved_cluster_range() const {
  if (cluster_size_range) return *cluster_size_range;
  if (n_clusters == 0) return {0, 0};
  const double mean = static_cast<double>(n_nodes) / static_cast<double>(n_clusters);
  return {static_cast<int>(std::floor(0.5 * mean)), static_cast<int>(std::ceil(1.5 * mean))};
}

void GenParams::validate() const {
  if (n_nodes == 0) throw ConfigError("n_nodes must be positive");
  if (n_clusters == 0) throw ConfigError("n_clusters must be positive");
  if (n_dims == 0) throw ConfigError("n_dims must be positive");
  auto check_prob = [](double p, const char* name) {
    if (!(p >= 0.0 && p <= 1.0)) throw ConfigError(std::string(name) + " must lie in [0, 1]");
  };
  if (p_in) check_prob(*p_in, "p_in");
  if (p_out) check_prob(*p_out, "p_out");
  check_prob(p_in_range.min, "p_in_range.min");
  check_prob(p_in_range.max, "p_in_range.max");
  check_prob(p_out_range.min, "p_out_range.min");
  check_prob(p_out_range.max, "p_out_range.max");
  if (p_in_range.min > p_in_range.max || p_out_range.min > p_out_range.max) {
    throw ConfigError("probability range has min > max");
  }
  const double in_low = p_in ? *p_in : p_in_range.min;
  const double out_high = p_out ? *p_out : p_out_range.max;
  if (!(in_low > out_high)) throw ConfigError("p_in must exceed p_out");
  const IntRange sf = resolved_sf_range();
  if (sf.min < 1 || sf.min > sf.max || static_cast<std::size_t>(sf.max) > n_dims) {
    throw ConfigError("spread factor range [" + std::to_string(sf.min) + ", " + std::to_string(sf.max) +
                      "] must satisfy 1 <= min <= max <= D = " + std::to_string(n_dims));
  }
  const IntRange cs = resolved_cluster_range();
  if (cs.min < 1 || cs.min > cs.max) throw ConfigError("invalid cluster size range");
  const auto k = static_cast<long long>(n_clusters);
  const auto n = static_cast<long long>(n_nodes);
  if (k * cs.min > n || k * cs.max < n) {
    throw ConfigError("cluster sizes in [" + std::to_string(cs.min) + ", " + std::to_string(cs.max) + "] cannot sum to " +
                      std::to_string(n_nodes) + " with " + std::to_string(n_clusters) + " clusters");
  }
  if (group_overlap < 0.0) throw ConfigError("group_overlap must be nonnegative");
}

std::vector<int> assign_clusters(const GenParams& params) {
  params.validate();
  Rng rng(derive_seed(params.cluster_seed.value_or(params.seed), kAssign));
  const auto sizes = draw_cluster_sizes(params, rng);
  const auto order = random_permutation(params.n_nodes, rng);
  std::vector<int> clusters(params.n_nodes, 0);
  std::size_t pos = 0;
  for (std::size_t k = 0; k < sizes.size(); ++k) {
    for (std::size_t c = 0; c < sizes[k]; ++c) clusters[order[pos++]] = static_cast<int>(k);
  }
  return clusters;
}

GeneratedGraph generate(const GenParams& params) {
  params.validate();
  GeneratedGraph out;
  out.params = params;
  out.clusters = assign_clusters(params);

  Rng prob_rng(derive_seed(params.seed, kProbabilities));
  out.p_in = params.p_in ? *params.p_in : uniform(prob_rng, params.p_in_range.min, params.p_in_range.max);
  out.p_out = params.p_out ? *params.p_out : uniform(prob_rng, params.p_out_range.min, params.p_out_range.max);

  const std::size_t n = params.n_nodes;
  const std::size_t n_dims = params.n_dims;
  std::vector<std::vector<Edge>> edges(n_dims);

  Rng between_rng(derive_seed(params.seed, kBetween));
  for (std::size_t d = 0; d < n_dims; ++d) {
    for (std::size_t i = 0; i < n; ++i) {
      for (std::size_t j = i + 1; j < n; ++j) {
        if (out.clusters[i] != out.clusters[j]) sample_pair(edges[d], i, j, out.p_out, between_rng);
      }
    }
  }

  std::vector<std::vector<std::size_t>> members(params.n_clusters);
  for (std::size_t i = 0; i < n; ++i) members[static_cast<std::size_t>(out.clusters[i])].push_back(i);
  out.cluster_sizes.resize(params.n_clusters);
  for (std::size_t k = 0; k < params.n_clusters; ++k) out.cluster_sizes[k] = members[k].size();

  Rng within_rng(derive_seed(params.seed, kWithin));
  const IntRange sf_range = params.resolved_sf_range();
  for (std::size_t k = 0; k < params.n_clusters; ++k) {
    auto& nodes = members[k];
    const int sf = static_cast<int>(uniform_int(within_rng, sf_range.min, sf_range.max));
    out.spread_factors.push_back(sf);
    if (nodes.empty()) continue;
    const double nk = static_cast<double>(nodes.size());
    const auto group_size = std::min(nodes.size(), static_cast<std::size_t>(std::ceil(nk / sf * (1.0 + params.group_overlap))));
    // Groups of one cluster that share a dimension are merged before sampling.
    std::map<std::size_t, std::vector<std::size_t>> by_dim;
    for (int g = 0; g < sf; ++g) {
      for (std::size_t s = 0; s < group_size; ++s) {
        auto pick = static_cast<std::size_t>(uniform_int(within_rng, static_cast<long long>(s), static_cast<long long>(nodes.size() - 1)));
        std::swap(nodes[s], nodes[pick]);
      }
      const auto dim = static_cast<std::size_t>(uniform_int(within_rng, 0, static_cast<long long>(n_dims - 1)));
      auto& set = by_dim[dim];
      set.insert(set.end(), nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(group_size));
    }
    for (auto& [dim, set] : by_dim) {
      std::sort(set.begin(), set.end());
      set.erase(std::unique(set.begin(), set.end()), set.end());
      for (std::size_t a = 0; a < set.size(); ++a) {
        for (std::size_t b = a + 1; b < set.size(); ++b) sample_pair(edges[dim], set[a], set[b], out.p_in, within_rng);
      }
      out.blocks.push_back({static_cast<int>(k), dim, set});
    }
  }

  out.graph.n_nodes = n;
  for (std::size_t d = 0; d < n_dims; ++d) out.graph.dims.push_back(adjacency_from_edges(n, edges[d]));
  out.graph.features = structural_features(out.graph.dims);
  out.graph.labels.reserve(n);
  for (int c : out.clusters) out.graph.labels.push_back({c});
  return out;
}

std::vector<GenParams> sweep_specs(const GenParams& base, const std::vector<std::size_t>& d_values) {
  if (d_values.empty()) throw ConfigError("sweep needs at least one D value");
  std::vector<GenParams> specs;
  specs.reserve(d_values.size());
  for (std::size_t d : d_values) {
    GenParams p = base;
    p.n_dims = d;
    p.seed = derive_seed(base.seed, d);
    specs.push_back(p);
  }
  return specs;
}

nlohmann::json gen_report_json(const GeneratedGraph& g) {
  const auto& p = g.params;
  const IntRange sf = p.resolved_sf_range();
  const IntRange cs = p.resolved_cluster_range();
  nlohmann::json j;
  j["n_nodes"] = p.n_nodes;
  j["n_clusters"] = p.n_clusters;
  j["n_dims"] = p.n_dims;
  j["p_in"] = g.p_in;
  j["p_out"] = g.p_out;
  j["p_in_range"] = {p.p_in_range.min, p.p_in_range.max};
  j["p_out_range"] = {p.p_out_range.min, p.p_out_range.max};
  j["sf_range"] = {sf.min, sf.max};
  j["cluster_size_range"] = {cs.min, cs.max};
  j["group_overlap"] = p.group_overlap;
  j["seed"] = p.seed;
  j["cluster_seed"] = p.cluster_seed ? nlohmann::json(*p.cluster_seed) : nlohmann::json(nullptr);
  j["spread_factors"] = g.spread_factors;
  j["cluster_sizes"] = g.cluster_sizes;
  j["features"] = "standardized per-dimension degrees";
  return j;
}

void save_generated(const GeneratedGraph& generated, const std::filesystem::path& dir) {
  save_multiplex(generated.graph, dir);
  std::ofstream out(dir / "gen_params.json");
  out << gen_report_json(generated).dump(2) << "\n";
}

}  // namespace hypermux
