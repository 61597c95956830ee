#pragma once

#include <cstddef>
#include <cstdint>
#include <optional>
#include <vector>

#include "edgemoe/topology.hpp"

namespace edgemoe {

struct PowerlawOptions {
  std::size_t n_paths = 128;
  double zipf_s = 0.8;
  std::size_t tokens = 100000;
  std::size_t tokens_per_sample = 50;
  // Share of tokens drawn as fresh uniformly random paths outside the catalog.
  double cold_fraction = 0.005;
  std::uint64_t seed = 1;
  // Max relative deviation of any per-layer expert share from uniform;
  // nullopt skips the balance check.
  std::optional<double> balance_tolerance = 0.25;
  std::size_t max_attempts = 64;
};

// Catalog of n_paths distinct decoder paths, path r drawn with probability
// proportional to r^-s. The catalog is assigned heaviest path first, each
// layer taking the least-loaded experts, and redrawn until the sampled trace
// meets the balance tolerance. Encoder steps are uniform. Throws
// InfeasibleError when no attempt balances, ConfigError on bad options.
TokenTrace generate_powerlaw_trace(const MoEConfig& cfg, const PowerlawOptions& options);

struct MarkovOptions {
  std::size_t tokens = 200000;
  std::size_t tokens_per_sample = 50;
  double concentration = 0.3;
  std::uint64_t seed = 1;
};

// Ground truth of a Markov trace: layer 0 is uniform; transitions[l][p][n]
// is P(expert n at layer l | expert p at layer l - 1), with transitions[0]
// empty. For k > 1 the condition is the lowest expert of the previous step
// and the k experts are drawn without replacement.
struct MarkovTruth {
  std::string config_digest;
  double concentration = 0.3;
  std::vector<double> initial;
  std::vector<std::vector<std::vector<double>>> transitions;
};

struct MarkovTrace {
  TokenTrace trace;
  MarkovTruth truth;
};

// Rows are symmetric Dirichlet(concentration) draws.
MarkovTrace generate_markov_trace(const MoEConfig& cfg, const MarkovOptions& options);

nlohmann::json markov_truth_to_json(const MarkovTruth& truth);

struct TraceStats {
  std::size_t tokens = 0;
  std::size_t distinct_paths = 0;
  // Per decoder layer, activations of each expert / tokens (rows sum to k).
  std::vector<std::vector<double>> marginals;
  // Cumulative token share of distinct paths, most frequent first.
  std::vector<double> path_cdf;
  // Largest |share - k/E| / (k/E) over all layers and experts.
  double max_marginal_deviation = 0.0;

  // Token share of the most frequent floor(fraction * distinct) paths
  // (at least one path).
  double top_path_coverage(double fraction) const;
};

TraceStats trace_stats(const TokenTrace& trace);
nlohmann::json trace_stats_to_json(const TraceStats& stats);

}  // namespace edgemoe
