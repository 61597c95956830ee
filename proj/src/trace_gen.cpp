#include "edgemoe/trace_gen.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <iterator>
#include <map>
#include <numeric>
#include <random>
#include <set>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

using Path = std::vector<std::vector<std::uint32_t>>;  // sorted expert set per layer

std::vector<std::uint32_t> random_step(std::mt19937_64& rng, std::uint32_t experts, std::uint32_t k) {
  std::vector<std::uint32_t> all(experts);
  std::iota(all.begin(), all.end(), 0u);
  std::vector<std::uint32_t> picked;
  std::sample(all.begin(), all.end(), std::back_inserter(picked), k, rng);
  std::shuffle(picked.begin(), picked.end(), rng);
  return picked;
}

Path random_path(std::mt19937_64& rng, const MoEConfig& cfg) {
  Path p;
  for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) {
    auto step = random_step(rng, cfg.experts_per_layer, cfg.routing_k);
    std::sort(step.begin(), step.end());
    p.push_back(std::move(step));
  }
  return p;
}

// Heaviest path first; each layer takes the k least-loaded experts, ties
// broken randomly. Duplicate paths are re-drawn at random.
std::vector<Path> balanced_catalog(std::mt19937_64& rng, const MoEConfig& cfg, const std::vector<double>& weights) {
  const std::uint32_t E = cfg.experts_per_layer;
  std::vector<std::vector<double>> load(cfg.decoder_moe_layers, std::vector<double>(E, 0.0));
  std::uniform_real_distribution<double> jitter(0.0, 1e-9);
  std::set<Path> seen;
  std::vector<Path> catalog;
  for (double w : weights) {
    Path p;
    for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) {
      std::vector<std::pair<double, std::uint32_t>> order;
      for (std::uint32_t j = 0; j < E; ++j) order.emplace_back(load[l][j] + jitter(rng), j);
      std::sort(order.begin(), order.end());
      std::vector<std::uint32_t> step;
      for (std::uint32_t a = 0; a < cfg.routing_k; ++a) step.push_back(order[a].second);
      std::sort(step.begin(), step.end());
      p.push_back(std::move(step));
    }
    for (int tries = 0; seen.contains(p) && tries < 1000; ++tries) {
      std::uniform_int_distribution<std::uint32_t> layer(0, cfg.decoder_moe_layers - 1);
      auto& step = p[layer(rng)];
      step = random_step(rng, E, cfg.routing_k);
      std::sort(step.begin(), step.end());
    }
    if (seen.contains(p)) throw InfeasibleError("cannot build a catalog of distinct paths");
    for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) {
      for (auto j : p[l]) load[l][j] += w;
    }
    seen.insert(p);
    catalog.push_back(std::move(p));
  }
  return catalog;
}

std::vector<ActivationStep> to_steps(const Path& p, std::mt19937_64& rng) {
  std::vector<ActivationStep> steps;
  for (const auto& s : p) {
    ActivationStep step{s};
    std::shuffle(step.experts.begin(), step.experts.end(), rng);
    steps.push_back(std::move(step));
  }
  return steps;
}

void check_common(const MoEConfig& cfg, std::size_t tokens_per_sample) {
  require_valid(cfg);
  if (tokens_per_sample == 0) throw ConfigError("tokens_per_sample must be positive");
}

}  // namespace

TokenTrace generate_powerlaw_trace(const MoEConfig& cfg, const PowerlawOptions& options) {
  check_common(cfg, options.tokens_per_sample);
  if (options.n_paths < 1) throw ConfigError("n_paths must be at least 1");
  if (!(options.zipf_s >= 0.0)) throw ConfigError("zipf_s must be non-negative");
  if (!(options.cold_fraction >= 0.0 && options.cold_fraction <= 1.0)) {
    throw ConfigError("cold_fraction must lie in [0, 1]");
  }
  double distinct_possible = 1.0;
  for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) {
    double sets = 1.0;
    for (std::uint32_t a = 0; a < cfg.routing_k; ++a) sets = sets * (cfg.experts_per_layer - a) / (a + 1);
    distinct_possible *= sets;
  }
  if (static_cast<double>(options.n_paths) > distinct_possible) {
    throw InfeasibleError("n_paths exceeds the number of distinct paths for this config");
  }

  std::vector<double> weights(options.n_paths);
  for (std::size_t r = 0; r < options.n_paths; ++r) weights[r] = std::pow(static_cast<double>(r + 1), -options.zipf_s);

  std::mt19937_64 rng(options.seed);
  const std::size_t attempts = options.balance_tolerance ? std::max<std::size_t>(options.max_attempts, 1) : 1;
  double best_deviation = 0.0;
  for (std::size_t attempt = 0; attempt < attempts; ++attempt) {
    const auto catalog = balanced_catalog(rng, cfg, weights);
    std::discrete_distribution<std::size_t> pick(weights.begin(), weights.end());
    std::bernoulli_distribution cold(options.cold_fraction);

    TokenTrace trace = make_trace_header(cfg);
    std::size_t remaining = options.tokens;
    while (remaining > 0) {
      TraceSample sample;
      for (std::uint32_t l = 0; l < cfg.encoder_moe_layers; ++l) {
        sample.encoder_steps.push_back(ActivationStep{random_step(rng, cfg.experts_per_layer, cfg.routing_k)});
      }
      const std::size_t n = std::min(remaining, options.tokens_per_sample);
      for (std::size_t t = 0; t < n; ++t) {
        const Path path = cold(rng) ? random_path(rng, cfg) : catalog[pick(rng)];
        sample.decode_tokens.push_back(to_steps(path, rng));
      }
      remaining -= n;
      trace.samples.push_back(std::move(sample));
    }
    if (!options.balance_tolerance) return trace;
    const double deviation = trace_stats(trace).max_marginal_deviation;
    if (deviation <= *options.balance_tolerance) return trace;
    best_deviation = attempt == 0 ? deviation : std::min(best_deviation, deviation);
  }
  throw InfeasibleError("power-law catalog could not be balanced within " +
                        std::to_string(*options.balance_tolerance) + " relative (best " +
                        std::to_string(best_deviation) + ")");
}

MarkovTrace generate_markov_trace(const MoEConfig& cfg, const MarkovOptions& options) {
  check_common(cfg, options.tokens_per_sample);
  if (!(options.concentration > 0.0)) throw ConfigError("Dirichlet concentration must be positive");
  const std::uint32_t E = cfg.experts_per_layer;
  const std::uint32_t k = cfg.routing_k;
  std::mt19937_64 rng(options.seed);

  MarkovTrace out;
  out.truth.config_digest = config_digest(cfg);
  out.truth.concentration = options.concentration;
  out.truth.initial.assign(E, 1.0 / E);
  out.truth.transitions.resize(cfg.decoder_moe_layers);
  std::gamma_distribution<double> gamma(options.concentration, 1.0);
  for (std::uint32_t l = 1; l < cfg.decoder_moe_layers; ++l) {
    for (std::uint32_t p = 0; p < E; ++p) {
      std::vector<double> row(E);
      double total = 0.0;
      while (total <= 0.0) {
        for (double& v : row) v = gamma(rng);
        total = std::accumulate(row.begin(), row.end(), 0.0);
      }
      for (double& v : row) v /= total;
      out.truth.transitions[l].push_back(std::move(row));
    }
  }

  // k distinct experts drawn sequentially without replacement from `probs`.
  auto draw = [&](const std::vector<double>& probs) {
    std::vector<double> w = probs;
    std::vector<std::uint32_t> chosen;
    for (std::uint32_t a = 0; a < k; ++a) {
      if (std::accumulate(w.begin(), w.end(), 0.0) <= 0.0) {
        for (std::uint32_t j = 0; j < E; ++j) w[j] = std::find(chosen.begin(), chosen.end(), j) == chosen.end();
      }
      std::discrete_distribution<std::uint32_t> dist(w.begin(), w.end());
      const std::uint32_t j = dist(rng);
      chosen.push_back(j);
      w[j] = 0.0;
    }
    return chosen;
  };

  out.trace = make_trace_header(cfg);
  std::size_t remaining = options.tokens;
  while (remaining > 0) {
    TraceSample sample;
    for (std::uint32_t l = 0; l < cfg.encoder_moe_layers; ++l) {
      sample.encoder_steps.push_back(ActivationStep{random_step(rng, E, k)});
    }
    const std::size_t n = std::min(remaining, options.tokens_per_sample);
    for (std::size_t t = 0; t < n; ++t) {
      std::vector<ActivationStep> token;
      token.push_back(ActivationStep{draw(out.truth.initial)});
      for (std::uint32_t l = 1; l < cfg.decoder_moe_layers; ++l) {
        const auto& prev = token.back().experts;
        const std::uint32_t cond = *std::min_element(prev.begin(), prev.end());
        token.push_back(ActivationStep{draw(out.truth.transitions[l][cond])});
      }
      sample.decode_tokens.push_back(std::move(token));
    }
    remaining -= n;
    out.trace.samples.push_back(std::move(sample));
  }
  return out;
}

nlohmann::json markov_truth_to_json(const MarkovTruth& truth) {
  nlohmann::json layers = nlohmann::json::array();
  for (std::size_t l = 1; l < truth.transitions.size(); ++l) {
    layers.push_back({{"layer", l}, {"given_previous", truth.transitions[l]}});
  }
  return {{"format", "edgemoe-markov-truth"},
          {"version", 1},
          {"config_digest", truth.config_digest},
          {"concentration", truth.concentration},
          {"initial", truth.initial},
          {"transitions", std::move(layers)}};
}

double TraceStats::top_path_coverage(double fraction) const {
  if (path_cdf.empty()) return 0.0;
  const auto n = static_cast<std::size_t>(std::floor(fraction * static_cast<double>(path_cdf.size())));
  return path_cdf[std::clamp<std::size_t>(n, 1, path_cdf.size()) - 1];
}

TraceStats trace_stats(const TokenTrace& trace) {
  TraceStats stats;
  const std::uint32_t E = trace.experts_per_layer;
  std::vector<std::vector<std::uint64_t>> counts(trace.decoder_moe_layers, std::vector<std::uint64_t>(E, 0));
  std::map<Path, std::uint64_t> paths;
  for (const auto& sample : trace.samples) {
    for (const auto& token : sample.decode_tokens) {
      ++stats.tokens;
      Path p;
      for (std::size_t l = 0; l < token.size(); ++l) {
        for (auto j : token[l].experts) ++counts[l][j];
        auto s = token[l].experts;
        std::sort(s.begin(), s.end());
        p.push_back(std::move(s));
      }
      ++paths[std::move(p)];
    }
  }
  stats.distinct_paths = paths.size();
  const double uniform = static_cast<double>(trace.routing_k) / E;
  for (const auto& row : counts) {
    std::vector<double> shares;
    for (auto c : row) {
      const double share = stats.tokens == 0 ? 0.0 : static_cast<double>(c) / static_cast<double>(stats.tokens);
      shares.push_back(share);
      if (stats.tokens > 0) {
        stats.max_marginal_deviation = std::max(stats.max_marginal_deviation, std::fabs(share - uniform) / uniform);
      }
    }
    stats.marginals.push_back(std::move(shares));
  }
  std::vector<std::uint64_t> freq;
  for (const auto& [p, c] : paths) freq.push_back(c);
  std::sort(freq.begin(), freq.end(), std::greater<>());
  std::uint64_t running = 0;
  for (auto c : freq) {
    running += c;
    stats.path_cdf.push_back(static_cast<double>(running) / static_cast<double>(stats.tokens));
  }
  return stats;
}

nlohmann::json trace_stats_to_json(const TraceStats& stats) {
  return {{"tokens", stats.tokens},
          {"distinct_paths", stats.distinct_paths},
          {"marginals", stats.marginals},
          {"max_marginal_deviation", stats.max_marginal_deviation},
          {"top20_coverage", stats.top_path_coverage(0.2)},
          {"path_cdf", stats.path_cdf}};
}

}  // namespace edgemoe
