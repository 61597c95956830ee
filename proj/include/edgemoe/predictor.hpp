#pragma once

#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "edgemoe/topology.hpp"

namespace edgemoe {

// The activations at up to h decoder MoE layers immediately before `layer`
// within one token, oldest first; each step's experts sorted ascending.
struct HistoryKey {
  std::uint32_t layer = 0;
  std::vector<std::vector<std::uint32_t>> steps;

  auto operator<=>(const HistoryKey&) const = default;
  bool operator==(const HistoryKey&) const = default;
};

// Key predicting `layer` from the token's steps at layers [layer - h, layer).
HistoryKey make_history_key(std::span<const ActivationStep> token_steps, std::uint32_t layer, std::uint32_t h);

std::string to_string(const HistoryKey& key);

struct ProfileOptions {
  std::uint32_t history = 2;
  double alpha = 0.5;
  std::uint64_t min_count = 1;

  bool operator==(const ProfileOptions&) const = default;
};

// Offline activation statistics over decoder tokens. Counts are kept raw so
// profiles can be merged; probabilities are derived on query.
class ActivationProfile {
 public:
  ActivationProfile() = default;
  ActivationProfile(const TokenTrace& header, const ProfileOptions& options);

  const std::string& config_digest() const { return digest_; }
  std::uint32_t experts_per_layer() const { return experts_; }
  std::uint32_t decoder_moe_layers() const { return decoder_layers_; }
  std::uint32_t encoder_moe_layers() const { return encoder_layers_; }
  std::uint32_t routing_k() const { return routing_k_; }
  std::uint32_t history() const { return options_.history; }
  double alpha() const { return options_.alpha; }
  std::uint64_t min_count() const { return options_.min_count; }
  std::uint64_t tokens() const { return tokens_; }

  // Adds every decoder token and encoder step of the trace.
  void observe(const TokenTrace& trace);
  void merge(const ActivationProfile& other);

  const std::map<HistoryKey, std::vector<std::uint64_t>>& entries() const { return counts_; }
  // Number of times the key was seen (activations / routing_k).
  std::uint64_t observations(const HistoryKey& key) const;

  // (c_i + a) / (sum c + a E). Empty when the key was never seen.
  std::vector<double> conditional(const HistoryKey& key) const;
  // Smoothed per-layer activation shares; uniform when nothing was observed.
  std::vector<double> marginal(Stage stage, std::uint32_t layer) const;
  const std::vector<std::vector<std::uint64_t>>& marginal_counts(Stage stage) const {
    return stage == Stage::encoder ? encoder_marginals_ : decoder_marginals_;
  }

  bool operator==(const ActivationProfile&) const = default;

  friend nlohmann::json profile_to_json(const ActivationProfile& profile);
  friend ActivationProfile profile_from_json(const nlohmann::json& j);

 private:
  std::vector<double> smoothed(std::span<const std::uint64_t> counts) const;

  std::string digest_;
  std::uint32_t experts_ = 0;
  std::uint32_t decoder_layers_ = 0;
  std::uint32_t encoder_layers_ = 0;
  std::uint32_t routing_k_ = 1;
  ProfileOptions options_;
  std::uint64_t tokens_ = 0;
  std::map<HistoryKey, std::vector<std::uint64_t>> counts_;
  std::vector<std::vector<std::uint64_t>> decoder_marginals_;
  std::vector<std::vector<std::uint64_t>> encoder_marginals_;
};

// Throws DigestMismatch if traces disagree, ConfigError if they hold no
// decoder tokens or options are out of range (h in [1,3], alpha >= 0).
ActivationProfile build_profile(std::span<const TokenTrace> traces, const ProfileOptions& options = {});

using RankedExperts = std::vector<std::pair<std::uint32_t, double>>;

// The key's conditional when seen at least min_count times, else the layer
// marginal; sorted by descending probability, ties by expert index.
RankedExperts predict(const ActivationProfile& profile, const HistoryKey& key);

// Top m of predict() as decoder experts of key.layer. Requires 1 <= m <= E.
std::vector<ExpertRef> preload_candidates(const ActivationProfile& profile, const HistoryKey& key, std::uint32_t m);

nlohmann::json profile_to_json(const ActivationProfile& profile);
ActivationProfile profile_from_json(const nlohmann::json& j);
void save_profile(const ActivationProfile& profile, const std::filesystem::path& path);
// Checks the digest and expert count against `expected` when given.
ActivationProfile load_profile(const std::filesystem::path& path, const MoEConfig* expected = nullptr);

}  // namespace edgemoe
