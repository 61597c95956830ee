#pragma once

#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "edgemoe/topology.hpp"

namespace edgemoe {

// Per-expert bitwidth assignment produced by the offline planner.
// Invariant: low_bit_count == number of experts assigned lower_bound.
struct QuantPlan {
  std::string config_digest;
  std::uint32_t experts_per_layer = 0;
  std::uint32_t encoder_moe_layers = 0;
  std::uint32_t decoder_moe_layers = 0;
  std::vector<Bitwidth> expert_bits;  // indexed by flat_index()
  Bitwidth non_expert_bitwidth = Bitwidth::fp32;
  std::size_t low_bit_count = 0;
  Bitwidth lower_bound = Bitwidth::fp32;
  Bitwidth upper_bound = Bitwidth::fp32;
  std::optional<double> tolerable_loss;
  std::optional<double> measured_loss;

  Bitwidth at(const MoEConfig& cfg, const ExpertRef& e) const { return expert_bits[flat_index(cfg, e)]; }
  Bitwidth& at(const MoEConfig& cfg, const ExpertRef& e) { return expert_bits[flat_index(cfg, e)]; }

  // Recounts low_bit_count from the assignment.
  void recount();

  bool operator==(const QuantPlan&) const = default;
};

// Every expert at `experts`; bounds collapse to (experts, experts).
QuantPlan uniform_plan(const MoEConfig& cfg, Bitwidth experts, Bitwidth non_expert = Bitwidth::fp32);

// Throws DigestMismatch or ConfigError if plan does not fit cfg.
void check_plan(const QuantPlan& plan, const MoEConfig& cfg);

// Plan file. `storage_bytes`, when given, is recorded alongside.
nlohmann::json plan_to_json(const QuantPlan& plan, std::optional<std::uint64_t> storage_bytes = std::nullopt);
QuantPlan plan_from_json(const nlohmann::json& j);
void save_plan(const QuantPlan& plan, const std::filesystem::path& path,
               std::optional<std::uint64_t> storage_bytes = std::nullopt);
QuantPlan load_plan(const std::filesystem::path& path, const MoEConfig* expected = nullptr);

}  // namespace edgemoe
