#pragma once

#include <array>
#include <compare>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace edgemoe {

enum class Stage : std::uint8_t { encoder = 0, decoder = 1 };

std::string_view to_string(Stage stage);

// Storage precision of a weight tensor. Order matches the bitwidth ladder
// used by the planner: INT2 < INT4 < INT8 < FP16 < FP32.
enum class Bitwidth : std::uint8_t { int2 = 0, int4, int8, fp16, fp32 };

inline constexpr std::array<Bitwidth, 5> kBitwidthLadder{Bitwidth::int2, Bitwidth::int4, Bitwidth::int8,
                                                         Bitwidth::fp16, Bitwidth::fp32};

constexpr unsigned bits_per_weight(Bitwidth b) {
  switch (b) {
    case Bitwidth::int2: return 2;
    case Bitwidth::int4: return 4;
    case Bitwidth::int8: return 8;
    case Bitwidth::fp16: return 16;
    case Bitwidth::fp32: return 32;
  }
  return 32;
}

// True for the integer (channel-wise quantized) bitwidths.
constexpr bool is_quantizing(Bitwidth b) { return bits_per_weight(b) <= 8; }

std::string_view to_string(Bitwidth b);
// Accepts "INT2", "int4", "FP16", ... Throws ConfigError on anything else.
Bitwidth parse_bitwidth(std::string_view text);

// Topology of an encoder-decoder MoE transformer.
struct MoEConfig {
  std::uint32_t encoder_layers = 12;
  std::uint32_t encoder_moe_layers = 6;
  std::uint32_t decoder_layers = 12;
  std::uint32_t decoder_moe_layers = 6;
  std::uint32_t experts_per_layer = 8;
  std::uint32_t routing_k = 1;
  std::uint32_t model_dim = 32;
  std::uint32_t ffn_hidden_dim = 64;
  std::uint64_t seed = 20240101;

  bool operator==(const MoEConfig&) const = default;
};

// Desk-scale encoder-decoder model: 6 of 12 blocks MoE in each stack,
// 8 experts, top-1.
MoEConfig default_toy_config();

// Every violated invariant as a readable message; empty means valid.
std::vector<std::string> validate_config(const MoEConfig& cfg);
// Throws ConfigError listing all violations.
void require_valid(const MoEConfig& cfg);

// Stable 16-hex-digit FNV-1a hash over the topology fields. The seed is not
// part of the digest: traces and plans stay valid across model reseeding.
std::string config_digest(const MoEConfig& cfg);

std::uint32_t moe_layers(const MoEConfig& cfg, Stage stage);
std::size_t total_experts(const MoEConfig& cfg);

struct ExpertRef {
  Stage stage = Stage::decoder;
  std::uint32_t layer = 0;   // MoE-layer index within the stage, 0-based
  std::uint32_t expert = 0;  // expert index within the layer

  // Lexicographic (stage, layer, expert): the tie-break order everywhere.
  auto operator<=>(const ExpertRef&) const = default;
};

std::string to_string(const ExpertRef& e);

// Dense index over all experts: encoder experts first, then decoder.
std::size_t flat_index(const MoEConfig& cfg, const ExpertRef& e);
ExpertRef expert_at(const MoEConfig& cfg, std::size_t flat);
bool in_range(const MoEConfig& cfg, const ExpertRef& e);

// Bytes for one rows x cols matrix: packed weights plus one FP16 scale per
// row (output channel).
std::uint64_t matrix_size_bytes(std::uint64_t rows, std::uint64_t cols, Bitwidth b);

// One expert = FFN with an up (h x d) and a down (d x h) projection.
std::uint64_t expert_size_bytes(const MoEConfig& cfg, Bitwidth b);

// Activated experts at one MoE layer for one token, in router order.
struct ActivationStep {
  std::vector<std::uint32_t> experts;

  auto operator<=>(const ActivationStep&) const = default;
  bool operator==(const ActivationStep&) const = default;
};

struct TraceSample {
  std::vector<ActivationStep> encoder_steps;               // one per encoder MoE layer
  std::vector<std::vector<ActivationStep>> decode_tokens;  // per token: one per decoder MoE layer

  bool operator==(const TraceSample&) const = default;
};

struct TokenTrace {
  std::string config_digest;
  std::uint32_t routing_k = 1;
  std::uint32_t experts_per_layer = 0;
  std::uint32_t encoder_moe_layers = 0;
  std::uint32_t decoder_moe_layers = 0;
  std::vector<TraceSample> samples;

  std::size_t decode_token_count() const;
  bool operator==(const TokenTrace&) const = default;
};

// Empty trace whose header matches cfg.
TokenTrace make_trace_header(const MoEConfig& cfg);

// Throws ConfigError naming the first structural violation (wrong step
// count, wrong step length, duplicate or out-of-range expert).
void validate_trace(const TokenTrace& trace);

// Throws DigestMismatch if the trace was not built for cfg.
void check_trace_digest(const TokenTrace& trace, const MoEConfig& cfg);

// Config file: a JSON object whose keys mirror MoEConfig field names.
// Missing keys take the toy defaults.
nlohmann::json config_to_json(const MoEConfig& cfg);
MoEConfig config_from_json(const nlohmann::json& j);
MoEConfig load_config(const std::filesystem::path& path);
void save_config(const MoEConfig& cfg, const std::filesystem::path& path);

}  // namespace edgemoe
