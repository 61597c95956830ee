#include "edgemoe/topology.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "edgemoe/errors.hpp"

namespace edgemoe {

std::string_view to_string(Stage stage) { return stage == Stage::encoder ? "encoder" : "decoder"; }

std::string_view to_string(Bitwidth b) {
  switch (b) {
    case Bitwidth::int2: return "INT2";
    case Bitwidth::int4: return "INT4";
    case Bitwidth::int8: return "INT8";
    case Bitwidth::fp16: return "FP16";
    case Bitwidth::fp32: return "FP32";
  }
  return "FP32";
}

Bitwidth parse_bitwidth(std::string_view text) {
  std::string upper(text);
  std::transform(upper.begin(), upper.end(), upper.begin(), [](unsigned char c) { return std::toupper(c); });
  for (Bitwidth b : kBitwidthLadder) {
    if (upper == to_string(b)) return b;
  }
  throw ConfigError("unknown bitwidth '" + std::string(text) + "' (expected INT2, INT4, INT8, FP16 or FP32)");
}

MoEConfig default_toy_config() { return MoEConfig{}; }

std::vector<std::string> validate_config(const MoEConfig& cfg) {
  std::vector<std::string> violations;
  if (cfg.encoder_moe_layers > cfg.encoder_layers) violations.emplace_back("encoder_moe_layers ≤ encoder_layers");
  if (cfg.decoder_moe_layers > cfg.decoder_layers) violations.emplace_back("decoder_moe_layers ≤ decoder_layers");
  if (cfg.decoder_moe_layers < 1) violations.emplace_back("decoder_moe_layers ≥ 1");
  if (cfg.experts_per_layer < 2) violations.emplace_back("experts_per_layer ≥ 2");
  if (cfg.routing_k < 1) violations.emplace_back("routing_k ≥ 1");
  if (cfg.routing_k > cfg.experts_per_layer) violations.emplace_back("routing_k ≤ experts_per_layer");
  if (cfg.model_dim < 1) violations.emplace_back("model_dim ≥ 1");
  if (cfg.ffn_hidden_dim < 1) violations.emplace_back("ffn_hidden_dim ≥ 1");
  return violations;
}

void require_valid(const MoEConfig& cfg) {
  const auto violations = validate_config(cfg);
  if (violations.empty()) return;
  std::string msg = "invalid MoEConfig:";
  for (const auto& v : violations) msg += " [" + v + "]";
  throw ConfigError(msg);
}

std::string config_digest(const MoEConfig& cfg) {
  std::ostringstream canon;
  canon << "enc=" << cfg.encoder_layers << '/' << cfg.encoder_moe_layers << ";dec=" << cfg.decoder_layers << '/'
        << cfg.decoder_moe_layers << ";E=" << cfg.experts_per_layer << ";k=" << cfg.routing_k
        << ";d=" << cfg.model_dim << ";h=" << cfg.ffn_hidden_dim;
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : canon.str()) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(hash));
  return buf;
}

std::uint32_t moe_layers(const MoEConfig& cfg, Stage stage) {
  return stage == Stage::encoder ? cfg.encoder_moe_layers : cfg.decoder_moe_layers;
}

std::size_t total_experts(const MoEConfig& cfg) {
  return static_cast<std::size_t>(cfg.encoder_moe_layers + cfg.decoder_moe_layers) * cfg.experts_per_layer;
}

std::string to_string(const ExpertRef& e) {
  return std::string(e.stage == Stage::encoder ? "enc" : "dec") + "[" + std::to_string(e.layer) + "]." +
         std::to_string(e.expert);
}

std::size_t flat_index(const MoEConfig& cfg, const ExpertRef& e) {
  const std::size_t base =
      e.stage == Stage::encoder ? 0 : static_cast<std::size_t>(cfg.encoder_moe_layers) * cfg.experts_per_layer;
  return base + static_cast<std::size_t>(e.layer) * cfg.experts_per_layer + e.expert;
}

ExpertRef expert_at(const MoEConfig& cfg, std::size_t flat) {
  const std::size_t enc_total = static_cast<std::size_t>(cfg.encoder_moe_layers) * cfg.experts_per_layer;
  ExpertRef e;
  if (flat < enc_total) {
    e.stage = Stage::encoder;
  } else {
    e.stage = Stage::decoder;
    flat -= enc_total;
  }
  e.layer = static_cast<std::uint32_t>(flat / cfg.experts_per_layer);
  e.expert = static_cast<std::uint32_t>(flat % cfg.experts_per_layer);
  return e;
}

bool in_range(const MoEConfig& cfg, const ExpertRef& e) {
  return e.layer < moe_layers(cfg, e.stage) && e.expert < cfg.experts_per_layer;
}

std::uint64_t matrix_size_bytes(std::uint64_t rows, std::uint64_t cols, Bitwidth b) {
  const std::uint64_t weight_bits = rows * cols * bits_per_weight(b);
  return (weight_bits + 7) / 8 + 2 * rows;
}

std::uint64_t expert_size_bytes(const MoEConfig& cfg, Bitwidth b) {
  const std::uint64_t d = cfg.model_dim;
  const std::uint64_t h = cfg.ffn_hidden_dim;
  return matrix_size_bytes(h, d, b) + matrix_size_bytes(d, h, b);
}

std::size_t TokenTrace::decode_token_count() const {
  std::size_t n = 0;
  for (const auto& s : samples) n += s.decode_tokens.size();
  return n;
}

TokenTrace make_trace_header(const MoEConfig& cfg) {
  TokenTrace t;
  t.config_digest = config_digest(cfg);
  t.routing_k = cfg.routing_k;
  t.experts_per_layer = cfg.experts_per_layer;
  t.encoder_moe_layers = cfg.encoder_moe_layers;
  t.decoder_moe_layers = cfg.decoder_moe_layers;
  return t;
}

namespace {

void check_step(const TokenTrace& t, const ActivationStep& step, const std::string& where) {
  if (step.experts.size() != t.routing_k) {
    throw ConfigError(where + ": step has " + std::to_string(step.experts.size()) + " experts, routing_k is " +
                      std::to_string(t.routing_k));
  }
  for (std::size_t a = 0; a < step.experts.size(); ++a) {
    if (step.experts[a] >= t.experts_per_layer) {
      throw ConfigError(where + ": expert index " + std::to_string(step.experts[a]) + " out of range");
    }
    for (std::size_t b = a + 1; b < step.experts.size(); ++b) {
      if (step.experts[a] == step.experts[b]) throw ConfigError(where + ": duplicate expert in step");
    }
  }
}

}  // namespace

void validate_trace(const TokenTrace& t) {
  for (std::size_t s = 0; s < t.samples.size(); ++s) {
    const auto& sample = t.samples[s];
    const std::string where = "sample " + std::to_string(s);
    if (sample.encoder_steps.size() != t.encoder_moe_layers) {
      throw ConfigError(where + ": expected " + std::to_string(t.encoder_moe_layers) + " encoder steps");
    }
    for (const auto& step : sample.encoder_steps) check_step(t, step, where);
    for (std::size_t k = 0; k < sample.decode_tokens.size(); ++k) {
      const auto& token = sample.decode_tokens[k];
      const std::string twhere = where + " token " + std::to_string(k);
      if (token.size() != t.decoder_moe_layers) {
        throw ConfigError(twhere + ": expected " + std::to_string(t.decoder_moe_layers) + " decoder steps");
      }
      for (const auto& step : token) check_step(t, step, twhere);
    }
  }
}

void check_trace_digest(const TokenTrace& trace, const MoEConfig& cfg) {
  const std::string expected = config_digest(cfg);
  if (trace.config_digest != expected) throw DigestMismatch("trace", expected, trace.config_digest);
}

nlohmann::json config_to_json(const MoEConfig& cfg) {
  return {{"encoder_layers", cfg.encoder_layers},
          {"encoder_moe_layers", cfg.encoder_moe_layers},
          {"decoder_layers", cfg.decoder_layers},
          {"decoder_moe_layers", cfg.decoder_moe_layers},
          {"experts_per_layer", cfg.experts_per_layer},
          {"routing_k", cfg.routing_k},
          {"model_dim", cfg.model_dim},
          {"ffn_hidden_dim", cfg.ffn_hidden_dim},
          {"seed", cfg.seed}};
}

MoEConfig config_from_json(const nlohmann::json& j) {
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  MoEConfig cfg;
  auto field = [&](const char* name, auto& out) {
    if (!j.contains(name)) return;
    const auto& v = j.at(name);
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
      throw ConfigError(std::string("config field '") + name + "' must be a non-negative integer");
    }
    out = v.get<std::remove_reference_t<decltype(out)>>();
  };
  field("encoder_layers", cfg.encoder_layers);
  field("encoder_moe_layers", cfg.encoder_moe_layers);
  field("decoder_layers", cfg.decoder_layers);
  field("decoder_moe_layers", cfg.decoder_moe_layers);
  field("experts_per_layer", cfg.experts_per_layer);
  field("routing_k", cfg.routing_k);
  field("model_dim", cfg.model_dim);
  field("ffn_hidden_dim", cfg.ffn_hidden_dim);
  field("seed", cfg.seed);
  return cfg;
}

MoEConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  return config_from_json(j);
}

void save_config(const MoEConfig& cfg, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write config file " + path.string());
  out << config_to_json(cfg).dump(2) << '\n';
}

}  // namespace edgemoe
