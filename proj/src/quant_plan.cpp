#include "edgemoe/quant_plan.hpp"

#include <algorithm>
#include <fstream>

#include "edgemoe/errors.hpp"

namespace edgemoe {

using nlohmann::json;

void QuantPlan::recount() {
  low_bit_count = static_cast<std::size_t>(std::count(expert_bits.begin(), expert_bits.end(), lower_bound));
}

QuantPlan uniform_plan(const MoEConfig& cfg, Bitwidth experts, Bitwidth non_expert) {
  QuantPlan plan;
  plan.config_digest = config_digest(cfg);
  plan.experts_per_layer = cfg.experts_per_layer;
  plan.encoder_moe_layers = cfg.encoder_moe_layers;
  plan.decoder_moe_layers = cfg.decoder_moe_layers;
  plan.expert_bits.assign(total_experts(cfg), experts);
  plan.non_expert_bitwidth = non_expert;
  plan.lower_bound = experts;
  plan.upper_bound = experts;
  plan.recount();
  return plan;
}

void check_plan(const QuantPlan& plan, const MoEConfig& cfg) {
  const std::string expected = config_digest(cfg);
  if (plan.config_digest != expected) throw DigestMismatch("plan", expected, plan.config_digest);
  if (plan.expert_bits.size() != total_experts(cfg)) throw ConfigError("plan expert count does not match config");
}

json plan_to_json(const QuantPlan& plan, std::optional<std::uint64_t> storage_bytes) {
  const std::size_t E = plan.experts_per_layer;
  auto stage_table = [&](std::size_t offset, std::size_t layers) {
    json rows = json::array();
    for (std::size_t l = 0; l < layers; ++l) {
      json row = json::array();
      for (std::size_t e = 0; e < E; ++e) row.push_back(to_string(plan.expert_bits[offset + l * E + e]));
      rows.push_back(std::move(row));
    }
    return rows;
  };
  json j = {{"version", 1},
            {"config_digest", plan.config_digest},
            {"experts_per_layer", plan.experts_per_layer},
            {"encoder_moe_layers", plan.encoder_moe_layers},
            {"decoder_moe_layers", plan.decoder_moe_layers},
            {"bounds", {{"lower", to_string(plan.lower_bound)}, {"upper", to_string(plan.upper_bound)}}},
            {"low_bit_count", plan.low_bit_count},
            {"non_expert_bitwidth", to_string(plan.non_expert_bitwidth)},
            {"experts",
             {{"encoder", stage_table(0, plan.encoder_moe_layers)},
              {"decoder", stage_table(static_cast<std::size_t>(plan.encoder_moe_layers) * E,
                                      plan.decoder_moe_layers)}}}};
  j["tolerable_loss"] = plan.tolerable_loss ? json(*plan.tolerable_loss) : json(nullptr);
  j["measured_loss"] = plan.measured_loss ? json(*plan.measured_loss) : json(nullptr);
  if (storage_bytes) j["storage_bytes"] = *storage_bytes;
  return j;
}

QuantPlan plan_from_json(const json& j) {
  try {
    if (j.at("version").get<int>() != 1) throw ConfigError("unsupported plan version");
    QuantPlan plan;
    plan.config_digest = j.at("config_digest").get<std::string>();
    plan.experts_per_layer = j.at("experts_per_layer").get<std::uint32_t>();
    plan.encoder_moe_layers = j.at("encoder_moe_layers").get<std::uint32_t>();
    plan.decoder_moe_layers = j.at("decoder_moe_layers").get<std::uint32_t>();
    plan.lower_bound = parse_bitwidth(j.at("bounds").at("lower").get<std::string>());
    plan.upper_bound = parse_bitwidth(j.at("bounds").at("upper").get<std::string>());
    plan.non_expert_bitwidth = parse_bitwidth(j.at("non_expert_bitwidth").get<std::string>());
    auto read_stage = [&](const json& rows, std::size_t layers) {
      if (rows.size() != layers) throw ConfigError("plan layer count does not match header");
      for (const auto& row : rows) {
        if (row.size() != plan.experts_per_layer) throw ConfigError("plan expert count does not match header");
        for (const auto& b : row) plan.expert_bits.push_back(parse_bitwidth(b.get<std::string>()));
      }
    };
    read_stage(j.at("experts").at("encoder"), plan.encoder_moe_layers);
    read_stage(j.at("experts").at("decoder"), plan.decoder_moe_layers);
    if (j.contains("tolerable_loss") && !j.at("tolerable_loss").is_null()) {
      plan.tolerable_loss = j.at("tolerable_loss").get<double>();
    }
    if (j.contains("measured_loss") && !j.at("measured_loss").is_null()) {
      plan.measured_loss = j.at("measured_loss").get<double>();
    }
    plan.recount();
    if (plan.low_bit_count != j.at("low_bit_count").get<std::size_t>()) {
      throw ConfigError("plan low_bit_count disagrees with its assignment");
    }
    return plan;
  } catch (const json::exception& e) {
    throw ParseError("plan", 0, e.what());
  }
}

void save_plan(const QuantPlan& plan, const std::filesystem::path& path, std::optional<std::uint64_t> storage_bytes) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write plan file " + path.string());
  out << plan_to_json(plan, storage_bytes).dump(2) << '\n';
}

QuantPlan load_plan(const std::filesystem::path& path, const MoEConfig* expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open plan file " + path.string());
  json j;
  try {
    j = json::parse(in);
  } catch (const json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  QuantPlan plan = plan_from_json(j);
  if (expected != nullptr) check_plan(plan, *expected);
  return plan;
}

}  // namespace edgemoe
