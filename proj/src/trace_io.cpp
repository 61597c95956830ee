#include "edgemoe/trace_io.hpp"

#include <fstream>
#include <istream>
#include <ostream>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

using nlohmann::json;

json step_to_json(const ActivationStep& step) { return step.experts; }

ActivationStep step_from_json(const json& j) {
  if (!j.is_array()) throw std::invalid_argument("activation step must be an array of expert indices");
  ActivationStep step;
  for (const auto& e : j) {
    if (!e.is_number_unsigned()) throw std::invalid_argument("expert index must be a non-negative integer");
    step.experts.push_back(e.get<std::uint32_t>());
  }
  return step;
}

std::uint32_t header_field(const json& h, const char* name) {
  if (!h.contains(name) || !h.at(name).is_number_unsigned()) {
    throw std::invalid_argument(std::string("header field '") + name + "' missing or not an unsigned integer");
  }
  return h.at(name).get<std::uint32_t>();
}

void validate_last_sample(TokenTrace& trace) {
  TokenTrace probe;
  probe.routing_k = trace.routing_k;
  probe.experts_per_layer = trace.experts_per_layer;
  probe.encoder_moe_layers = trace.encoder_moe_layers;
  probe.decoder_moe_layers = trace.decoder_moe_layers;
  probe.samples.push_back(std::move(trace.samples.back()));
  trace.samples.pop_back();
  validate_trace(probe);
  trace.samples.push_back(std::move(probe.samples.back()));
}

}  // namespace

void write_trace(const TokenTrace& trace, std::ostream& out) {
  json header = {{"format", "edgemoe-trace"},
                 {"version", kTraceFormatVersion},
                 {"config_digest", trace.config_digest},
                 {"routing_k", trace.routing_k},
                 {"experts_per_layer", trace.experts_per_layer},
                 {"encoder_moe_layers", trace.encoder_moe_layers},
                 {"decoder_moe_layers", trace.decoder_moe_layers}};
  out << header.dump() << '\n';
  for (const auto& sample : trace.samples) {
    json enc = json::array();
    for (const auto& step : sample.encoder_steps) enc.push_back(step_to_json(step));
    json tokens = json::array();
    for (const auto& token : sample.decode_tokens) {
      json layers = json::array();
      for (const auto& step : token) layers.push_back(step_to_json(step));
      tokens.push_back(std::move(layers));
    }
    out << json{{"encoder", std::move(enc)}, {"tokens", std::move(tokens)}}.dump() << '\n';
  }
}

void write_trace(const TokenTrace& trace, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write trace file " + path.string());
  write_trace(trace, out);
}

TokenTrace read_trace(std::istream& in, const std::string& source_name, const MoEConfig* expected) {
  TokenTrace trace;
  std::string line;
  std::size_t line_no = 0;
  bool have_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      const json j = json::parse(line);
      if (!j.is_object()) throw std::invalid_argument("record must be a JSON object");
      if (!have_header) {
        if (j.value("format", "") != "edgemoe-trace") throw std::invalid_argument("missing trace header");
        if (j.value("version", -1) != kTraceFormatVersion) throw std::invalid_argument("unsupported trace version");
        if (!j.contains("config_digest") || !j.at("config_digest").is_string()) {
          throw std::invalid_argument("header field 'config_digest' missing");
        }
        trace.config_digest = j.at("config_digest").get<std::string>();
        trace.routing_k = header_field(j, "routing_k");
        trace.experts_per_layer = header_field(j, "experts_per_layer");
        trace.encoder_moe_layers = header_field(j, "encoder_moe_layers");
        trace.decoder_moe_layers = header_field(j, "decoder_moe_layers");
        have_header = true;
        continue;
      }
      if (!j.contains("encoder") || !j.contains("tokens")) {
        throw std::invalid_argument("sample record needs 'encoder' and 'tokens'");
      }
      TraceSample sample;
      for (const auto& step : j.at("encoder")) sample.encoder_steps.push_back(step_from_json(step));
      for (const auto& token : j.at("tokens")) {
        if (!token.is_array()) throw std::invalid_argument("token must be an array of steps");
        std::vector<ActivationStep> steps;
        for (const auto& step : token) steps.push_back(step_from_json(step));
        sample.decode_tokens.push_back(std::move(steps));
      }
      trace.samples.push_back(std::move(sample));
      validate_last_sample(trace);
    } catch (const json::exception& e) {
      throw ParseError(source_name, line_no, e.what());
    } catch (const std::invalid_argument& e) {
      throw ParseError(source_name, line_no, e.what());
    } catch (const ConfigError& e) {
      throw ParseError(source_name, line_no, e.what());
    }
  }
  if (!have_header) throw ParseError(source_name, line_no, "empty trace file");
  if (expected != nullptr) check_trace_digest(trace, *expected);
  return trace;
}

TokenTrace read_trace(const std::filesystem::path& path, const MoEConfig* expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open trace file " + path.string());
  return read_trace(in, path.string(), expected);
}

}  // namespace edgemoe
