#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include "edgemoe/topology.hpp"

namespace edgemoe {

// JSON Lines trace format.
//   line 1: {"format":"edgemoe-trace","version":1,"config_digest":..., "routing_k":...,
//            "experts_per_layer":..., "encoder_moe_layers":..., "decoder_moe_layers":...}
//   line n: {"encoder":[[e,...],...], "tokens":[[[e,...],...],...]}   one per sample
inline constexpr int kTraceFormatVersion = 1;

void write_trace(const TokenTrace& trace, std::ostream& out);
void write_trace(const TokenTrace& trace, const std::filesystem::path& path);

// Throws ParseError (with the 1-based line) on malformed content. When
// `expected` is given, a digest mismatch throws DigestMismatch naming both.
TokenTrace read_trace(std::istream& in, const std::string& source_name, const MoEConfig* expected = nullptr);
TokenTrace read_trace(const std::filesystem::path& path, const MoEConfig* expected = nullptr);

}  // namespace edgemoe
