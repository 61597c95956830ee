#include <gtest/gtest.h>

#include <algorithm>
#include <fstream>
#include <sstream>

#include "edgemoe/errors.hpp"
#include "edgemoe/topology.hpp"
#include "edgemoe/trace_io.hpp"
#include "test_support.hpp"

namespace edgemoe {
namespace {

bool has_violation(const MoEConfig& cfg, const std::string& text) {
  const auto v = validate_config(cfg);
  return std::find(v.begin(), v.end(), text) != v.end();
}

TEST(ValidateConfig, DefaultToyConfigIsValid) {
  const MoEConfig cfg = default_toy_config();
  EXPECT_EQ(cfg.routing_k, 1u);
  EXPECT_EQ(cfg.experts_per_layer, 8u);
  EXPECT_EQ(cfg.decoder_moe_layers, 6u);
  EXPECT_TRUE(validate_config(cfg).empty());
}

TEST(ValidateConfig, SingleExpertRejected) {
  MoEConfig cfg;
  cfg.experts_per_layer = 1;
  EXPECT_TRUE(has_violation(cfg, "experts_per_layer ≥ 2"));
}

TEST(ValidateConfig, RoutingKAboveExpertsRejected) {
  MoEConfig cfg;
  cfg.routing_k = 3;
  cfg.experts_per_layer = 2;
  EXPECT_TRUE(has_violation(cfg, "routing_k ≤ experts_per_layer"));
}

TEST(ValidateConfig, ReportsEveryViolation) {
  MoEConfig cfg;
  cfg.experts_per_layer = 1;
  cfg.decoder_moe_layers = 20;
  cfg.model_dim = 0;
  EXPECT_GE(validate_config(cfg).size(), 3u);
  EXPECT_THROW(require_valid(cfg), ConfigError);
}

TEST(ExpertSize, Int4MatchesHandArithmetic) {
  MoEConfig cfg;  // d=32, h=64
  // Two 2048-weight matrices at 4 bits plus one FP16 scale per output row (64 + 32).
  const std::uint64_t expected = 2 * (32 * 64 * 4 / 8) + 2 * (64 + 32);
  EXPECT_EQ(expected, 2240u);
  EXPECT_EQ(expert_size_bytes(cfg, Bitwidth::int4), expected);
}

TEST(ExpertSize, Fp32IsFourBytesPerWeightPlusScales) {
  for (auto [d, h] : {std::pair{32u, 64u}, std::pair{7u, 13u}, std::pair{1u, 1u}}) {
    MoEConfig cfg;
    cfg.model_dim = d;
    cfg.ffn_hidden_dim = h;
    EXPECT_EQ(expert_size_bytes(cfg, Bitwidth::fp32), 2ull * d * h * 4 + 2ull * (d + h));
  }
}

TEST(ExpertSize, StrictlyIncreasesAlongLadder) {
  MoEConfig cfg;
  for (std::size_t i = 1; i < kBitwidthLadder.size(); ++i) {
    EXPECT_LT(expert_size_bytes(cfg, kBitwidthLadder[i - 1]), expert_size_bytes(cfg, kBitwidthLadder[i]));
  }
}

TEST(ExpertSize, OddBitCountsRoundUpToWholeBytes) {
  EXPECT_EQ(matrix_size_bytes(1, 3, Bitwidth::int2), 1u + 2u);
  EXPECT_EQ(matrix_size_bytes(3, 3, Bitwidth::int4), 5u + 6u);
}

TEST(Bitwidth, ParseIsCaseInsensitiveAndRejectsUnknown) {
  EXPECT_EQ(parse_bitwidth("int4"), Bitwidth::int4);
  EXPECT_EQ(parse_bitwidth("FP16"), Bitwidth::fp16);
  EXPECT_THROW(parse_bitwidth("INT3"), ConfigError);
  for (auto b : kBitwidthLadder) EXPECT_EQ(parse_bitwidth(to_string(b)), b);
}

TEST(FlatIndex, RoundTripsEncoderFirst) {
  const MoEConfig cfg = default_toy_config();
  EXPECT_EQ(total_experts(cfg), 96u);
  EXPECT_EQ(flat_index(cfg, ExpertRef{Stage::decoder, 0, 0}), 48u);
  for (std::size_t i = 0; i < total_experts(cfg); ++i) EXPECT_EQ(flat_index(cfg, expert_at(cfg, i)), i);
}

TEST(ConfigDigest, IgnoresSeedButTracksTopology) {
  MoEConfig a;
  MoEConfig b = a;
  b.seed = 5;
  EXPECT_EQ(config_digest(a), config_digest(b));
  b.experts_per_layer = 16;
  EXPECT_NE(config_digest(a), config_digest(b));
  EXPECT_EQ(config_digest(a).size(), 16u);
}

TEST(ConfigFile, RoundTripsAndFillsDefaults) {
  testing::TempDir dir;
  const MoEConfig cfg = testing::small_config();
  save_config(cfg, dir / "cfg.json");
  EXPECT_EQ(load_config(dir / "cfg.json"), cfg);
  EXPECT_EQ(config_from_json(nlohmann::json::object()), default_toy_config());
}

TEST(TraceIo, WriteThenReadIsIdentity) {
  const MoEConfig cfg = testing::small_config();
  const TokenTrace trace = testing::uniform_trace(cfg, 3, 5, 1);
  std::stringstream buf;
  write_trace(trace, buf);
  EXPECT_EQ(read_trace(buf, "mem", &cfg), trace);
}

TEST(TraceIo, MalformedLineIsCitedByNumber) {
  const MoEConfig cfg = testing::small_config();
  const TokenTrace trace = testing::uniform_trace(cfg, 20, 2, 1);
  std::stringstream buf;
  write_trace(trace, buf);
  std::vector<std::string> lines;
  for (std::string line; std::getline(buf, line);) lines.push_back(line);
  ASSERT_GE(lines.size(), 17u);
  lines[16] = "{\"encoder\": [[0]], \"tokens\": oops";
  std::stringstream broken;
  for (const auto& l : lines) broken << l << '\n';
  try {
    read_trace(broken, "t.jsonl");
    FAIL() << "expected ParseError";
  } catch (const ParseError& e) {
    EXPECT_EQ(e.line(), 17u);
    EXPECT_NE(std::string(e.what()).find("t.jsonl:17"), std::string::npos);
  }
}

TEST(TraceIo, StructurallyInvalidRecordIsParseError) {
  const MoEConfig cfg = testing::small_config();
  TokenTrace trace = testing::uniform_trace(cfg, 1, 1, 1);
  trace.samples[0].decode_tokens[0][0].experts = {9};  // out of range for E=4
  std::stringstream buf;
  write_trace(trace, buf);
  EXPECT_THROW(read_trace(buf, "mem"), Error);
}

TEST(TraceIo, ForeignConfigIsDigestMismatch) {
  MoEConfig e8;
  MoEConfig e16 = e8;
  e16.experts_per_layer = 16;
  const TokenTrace trace = testing::uniform_trace(e8, 1, 2, 1);
  std::stringstream buf;
  write_trace(trace, buf);
  EXPECT_THROW(read_trace(buf, "mem", &e16), DigestMismatch);
}

TEST(TraceIo, FileRoundTrip) {
  testing::TempDir dir;
  const MoEConfig cfg = testing::small_config();
  const TokenTrace trace = testing::uniform_trace(cfg, 2, 4, 9);
  write_trace(trace, dir / "t.jsonl");
  EXPECT_EQ(read_trace(dir / "t.jsonl", &cfg), trace);
  EXPECT_THROW(read_trace(dir / "missing.jsonl"), Error);
}

TEST(ValidateTrace, RejectsDuplicateExperts) {
  MoEConfig cfg = testing::small_config();
  cfg.routing_k = 2;
  TokenTrace trace = testing::uniform_trace(cfg, 1, 1, 3);
  EXPECT_NO_THROW(validate_trace(trace));
  trace.samples[0].decode_tokens[0][1].experts = {2, 2};
  EXPECT_THROW(validate_trace(trace), ConfigError);
}

TEST(ValidateTrace, RejectsWrongStepCount) {
  const MoEConfig cfg = testing::small_config();
  TokenTrace trace = testing::uniform_trace(cfg, 1, 1, 3);
  trace.samples[0].decode_tokens[0].pop_back();
  EXPECT_THROW(validate_trace(trace), ConfigError);
}

}  // namespace
}  // namespace edgemoe
