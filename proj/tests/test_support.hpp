#pragma once

#include <algorithm>
#include <atomic>
#include <cstdint>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "edgemoe/topology.hpp"

namespace edgemoe::testing {

// Scratch directory removed on destruction.
class TempDir {
 public:
  TempDir() {
    static std::atomic<int> counter{0};
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() /
            ("edgemoe-test-" + std::to_string(rd()) + "-" + std::to_string(counter++));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  TempDir(const TempDir&) = delete;
  TempDir& operator=(const TempDir&) = delete;

  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

// Small config for fast structural tests.
inline MoEConfig small_config() {
  MoEConfig cfg;
  cfg.encoder_layers = 2;
  cfg.encoder_moe_layers = 1;
  cfg.decoder_layers = 6;
  cfg.decoder_moe_layers = 3;
  cfg.experts_per_layer = 4;
  cfg.model_dim = 8;
  cfg.ffn_hidden_dim = 16;
  return cfg;
}

// Trace whose every step draws routing_k distinct experts uniformly.
inline TokenTrace uniform_trace(const MoEConfig& cfg, std::size_t samples, std::size_t tokens, std::uint64_t seed) {
  TokenTrace trace = make_trace_header(cfg);
  std::mt19937_64 rng(seed);
  auto step = [&] {
    std::vector<std::uint32_t> all(cfg.experts_per_layer);
    for (std::uint32_t j = 0; j < all.size(); ++j) all[j] = j;
    std::shuffle(all.begin(), all.end(), rng);
    all.resize(cfg.routing_k);
    return ActivationStep{all};
  };
  for (std::size_t s = 0; s < samples; ++s) {
    TraceSample sample;
    for (std::uint32_t l = 0; l < cfg.encoder_moe_layers; ++l) sample.encoder_steps.push_back(step());
    for (std::size_t t = 0; t < tokens; ++t) {
      std::vector<ActivationStep> token;
      for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) token.push_back(step());
      sample.decode_tokens.push_back(std::move(token));
    }
    trace.samples.push_back(std::move(sample));
  }
  return trace;
}

}  // namespace edgemoe::testing
