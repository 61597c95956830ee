#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "edgemoe/topology.hpp"

namespace edgemoe {

// Row-major dense matrix of FP32 weights. Rows are output channels.
struct WeightMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  std::vector<float> values;

  WeightMatrix() = default;
  WeightMatrix(std::size_t r, std::size_t c) : rows(r), cols(c), values(r * c, 0.0f) {}

  std::span<const float> row(std::size_t i) const { return {values.data() + i * cols, cols}; }
  std::span<float> row(std::size_t i) { return {values.data() + i * cols, cols}; }
  float& at(std::size_t r, std::size_t c) { return values[r * cols + c]; }
  float at(std::size_t r, std::size_t c) const { return values[r * cols + c]; }

  bool operator==(const WeightMatrix&) const = default;
};

// An expert FFN: hidden = relu(up * x), out = down * hidden.
struct ExpertWeights {
  WeightMatrix up;    // h x d
  WeightMatrix down;  // d x h

  bool operator==(const ExpertWeights&) const = default;
};

// Largest code magnitude of the symmetric range: 2^(b-1) - 1 (INT2 -> 1).
int max_code(Bitwidth b);

// Round a float to the nearest FP16-representable value (ties to even).
float round_to_fp16(float x);

struct QuantizedChannel {
  std::vector<std::int8_t> codes;
  float scale = 0.0f;  // FP16-representable; 0 only for an all-zero channel
  Bitwidth bitwidth = Bitwidth::int8;
};

// Symmetric channel-wise linear quantization: scale = max|w| / (2^(b-1)-1)
// held at FP16 precision, code = round_half_away(w / scale). Throws
// ConfigError for FP16/FP32 ("not a quantizing bitwidth"), empty or
// non-finite input.
QuantizedChannel quantize_channel(std::span<const float> weights, Bitwidth b);

std::vector<float> dequantize_channel(const QuantizedChannel& qc);
void dequantize_channel_into(const QuantizedChannel& qc, std::span<float> out);

// A matrix stored at one bitwidth. Integer bitwidths keep one channel per
// row; FP16/FP32 keep the values themselves (FP16 rounded).
struct QuantizedMatrix {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Bitwidth bitwidth = Bitwidth::fp32;
  std::vector<QuantizedChannel> channels;
  std::vector<float> passthrough;

  std::uint64_t size_bytes() const { return matrix_size_bytes(rows, cols, bitwidth); }
  WeightMatrix dequantize() const;
};

QuantizedMatrix quantize_matrix(const WeightMatrix& w, Bitwidth b);

struct QuantizedExpert {
  QuantizedMatrix up;
  QuantizedMatrix down;

  std::uint64_t size_bytes() const { return up.size_bytes() + down.size_bytes(); }
  ExpertWeights dequantize() const;
};

// Throws ConfigError if the matrices are not h x d and d x h for cfg.
QuantizedExpert quantize_expert(const MoEConfig& cfg, const ExpertWeights& w, Bitwidth b);

// quantize -> dequantize in one step; identity for FP32.
WeightMatrix requantize(const WeightMatrix& w, Bitwidth b);
ExpertWeights requantize(const ExpertWeights& w, Bitwidth b);

}  // namespace edgemoe
