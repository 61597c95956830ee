#include "edgemoe/quantizer.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <string>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

constexpr float kFp16Max = 65504.0f;

// Smallest FP16 value strictly greater than a non-negative FP16 value.
float next_fp16_up(float x) {
  Eigen::half h(x);
  h.x = static_cast<std::uint16_t>(h.x + 1);
  return static_cast<float>(h);
}

}  // namespace

int max_code(Bitwidth b) {
  if (!is_quantizing(b)) throw ConfigError(std::string(to_string(b)) + " is not a quantizing bitwidth");
  return (1 << (bits_per_weight(b) - 1)) - 1;
}

float round_to_fp16(float x) { return static_cast<float>(Eigen::half(x)); }

QuantizedChannel quantize_channel(std::span<const float> weights, Bitwidth b) {
  if (!is_quantizing(b)) throw ConfigError(std::string(to_string(b)) + " is not a quantizing bitwidth");
  if (weights.empty()) throw ConfigError("cannot quantize an empty channel");

  float max_abs = 0.0f;
  for (float w : weights) {
    if (!std::isfinite(w)) throw ConfigError("cannot quantize a non-finite weight");
    max_abs = std::max(max_abs, std::fabs(w));
  }

  const int qmax = max_code(b);
  QuantizedChannel qc;
  qc.bitwidth = b;
  qc.codes.assign(weights.size(), 0);
  if (max_abs == 0.0f) return qc;

  if (max_abs / static_cast<float>(qmax) > kFp16Max) {
    throw ConfigError("channel magnitude exceeds the FP16 scale range");
  }
  float scale = round_to_fp16(max_abs / static_cast<float>(qmax));
  // FP16 rounding may shrink the scale; grow it one ulp at a time until the
  // largest weight no longer rounds past qmax (underflow to 0 included).
  while (scale == 0.0f || static_cast<double>(max_abs) / scale >= qmax + 0.5) scale = next_fp16_up(scale);
  qc.scale = scale;

  for (std::size_t i = 0; i < weights.size(); ++i) {
    const double q = std::round(static_cast<double>(weights[i]) / scale);
    qc.codes[i] = static_cast<std::int8_t>(std::clamp(q, -static_cast<double>(qmax), static_cast<double>(qmax)));
  }
  return qc;
}

void dequantize_channel_into(const QuantizedChannel& qc, std::span<float> out) {
  for (std::size_t i = 0; i < qc.codes.size(); ++i) out[i] = static_cast<float>(qc.codes[i]) * qc.scale;
}

std::vector<float> dequantize_channel(const QuantizedChannel& qc) {
  std::vector<float> out(qc.codes.size());
  dequantize_channel_into(qc, out);
  return out;
}

QuantizedMatrix quantize_matrix(const WeightMatrix& w, Bitwidth b) {
  QuantizedMatrix q;
  q.rows = w.rows;
  q.cols = w.cols;
  q.bitwidth = b;
  if (is_quantizing(b)) {
    q.channels.reserve(w.rows);
    for (std::size_t r = 0; r < w.rows; ++r) q.channels.push_back(quantize_channel(w.row(r), b));
  } else if (b == Bitwidth::fp16) {
    q.passthrough.resize(w.values.size());
    std::transform(w.values.begin(), w.values.end(), q.passthrough.begin(), round_to_fp16);
  } else {
    q.passthrough = w.values;
  }
  return q;
}

WeightMatrix QuantizedMatrix::dequantize() const {
  WeightMatrix w(rows, cols);
  if (is_quantizing(bitwidth)) {
    for (std::size_t r = 0; r < rows; ++r) dequantize_channel_into(channels[r], w.row(r));
  } else {
    w.values = passthrough;
  }
  return w;
}

ExpertWeights QuantizedExpert::dequantize() const { return {up.dequantize(), down.dequantize()}; }

QuantizedExpert quantize_expert(const MoEConfig& cfg, const ExpertWeights& w, Bitwidth b) {
  const std::size_t d = cfg.model_dim;
  const std::size_t h = cfg.ffn_hidden_dim;
  if (w.up.rows != h || w.up.cols != d || w.down.rows != d || w.down.cols != h) {
    throw ConfigError("expert shape mismatch: expected up " + std::to_string(h) + "x" + std::to_string(d) +
                      " and down " + std::to_string(d) + "x" + std::to_string(h));
  }
  return {quantize_matrix(w.up, b), quantize_matrix(w.down, b)};
}

WeightMatrix requantize(const WeightMatrix& w, Bitwidth b) {
  if (b == Bitwidth::fp32) return w;
  return quantize_matrix(w, b).dequantize();
}

ExpertWeights requantize(const ExpertWeights& w, Bitwidth b) { return {requantize(w.up, b), requantize(w.down, b)}; }

}  // namespace edgemoe
