#include "edgemoe/toy_model.hpp"

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <random>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

using RowMatrix = Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMatrixMap = Eigen::Map<const RowMatrix>;
using Vector = Eigen::VectorXf;

ConstMatrixMap view(const WeightMatrix& w) {
  return ConstMatrixMap(w.values.data(), static_cast<Eigen::Index>(w.rows), static_cast<Eigen::Index>(w.cols));
}

WeightMatrix gaussian(std::mt19937_64& rng, std::size_t rows, std::size_t cols, float stddev) {
  std::normal_distribution<float> dist(0.0f, stddev);
  WeightMatrix w(rows, cols);
  for (float& v : w.values) v = dist(rng);
  return w;
}

ExpertWeights gaussian_ffn(std::mt19937_64& rng, std::size_t d, std::size_t h, float gain) {
  ExpertWeights f;
  f.up = gaussian(rng, h, d, gain * std::sqrt(2.0f / static_cast<float>(d)));
  f.down = gaussian(rng, d, h, gain * std::sqrt(1.0f / static_cast<float>(h)));
  return f;
}

void rms_normalize(Vector& x) {
  const float ms = x.squaredNorm() / static_cast<float>(x.size());
  x /= std::sqrt(ms + 1e-6f);
}

Vector run_ffn(const ExpertWeights& f, const Vector& x) {
  Vector hidden = (view(f.up) * x).cwiseMax(0.0f);
  return view(f.down) * hidden;
}

std::vector<ToyLayer> build_stack(std::mt19937_64& rng, const MoEConfig& cfg, std::uint32_t blocks,
                                  std::uint32_t moe_blocks) {
  const std::size_t d = cfg.model_dim;
  const std::size_t h = cfg.ffn_hidden_dim;
  const std::size_t E = cfg.experts_per_layer;
  std::vector<ToyLayer> stack;
  std::uint32_t moe_seen = 0;
  for (std::uint32_t t = 0; t < blocks; ++t) {
    ToyLayer layer;
    layer.mix = gaussian(rng, d, d, 0.5f / std::sqrt(static_cast<float>(d)));
    layer.moe = is_moe_block(t, blocks, moe_blocks);
    if (layer.moe) {
      layer.moe_index = moe_seen++;
      layer.router = gaussian(rng, E, d, 1.0f / std::sqrt(static_cast<float>(d)));
      for (std::size_t j = 0; j < E; ++j) {
        const float gain = 0.5f + static_cast<float>(j) / static_cast<float>(E);
        layer.experts.push_back(gaussian_ffn(rng, d, h, gain));
      }
    } else {
      layer.dense = gaussian_ffn(rng, d, h, 1.0f);
    }
    stack.push_back(std::move(layer));
  }
  return stack;
}

void resolve_stack(std::vector<ToyLayer>& stack, Stage stage, const MoEConfig& cfg, const QuantPlan& plan) {
  const Bitwidth ne = plan.non_expert_bitwidth;
  for (auto& layer : stack) {
    layer.mix = requantize(layer.mix, ne);
    if (layer.moe) {
      layer.router = requantize(layer.router, ne);
      for (std::uint32_t j = 0; j < layer.experts.size(); ++j) {
        const Bitwidth b = plan.at(cfg, ExpertRef{stage, layer.moe_index, j});
        layer.experts[j] = requantize(layer.experts[j], b);
      }
    } else {
      layer.dense = requantize(layer.dense, ne);
    }
  }
}

// Indices of the k largest entries, descending; ties go to the lower index.
std::vector<std::uint32_t> top_k(const Vector& logits, std::size_t k) {
  std::vector<std::uint32_t> idx(static_cast<std::size_t>(logits.size()));
  std::iota(idx.begin(), idx.end(), 0u);
  std::partial_sort(idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(k), idx.end(),
                    [&](std::uint32_t a, std::uint32_t b) {
                      if (logits[a] != logits[b]) return logits[a] > logits[b];
                      return a < b;
                    });
  idx.resize(k);
  return idx;
}

}  // namespace

bool is_moe_block(std::uint32_t t, std::uint32_t blocks, std::uint32_t moe_blocks) {
  if (blocks == 0) return false;
  const std::uint64_t before = static_cast<std::uint64_t>(t) * moe_blocks / blocks;
  const std::uint64_t after = static_cast<std::uint64_t>(t + 1) * moe_blocks / blocks;
  return after > before;
}

ToyMoEModel::ToyMoEModel(const MoEConfig& cfg) : cfg_(cfg) {
  require_valid(cfg);
  char seed_hex[17];
  std::snprintf(seed_hex, sizeof seed_hex, "%016llx", static_cast<unsigned long long>(cfg.seed));
  digest_ = config_digest(cfg) + "-" + seed_hex;
  std::mt19937_64 rng(cfg.seed);
  encoder_ = build_stack(rng, cfg, cfg.encoder_layers, cfg.encoder_moe_layers);
  decoder_ = build_stack(rng, cfg, cfg.decoder_layers, cfg.decoder_moe_layers);
  head_ = gaussian(rng, kToyClasses, cfg.model_dim, 1.0f / std::sqrt(static_cast<float>(cfg.model_dim)));
}

ToyLayer& ToyMoEModel::moe_layer(const ExpertRef& e) {
  if (!in_range(cfg_, e)) throw ConfigError("expert " + to_string(e) + " out of range");
  auto& stack = e.stage == Stage::encoder ? encoder_ : decoder_;
  for (auto& layer : stack) {
    if (layer.moe && layer.moe_index == e.layer) return layer;
  }
  throw ConfigError("no MoE block for " + to_string(e));
}

const ExpertWeights& ToyMoEModel::expert(const ExpertRef& e) const {
  return const_cast<ToyMoEModel*>(this)->moe_layer(e).experts[e.expert];
}

void ToyMoEModel::replace_expert(const ExpertRef& e, ExpertWeights w) {
  auto& slot = moe_layer(e).experts[e.expert];
  if (w.up.rows != slot.up.rows || w.up.cols != slot.up.cols || w.down.rows != slot.down.rows ||
      w.down.cols != slot.down.cols) {
    throw ConfigError("replacement expert has the wrong shape");
  }
  slot = std::move(w);
}

ToyMoEModel build_toy_model(const MoEConfig& cfg) { return ToyMoEModel(cfg); }

std::vector<MatrixShape> non_expert_shapes(const MoEConfig& cfg) {
  const std::size_t d = cfg.model_dim;
  const std::size_t h = cfg.ffn_hidden_dim;
  std::vector<MatrixShape> shapes;
  auto stack = [&](std::uint32_t blocks, std::uint32_t moe_blocks) {
    for (std::uint32_t t = 0; t < blocks; ++t) {
      shapes.push_back({d, d});
      if (is_moe_block(t, blocks, moe_blocks)) {
        shapes.push_back({cfg.experts_per_layer, d});
      } else {
        shapes.push_back({h, d});
        shapes.push_back({d, h});
      }
    }
  };
  stack(cfg.encoder_layers, cfg.encoder_moe_layers);
  stack(cfg.decoder_layers, cfg.decoder_moe_layers);
  shapes.push_back({kToyClasses, d});
  return shapes;
}

std::uint64_t non_expert_size_bytes(const MoEConfig& cfg, Bitwidth b) {
  std::uint64_t total = 0;
  for (const auto& s : non_expert_shapes(cfg)) total += matrix_size_bytes(s.rows, s.cols, b);
  return total;
}

ResolvedModel::ResolvedModel(const ToyMoEModel& model, const QuantPlan* plan)
    : cfg_(model.config()),
      encoder_(model.layers(Stage::encoder)),
      decoder_(model.layers(Stage::decoder)),
      head_(model.head()) {
  if (plan == nullptr) return;
  check_plan(*plan, cfg_);
  resolve_stack(encoder_, Stage::encoder, cfg_, *plan);
  resolve_stack(decoder_, Stage::decoder, cfg_, *plan);
  head_ = requantize(head_, plan->non_expert_bitwidth);
}

void ResolvedModel::run_stack(Stage stage, std::vector<float>& x_io, std::vector<ActivationStep>* path) const {
  const auto& stack = stage == Stage::encoder ? encoder_ : decoder_;
  Vector x = Eigen::Map<const Vector>(x_io.data(), static_cast<Eigen::Index>(x_io.size()));
  for (const auto& layer : stack) {
    x += view(layer.mix) * x;
    rms_normalize(x);
    Vector y;
    if (layer.moe) {
      const Vector logits = view(layer.router) * x;
      const auto chosen = top_k(logits, cfg_.routing_k);
      y = Vector::Zero(x.size());
      if (chosen.size() == 1) {
        y = run_ffn(layer.experts[chosen[0]], x);
      } else {
        // Softmax over the selected logits.
        const float top = logits[chosen[0]];
        float norm = 0.0f;
        for (auto j : chosen) norm += std::exp(logits[j] - top);
        for (auto j : chosen) y += (std::exp(logits[j] - top) / norm) * run_ffn(layer.experts[j], x);
      }
      if (path != nullptr) path->push_back(ActivationStep{chosen});
    } else {
      y = run_ffn(layer.dense, x);
    }
    x += kToyBranchScale * y;
    rms_normalize(x);
  }
  std::copy(x.data(), x.data() + x.size(), x_io.begin());
}

std::vector<float> ResolvedModel::head_logits(std::span<const float> hidden) const {
  const Vector h = Eigen::Map<const Vector>(hidden.data(), static_cast<Eigen::Index>(hidden.size()));
  const Vector out = view(head_) * h;
  return {out.data(), out.data() + out.size()};
}

ForwardResult ResolvedModel::forward(std::span<const float> x) const {
  if (x.size() != cfg_.model_dim) {
    throw ConfigError("input has dimension " + std::to_string(x.size()) + ", model_dim is " +
                      std::to_string(cfg_.model_dim));
  }
  for (float v : x) {
    if (!std::isfinite(v)) throw ConfigError("input contains a non-finite value");
  }
  ForwardResult result;
  std::vector<float> hidden(x.begin(), x.end());
  run_stack(Stage::encoder, hidden, &result.path);
  run_stack(Stage::decoder, hidden, &result.path);
  result.logits = head_logits(hidden);
  return result;
}

ForwardResult forward(const ToyMoEModel& model, const QuantPlan* plan, std::span<const float> x) {
  return ResolvedModel(model, plan).forward(x);
}

std::uint32_t argmax(std::span<const float> v) {
  return static_cast<std::uint32_t>(std::max_element(v.begin(), v.end()) - v.begin());
}

ProbeSet make_probes(const ToyMoEModel& model, std::size_t count, std::uint64_t seed) {
  if (count == 0) throw ConfigError("probe set needs at least one input");
  ProbeSet probes;
  probes.model_digest = model.digest();
  std::mt19937_64 rng(seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  const ResolvedModel reference(model, nullptr);
  for (std::size_t i = 0; i < count; ++i) {
    std::vector<float> x(model.config().model_dim);
    for (float& v : x) v = dist(rng);
    probes.reference_labels.push_back(argmax(reference.forward(x).logits));
    probes.inputs.push_back(std::move(x));
  }
  return probes;
}

double evaluate_agreement(const ToyMoEModel& model, const QuantPlan& plan, const ProbeSet& probes) {
  if (probes.model_digest != model.digest()) throw DigestMismatch("probe set", model.digest(), probes.model_digest);
  const ResolvedModel resolved(model, &plan);
  std::size_t agree = 0;
  for (std::size_t i = 0; i < probes.inputs.size(); ++i) {
    if (argmax(resolved.forward(probes.inputs[i]).logits) == probes.reference_labels[i]) ++agree;
  }
  return static_cast<double>(agree) / static_cast<double>(probes.inputs.size());
}

TokenTrace emit_trace(const ToyMoEModel& model, const EmitOptions& options) {
  const MoEConfig& cfg = model.config();
  TokenTrace trace = make_trace_header(cfg);
  const ResolvedModel fp32(model, nullptr);
  std::mt19937_64 rng(options.seed);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  for (std::size_t s = 0; s < options.samples; ++s) {
    TraceSample sample;
    std::vector<float> x(cfg.model_dim);
    for (float& v : x) v = dist(rng);
    fp32.run_stack(Stage::encoder, x, &sample.encoder_steps);
    std::vector<float> u = x;
    for (std::size_t t = 0; t < options.tokens_per_sample; ++t) {
      std::vector<ActivationStep> steps;
      fp32.run_stack(Stage::decoder, u, &steps);
      sample.decode_tokens.push_back(std::move(steps));
      Vector next = Eigen::Map<const Vector>(u.data(), static_cast<Eigen::Index>(u.size()));
      for (Eigen::Index i = 0; i < next.size(); ++i) next[i] += options.token_noise * dist(rng);
      rms_normalize(next);
      std::copy(next.data(), next.data() + next.size(), u.begin());
    }
    trace.samples.push_back(std::move(sample));
  }
  return trace;
}

}  // namespace edgemoe
