#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "edgemoe/quant_plan.hpp"
#include "edgemoe/quantizer.hpp"
#include "edgemoe/topology.hpp"

namespace edgemoe {

// Output classes of the toy head.
inline constexpr std::size_t kToyClasses = 16;

// Residual gain of every FFN/MoE branch: x <- rms(x + g * ffn(x)). Keeps
// uniform INT4 experts within a few percent of FP32 agreement at the
// default scale.
inline constexpr float kToyBranchScale = 0.07f;

// One transformer block of the toy network. Every block has a d x d mixing
// matrix standing in for attention (x <- rms(x + mix * x)); MoE blocks then
// route to experts, dense blocks run a single FFN.
struct ToyLayer {
  bool moe = false;
  std::uint32_t moe_index = 0;
  WeightMatrix mix;                    // d x d
  WeightMatrix router;                 // E x d, MoE blocks only
  std::vector<ExpertWeights> experts;  // E entries, MoE blocks only
  ExpertWeights dense;                 // dense blocks only
};

// Randomly initialised MoE network standing in for a pretrained model. All
// weights derive from cfg.seed; expert j's FFN is scaled by 0.5 + j/E so
// experts differ in quantization sensitivity.
class ToyMoEModel {
 public:
  explicit ToyMoEModel(const MoEConfig& cfg);

  const MoEConfig& config() const { return cfg_; }
  // Config digest plus seed: identifies the exact weights.
  const std::string& digest() const { return digest_; }

  const std::vector<ToyLayer>& layers(Stage stage) const {
    return stage == Stage::encoder ? encoder_ : decoder_;
  }
  const WeightMatrix& head() const { return head_; }
  const ExpertWeights& expert(const ExpertRef& e) const;

  // Overwrites one expert's weights (ablations and test fixtures).
  void replace_expert(const ExpertRef& e, ExpertWeights w);

 private:
  ToyLayer& moe_layer(const ExpertRef& e);

  MoEConfig cfg_;
  std::string digest_;
  std::vector<ToyLayer> encoder_;
  std::vector<ToyLayer> decoder_;
  WeightMatrix head_;  // C x d
};

ToyMoEModel build_toy_model(const MoEConfig& cfg);

// True when block t of an L-block stack with M MoE blocks is an MoE block
// (MoE blocks spread evenly, every other block for M = L/2).
bool is_moe_block(std::uint32_t t, std::uint32_t blocks, std::uint32_t moe_blocks);

struct MatrixShape {
  std::size_t rows = 0;
  std::size_t cols = 0;
};

// Shapes of every non-expert ("hot") weight matrix of the toy network.
std::vector<MatrixShape> non_expert_shapes(const MoEConfig& cfg);
std::uint64_t non_expert_size_bytes(const MoEConfig& cfg, Bitwidth b);

struct ForwardResult {
  std::vector<float> logits;         // kToyClasses
  std::vector<ActivationStep> path;  // encoder MoE layers, then decoder MoE layers
};

// The model's weights as seen through a plan: each expert requantized at its
// planned bitwidth, every non-expert matrix at the plan's non-expert
// bitwidth. A null plan means unmodified FP32 weights.
class ResolvedModel {
 public:
  ResolvedModel(const ToyMoEModel& model, const QuantPlan* plan);

  // Runs x through one stack in place, appending one step per MoE block.
  void run_stack(Stage stage, std::vector<float>& x, std::vector<ActivationStep>* path) const;
  ForwardResult forward(std::span<const float> x) const;
  std::vector<float> head_logits(std::span<const float> hidden) const;

 private:
  MoEConfig cfg_;
  std::vector<ToyLayer> encoder_;
  std::vector<ToyLayer> decoder_;
  WeightMatrix head_;
};

// Throws ConfigError on dimension mismatch or non-finite input.
ForwardResult forward(const ToyMoEModel& model, const QuantPlan* plan, std::span<const float> x);

struct ProbeSet {
  std::string model_digest;
  std::vector<std::vector<float>> inputs;
  std::vector<std::uint32_t> reference_labels;  // FP32 head argmax per input
};

ProbeSet make_probes(const ToyMoEModel& model, std::size_t count, std::uint64_t seed);

// Fraction of probes whose head argmax under `plan` matches the FP32
// reference. Throws DigestMismatch if the probes belong to another model.
double evaluate_agreement(const ToyMoEModel& model, const QuantPlan& plan, const ProbeSet& probes);

std::uint32_t argmax(std::span<const float> v);

struct EmitOptions {
  std::size_t samples = 200;
  std::size_t tokens_per_sample = 50;
  std::uint64_t seed = 7;
  // Std-dev of the fresh noise mixed into each next-token input.
  float token_noise = 1.0f;
};

// Runs the FP32 model autoregressively: each sample's encoder stack sees a
// random input, and each decode token's input is the previous token's
// output hidden state plus noise.
TokenTrace emit_trace(const ToyMoEModel& model, const EmitOptions& options);

}  // namespace edgemoe
