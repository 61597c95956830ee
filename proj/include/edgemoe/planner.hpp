#pragma once

#include <cstddef>
#include <map>
#include <string>
#include <vector>

#include "edgemoe/quant_plan.hpp"
#include "edgemoe/toy_model.hpp"

namespace edgemoe {

// Accuracy lost when one expert alone drops from `high` to `low` while all
// others stay at `high`. Entries may be slightly negative (argmax noise).
struct ImportanceHeatmap {
  std::string config_digest;
  Bitwidth low = Bitwidth::int2;
  Bitwidth high = Bitwidth::int4;
  double reference_accuracy = 1.0;  // accuracy of the all-high plan
  std::vector<double> loss;         // indexed by flat_index()
};

ImportanceHeatmap profile_importance(const ToyMoEModel& model, const ProbeSet& probes,
                                     Bitwidth low = Bitwidth::int2, Bitwidth high = Bitwidth::int4);

// Flat expert indices, least important first: ascending loss clamped at 0,
// ties by flat index (stage, layer, expert).
std::vector<std::size_t> importance_order(const ImportanceHeatmap& heatmap);

nlohmann::json heatmap_to_json(const ImportanceHeatmap& heatmap, const MoEConfig& cfg);

struct SweepResult {
  std::map<Bitwidth, double> loss;  // uniform-expert plan -> 1 - accuracy
};

SweepResult uniform_sweep(const ToyMoEModel& model, const ProbeSet& probes,
                          const std::vector<Bitwidth>& bitwidths = {kBitwidthLadder.begin(),
                                                                    kBitwidthLadder.end()});

struct BitwidthBounds {
  Bitwidth lower = Bitwidth::int8;
  Bitwidth upper = Bitwidth::fp32;
};

// Lowest adjacent pair of swept rungs with loss(lower) > P >= loss(upper);
// (INT2, INT2) when INT2 already meets P.
BitwidthBounds choose_bounds(const SweepResult& sweep, double tolerable_loss);

// The K least important experts at bounds.lower, the rest at bounds.upper.
QuantPlan plan_with_low_count(const MoEConfig& cfg, const std::vector<std::size_t>& order, std::size_t k,
                              BitwidthBounds bounds, Bitwidth non_expert);

// Measured loss of plan(K) for every K in [0, total experts].
std::vector<double> loss_curve(const ToyMoEModel& model, const ProbeSet& probes, const ImportanceHeatmap& heatmap,
                               BitwidthBounds bounds, Bitwidth non_expert = Bitwidth::fp32);

struct SelectOptions {
  // Rungs tried for non-expert weights, smallest first.
  std::vector<Bitwidth> non_expert_candidates{Bitwidth::int4, Bitwidth::int8, Bitwidth::fp16, Bitwidth::fp32};
};

// Bisection on K for the largest plan(K) with measured loss <= P, then the
// smallest non-expert rung that keeps that plan within P. The returned plan
// records P and its measured loss. Throws ConfigError unless 0 <= P < 1.
QuantPlan select_bitwidths(const ToyMoEModel& model, const ProbeSet& probes, const ImportanceHeatmap& heatmap,
                           const SweepResult& sweep, double tolerable_loss, const SelectOptions& options = {});

// Sum of expert sizes at their planned bitwidths plus non-expert weights.
std::uint64_t plan_storage_bytes(const QuantPlan& plan, const MoEConfig& cfg);

}  // namespace edgemoe
