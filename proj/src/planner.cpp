#include "edgemoe/planner.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

double loss_of(const ToyMoEModel& model, const ProbeSet& probes, const QuantPlan& plan) {
  return 1.0 - evaluate_agreement(model, plan, probes);
}

}  // namespace

ImportanceHeatmap profile_importance(const ToyMoEModel& model, const ProbeSet& probes, Bitwidth low, Bitwidth high) {
  const MoEConfig& cfg = model.config();
  ImportanceHeatmap heatmap;
  heatmap.config_digest = config_digest(cfg);
  heatmap.low = low;
  heatmap.high = high;
  QuantPlan plan = uniform_plan(cfg, high);
  heatmap.reference_accuracy = evaluate_agreement(model, plan, probes);
  const std::size_t total = total_experts(cfg);
  heatmap.loss.resize(total);
  for (std::size_t i = 0; i < total; ++i) {
    plan.expert_bits[i] = low;
    heatmap.loss[i] = heatmap.reference_accuracy - evaluate_agreement(model, plan, probes);
    plan.expert_bits[i] = high;
  }
  return heatmap;
}

std::vector<std::size_t> importance_order(const ImportanceHeatmap& heatmap) {
  std::vector<std::size_t> order(heatmap.loss.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    return std::max(heatmap.loss[a], 0.0) < std::max(heatmap.loss[b], 0.0);
  });
  return order;
}

nlohmann::json heatmap_to_json(const ImportanceHeatmap& heatmap, const MoEConfig& cfg) {
  auto stage_rows = [&](Stage stage) {
    nlohmann::json rows = nlohmann::json::array();
    for (std::uint32_t l = 0; l < moe_layers(cfg, stage); ++l) {
      nlohmann::json row = nlohmann::json::array();
      for (std::uint32_t j = 0; j < cfg.experts_per_layer; ++j) {
        row.push_back(heatmap.loss[flat_index(cfg, ExpertRef{stage, l, j})]);
      }
      rows.push_back(std::move(row));
    }
    return rows;
  };
  return {{"version", 1},
          {"config_digest", heatmap.config_digest},
          {"low", to_string(heatmap.low)},
          {"high", to_string(heatmap.high)},
          {"reference_accuracy", heatmap.reference_accuracy},
          {"loss", {{"encoder", stage_rows(Stage::encoder)}, {"decoder", stage_rows(Stage::decoder)}}}};
}

SweepResult uniform_sweep(const ToyMoEModel& model, const ProbeSet& probes, const std::vector<Bitwidth>& bitwidths) {
  SweepResult sweep;
  for (Bitwidth b : bitwidths) sweep.loss[b] = loss_of(model, probes, uniform_plan(model.config(), b));
  return sweep;
}

BitwidthBounds choose_bounds(const SweepResult& sweep, double tolerable_loss) {
  std::vector<std::pair<Bitwidth, double>> rungs(sweep.loss.begin(), sweep.loss.end());
  if (rungs.empty()) throw ConfigError("uniform sweep is empty");
  if (rungs.front().first == Bitwidth::int2 && rungs.front().second <= tolerable_loss) {
    return {Bitwidth::int2, Bitwidth::int2};
  }
  for (std::size_t i = 0; i + 1 < rungs.size(); ++i) {
    if (rungs[i].second > tolerable_loss && rungs[i + 1].second <= tolerable_loss) {
      return {rungs[i].first, rungs[i + 1].first};
    }
  }
  return {Bitwidth::int8, Bitwidth::fp32};
}

QuantPlan plan_with_low_count(const MoEConfig& cfg, const std::vector<std::size_t>& order, std::size_t k,
                              BitwidthBounds bounds, Bitwidth non_expert) {
  if (k > order.size()) throw ConfigError("low-bit count exceeds the number of experts");
  QuantPlan plan = uniform_plan(cfg, bounds.upper, non_expert);
  for (std::size_t i = 0; i < k; ++i) plan.expert_bits[order[i]] = bounds.lower;
  plan.lower_bound = bounds.lower;
  plan.upper_bound = bounds.upper;
  plan.recount();
  // Collapsed bounds put every expert at the lower rung.
  if (bounds.lower == bounds.upper) plan.low_bit_count = plan.expert_bits.size();
  return plan;
}

std::vector<double> loss_curve(const ToyMoEModel& model, const ProbeSet& probes, const ImportanceHeatmap& heatmap,
                               BitwidthBounds bounds, Bitwidth non_expert) {
  const auto order = importance_order(heatmap);
  std::vector<double> curve;
  for (std::size_t k = 0; k <= order.size(); ++k) {
    curve.push_back(loss_of(model, probes, plan_with_low_count(model.config(), order, k, bounds, non_expert)));
  }
  return curve;
}

QuantPlan select_bitwidths(const ToyMoEModel& model, const ProbeSet& probes, const ImportanceHeatmap& heatmap,
                           const SweepResult& sweep, double tolerable_loss, const SelectOptions& options) {
  if (!(tolerable_loss >= 0.0 && tolerable_loss < 1.0)) {
    throw ConfigError("tolerable loss must lie in [0, 1), got " + std::to_string(tolerable_loss));
  }
  const MoEConfig& cfg = model.config();
  if (heatmap.config_digest != config_digest(cfg)) {
    throw DigestMismatch("heatmap", config_digest(cfg), heatmap.config_digest);
  }
  const auto order = importance_order(heatmap);
  const BitwidthBounds bounds = choose_bounds(sweep, tolerable_loss);
  auto measure = [&](std::size_t k, Bitwidth ne) {
    return loss_of(model, probes, plan_with_low_count(cfg, order, k, bounds, ne));
  };

  std::size_t best = order.size();
  if (bounds.lower != bounds.upper) {
    // Invariant: plan(lo) meets P, plan(hi) does not.
    std::size_t lo = 0;
    std::size_t hi = order.size();
    auto swept = [&](Bitwidth b) {
      auto it = sweep.loss.find(b);
      return it == sweep.loss.end() ? measure(b == bounds.upper ? 0 : order.size(), Bitwidth::fp32) : it->second;
    };
    if (swept(bounds.upper) > tolerable_loss) {
      best = 0;
    } else if (swept(bounds.lower) <= tolerable_loss) {
      best = order.size();
    } else {
      while (hi - lo > 1) {
        const std::size_t mid = lo + (hi - lo) / 2;
        (measure(mid, Bitwidth::fp32) <= tolerable_loss ? lo : hi) = mid;
      }
      best = lo;
    }
  }

  Bitwidth non_expert = Bitwidth::fp32;
  double measured = measure(best, Bitwidth::fp32);
  for (Bitwidth ne : options.non_expert_candidates) {
    if (ne == Bitwidth::fp32) break;
    const double loss = measure(best, ne);
    if (loss <= tolerable_loss) {
      non_expert = ne;
      measured = loss;
      break;
    }
  }

  QuantPlan plan = plan_with_low_count(cfg, order, best, bounds, non_expert);
  plan.tolerable_loss = tolerable_loss;
  plan.measured_loss = measured;
  return plan;
}

std::uint64_t plan_storage_bytes(const QuantPlan& plan, const MoEConfig& cfg) {
  check_plan(plan, cfg);
  std::uint64_t total = non_expert_size_bytes(cfg, plan.non_expert_bitwidth);
  for (Bitwidth b : plan.expert_bits) total += expert_size_bytes(cfg, b);
  return total;
}

}  // namespace edgemoe
