#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <map>
#include <memory>
#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "edgemoe/expert_buffer.hpp"
#include "edgemoe/predictor.hpp"
#include "edgemoe/quant_plan.hpp"
#include "edgemoe/topology.hpp"

namespace edgemoe {

// Seconds and bytes. All fields non-negative; io_bandwidth > 0.
struct CostModel {
  double io_bandwidth = 550e6;       // bytes per second
  double io_request_latency = 0.0;   // seconds per transfer
  double attn_compute = 1e-4;        // non-expert work per MoE layer, router included
  double expert_compute = 5e-5;      // per activated expert
  double dequant_factor = 0.027;     // fraction of an expert's load time
  // Resident non-expert bytes; derived from the engine's plan when unset.
  std::optional<std::uint64_t> non_expert_resident_bytes;

  double load_seconds(std::uint64_t bytes) const { return io_request_latency + static_cast<double>(bytes) / io_bandwidth; }
};

void validate_cost(const CostModel& cost);

// Named presets ("tx2-ssd-like" 550 MB/s, "rpi-sdcard-like" 90 MB/s). Compute
// times are set so that loading every activated FP32 expert on demand makes a
// layer `load_compute_ratio` times slower than with all weights resident.
CostModel cost_preset(std::string_view name, const MoEConfig& cfg, double load_compute_ratio = 3.5);
std::vector<std::string> cost_preset_names();
nlohmann::json cost_to_json(const CostModel& cost);

struct PreloadQuery {
  std::size_t sample = 0;
  std::size_t token = 0;
  std::uint32_t next_layer = 0;
  // The token's decoder steps up to and including layer next_layer - 1.
  std::span<const ActivationStep> token_steps;
};

class PreloadPredictor {
 public:
  virtual ~PreloadPredictor() = default;
  virtual std::vector<ExpertRef> candidates(const PreloadQuery& query, std::uint32_t m) const = 0;
};

// Queries an offline activation profile.
class ProfilePredictor final : public PreloadPredictor {
 public:
  explicit ProfilePredictor(std::shared_ptr<const ActivationProfile> profile) : profile_(std::move(profile)) {}
  std::vector<ExpertRef> candidates(const PreloadQuery& query, std::uint32_t m) const override;

 private:
  std::shared_ptr<const ActivationProfile> profile_;
};

// Reads the answer from the trace being simulated: the true next step when
// `correct`, otherwise the lowest-index experts outside it.
class TracePredictor final : public PreloadPredictor {
 public:
  TracePredictor(std::shared_ptr<const TokenTrace> trace, bool correct) : trace_(std::move(trace)), correct_(correct) {}
  std::vector<ExpertRef> candidates(const PreloadQuery& query, std::uint32_t m) const override;

 private:
  std::shared_ptr<const TokenTrace> trace_;
  bool correct_;
};

enum class EngineKind { io_free, io_exp, io_qexp, edgemoe };

std::string_view to_string(EngineKind kind);
EngineKind parse_engine(std::string_view text);

struct EngineSpec {
  EngineKind kind = EngineKind::edgemoe;
  // Per-expert bitwidths and non-expert bitwidth. io_exp defaults to all
  // FP32; io_qexp always loads INT4 experts; edgemoe requires a plan.
  std::optional<QuantPlan> plan;
  // edgemoe: frequency seed and default predictor.
  std::shared_ptr<const ActivationProfile> profile;
  // edgemoe: overrides the profile-backed predictor when set.
  std::shared_ptr<const PreloadPredictor> predictor;
  std::uint32_t preload_m = 1;
  BufferOptions buffer;
  bool warm_start = true;
};

struct SimEvent {
  double time = 0.0;
  std::string resource;  // "compute" or "io"
  std::string event;
  std::string expert;
};

struct SimReport {
  std::string engine;
  std::size_t samples = 0;
  std::size_t tokens = 0;
  double tpot_seconds = 0.0;
  double decode_seconds = 0.0;
  double total_seconds = 0.0;
  std::vector<double> per_sample_seconds;
  double compute_busy_seconds = 0.0;
  double io_stall_seconds = 0.0;
  double io_busy_seconds = 0.0;
  double hit_ratio = 0.0;
  double prediction_accuracy = 0.0;
  std::uint64_t peak_resident_bytes = 0;
  std::optional<std::uint64_t> budget_bytes;
  std::uint64_t demand_loads = 0;
  std::uint64_t preloads_issued = 0;
  std::uint64_t preloads_used = 0;
  std::uint64_t preloads_aborted = 0;
  std::vector<SimEvent> events;  // filled when requested
};

struct SimOptions {
  bool record_events = false;
};

// Discrete-event replay of the trace over one compute and one I/O resource.
// Throws InfeasibleError when the budget cannot hold the non-expert weights
// plus one layer's activated experts, DigestMismatch for foreign
// trace/plan/profile, ConfigError for an incomplete engine spec.
SimReport simulate(const TokenTrace& trace, const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost,
                   std::uint64_t budget_bytes, const SimOptions& options = {});

// Non-expert bytes the engine keeps resident under `cost`.
std::uint64_t engine_non_expert_bytes(const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost);
// Budget holding the engine's non-expert weights plus `slots` FP32 experts.
std::uint64_t slots_budget(const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost, std::uint64_t slots);

// Non-expert plus every expert at FP32.
std::uint64_t full_model_bytes(const MoEConfig& cfg);

nlohmann::json report_to_json(const SimReport& report);
void write_event_log(const std::vector<SimEvent>& events, std::ostream& out);

struct Comparison {
  std::vector<SimReport> reports;
  // TPOT(reference) / TPOT(engine), keyed by engine name.
  std::map<std::string, double> speedup_vs_io_exp;
  std::map<std::string, double> speedup_vs_io_free;
};

using BudgetFn = std::function<std::uint64_t(const EngineSpec&)>;

Comparison compare_engines(const TokenTrace& trace, const MoEConfig& cfg, const std::vector<EngineSpec>& engines,
                           const CostModel& cost, std::uint64_t budget_bytes);
// Per-engine budgets, e.g. slots_budget for each engine.
Comparison compare_engines(const TokenTrace& trace, const MoEConfig& cfg, const std::vector<EngineSpec>& engines,
                           const CostModel& cost, const BudgetFn& budget_of);

nlohmann::json comparison_to_json(const Comparison& comparison);

}  // namespace edgemoe
