#include "edgemoe/pipeline_sim.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <deque>
#include <iomanip>
#include <set>

#include "edgemoe/errors.hpp"
#include "edgemoe/toy_model.hpp"

namespace edgemoe {

void validate_cost(const CostModel& cost) {
  if (!(cost.io_bandwidth > 0.0) || !std::isfinite(cost.io_bandwidth)) throw ConfigError("io_bandwidth must be > 0");
  for (double v : {cost.io_request_latency, cost.attn_compute, cost.expert_compute, cost.dequant_factor}) {
    if (!(v >= 0.0) || !std::isfinite(v)) throw ConfigError("cost model entries must be finite and non-negative");
  }
}

std::vector<std::string> cost_preset_names() { return {"tx2-ssd-like", "rpi-sdcard-like"}; }

CostModel cost_preset(std::string_view name, const MoEConfig& cfg, double load_compute_ratio) {
  CostModel cost;
  if (name == "tx2-ssd-like") {
    cost.io_bandwidth = 550e6;
  } else if (name == "rpi-sdcard-like") {
    cost.io_bandwidth = 90e6;
  } else {
    throw ConfigError("unknown cost preset '" + std::string(name) + "'");
  }
  if (!(load_compute_ratio > 1.0)) throw ConfigError("load/compute ratio must exceed 1");
  const double k = cfg.routing_k;
  const double load = cost.load_seconds(expert_size_bytes(cfg, Bitwidth::fp32));
  // (C + k load) / C = ratio with C the resident per-layer compute.
  const double compute = k * load / (load_compute_ratio - 1.0);
  cost.attn_compute = compute / 2.0;
  cost.expert_compute = compute / (2.0 * k);
  return cost;
}

nlohmann::json cost_to_json(const CostModel& cost) {
  nlohmann::json j = {{"io_bandwidth", cost.io_bandwidth},
                      {"io_request_latency", cost.io_request_latency},
                      {"attn_compute", cost.attn_compute},
                      {"expert_compute", cost.expert_compute},
                      {"dequant_factor", cost.dequant_factor}};
  if (cost.non_expert_resident_bytes) j["non_expert_resident_bytes"] = *cost.non_expert_resident_bytes;
  return j;
}

std::vector<ExpertRef> ProfilePredictor::candidates(const PreloadQuery& query, std::uint32_t m) const {
  const auto key = make_history_key(query.token_steps, query.next_layer, profile_->history());
  return preload_candidates(*profile_, key, std::min(m, profile_->experts_per_layer()));
}

std::vector<ExpertRef> TracePredictor::candidates(const PreloadQuery& query, std::uint32_t m) const {
  const auto& truth = trace_->samples.at(query.sample).decode_tokens.at(query.token).at(query.next_layer).experts;
  std::vector<ExpertRef> out;
  if (correct_) {
    for (std::size_t i = 0; i < truth.size() && out.size() < m; ++i) {
      out.push_back(ExpertRef{Stage::decoder, query.next_layer, truth[i]});
    }
    return out;
  }
  for (std::uint32_t j = 0; j < trace_->experts_per_layer && out.size() < m; ++j) {
    if (std::find(truth.begin(), truth.end(), j) == truth.end()) out.push_back(ExpertRef{Stage::decoder, query.next_layer, j});
  }
  return out;
}

std::string_view to_string(EngineKind kind) {
  switch (kind) {
    case EngineKind::io_free: return "io_free";
    case EngineKind::io_exp: return "io_exp";
    case EngineKind::io_qexp: return "io_qexp";
    case EngineKind::edgemoe: return "edgemoe";
  }
  return "edgemoe";
}

EngineKind parse_engine(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return c == '-' ? '_' : std::tolower(c); });
  for (auto k : {EngineKind::io_free, EngineKind::io_exp, EngineKind::io_qexp, EngineKind::edgemoe}) {
    if (s == to_string(k)) return k;
  }
  throw ConfigError("unknown engine '" + std::string(text) + "'");
}

std::uint64_t engine_non_expert_bytes(const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost) {
  if (engine.kind == EngineKind::io_free) return non_expert_size_bytes(cfg, Bitwidth::fp32);
  const Bitwidth ne = engine.plan ? engine.plan->non_expert_bitwidth : Bitwidth::fp32;
  return cost.non_expert_resident_bytes.value_or(non_expert_size_bytes(cfg, ne));
}

std::uint64_t slots_budget(const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost, std::uint64_t slots) {
  return engine_non_expert_bytes(cfg, engine, cost) + slots * expert_size_bytes(cfg, Bitwidth::fp32);
}

std::uint64_t full_model_bytes(const MoEConfig& cfg) {
  return non_expert_size_bytes(cfg, Bitwidth::fp32) + total_experts(cfg) * expert_size_bytes(cfg, Bitwidth::fp32);
}

namespace {

struct Transfer {
  ExpertRef expert;
  double duration = 0.0;
  double issued = 0.0;
  bool demand = false;
};

struct ActiveTransfer {
  Transfer transfer;
  double start = 0.0;
  double finish = 0.0;
};

class Simulator {
 public:
  Simulator(const TokenTrace& trace, const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost,
            std::uint64_t budget, const SimOptions& options)
      : trace_(trace), cfg_(cfg), engine_(engine), cost_(cost), options_(options) {
    validate_cost(cost);
    require_valid(cfg);
    check_trace_digest(trace, cfg);
    validate_trace(trace);
    report_.engine = std::string(to_string(engine.kind));
    if (engine.plan) check_plan(*engine.plan, cfg);
    if (engine.kind == EngineKind::edgemoe) {
      if (!engine.plan) throw ConfigError("the edgemoe engine requires a quantization plan");
      if (!engine.profile && !engine.predictor) throw ConfigError("the edgemoe engine requires an activation profile");
      if (engine.profile && engine.profile->config_digest() != config_digest(cfg)) {
        throw DigestMismatch("profile", config_digest(cfg), engine.profile->config_digest());
      }
      if (engine.preload_m < 1 || engine.preload_m > cfg.experts_per_layer) {
        throw ConfigError("preload count must lie in [1, experts_per_layer]");
      }
      predictor_ = engine.predictor ? engine.predictor : std::make_shared<ProfilePredictor>(engine.profile);
    }

    non_expert_ = engine_non_expert_bytes(cfg, engine, cost);
    if (engine.kind == EngineKind::io_free) return;
    std::uint64_t largest = 0;
    for (std::size_t i = 0; i < total_experts(cfg); ++i) largest = std::max(largest, size(expert_at(cfg, i)));
    const std::uint64_t minimum = non_expert_ + cfg.routing_k * largest;
    if (budget < minimum) {
      throw InfeasibleError("budget infeasible: " + std::to_string(budget) + " bytes < " + std::to_string(minimum) +
                            " (non-expert " + std::to_string(non_expert_) + " + " + std::to_string(cfg.routing_k) +
                            " x " + std::to_string(largest) + " expert bytes)");
    }
    report_.budget_bytes = budget;
    if (engine.kind == EngineKind::edgemoe) {
      buffer_.emplace(cfg, budget - non_expert_, engine.buffer);
      if (engine.profile) buffer_->seed_frequencies(*engine.profile);
      if (engine.warm_start) {
        init_buffer(*buffer_, cfg, engine.profile.get(), [this](const ExpertRef& e) { return size(e); });
      }
    }
  }

  SimReport run() {
    note_memory(0);
    for (std::size_t s = 0; s < trace_.samples.size(); ++s) {
      const auto& sample = trace_.samples[s];
      const double sample_start = now_;
      for (std::uint32_t l = 0; l < sample.encoder_steps.size(); ++l) {
        run_layer(Stage::encoder, l, sample.encoder_steps[l], s, 0, {});
      }
      for (std::size_t t = 0; t < sample.decode_tokens.size(); ++t) {
        const auto& token = sample.decode_tokens[t];
        const double token_start = now_;
        for (std::uint32_t l = 0; l < token.size(); ++l) {
          run_layer(Stage::decoder, l, token[l], s, t, std::span<const ActivationStep>(token.data(), l + 1));
        }
        report_.decode_seconds += now_ - token_start;
        ++report_.tokens;
      }
      report_.per_sample_seconds.push_back(now_ - sample_start);
      ++report_.samples;
    }
    report_.total_seconds = now_;
    report_.tpot_seconds = report_.tokens == 0 ? 0.0 : report_.decode_seconds / static_cast<double>(report_.tokens);
    if (engine_.kind == EngineKind::io_free) {
      report_.hit_ratio = 1.0;
      report_.peak_resident_bytes = full_model_bytes(cfg_);
    } else if (buffer_) {
      report_.hit_ratio =
          buffer_->accesses() == 0 ? 0.0 : static_cast<double>(buffer_->hits()) / static_cast<double>(buffer_->accesses());
    }
    report_.prediction_accuracy =
        predicted_needed_ == 0 ? 0.0 : static_cast<double>(predicted_hits_) / static_cast<double>(predicted_needed_);
    if (options_.record_events) {
      std::stable_sort(report_.events.begin(), report_.events.end(),
                       [](const SimEvent& a, const SimEvent& b) { return a.time < b.time; });
    }
    return std::move(report_);
  }

 private:
  Bitwidth bitwidth(const ExpertRef& e) const {
    switch (engine_.kind) {
      case EngineKind::io_free: return Bitwidth::fp32;
      case EngineKind::io_qexp: return Bitwidth::int4;
      default: return engine_.plan ? engine_.plan->at(cfg_, e) : Bitwidth::fp32;
    }
  }
  std::uint64_t size(const ExpertRef& e) const { return expert_size_bytes(cfg_, bitwidth(e)); }
  double load(const ExpertRef& e) const { return cost_.load_seconds(size(e)); }
  double dequant(const ExpertRef& e) const {
    if (engine_.kind == EngineKind::io_free || !is_quantizing(bitwidth(e))) return 0.0;
    return cost_.dequant_factor * load(e);
  }

  void log(double time, const char* resource, const char* event, const ExpertRef* e = nullptr) {
    if (!options_.record_events) return;
    report_.events.push_back(SimEvent{time, resource, event, e ? to_string(*e) : std::string()});
  }

  void note_memory(std::uint64_t expert_bytes) {
    report_.peak_resident_bytes = std::max(report_.peak_resident_bytes, non_expert_ + expert_bytes);
  }

  void compute(double seconds, const char* what, const ExpertRef* e = nullptr) {
    log(now_, "compute", what, e);
    now_ += seconds;
    report_.compute_busy_seconds += seconds;
    log(now_, "compute", "end", e);
  }

  void start_front() {
    Transfer t = queue_.front();
    queue_.pop_front();
    const double start = std::max(io_free_at_, t.issued);
    inflight_ = ActiveTransfer{t, start, start + t.duration};
    log(start, "io", t.demand ? "load_start" : "preload_start", &t.expert);
  }

  void complete_inflight() {
    const auto& a = *inflight_;
    io_free_at_ = a.finish;
    report_.io_busy_seconds += a.finish - a.start;
    buffer_->set_in_flight(a.transfer.expert, false);
    log(a.finish, "io", "load_end", &a.transfer.expert);
    inflight_.reset();
  }

  // Brings the I/O resource up to time t.
  void advance_io(double t) {
    while (true) {
      if (inflight_) {
        if (inflight_->finish > t) return;
        complete_inflight();
      } else if (!queue_.empty() && std::max(io_free_at_, queue_.front().issued) <= t) {
        start_front();
      } else {
        return;
      }
    }
  }

  double wait_for(const std::vector<ExpertRef>& needed, double t) {
    auto pending = [&] {
      return std::any_of(needed.begin(), needed.end(), [&](const ExpertRef& e) { return buffer_->in_flight(e); });
    };
    while (pending()) {
      if (!inflight_) start_front();
      t = std::max(t, inflight_->finish);
      complete_inflight();
    }
    return t;
  }

  void run_layer(Stage stage, std::uint32_t l, const ActivationStep& step, std::size_t sample, std::size_t token,
                 std::span<const ActivationStep> token_steps) {
    compute(cost_.attn_compute, "attn");
    const double routed = now_;
    std::vector<ExpertRef> needed;
    for (auto j : step.experts) needed.push_back(ExpertRef{stage, l, j});

    double ready = routed;
    if (engine_.kind == EngineKind::io_exp || engine_.kind == EngineKind::io_qexp) {
      std::uint64_t scratch = 0;
      for (const auto& e : needed) {
        log(ready, "io", "load_start", &e);
        ready += load(e);
        report_.io_busy_seconds += load(e);
        log(ready, "io", "load_end", &e);
        scratch += size(e);
        ++report_.demand_loads;
      }
      note_memory(scratch);
    } else if (engine_.kind == EngineKind::edgemoe) {
      ready = route_edgemoe(stage, l, needed, sample, token, token_steps);
    }
    report_.io_stall_seconds += ready - routed;
    now_ = ready;
    for (const auto& e : needed) compute(dequant(e) + cost_.expert_compute, "expert", &e);
    if (buffer_) {
      for (const auto& e : needed) buffer_->unpin(e);
    }
  }

  double route_edgemoe(Stage stage, std::uint32_t l, const std::vector<ExpertRef>& needed, std::size_t sample,
                       std::size_t token, std::span<const ActivationStep> token_steps) {
    const double routed = now_;
    advance_io(routed);
    auto is_needed = [&](const ExpertRef& e) { return std::find(needed.begin(), needed.end(), e) != needed.end(); };

    // Preloading for this layer stops once its router has resolved.
    if (inflight_ && !is_needed(inflight_->transfer.expert)) {
      const ExpertRef e = inflight_->transfer.expert;
      report_.io_busy_seconds += routed - inflight_->start;
      io_free_at_ = routed;
      inflight_.reset();
      buffer_->remove(e);
      ++report_.preloads_aborted;
      log(routed, "io", "abort", &e);
    }
    std::deque<Transfer> kept;
    for (auto& t : queue_) {
      if (is_needed(t.expert)) {
        t.demand = true;
        kept.push_back(t);
      } else {
        buffer_->remove(t.expert);
        ++report_.preloads_aborted;
        log(routed, "io", "cancel", &t.expert);
      }
    }
    queue_ = std::move(kept);

    if (stage == Stage::decoder) {
      buffer_->set_current_layer(l);
      if (l > 0 && predicted_layer_ == l) {
        for (const auto& e : needed) {
          ++predicted_needed_;
          if (std::find(predicted_.begin(), predicted_.end(), e) != predicted_.end()) ++predicted_hits_;
        }
      }
    }
    for (const auto& e : needed) {
      const bool preloaded = buffer_->resident(e) && std::find(preloaded_.begin(), preloaded_.end(), e) != preloaded_.end();
      if (buffer_->access(e)) {
        buffer_->pin(e);
        if (preloaded) ++report_.preloads_used;
      }
    }
    for (const auto& e : needed) {
      if (buffer_->resident(e)) continue;
      buffer_->insert(e, size(e));
      buffer_->set_in_flight(e, true);
      buffer_->pin(e);
      queue_.push_back(Transfer{e, load(e), routed, true});
      ++report_.demand_loads;
      log(routed, "io", "demand_issue", &e);
    }
    note_memory(buffer_->used_bytes());
    advance_io(routed);

    preloaded_.clear();
    predicted_.clear();
    predicted_layer_ = 0;
    if (stage == Stage::decoder && l + 1 < cfg_.decoder_moe_layers) {
      PreloadQuery query{sample, token, l + 1, token_steps};
      predicted_ = predictor_->candidates(query, engine_.preload_m);
      predicted_layer_ = l + 1;
      for (const auto& e : predicted_) {
        if (buffer_->resident(e) || !buffer_->can_make_room(size(e))) continue;
        buffer_->insert(e, size(e));
        buffer_->set_in_flight(e, true);
        queue_.push_back(Transfer{e, load(e), routed, false});
        preloaded_.push_back(e);
        ++report_.preloads_issued;
        log(routed, "io", "preload_issue", &e);
      }
      note_memory(buffer_->used_bytes());
      advance_io(routed);
    }
    return wait_for(needed, routed);
  }

  const TokenTrace& trace_;
  const MoEConfig& cfg_;
  const EngineSpec& engine_;
  const CostModel& cost_;
  SimOptions options_;
  std::shared_ptr<const PreloadPredictor> predictor_;
  std::optional<ExpertBuffer> buffer_;
  std::uint64_t non_expert_ = 0;
  SimReport report_;

  double now_ = 0.0;
  double io_free_at_ = 0.0;
  std::deque<Transfer> queue_;
  std::optional<ActiveTransfer> inflight_;
  std::vector<ExpertRef> preloaded_;
  std::vector<ExpertRef> predicted_;
  std::uint32_t predicted_layer_ = 0;
  std::uint64_t predicted_needed_ = 0;
  std::uint64_t predicted_hits_ = 0;
};

}  // namespace

SimReport simulate(const TokenTrace& trace, const MoEConfig& cfg, const EngineSpec& engine, const CostModel& cost,
                   std::uint64_t budget_bytes, const SimOptions& options) {
  return Simulator(trace, cfg, engine, cost, budget_bytes, options).run();
}

nlohmann::json report_to_json(const SimReport& r) {
  nlohmann::json j = {{"engine", r.engine},
                      {"samples", r.samples},
                      {"tokens", r.tokens},
                      {"tpot_seconds", r.tpot_seconds},
                      {"decode_seconds", r.decode_seconds},
                      {"total_seconds", r.total_seconds},
                      {"per_sample_seconds", r.per_sample_seconds},
                      {"compute_busy_seconds", r.compute_busy_seconds},
                      {"io_stall_seconds", r.io_stall_seconds},
                      {"io_busy_seconds", r.io_busy_seconds},
                      {"hit_ratio", r.hit_ratio},
                      {"prediction_accuracy", r.prediction_accuracy},
                      {"peak_resident_bytes", r.peak_resident_bytes},
                      {"demand_loads", r.demand_loads},
                      {"preloads_issued", r.preloads_issued},
                      {"preloads_used", r.preloads_used},
                      {"preloads_aborted", r.preloads_aborted}};
  j["budget_bytes"] = r.budget_bytes ? nlohmann::json(*r.budget_bytes) : nlohmann::json(nullptr);
  return j;
}

void write_event_log(const std::vector<SimEvent>& events, std::ostream& out) {
  out << "time,resource,event,expert\n";
  out << std::setprecision(12);
  for (const auto& e : events) out << e.time << ',' << e.resource << ',' << e.event << ',' << e.expert << '\n';
}

Comparison compare_engines(const TokenTrace& trace, const MoEConfig& cfg, const std::vector<EngineSpec>& engines,
                           const CostModel& cost, std::uint64_t budget_bytes) {
  return compare_engines(trace, cfg, engines, cost, [budget_bytes](const EngineSpec&) { return budget_bytes; });
}

Comparison compare_engines(const TokenTrace& trace, const MoEConfig& cfg, const std::vector<EngineSpec>& engines,
                           const CostModel& cost, const BudgetFn& budget_of) {
  Comparison c;
  for (const auto& engine : engines) c.reports.push_back(simulate(trace, cfg, engine, cost, budget_of(engine)));
  auto tpot_of = [&](const char* name) -> std::optional<double> {
    for (const auto& r : c.reports) {
      if (r.engine == name) return r.tpot_seconds;
    }
    return std::nullopt;
  };
  const auto io_exp = tpot_of("io_exp");
  const auto io_free = tpot_of("io_free");
  for (const auto& r : c.reports) {
    if (r.tpot_seconds <= 0.0) continue;
    if (io_exp) c.speedup_vs_io_exp[r.engine] = *io_exp / r.tpot_seconds;
    if (io_free) c.speedup_vs_io_free[r.engine] = *io_free / r.tpot_seconds;
  }
  return c;
}

nlohmann::json comparison_to_json(const Comparison& comparison) {
  nlohmann::json reports = nlohmann::json::array();
  for (const auto& r : comparison.reports) reports.push_back(report_to_json(r));
  return {{"reports", std::move(reports)},
          {"speedup_vs_io_exp", comparison.speedup_vs_io_exp},
          {"speedup_vs_io_free", comparison.speedup_vs_io_free}};
}

}  // namespace edgemoe
