// Acceptance gate: one PASS/FAIL line per criterion. Exit status 0 iff every
// selected criterion passes.
//   acceptance                 run all criteria
//   acceptance --criterion N   run criterion N only

#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "edgemoe/errors.hpp"
#include "edgemoe/expert_buffer.hpp"
#include "edgemoe/pipeline_sim.hpp"
#include "edgemoe/planner.hpp"
#include "edgemoe/predictor.hpp"
#include "edgemoe/quantizer.hpp"
#include "edgemoe/toy_model.hpp"
#include "edgemoe/trace_gen.hpp"
#include "test_support.hpp"

namespace {

using namespace edgemoe;

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(const char* f, auto... args) {
  char buf[512];
  std::snprintf(buf, sizeof buf, f, args...);
  return buf;
}

// 1. Quantization round-trip error bound.
Outcome quantization_round_trip() {
  std::mt19937_64 rng(1);
  std::normal_distribution<float> normal(0.0f, 1.0f);
  std::uniform_int_distribution<int> length(1, 256);
  std::uniform_real_distribution<float> spread(-4.0f, 4.0f);
  double worst = 0.0;  // max (error - scale/2)
  std::size_t elements = 0;
  for (int c = 0; c < 1000; ++c) {
    std::vector<float> w(length(rng));
    const float gain = std::pow(10.0f, spread(rng));
    for (float& v : w) v = gain * normal(rng);
    for (auto b : {Bitwidth::int2, Bitwidth::int4, Bitwidth::int8}) {
      const auto qc = quantize_channel(w, b);
      const auto back = dequantize_channel(qc);
      for (std::size_t i = 0; i < w.size(); ++i) {
        worst = std::max(worst, std::abs(static_cast<double>(back[i]) - w[i]) - qc.scale / 2.0);
        ++elements;
      }
    }
  }
  return {worst <= 1e-6, fmt("%zu elements, max(err - scale/2) = %.3g", elements, worst)};
}

// 2. Mean loss over 10 model seeds is monotone along INT2, INT4, INT8.
Outcome bitwidth_monotonicity() {
  std::map<Bitwidth, double> mean;
  const std::vector<Bitwidth> rungs{Bitwidth::int2, Bitwidth::int4, Bitwidth::int8};
  for (int s = 0; s < 10; ++s) {
    MoEConfig cfg = default_toy_config();
    cfg.seed += s;
    const ToyMoEModel model(cfg);
    const ProbeSet probes = make_probes(model, 512, 99);
    for (auto b : rungs) mean[b] += (1.0 - evaluate_agreement(model, uniform_plan(cfg, b), probes)) / 10.0;
  }
  const bool pass = mean[Bitwidth::int2] >= mean[Bitwidth::int4] && mean[Bitwidth::int4] >= mean[Bitwidth::int8];
  return {pass, fmt("mean loss INT2 %.4f, INT4 %.4f, INT8 %.4f", mean[Bitwidth::int2], mean[Bitwidth::int4],
                    mean[Bitwidth::int8])};
}

// 3. Planner at P = 0.02 against the exhaustive K scan.
Outcome planner_budget() {
  const double p = 0.02;
  const MoEConfig cfg = default_toy_config();
  const ToyMoEModel model(cfg);
  const ProbeSet probes = make_probes(model, 512, 99);
  const ImportanceHeatmap heatmap = profile_importance(model, probes);
  const SweepResult sweep = uniform_sweep(model, probes);
  const QuantPlan plan = select_bitwidths(model, probes, heatmap, sweep, p);
  const BitwidthBounds bounds{plan.lower_bound, plan.upper_bound};
  const auto curve = loss_curve(model, probes, heatmap, bounds, plan.non_expert_bitwidth);
  std::size_t scan_k = 0;
  for (std::size_t k = 0; k < curve.size(); ++k) {
    if (curve[k] <= p) scan_k = k;
  }
  const std::size_t k = plan.low_bit_count;
  const bool agrees = scan_k == k;
  const bool certified = curve[k] <= p;
  const bool pass = *plan.measured_loss <= 0.025 && (agrees || certified);
  return {pass, fmt("bounds %s/%s, K=%zu of %zu, measured loss %.4f, scan K=%zu (%s), non-expert %s",
                    std::string(to_string(bounds.lower)).c_str(), std::string(to_string(bounds.upper)).c_str(), k,
                    total_experts(cfg), *plan.measured_loss, scan_k,
                    agrees ? "agrees" : certified ? "bisection K certified" : "disagrees",
                    std::string(to_string(plan.non_expert_bitwidth)).c_str())};
}

// 4. Learned conditionals converge to the Markov ground truth.
Outcome predictor_convergence() {
  const MoEConfig cfg = default_toy_config();
  const MarkovTrace m = generate_markov_trace(cfg, MarkovOptions{});
  const ActivationProfile profile = build_profile(std::span<const TokenTrace>(&m.trace, 1));
  std::size_t keys = 0;
  std::size_t over = 0;
  double worst = 0.0;
  for (const auto& [key, counts] : profile.entries()) {
    if (profile.observations(key) < 500 || key.steps.empty()) continue;
    // First-order truth: the row of the most recent step's expert.
    const auto& row = m.truth.transitions.at(key.layer).at(key.steps.back().front());
    const auto learned = profile.conditional(key);
    double l1 = 0.0;
    for (std::size_t j = 0; j < row.size(); ++j) l1 += std::abs(learned[j] - row[j]);
    worst = std::max(worst, l1);
    ++keys;
    if (l1 > 0.05) ++over;
  }
  return {keys > 0 && over == 0,
          fmt("%zu keys with >= 500 observations, %zu above L1 0.05, worst L1 %.4f", keys, over, worst)};
}

// 5. Default power-law trace: concentrated paths, balanced experts.
Outcome powerlaw_reproduction() {
  const TraceStats stats = trace_stats(generate_powerlaw_trace(default_toy_config(), PowerlawOptions{}));
  const double coverage = stats.top_path_coverage(0.2);
  const bool pass = coverage >= 0.99 && stats.max_marginal_deviation <= 0.25;
  return {pass, fmt("top-20%% path mass %.4f over %zu distinct paths, max marginal deviation %.3f", coverage,
                    stats.distinct_paths, stats.max_marginal_deviation)};
}

// 6. Eviction policy ordering on the skewed benchmark trace.
Outcome eviction_ordering() {
  const MoEConfig cfg = default_toy_config();
  PowerlawOptions opts;
  opts.zipf_s = 1.2;
  opts.tokens = 50000;
  opts.balance_tolerance.reset();
  const TokenTrace trace = generate_powerlaw_trace(cfg, opts);
  std::map<EvictionPolicy, double> ratio;
  for (auto p : {EvictionPolicy::edgemoe, EvictionPolicy::lru, EvictionPolicy::lfu, EvictionPolicy::fifo,
                 EvictionPolicy::random}) {
    BufferOptions o;
    o.policy = p;
    ratio[p] = run_policy_eval(trace, cfg, 10, o).hit_ratio;
  }
  double best_other = 0.0;
  for (const auto& [p, r] : ratio) {
    if (p != EvictionPolicy::edgemoe) best_other = std::max(best_other, r);
  }
  return {ratio[EvictionPolicy::edgemoe] >= best_other - 0.01,
          fmt("hit ratio edgemoe %.4f, lru %.4f, lfu %.4f, fifo %.4f, random %.4f", ratio[EvictionPolicy::edgemoe],
              ratio[EvictionPolicy::lru], ratio[EvictionPolicy::lfu], ratio[EvictionPolicy::fifo],
              ratio[EvictionPolicy::random])};
}

struct RandomInstance {
  MoEConfig cfg;
  std::shared_ptr<TokenTrace> trace;
  std::shared_ptr<ActivationProfile> profile;
  CostModel cost;
  QuantPlan plan;
  std::uint32_t preload_m = 1;
  std::uint64_t slots = 10;
};

RandomInstance random_instance(std::uint64_t seed) {
  std::mt19937_64 rng(seed * 7919 + 13);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  RandomInstance in;
  in.cfg = default_toy_config();
  in.cfg.routing_k = rng() % 4 == 0 ? 2 : 1;
  TokenTrace train;
  if (seed % 3 == 0) {
    PowerlawOptions o;
    o.tokens = 1000;
    o.tokens_per_sample = 20;
    o.zipf_s = 0.5 + u(rng);
    o.seed = seed;
    o.balance_tolerance.reset();
    in.trace = std::make_shared<TokenTrace>(generate_powerlaw_trace(in.cfg, o));
    o.seed = seed + 1000;
    train = generate_powerlaw_trace(in.cfg, o);
  } else if (seed % 3 == 1) {
    MarkovOptions o;
    o.tokens = 1000;
    o.tokens_per_sample = 20;
    o.concentration = 0.1 + u(rng);
    o.seed = seed;
    auto m = generate_markov_trace(in.cfg, o);
    in.trace = std::make_shared<TokenTrace>(std::move(m.trace));
    o.seed = seed + 1000;
    train = generate_markov_trace(in.cfg, o).trace;
  } else {
    in.trace = std::make_shared<TokenTrace>(testing::uniform_trace(in.cfg, 50, 20, seed));
    train = testing::uniform_trace(in.cfg, 50, 20, seed + 1000);
  }
  in.profile = std::make_shared<ActivationProfile>(build_profile(std::span<const TokenTrace>(&train, 1)));
  in.cost.io_bandwidth = 2e6 * std::pow(500.0, u(rng));
  in.cost.io_request_latency = u(rng) < 0.5 ? 0.0 : 2e-4 * u(rng);
  in.cost.attn_compute = 1e-5 + 1e-3 * u(rng);
  in.cost.expert_compute = 1e-5 + 1e-3 * u(rng);
  in.cost.dequant_factor = 0.1 * u(rng);
  in.plan = uniform_plan(in.cfg, Bitwidth::fp32, kBitwidthLadder[1 + rng() % 4]);
  for (auto& b : in.plan.expert_bits) b = kBitwidthLadder[rng() % 5];
  in.plan.lower_bound = Bitwidth::int2;
  in.plan.recount();
  in.preload_m = 1 + static_cast<std::uint32_t>(rng() % 3);
  in.slots = 2 + rng() % 30;
  return in;
}

EngineSpec engine_of(EngineKind kind, const RandomInstance& in) {
  EngineSpec e;
  e.kind = kind;
  if (kind != EngineKind::io_free && kind != EngineKind::io_qexp) e.plan = in.plan;
  if (kind == EngineKind::edgemoe) {
    e.profile = in.profile;
    e.preload_m = in.preload_m;
  }
  return e;
}

// Smallest feasible budget: resident non-expert weights plus routing_k of
// the engine's largest experts.
std::uint64_t minimal_budget(const RandomInstance& in, const EngineSpec& e) {
  std::uint64_t largest = expert_size_bytes(in.cfg, e.kind == EngineKind::io_qexp ? Bitwidth::int4 : Bitwidth::fp32);
  if (e.plan) {
    largest = 0;
    for (auto b : e.plan->expert_bits) largest = std::max(largest, expert_size_bytes(in.cfg, b));
  }
  return engine_non_expert_bytes(in.cfg, e, in.cost) + in.cfg.routing_k * largest;
}

// 7. Dominance on random instances and the always-wrong worst case.
Outcome pipeline_dominance() {
  std::size_t violations = 0;
  std::size_t worst_case_misses = 0;
  double max_gap = 0.0;
  double max_worst_case_diff = 0.0;
  for (std::uint64_t s = 1; s <= 50; ++s) {
    const RandomInstance in = random_instance(s);
    const EngineSpec free_e = engine_of(EngineKind::io_free, in);
    const EngineSpec exp_e = engine_of(EngineKind::io_exp, in);
    const EngineSpec edge = engine_of(EngineKind::edgemoe, in);
    const std::uint64_t budget = slots_budget(in.cfg, edge, in.cost, in.slots);
    const double f = simulate(*in.trace, in.cfg, free_e, in.cost, 0).tpot_seconds;
    const double m = simulate(*in.trace, in.cfg, edge, in.cost, budget).tpot_seconds;
    const double x = simulate(*in.trace, in.cfg, exp_e, in.cost, budget).tpot_seconds;
    if (!(f <= m + 1e-12 && m <= x + 1e-12)) ++violations;
    max_gap = std::max(max_gap, m / x);

    // Worst case at one bitwidth for every expert: with mixed sizes a k x
    // largest buffer can keep small experts resident and beat on-demand.
    RandomInstance uni = in;
    uni.plan = uniform_plan(in.cfg, kBitwidthLadder[s % 5], in.plan.non_expert_bitwidth);
    EngineSpec wrong = engine_of(EngineKind::edgemoe, uni);
    wrong.profile.reset();
    wrong.predictor = std::make_shared<TracePredictor>(in.trace, false);
    const EngineSpec exp_u = engine_of(EngineKind::io_exp, uni);
    const std::uint64_t tight = minimal_budget(uni, exp_u);
    const double mw = simulate(*in.trace, in.cfg, wrong, in.cost, tight).tpot_seconds;
    const double xw = simulate(*in.trace, in.cfg, exp_u, in.cost, tight).tpot_seconds;
    max_worst_case_diff = std::max(max_worst_case_diff, std::abs(mw - xw));
    if (std::abs(mw - xw) > 1e-9) ++worst_case_misses;
  }
  return {violations == 0 && worst_case_misses == 0,
          fmt("50 instances: %zu ordering violations (max edgemoe/io_exp %.3f), worst case max |diff| %.3g s",
              violations, max_gap, max_worst_case_diff)};
}

// 8. Speedup band on organic toy-model traces.
Outcome speedup_band() {
  const MoEConfig cfg = default_toy_config();
  const ToyMoEModel model(cfg);
  EmitOptions train_opts;
  train_opts.samples = 400;
  train_opts.seed = 11;
  EmitOptions eval_opts;
  eval_opts.samples = 100;
  eval_opts.seed = 12;
  const TokenTrace train = emit_trace(model, train_opts);
  const TokenTrace eval = emit_trace(model, eval_opts);
  const ProbeSet probes = make_probes(model, 512, 99);
  const QuantPlan plan = select_bitwidths(model, probes, profile_importance(model, probes), uniform_sweep(model, probes), 0.02);
  const CostModel cost = cost_preset("tx2-ssd-like", cfg, 3.5);

  std::vector<EngineSpec> engines(4);
  engines[0].kind = EngineKind::io_free;
  engines[1].kind = EngineKind::io_exp;
  engines[2].kind = EngineKind::io_qexp;
  engines[3].kind = EngineKind::edgemoe;
  engines[3].plan = plan;
  engines[3].profile = std::make_shared<ActivationProfile>(build_profile(std::span<const TokenTrace>(&train, 1)));
  const Comparison c =
      compare_engines(eval, cfg, engines, cost, [&](const EngineSpec& e) { return slots_budget(cfg, e, cost, 10); });
  const double vs_exp = c.speedup_vs_io_exp.at("edgemoe");
  const double vs_qexp = c.reports[2].tpot_seconds / c.reports[3].tpot_seconds;
  const bool pass = vs_exp >= 1.5 && vs_exp <= 3.5 && vs_qexp >= 1.0;
  return {pass, fmt("speedup vs io_exp %.3f, vs io_qexp %.3f (hit ratio %.3f, prediction accuracy %.3f, K=%zu)",
                    vs_exp, vs_qexp, c.reports[3].hit_ratio, c.reports[3].prediction_accuracy, plan.low_bit_count)};
}

double oracle_score(EvictionPolicy policy, std::uint64_t f, const ExpertRef& e, std::uint32_t current,
                    std::uint64_t last_used, std::uint64_t uses, std::uint64_t inserted) {
  switch (policy) {
    case EvictionPolicy::lru: return -static_cast<double>(last_used);
    case EvictionPolicy::lfu: return -static_cast<double>(uses);
    case EvictionPolicy::fifo: return -static_cast<double>(inserted);
    default: break;
  }
  if (e.stage == Stage::encoder || f == 0) return 0.0;
  std::uint32_t d = (6 + e.layer - current) % 6;  // forward distance over S = 6
  return -static_cast<double>(f) / (d == 0 ? 6 : d);
}

// 9. Memory accounting: simulations and fuzzed buffers with a victim oracle.
Outcome memory_accounting() {
  std::size_t over_budget = 0;
  std::size_t sims = 0;
  for (std::uint64_t s = 1; s <= 20; ++s) {
    const RandomInstance in = random_instance(100 + s);
    for (auto kind : {EngineKind::io_exp, EngineKind::io_qexp, EngineKind::edgemoe}) {
      const EngineSpec e = engine_of(kind, in);
      for (std::uint64_t budget : {minimal_budget(in, e), slots_budget(in.cfg, e, in.cost, in.slots)}) {
        const SimReport r = simulate(*in.trace, in.cfg, e, in.cost, budget);
        ++sims;
        if (r.peak_resident_bytes > budget) ++over_budget;
      }
    }
  }

  const MoEConfig cfg = default_toy_config();
  std::size_t mismatches = 0;
  std::size_t evictions = 0;
  std::size_t buffer_overflows = 0;
  for (auto policy : {EvictionPolicy::edgemoe, EvictionPolicy::lru, EvictionPolicy::lfu, EvictionPolicy::fifo,
                      EvictionPolicy::random}) {
    const std::uint64_t capacity = 2000;
    ExpertBuffer buf(cfg, capacity, BufferOptions{policy, DistanceMode::forward, 9});
    std::mt19937_64 rng(static_cast<std::uint64_t>(policy) + 1);
    std::map<ExpertRef, std::uint64_t> size, last_used, inserted, uses, freq;
    std::map<ExpertRef, bool> locked;
    std::uint64_t tick = 0;
    for (int op = 0; op < 10000; ++op) {
      const ExpertRef e{rng() % 4 == 0 ? Stage::encoder : Stage::decoder, static_cast<std::uint32_t>(rng() % 6),
                        static_cast<std::uint32_t>(rng() % 8)};
      const auto r = rng() % 10;
      if (r < 4) {
        ++tick;
        ++uses[e];
        if (e.stage == Stage::decoder) ++freq[e];
        if (buf.access(e)) last_used[e] = tick;
      } else if (r < 7) {
        const std::uint64_t sz = 150 + rng() % 200;
        if (size.contains(e) || !buf.can_make_room(sz)) continue;
        std::vector<std::pair<double, ExpertRef>> cands;
        for (const auto& [x, b] : size) {
          if (!locked[x]) cands.push_back({oracle_score(policy, freq[x], x, buf.current_layer(), last_used[x], uses[x], inserted[x]), x});
        }
        std::stable_sort(cands.begin(), cands.end(), [](const auto& a, const auto& b) { return a.first > b.first; });
        std::vector<ExpertRef> expected;
        std::uint64_t used = buf.used_bytes();
        for (std::size_t i = 0; used + sz > capacity; ++i) {
          expected.push_back(cands[i].second);
          used -= size[cands[i].second];
        }
        const auto evicted = buf.insert(e, sz);
        evictions += evicted.size();
        if (policy != EvictionPolicy::random && evicted != expected) ++mismatches;
        for (const auto& v : evicted) {
          if (locked[v]) ++mismatches;
          size.erase(v);
          locked.erase(v);
        }
        ++tick;
        size[e] = sz;
        inserted[e] = tick;
        last_used[e] = tick;
      } else if (r < 8) {
        if (!size.contains(e)) continue;
        locked[e] = !locked[e];
        locked[e] ? buf.pin(e) : buf.unpin(e);
      } else if (r < 9) {
        buf.set_current_layer(static_cast<std::uint32_t>(rng() % 6));
      } else {
        buf.unpin_all();
        for (auto& [x, l] : locked) l = false;
      }
      if (buf.used_bytes() > buf.capacity_bytes()) ++buffer_overflows;
    }
  }
  const bool pass = over_budget == 0 && mismatches == 0 && buffer_overflows == 0 && evictions > 0;
  return {pass, fmt("%zu simulations (%zu over budget); 5 x 10000 fuzzed buffer ops, %zu evictions, %zu oracle "
                    "mismatches, %zu capacity overflows",
                    sims, over_budget, evictions, mismatches, buffer_overflows)};
}

// Storage bytes from first principles: packed bits rounded up to bytes plus a
// 2-byte scale per output row, over every matrix of the toy network.
std::uint64_t independent_bytes(const MoEConfig& cfg, const QuantPlan& plan) {
  auto mat = [](std::uint64_t rows, std::uint64_t cols, unsigned bits) { return (rows * cols * bits + 7) / 8 + 2 * rows; };
  const std::uint64_t d = cfg.model_dim, h = cfg.ffn_hidden_dim, e = cfg.experts_per_layer;
  const unsigned ne = bits_per_weight(plan.non_expert_bitwidth);
  std::uint64_t bytes = mat(kToyClasses, d, ne);
  for (auto [blocks, moe] : {std::pair{cfg.encoder_layers, cfg.encoder_moe_layers},
                             std::pair{cfg.decoder_layers, cfg.decoder_moe_layers}}) {
    bytes += blocks * mat(d, d, ne) + moe * mat(e, d, ne) + (blocks - moe) * (mat(h, d, ne) + mat(d, h, ne));
  }
  for (auto b : plan.expert_bits) bytes += mat(h, d, bits_per_weight(b)) + mat(d, h, bits_per_weight(b));
  return bytes;
}

// 10. Storage accounting of mixed-precision plans and plan files.
Outcome storage_accounting() {
  const MoEConfig cfg = default_toy_config();
  const auto dir = std::filesystem::temp_directory_path() / ("edgemoe-acceptance-" + std::to_string(std::random_device{}()));
  std::filesystem::create_directories(dir);
  std::vector<std::size_t> order(total_experts(cfg));
  std::mt19937_64 rng(10);
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::shuffle(order.begin(), order.end(), rng);
  const std::uint64_t fp32 = independent_bytes(cfg, uniform_plan(cfg, Bitwidth::fp32));
  std::size_t not_smaller = 0;
  std::size_t file_mismatches = 0;
  std::size_t plans = 0;
  const std::vector<BitwidthBounds> bounds{{Bitwidth::int2, Bitwidth::int4}, {Bitwidth::int4, Bitwidth::int8},
                                           {Bitwidth::int8, Bitwidth::fp16}, {Bitwidth::fp16, Bitwidth::fp32}};
  for (const auto& b : bounds) {
    for (std::size_t k = 1; k <= order.size(); k += 5) {
      const QuantPlan plan = plan_with_low_count(cfg, order, k, b, Bitwidth::fp32);
      if (!(plan_storage_bytes(plan, cfg) < fp32)) ++not_smaller;
      const auto path = dir / "plan.json";
      save_plan(plan, path, plan_storage_bytes(plan, cfg));
      std::ifstream in(path);
      const auto j = nlohmann::json::parse(in);
      if (j.at("storage_bytes").get<std::uint64_t>() != independent_bytes(cfg, plan)) ++file_mismatches;
      ++plans;
    }
  }
  std::filesystem::remove_all(dir);
  return {not_smaller == 0 && file_mismatches == 0,
          fmt("%zu mixed plans: %zu not below FP32 (%llu bytes), %zu file/recompute mismatches", plans, not_smaller,
              static_cast<unsigned long long>(fp32), file_mismatches)};
}

struct Criterion {
  const char* name;
  double limit_seconds;
  std::function<Outcome()> run;
};

const std::vector<Criterion>& criteria() {
  static const std::vector<Criterion> all{
      {"quantization round-trip", 5, quantization_round_trip},
      {"bitwidth monotonicity", 60, bitwidth_monotonicity},
      {"planner budget", 300, planner_budget},
      {"predictor convergence", 60, predictor_convergence},
      {"power-law reproduction", 30, powerlaw_reproduction},
      {"eviction policy ordering", 60, eviction_ordering},
      {"pipeline dominance + worst case", 300, pipeline_dominance},
      {"comparative speedup band", 120, speedup_band},
      {"memory accounting", 120, memory_accounting},
      {"storage accounting", 1, storage_accounting},
  };
  return all;
}

bool run_one(std::size_t n) {
  const Criterion& c = criteria().at(n - 1);
  const auto start = std::chrono::steady_clock::now();
  Outcome o;
  try {
    o = c.run();
  } catch (const std::exception& e) {
    o = {false, std::string("threw: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
  const bool in_time = secs < c.limit_seconds;
  const bool pass = o.pass && in_time;
  std::cout << "criterion " << n << " [" << (pass ? "PASS" : "FAIL") << "] " << c.name << ": " << o.detail
            << fmt("; %.2f s (limit %.0f s)%s", secs, c.limit_seconds, in_time ? "" : " TIMEOUT") << std::endl;
  return pass;
}

}  // namespace

int main(int argc, char** argv) {
  std::vector<std::size_t> selected;
  for (int i = 1; i < argc; ++i) {
    if (std::strcmp(argv[i], "--criterion") == 0 && i + 1 < argc) {
      const long n = std::strtol(argv[++i], nullptr, 10);
      if (n < 1 || n > static_cast<long>(criteria().size())) {
        std::cerr << "criterion must be 1.." << criteria().size() << '\n';
        return 2;
      }
      selected.push_back(static_cast<std::size_t>(n));
    } else {
      std::cerr << "usage: acceptance [--criterion N]...\n";
      return 2;
    }
  }
  if (selected.empty()) {
    for (std::size_t n = 1; n <= criteria().size(); ++n) selected.push_back(n);
  }
  bool all = true;
  for (auto n : selected) all = run_one(n) && all;
  return all ? 0 : 1;
}
