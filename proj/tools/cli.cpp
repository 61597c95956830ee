#include "cli.hpp"

#include <chrono>
#include <cmath>
#include <ctime>
#include <fstream>
#include <iomanip>
#include <memory>
#include <optional>
#include <sstream>

#include "CLI11.hpp"
#include "edgemoe/errors.hpp"
#include "edgemoe/expert_buffer.hpp"
#include "edgemoe/pipeline_sim.hpp"
#include "edgemoe/planner.hpp"
#include "edgemoe/predictor.hpp"
#include "edgemoe/quant_plan.hpp"
#include "edgemoe/topology.hpp"
#include "edgemoe/toy_model.hpp"
#include "edgemoe/trace_gen.hpp"
#include "edgemoe/trace_io.hpp"

namespace edgemoe::cli {

namespace {

using nlohmann::json;

struct GenTraceFlags {
  std::string config;
  std::string mode = "powerlaw";
  std::optional<std::size_t> tokens;
  std::size_t tokens_per_sample = 50;
  double zipf_s = PowerlawOptions{}.zipf_s;
  std::size_t n_paths = PowerlawOptions{}.n_paths;
  double cold_fraction = PowerlawOptions{}.cold_fraction;
  double balance_tol = 0.25;
  bool no_balance = false;
  double concentration = MarkovOptions{}.concentration;
  float token_noise = EmitOptions{}.token_noise;
  std::uint64_t seed = 1;
  std::string out;
  std::string stats_out;
};

struct PlanFlags {
  std::string config;
  double loss = 0.02;
  std::size_t probes = 512;
  std::uint64_t probe_seed = 99;
  std::string out;
  std::string heatmap_out;
};

struct PredictorFlags {
  std::vector<std::string> traces;
  std::string config;
  std::uint32_t history = 2;
  double alpha = 0.5;
  std::uint64_t min_count = 1;
  std::string out;
};

struct CacheFlags {
  std::string trace;
  std::string config;
  std::string policy = "edgemoe";
  std::string distance = "forward";
  std::uint64_t slots = 10;
  std::uint64_t seed = 0;
  std::string out;
};

struct SimFlags {
  std::string trace;
  std::string config;
  std::string engine = "edgemoe";
  std::string engines = "all";
  std::string plan;
  std::string predictor;
  std::optional<double> budget_mb;
  std::optional<std::uint64_t> slots;
  std::string cost = "tx2-ssd-like";
  double ratio = 3.5;
  std::uint32_t preload_m = 1;
  std::string policy = "edgemoe";
  std::string distance = "forward";
  bool io_exp_plan = false;
  std::string out;
  std::string event_log;
};

std::string utc_now() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream s;
  s << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return s.str();
}

class Context {
 public:
  Context(std::ostream& out, bool no_timestamp) : out_(out), no_timestamp_(no_timestamp) {}

  json stamped(json j) const {
    if (!no_timestamp_) j["generated_at"] = utc_now();
    return j;
  }

  void write_json(const std::string& path, const json& j) const {
    std::ofstream f(path);
    if (!f) throw ConfigError("cannot write " + path);
    f << stamped(j).dump(2) << '\n';
  }

  // One-line JSON summary on stdout.
  void summary(const json& j) const { out_ << stamped(j).dump() << '\n'; }

  std::ostream& out() const { return out_; }

 private:
  std::ostream& out_;
  bool no_timestamp_;
};

MoEConfig config_or_default(const std::string& path) {
  MoEConfig cfg = path.empty() ? MoEConfig{} : load_config(path);
  require_valid(cfg);
  return cfg;
}

std::filesystem::path truth_path_for(const std::string& out) {
  std::filesystem::path p(out);
  return p.parent_path() / (p.stem().string() + ".truth.json");
}

void gen_trace(const GenTraceFlags& f, const Context& ctx) {
  const MoEConfig cfg = config_or_default(f.config);
  TokenTrace trace;
  json summary = {{"command", "gen-trace"}, {"mode", f.mode}, {"out", f.out}, {"seed", f.seed}};
  if (f.mode == "powerlaw") {
    PowerlawOptions o;
    o.tokens = f.tokens.value_or(o.tokens);
    o.tokens_per_sample = f.tokens_per_sample;
    o.zipf_s = f.zipf_s;
    o.n_paths = f.n_paths;
    o.cold_fraction = f.cold_fraction;
    o.seed = f.seed;
    o.balance_tolerance = f.no_balance ? std::nullopt : std::optional<double>(f.balance_tol);
    trace = generate_powerlaw_trace(cfg, o);
  } else if (f.mode == "markov") {
    MarkovOptions o;
    o.tokens = f.tokens.value_or(o.tokens);
    o.tokens_per_sample = f.tokens_per_sample;
    o.concentration = f.concentration;
    o.seed = f.seed;
    auto generated = generate_markov_trace(cfg, o);
    trace = std::move(generated.trace);
    const auto truth = truth_path_for(f.out);
    ctx.write_json(truth.string(), markov_truth_to_json(generated.truth));
    summary["truth"] = truth.string();
  } else if (f.mode == "toy") {
    EmitOptions o;
    const std::size_t tokens = f.tokens.value_or(10000);
    o.tokens_per_sample = f.tokens_per_sample;
    o.samples = (tokens + f.tokens_per_sample - 1) / f.tokens_per_sample;
    o.seed = f.seed;
    o.token_noise = f.token_noise;
    trace = emit_trace(build_toy_model(cfg), o);
  } else {
    throw ConfigError("unknown trace mode '" + f.mode + "' (expected powerlaw, markov or toy)");
  }
  write_trace(trace, std::filesystem::path(f.out));
  const TraceStats stats = trace_stats(trace);
  if (!f.stats_out.empty()) ctx.write_json(f.stats_out, trace_stats_to_json(stats));
  summary["tokens"] = trace.decode_token_count();
  summary["samples"] = trace.samples.size();
  summary["distinct_paths"] = stats.distinct_paths;
  summary["top20_coverage"] = stats.top_path_coverage(0.2);
  summary["max_marginal_deviation"] = stats.max_marginal_deviation;
  ctx.summary(summary);
}

void plan(const PlanFlags& f, const Context& ctx) {
  if (!(f.loss >= 0.0 && f.loss < 1.0)) throw ConfigError("--loss must lie in [0, 1)");
  if (f.probes == 0) throw ConfigError("--probes must be positive");
  const MoEConfig cfg = config_or_default(f.config);
  const ToyMoEModel model(cfg);
  const ProbeSet probes = make_probes(model, f.probes, f.probe_seed);
  const ImportanceHeatmap heatmap = profile_importance(model, probes);
  const SweepResult sweep = uniform_sweep(model, probes);
  const QuantPlan plan = select_bitwidths(model, probes, heatmap, sweep, f.loss);
  const std::uint64_t bytes = plan_storage_bytes(plan, cfg);
  json j = plan_to_json(plan, bytes);
  json sweep_json = json::object();
  for (const auto& [b, loss] : sweep.loss) sweep_json[std::string(to_string(b))] = loss;
  j["uniform_sweep"] = sweep_json;
  j["fp32_storage_bytes"] = plan_storage_bytes(uniform_plan(cfg, Bitwidth::fp32), cfg);
  ctx.write_json(f.out, j);
  if (!f.heatmap_out.empty()) ctx.write_json(f.heatmap_out, heatmap_to_json(heatmap, cfg));
  ctx.summary({{"command", "plan"},
               {"out", f.out},
               {"tolerable_loss", f.loss},
               {"measured_loss", *plan.measured_loss},
               {"low_bit_count", plan.low_bit_count},
               {"bounds", {to_string(plan.lower_bound), to_string(plan.upper_bound)}},
               {"non_expert_bitwidth", to_string(plan.non_expert_bitwidth)},
               {"storage_bytes", bytes}});
}

void build_predictor(const PredictorFlags& f, const Context& ctx) {
  std::optional<MoEConfig> cfg;
  if (!f.config.empty()) cfg = config_or_default(f.config);
  std::vector<TokenTrace> traces;
  for (const auto& path : f.traces) traces.push_back(read_trace(std::filesystem::path(path), cfg ? &*cfg : nullptr));
  ProfileOptions o;
  o.history = f.history;
  o.alpha = f.alpha;
  o.min_count = f.min_count;
  const ActivationProfile profile = build_profile(traces, o);
  save_profile(profile, f.out);
  ctx.summary({{"command", "build-predictor"},
               {"out", f.out},
               {"tokens", profile.tokens()},
               {"keys", profile.entries().size()},
               {"history", profile.history()},
               {"alpha", profile.alpha()}});
}

void eval_cache(const CacheFlags& f, const Context& ctx) {
  const MoEConfig cfg = config_or_default(f.config);
  const TokenTrace trace = read_trace(std::filesystem::path(f.trace), &cfg);
  std::vector<EvictionPolicy> policies;
  if (f.policy == "all") {
    policies = {EvictionPolicy::edgemoe, EvictionPolicy::lru, EvictionPolicy::lfu, EvictionPolicy::fifo,
                EvictionPolicy::random};
  } else {
    policies = {parse_policy(f.policy)};
  }
  const DistanceMode distance = parse_distance_mode(f.distance);
  json results = json::array();
  for (auto p : policies) {
    const auto r = run_policy_eval(trace, cfg, f.slots, BufferOptions{p, distance, f.seed});
    results.push_back({{"policy", to_string(p)},
                       {"hit_ratio", r.hit_ratio},
                       {"hits", r.hits},
                       {"accesses", r.accesses}});
  }
  json report = {{"command", "eval-cache"},
                 {"slots", f.slots},
                 {"capacity_bytes", f.slots * expert_size_bytes(cfg, Bitwidth::fp32)},
                 {"distance", to_string(distance)},
                 {"tokens", trace.decode_token_count()},
                 {"results", results}};
  if (!f.out.empty()) ctx.write_json(f.out, report);
  ctx.summary(report);
}

struct SimInputs {
  MoEConfig cfg;
  std::shared_ptr<const TokenTrace> trace;
  std::optional<QuantPlan> plan;
  std::shared_ptr<const ActivationProfile> profile;
  CostModel cost;
};

SimInputs load_sim_inputs(const SimFlags& f) {
  SimInputs in;
  in.cfg = config_or_default(f.config);
  in.trace = std::make_shared<const TokenTrace>(read_trace(std::filesystem::path(f.trace), &in.cfg));
  if (!f.plan.empty()) in.plan = load_plan(f.plan, &in.cfg);
  if (!f.predictor.empty()) in.profile = std::make_shared<const ActivationProfile>(load_profile(f.predictor, &in.cfg));
  in.cost = cost_preset(f.cost, in.cfg, f.ratio);
  return in;
}

EngineSpec make_engine(EngineKind kind, const SimFlags& f, const SimInputs& in) {
  EngineSpec e;
  e.kind = kind;
  if (kind == EngineKind::edgemoe) {
    if (!in.plan || !in.profile) throw ConfigError("the edgemoe engine needs --plan and --predictor");
    e.plan = in.plan;
    e.profile = in.profile;
    e.preload_m = f.preload_m;
    e.buffer = BufferOptions{parse_policy(f.policy), parse_distance_mode(f.distance), 0};
  } else if (kind == EngineKind::io_exp && f.io_exp_plan) {
    if (!in.plan) throw ConfigError("--io-exp-plan needs --plan");
    e.plan = in.plan;
  }
  return e;
}

std::uint64_t budget_for(const SimFlags& f, const SimInputs& in, const EngineSpec& e) {
  if (f.budget_mb) {
    if (!(*f.budget_mb >= 0.0)) throw ConfigError("--budget-mb must be non-negative");
    return static_cast<std::uint64_t>(std::llround(*f.budget_mb * 1e6));
  }
  return slots_budget(in.cfg, e, in.cost, f.slots.value_or(10));
}

void simulate_cmd(const SimFlags& f, const Context& ctx) {
  const SimInputs in = load_sim_inputs(f);
  const EngineSpec engine = make_engine(parse_engine(f.engine), f, in);
  SimOptions options;
  options.record_events = !f.event_log.empty();
  const SimReport report = simulate(*in.trace, in.cfg, engine, in.cost, budget_for(f, in, engine), options);
  if (!f.event_log.empty()) {
    std::ofstream log(f.event_log);
    if (!log) throw ConfigError("cannot write " + f.event_log);
    write_event_log(report.events, log);
  }
  json j = report_to_json(report);
  j["cost"] = cost_to_json(in.cost);
  j["cost_preset"] = f.cost;
  if (!f.out.empty()) ctx.write_json(f.out, j);
  ctx.summary({{"command", "simulate"},
               {"engine", report.engine},
               {"tpot_seconds", report.tpot_seconds},
               {"hit_ratio", report.hit_ratio},
               {"peak_resident_bytes", report.peak_resident_bytes}});
}

void compare_cmd(const SimFlags& f, const Context& ctx) {
  const SimInputs in = load_sim_inputs(f);
  std::vector<EngineKind> kinds;
  if (f.engines == "all") {
    kinds = {EngineKind::io_free, EngineKind::io_exp, EngineKind::io_qexp, EngineKind::edgemoe};
  } else {
    std::stringstream list(f.engines);
    std::string name;
    while (std::getline(list, name, ',')) kinds.push_back(parse_engine(name));
  }
  std::vector<EngineSpec> engines;
  for (auto k : kinds) engines.push_back(make_engine(k, f, in));
  const Comparison c =
      compare_engines(*in.trace, in.cfg, engines, in.cost, [&](const EngineSpec& e) { return budget_for(f, in, e); });
  json j = comparison_to_json(c);
  j["cost"] = cost_to_json(in.cost);
  j["cost_preset"] = f.cost;
  if (!f.out.empty()) ctx.write_json(f.out, j);
  json rows = json::array();
  for (const auto& r : c.reports) {
    json row = {{"engine", r.engine}, {"tpot_seconds", r.tpot_seconds}, {"hit_ratio", r.hit_ratio}};
    if (c.speedup_vs_io_exp.contains(r.engine)) row["speedup_vs_io_exp"] = c.speedup_vs_io_exp.at(r.engine);
    if (c.speedup_vs_io_free.contains(r.engine)) row["speedup_vs_io_free"] = c.speedup_vs_io_free.at(r.engine);
    rows.push_back(row);
  }
  ctx.summary({{"command", "compare"}, {"table", rows}});
}

void add_sim_flags(CLI::App* cmd, SimFlags& f) {
  cmd->add_option("--trace", f.trace, "Trace JSONL")->required();
  cmd->add_option("--config", f.config, "Model config JSON (default: toy config)");
  cmd->add_option("--plan", f.plan, "Quantization plan JSON");
  cmd->add_option("--predictor", f.predictor, "Activation profile JSON");
  cmd->add_option("--budget-mb", f.budget_mb, "Memory budget in MB (1e6 bytes)");
  cmd->add_option("--slots", f.slots, "Budget as non-expert bytes + N FP32 experts (default 10)");
  cmd->add_option("--cost", f.cost, "Cost preset: tx2-ssd-like | rpi-sdcard-like");
  cmd->add_option("--ratio", f.ratio, "On-demand load / resident compute ratio of the preset");
  cmd->add_option("--preload-m", f.preload_m, "Experts preloaded per layer");
  cmd->add_option("--policy", f.policy, "Buffer eviction policy for edgemoe");
  cmd->add_option("--distance", f.distance, "Eviction distance: printed | forward");
  cmd->add_flag("--io-exp-plan", f.io_exp_plan, "Load io_exp experts at the plan's bitwidths");
  cmd->add_option("--out", f.out, "Report JSON");
}

}  // namespace

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Expert-wise quantization planning, expert buffering and preload simulation for MoE inference"};
  app.require_subcommand(1);
  bool no_timestamp = false;
  app.add_flag("--no-timestamp", no_timestamp, "Omit generation timestamps (byte-reproducible output)");

  GenTraceFlags gen;
  auto* gen_cmd = app.add_subcommand("gen-trace", "Generate a synthetic or toy-model activation trace");
  gen_cmd->add_option("--config", gen.config, "Model config JSON (default: toy config)");
  gen_cmd->add_option("--mode", gen.mode, "powerlaw | markov | toy");
  gen_cmd->add_option("--tokens", gen.tokens, "Decode tokens");
  gen_cmd->add_option("--tokens-per-sample", gen.tokens_per_sample);
  gen_cmd->add_option("--zipf-s", gen.zipf_s, "Power-law exponent");
  gen_cmd->add_option("--n-paths", gen.n_paths, "Catalog size");
  gen_cmd->add_option("--cold-fraction", gen.cold_fraction, "Share of uniformly random paths");
  gen_cmd->add_option("--balance-tol", gen.balance_tol, "Max relative marginal deviation");
  gen_cmd->add_flag("--no-balance", gen.no_balance, "Skip the marginal balance check");
  gen_cmd->add_option("--concentration", gen.concentration, "Dirichlet concentration (markov)");
  gen_cmd->add_option("--token-noise", gen.token_noise, "Next-token input noise (toy)");
  gen_cmd->add_option("--seed", gen.seed);
  gen_cmd->add_option("--out", gen.out, "Trace JSONL")->required();
  gen_cmd->add_option("--stats-out", gen.stats_out, "Trace statistics JSON");

  PlanFlags pl;
  auto* plan_cmd = app.add_subcommand("plan", "Select per-expert bitwidths for a tolerable accuracy loss");
  plan_cmd->add_option("--config", pl.config, "Model config JSON (default: toy config)");
  plan_cmd->add_option("--loss", pl.loss, "Tolerable accuracy loss P in [0, 1)");
  plan_cmd->add_option("--probes", pl.probes, "Probe inputs");
  plan_cmd->add_option("--probe-seed", pl.probe_seed);
  plan_cmd->add_option("--out", pl.out, "Plan JSON")->required();
  plan_cmd->add_option("--heatmap-out", pl.heatmap_out, "Importance heatmap JSON");

  PredictorFlags pr;
  auto* pred_cmd = app.add_subcommand("build-predictor", "Build an activation profile from traces");
  pred_cmd->add_option("--trace", pr.traces, "Trace JSONL (repeatable)")->required();
  pred_cmd->add_option("--config", pr.config, "Check traces against this config");
  pred_cmd->add_option("--history", pr.history, "History window h (1-3)");
  pred_cmd->add_option("--alpha", pr.alpha, "Laplace smoothing");
  pred_cmd->add_option("--min-count", pr.min_count, "Observations before trusting a key");
  pred_cmd->add_option("--out", pr.out, "Profile JSON")->required();

  CacheFlags ca;
  auto* cache_cmd = app.add_subcommand("eval-cache", "Replay a trace through the expert buffer without preloading");
  cache_cmd->add_option("--trace", ca.trace, "Trace JSONL")->required();
  cache_cmd->add_option("--config", ca.config, "Model config JSON (default: toy config)");
  cache_cmd->add_option("--policy", ca.policy, "edgemoe | lru | lfu | fifo | random | all");
  cache_cmd->add_option("--distance", ca.distance, "Eviction distance: printed | forward");
  cache_cmd->add_option("--slots", ca.slots, "Buffer capacity in FP32 experts");
  cache_cmd->add_option("--seed", ca.seed, "Random policy seed");
  cache_cmd->add_option("--out", ca.out, "Report JSON");

  SimFlags si;
  auto* sim_cmd = app.add_subcommand("simulate", "Simulate one inference engine over a trace");
  add_sim_flags(sim_cmd, si);
  sim_cmd->add_option("--engine", si.engine, "edgemoe | io-free | io-exp | io-qexp");
  sim_cmd->add_option("--event-log", si.event_log, "Event log CSV");

  SimFlags co;
  auto* cmp_cmd = app.add_subcommand("compare", "Simulate several engines and report speedups");
  add_sim_flags(cmp_cmd, co);
  cmp_cmd->add_option("--engines", co.engines, "all or a comma-separated engine list");

  std::vector<const char*> argv{"edgemoe"};
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::CallForHelp&) {
    out << app.help();
    return kExitOk;
  } catch (const CLI::ParseError& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }

  const Context ctx(out, no_timestamp);
  try {
    if (gen_cmd->parsed()) gen_trace(gen, ctx);
    else if (plan_cmd->parsed()) plan(pl, ctx);
    else if (pred_cmd->parsed()) build_predictor(pr, ctx);
    else if (cache_cmd->parsed()) eval_cache(ca, ctx);
    else if (sim_cmd->parsed()) simulate_cmd(si, ctx);
    else if (cmp_cmd->parsed()) compare_cmd(co, ctx);
  } catch (const InfeasibleError& e) {
    err << "error: " << e.what() << '\n';
    return kExitInfeasible;
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    // Well-formed JSON with the wrong shape, e.g. a string where a count belongs.
    err << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}

}  // namespace edgemoe::cli
