#include "edgemoe/expert_buffer.hpp"

#include <algorithm>
#include <cctype>
#include <string>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

std::string lower(std::string_view text) {
  std::string s(text);
  std::transform(s.begin(), s.end(), s.begin(), [](unsigned char c) { return std::tolower(c); });
  return s;
}

}  // namespace

std::string_view to_string(EvictionPolicy p) {
  switch (p) {
    case EvictionPolicy::edgemoe: return "edgemoe";
    case EvictionPolicy::lru: return "lru";
    case EvictionPolicy::lfu: return "lfu";
    case EvictionPolicy::fifo: return "fifo";
    case EvictionPolicy::random: return "random";
  }
  return "edgemoe";
}

EvictionPolicy parse_policy(std::string_view text) {
  const std::string s = lower(text);
  for (auto p : {EvictionPolicy::edgemoe, EvictionPolicy::lru, EvictionPolicy::lfu, EvictionPolicy::fifo,
                 EvictionPolicy::random}) {
    if (s == to_string(p)) return p;
  }
  throw ConfigError("unknown eviction policy '" + std::string(text) + "'");
}

std::string_view to_string(DistanceMode m) { return m == DistanceMode::printed ? "printed" : "forward"; }

DistanceMode parse_distance_mode(std::string_view text) {
  const std::string s = lower(text);
  if (s == "printed") return DistanceMode::printed;
  if (s == "forward") return DistanceMode::forward;
  throw ConfigError("unknown distance mode '" + std::string(text) + "'");
}

double eviction_score(std::uint64_t f, std::uint32_t i, std::uint32_t current, std::uint32_t layers,
                      DistanceMode mode) {
  if (layers == 0) throw ConfigError("eviction score needs at least one decoder MoE layer");
  if (f == 0) return 0.0;
  const std::uint32_t d_raw =
      mode == DistanceMode::printed ? (layers - i % layers + current) % layers : (layers - current % layers + i) % layers;
  const std::uint32_t d = d_raw == 0 ? layers : d_raw;
  return -static_cast<double>(f) / static_cast<double>(d);
}

ExpertBuffer::ExpertBuffer(const MoEConfig& cfg, std::uint64_t capacity_bytes, const BufferOptions& options)
    : cfg_(cfg),
      capacity_(capacity_bytes),
      options_(options),
      rng_(options.seed),
      frequency_(total_experts(cfg), 0),
      access_count_(total_experts(cfg), 0) {}

std::uint64_t ExpertBuffer::size_of(const ExpertRef& e) const {
  auto it = entries_.find(e);
  return it == entries_.end() ? 0 : it->second.size;
}

std::vector<ExpertRef> ExpertBuffer::residents() const {
  std::vector<ExpertRef> out;
  for (const auto& [e, entry] : entries_) out.push_back(e);
  return out;
}

bool ExpertBuffer::access(const ExpertRef& e) {
  if (!in_range(cfg_, e)) throw ConfigError("expert " + to_string(e) + " out of range");
  const std::size_t flat = flat_index(cfg_, e);
  ++access_count_[flat];
  if (e.stage == Stage::decoder) ++frequency_[flat];
  ++clock_;
  auto it = entries_.find(e);
  if (it == entries_.end()) {
    ++misses_;
    return false;
  }
  it->second.last_used = clock_;
  ++hits_;
  return true;
}

double ExpertBuffer::policy_score(const ExpertRef& e) const {
  const auto& entry = entries_.at(e);
  const std::size_t flat = flat_index(cfg_, e);
  switch (options_.policy) {
    case EvictionPolicy::edgemoe:
      if (e.stage == Stage::encoder) return 0.0;
      return eviction_score(frequency_[flat], e.layer, current_layer_, cfg_.decoder_moe_layers, options_.distance);
    case EvictionPolicy::lru: return -static_cast<double>(entry.last_used);
    case EvictionPolicy::lfu: return -static_cast<double>(access_count_[flat]);
    case EvictionPolicy::fifo: return -static_cast<double>(entry.inserted_at);
    case EvictionPolicy::random: break;
  }
  throw ConfigError("the random policy has no eviction score");
}

std::optional<ExpertRef> ExpertBuffer::peek_victim() const {
  std::optional<ExpertRef> best;
  double best_score = 0.0;
  for (const auto& [e, entry] : entries_) {
    if (entry.pinned || entry.in_flight) continue;
    if (options_.policy == EvictionPolicy::random) return e;
    const double s = policy_score(e);
    if (!best || s > best_score) {
      best = e;
      best_score = s;
    }
  }
  return best;
}

std::optional<ExpertRef> ExpertBuffer::pick_victim() {
  if (options_.policy != EvictionPolicy::random) return peek_victim();
  std::vector<ExpertRef> candidates;
  for (const auto& [e, entry] : entries_) {
    if (!entry.pinned && !entry.in_flight) candidates.push_back(e);
  }
  if (candidates.empty()) return std::nullopt;
  std::uniform_int_distribution<std::size_t> pick(0, candidates.size() - 1);
  return candidates[pick(rng_)];
}

std::vector<ExpertRef> ExpertBuffer::insert(const ExpertRef& e, std::uint64_t size_bytes) {
  if (!in_range(cfg_, e)) throw ConfigError("expert " + to_string(e) + " out of range");
  if (resident(e)) throw ConfigError("expert " + to_string(e) + " is already resident");
  if (size_bytes > capacity_) {
    throw InfeasibleError("expert " + to_string(e) + " (" + std::to_string(size_bytes) +
                          " bytes) exceeds buffer capacity " + std::to_string(capacity_));
  }
  // Checked up front so a failed insert leaves the buffer untouched.
  if (!can_make_room(size_bytes)) throw InfeasibleError("eviction deadlock: every resident expert is pinned");
  std::vector<ExpertRef> evicted;
  while (free_bytes() < size_bytes) {
    const auto victim = pick_victim();
    if (!victim) throw InfeasibleError("eviction deadlock: every resident expert is pinned");
    used_ -= entries_.at(*victim).size;
    entries_.erase(*victim);
    ++evictions_;
    evicted.push_back(*victim);
  }
  ++clock_;
  entries_.emplace(e, Entry{size_bytes, clock_, clock_, false, false});
  used_ += size_bytes;
  return evicted;
}

bool ExpertBuffer::can_make_room(std::uint64_t size_bytes) const {
  std::uint64_t reclaimable = free_bytes();
  for (const auto& [e, entry] : entries_) {
    if (!entry.pinned && !entry.in_flight) reclaimable += entry.size;
  }
  return reclaimable >= size_bytes;
}

void ExpertBuffer::remove(const ExpertRef& e) {
  auto it = entries_.find(e);
  if (it == entries_.end()) return;
  used_ -= it->second.size;
  entries_.erase(it);
}

void ExpertBuffer::pin(const ExpertRef& e) {
  auto it = entries_.find(e);
  if (it == entries_.end()) throw ConfigError("cannot pin non-resident expert " + to_string(e));
  it->second.pinned = true;
}

void ExpertBuffer::unpin(const ExpertRef& e) {
  auto it = entries_.find(e);
  if (it != entries_.end()) it->second.pinned = false;
}

void ExpertBuffer::unpin_all() {
  for (auto& [e, entry] : entries_) entry.pinned = false;
}

bool ExpertBuffer::pinned(const ExpertRef& e) const {
  auto it = entries_.find(e);
  return it != entries_.end() && (it->second.pinned || it->second.in_flight);
}

void ExpertBuffer::set_in_flight(const ExpertRef& e, bool in_flight) {
  entries_.at(e).in_flight = in_flight;
}

bool ExpertBuffer::in_flight(const ExpertRef& e) const {
  auto it = entries_.find(e);
  return it != entries_.end() && it->second.in_flight;
}

std::uint64_t ExpertBuffer::frequency(const ExpertRef& e) const { return frequency_[flat_index(cfg_, e)]; }

void ExpertBuffer::seed_frequencies(const ActivationProfile& profile) {
  const auto& table = profile.marginal_counts(Stage::decoder);
  for (std::uint32_t l = 0; l < table.size() && l < cfg_.decoder_moe_layers; ++l) {
    for (std::uint32_t j = 0; j < table[l].size() && j < cfg_.experts_per_layer; ++j) {
      frequency_[flat_index(cfg_, ExpertRef{Stage::decoder, l, j})] += table[l][j];
    }
  }
}

void init_buffer(ExpertBuffer& buf, const MoEConfig& cfg, const ActivationProfile* profile,
                 const ExpertSizeFn& size_of) {
  std::vector<ExpertRef> order;
  if (cfg.encoder_moe_layers > 0) {
    for (std::uint32_t l = 0; l < cfg.encoder_moe_layers; ++l) {
      for (std::uint32_t j = 0; j < cfg.experts_per_layer; ++j) order.push_back({Stage::encoder, l, j});
    }
  } else if (profile != nullptr) {
    const auto& counts = profile->marginal_counts(Stage::decoder);
    for (std::uint32_t l = 0; l < cfg.decoder_moe_layers; ++l) {
      for (std::uint32_t j = 0; j < cfg.experts_per_layer; ++j) order.push_back({Stage::decoder, l, j});
    }
    auto count = [&](const ExpertRef& e) { return e.layer < counts.size() ? counts[e.layer][e.expert] : 0; };
    std::stable_sort(order.begin(), order.end(),
                     [&](const ExpertRef& a, const ExpertRef& b) { return count(a) > count(b); });
  }
  for (const auto& e : order) {
    const std::uint64_t size = size_of(e);
    if (size > buf.free_bytes()) break;
    buf.insert(e, size);
  }
}

PolicyEvalReport run_policy_eval(const TokenTrace& trace, const MoEConfig& cfg, std::uint64_t slots,
                                 const BufferOptions& options) {
  check_trace_digest(trace, cfg);
  const std::uint64_t expert_bytes = expert_size_bytes(cfg, Bitwidth::fp32);
  ExpertBuffer buf(cfg, slots * expert_bytes, options);
  // Pinning the step's experts is only safe when all of them fit at once.
  const bool pin_step = slots >= cfg.routing_k;
  for (const auto& sample : trace.samples) {
    for (const auto& token : sample.decode_tokens) {
      for (std::uint32_t l = 0; l < token.size(); ++l) {
        buf.set_current_layer(l);
        for (auto j : token[l].experts) {
          const ExpertRef e{Stage::decoder, l, j};
          if (!buf.access(e) && expert_bytes <= buf.capacity_bytes()) buf.insert(e, expert_bytes);
          if (pin_step && buf.resident(e)) buf.pin(e);
        }
        buf.unpin_all();
      }
    }
  }
  PolicyEvalReport report;
  report.policy = options.policy;
  report.slots = slots;
  report.capacity_bytes = buf.capacity_bytes();
  report.hits = buf.hits();
  report.accesses = buf.accesses();
  report.hit_ratio = report.accesses == 0 ? 0.0 : static_cast<double>(report.hits) / report.accesses;
  return report;
}

}  // namespace edgemoe
