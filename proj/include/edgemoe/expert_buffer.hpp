#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <string_view>
#include <vector>

#include "edgemoe/predictor.hpp"
#include "edgemoe/topology.hpp"

namespace edgemoe {

enum class EvictionPolicy { edgemoe, lru, lfu, fifo, random };

// Which way the cyclic layer distance runs. `printed` is (I - i) mod S,
// `forward` is (i - I) mod S.
enum class DistanceMode { printed, forward };

std::string_view to_string(EvictionPolicy p);
EvictionPolicy parse_policy(std::string_view text);
std::string_view to_string(DistanceMode m);
DistanceMode parse_distance_mode(std::string_view text);

// -f / d with d the cyclic distance from current layer I to layer i among S
// decoder MoE layers; d = 0 is taken as S. Higher scores are evicted first;
// f = 0 scores exactly 0, the maximum.
double eviction_score(std::uint64_t f, std::uint32_t i, std::uint32_t current, std::uint32_t layers,
                      DistanceMode mode = DistanceMode::printed);

struct BufferOptions {
  EvictionPolicy policy = EvictionPolicy::edgemoe;
  DistanceMode distance = DistanceMode::forward;  // layers about to run are kept
  std::uint64_t seed = 0;  // random policy only
};

// Byte-budgeted expert cache. Invariant: used_bytes() <= capacity_bytes().
// Pinned entries (current-layer experts, in-flight loads) are never evicted.
class ExpertBuffer {
 public:
  ExpertBuffer(const MoEConfig& cfg, std::uint64_t capacity_bytes, const BufferOptions& options = {});

  std::uint64_t capacity_bytes() const { return capacity_; }
  std::uint64_t used_bytes() const { return used_; }
  std::uint64_t free_bytes() const { return capacity_ - used_; }
  const BufferOptions& options() const { return options_; }

  bool resident(const ExpertRef& e) const { return entries_.contains(e); }
  std::uint64_t size_of(const ExpertRef& e) const;
  std::vector<ExpertRef> residents() const;

  // Decoder MoE layer currently executing (edgemoe distance origin).
  void set_current_layer(std::uint32_t layer) { current_layer_ = layer; }
  std::uint32_t current_layer() const { return current_layer_; }

  // Counts a hit or miss and updates policy bookkeeping. Never inserts.
  bool access(const ExpertRef& e);

  // Makes room and inserts. Returns the evicted experts in eviction order.
  // Throws InfeasibleError if size_bytes exceeds capacity or every
  // remaining resident is pinned.
  std::vector<ExpertRef> insert(const ExpertRef& e, std::uint64_t size_bytes);
  // True when evicting unpinned residents can free size_bytes.
  bool can_make_room(std::uint64_t size_bytes) const;
  // Drops an entry without counting it as an eviction (aborted preload).
  void remove(const ExpertRef& e);

  void pin(const ExpertRef& e);
  void unpin(const ExpertRef& e);
  void unpin_all();
  bool pinned(const ExpertRef& e) const;

  // In-flight entries hold their bytes and are unevictable until they
  // arrive, independently of pin().
  void set_in_flight(const ExpertRef& e, bool in_flight);
  bool in_flight(const ExpertRef& e) const;

  // Running decoder activation count f; encoder experts stay 0.
  std::uint64_t frequency(const ExpertRef& e) const;
  // Adds the profile's decoder marginal counts to f.
  void seed_frequencies(const ActivationProfile& profile);

  // Eviction key of a resident under the active policy (larger = evicted
  // sooner). Not defined for the random policy.
  double policy_score(const ExpertRef& e) const;
  // The victim insert() would evict next, if any unpinned resident exists.
  // For the random policy this is the lowest unpinned index.
  std::optional<ExpertRef> peek_victim() const;

  std::uint64_t hits() const { return hits_; }
  std::uint64_t misses() const { return misses_; }
  std::uint64_t accesses() const { return hits_ + misses_; }
  std::uint64_t evictions() const { return evictions_; }

 private:
  struct Entry {
    std::uint64_t size = 0;
    std::uint64_t inserted_at = 0;
    std::uint64_t last_used = 0;
    bool pinned = false;
    bool in_flight = false;
  };

  std::optional<ExpertRef> pick_victim();

  MoEConfig cfg_;
  std::uint64_t capacity_;
  BufferOptions options_;
  std::mt19937_64 rng_;
  std::map<ExpertRef, Entry> entries_;
  std::vector<std::uint64_t> frequency_;     // edgemoe f, flat index
  std::vector<std::uint64_t> access_count_;  // LFU count, flat index
  std::uint64_t used_ = 0;
  std::uint64_t clock_ = 0;
  std::uint32_t current_layer_ = 0;
  std::uint64_t hits_ = 0;
  std::uint64_t misses_ = 0;
  std::uint64_t evictions_ = 0;
};

using ExpertSizeFn = std::function<std::uint64_t(const ExpertRef&)>;

// Warm start on an empty buffer. With encoder MoE layers: encoder experts in
// (layer, expert) order until the next one does not fit. Without: decoder
// experts by descending profile marginal count (ties by index) while they
// fit; nothing when no profile is given.
void init_buffer(ExpertBuffer& buf, const MoEConfig& cfg, const ActivationProfile* profile, const ExpertSizeFn& size_of);

struct PolicyEvalReport {
  EvictionPolicy policy = EvictionPolicy::edgemoe;
  std::uint64_t slots = 0;
  std::uint64_t capacity_bytes = 0;
  std::uint64_t hits = 0;
  std::uint64_t accesses = 0;
  double hit_ratio = 0.0;
};

// Replays decoder steps with no preloading: access each activated expert and
// insert it on a miss. Capacity is slots FP32 experts. Throws DigestMismatch.
PolicyEvalReport run_policy_eval(const TokenTrace& trace, const MoEConfig& cfg, std::uint64_t slots,
                                 const BufferOptions& options = {});

}  // namespace edgemoe
