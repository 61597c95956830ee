#include "edgemoe/predictor.hpp"

#include <algorithm>
#include <fstream>
#include <numeric>

#include "edgemoe/errors.hpp"

namespace edgemoe {

namespace {

constexpr int kProfileVersion = 1;

void check_options(const ProfileOptions& options) {
  if (options.history < 1 || options.history > 3) throw ConfigError("history window must be 1, 2 or 3");
  if (!(options.alpha >= 0.0)) throw ConfigError("smoothing alpha must be non-negative");
}

RankedExperts rank(const std::vector<double>& probs) {
  RankedExperts ranked;
  for (std::uint32_t i = 0; i < probs.size(); ++i) ranked.emplace_back(i, probs[i]);
  std::stable_sort(ranked.begin(), ranked.end(), [](const auto& a, const auto& b) { return a.second > b.second; });
  return ranked;
}

}  // namespace

HistoryKey make_history_key(std::span<const ActivationStep> token_steps, std::uint32_t layer, std::uint32_t h) {
  HistoryKey key;
  key.layer = layer;
  const std::uint32_t first = layer > h ? layer - h : 0;
  for (std::uint32_t l = first; l < layer && l < token_steps.size(); ++l) {
    auto experts = token_steps[l].experts;
    std::sort(experts.begin(), experts.end());
    key.steps.push_back(std::move(experts));
  }
  return key;
}

std::string to_string(const HistoryKey& key) {
  std::string s = "layer " + std::to_string(key.layer) + " after [";
  for (std::size_t i = 0; i < key.steps.size(); ++i) {
    if (i > 0) s += ' ';
    s += '{';
    for (std::size_t j = 0; j < key.steps[i].size(); ++j) {
      if (j > 0) s += ',';
      s += std::to_string(key.steps[i][j]);
    }
    s += '}';
  }
  return s + "]";
}

ActivationProfile::ActivationProfile(const TokenTrace& header, const ProfileOptions& options)
    : digest_(header.config_digest),
      experts_(header.experts_per_layer),
      decoder_layers_(header.decoder_moe_layers),
      encoder_layers_(header.encoder_moe_layers),
      routing_k_(header.routing_k),
      options_(options),
      decoder_marginals_(header.decoder_moe_layers, std::vector<std::uint64_t>(header.experts_per_layer, 0)),
      encoder_marginals_(header.encoder_moe_layers, std::vector<std::uint64_t>(header.experts_per_layer, 0)) {
  check_options(options);
}

void ActivationProfile::observe(const TokenTrace& trace) {
  if (trace.config_digest != digest_) throw DigestMismatch("trace", digest_, trace.config_digest);
  for (const auto& sample : trace.samples) {
    for (std::size_t l = 0; l < sample.encoder_steps.size(); ++l) {
      for (auto j : sample.encoder_steps[l].experts) ++encoder_marginals_[l][j];
    }
    for (const auto& token : sample.decode_tokens) {
      ++tokens_;
      for (std::uint32_t l = 0; l < token.size(); ++l) {
        for (auto j : token[l].experts) ++decoder_marginals_[l][j];
        if (l == 0) continue;
        auto& counts = counts_[make_history_key(token, l, options_.history)];
        if (counts.empty()) counts.assign(experts_, 0);
        for (auto j : token[l].experts) ++counts[j];
      }
    }
  }
}

void ActivationProfile::merge(const ActivationProfile& other) {
  if (other.digest_ != digest_) throw DigestMismatch("profile", digest_, other.digest_);
  if (other.options_.history != options_.history || other.options_.alpha != options_.alpha ||
      other.options_.min_count != options_.min_count) {
    throw ConfigError("cannot merge profiles built with different options");
  }
  tokens_ += other.tokens_;
  for (const auto& [key, counts] : other.counts_) {
    auto& mine = counts_[key];
    if (mine.empty()) mine.assign(experts_, 0);
    for (std::size_t j = 0; j < counts.size(); ++j) mine[j] += counts[j];
  }
  auto add = [](auto& into, const auto& from) {
    for (std::size_t l = 0; l < from.size(); ++l) {
      for (std::size_t j = 0; j < from[l].size(); ++j) into[l][j] += from[l][j];
    }
  };
  add(decoder_marginals_, other.decoder_marginals_);
  add(encoder_marginals_, other.encoder_marginals_);
}

std::uint64_t ActivationProfile::observations(const HistoryKey& key) const {
  auto it = counts_.find(key);
  if (it == counts_.end()) return 0;
  return std::accumulate(it->second.begin(), it->second.end(), std::uint64_t{0}) / routing_k_;
}

std::vector<double> ActivationProfile::smoothed(std::span<const std::uint64_t> counts) const {
  const double total = static_cast<double>(std::accumulate(counts.begin(), counts.end(), std::uint64_t{0}));
  const double denom = total + options_.alpha * experts_;
  std::vector<double> probs(experts_, 1.0 / experts_);
  if (denom <= 0.0) return probs;
  for (std::size_t j = 0; j < experts_; ++j) probs[j] = (static_cast<double>(counts[j]) + options_.alpha) / denom;
  return probs;
}

std::vector<double> ActivationProfile::conditional(const HistoryKey& key) const {
  auto it = counts_.find(key);
  if (it == counts_.end()) return {};
  return smoothed(it->second);
}

std::vector<double> ActivationProfile::marginal(Stage stage, std::uint32_t layer) const {
  const auto& table = marginal_counts(stage);
  if (layer >= table.size()) throw ConfigError("marginal requested for layer " + std::to_string(layer));
  return smoothed(table[layer]);
}

ActivationProfile build_profile(std::span<const TokenTrace> traces, const ProfileOptions& options) {
  check_options(options);
  if (traces.empty()) throw ConfigError("no traces to profile");
  ActivationProfile profile(traces.front(), options);
  for (const auto& t : traces) profile.observe(t);
  if (profile.tokens() == 0) throw ConfigError("traces contain no decode tokens");
  return profile;
}

RankedExperts predict(const ActivationProfile& profile, const HistoryKey& key) {
  if (key.layer >= profile.decoder_moe_layers()) {
    throw ConfigError("prediction requested for decoder layer " + std::to_string(key.layer));
  }
  if (!key.steps.empty() && profile.observations(key) >= profile.min_count()) {
    return rank(profile.conditional(key));
  }
  return rank(profile.marginal(Stage::decoder, key.layer));
}

std::vector<ExpertRef> preload_candidates(const ActivationProfile& profile, const HistoryKey& key, std::uint32_t m) {
  if (m < 1 || m > profile.experts_per_layer()) {
    throw ConfigError("preload count must lie in [1, " + std::to_string(profile.experts_per_layer()) + "]");
  }
  const auto ranked = predict(profile, key);
  std::vector<ExpertRef> out;
  for (std::uint32_t i = 0; i < m; ++i) out.push_back(ExpertRef{Stage::decoder, key.layer, ranked[i].first});
  return out;
}

nlohmann::json profile_to_json(const ActivationProfile& p) {
  nlohmann::json entries = nlohmann::json::array();
  for (const auto& [key, counts] : p.counts_) {
    entries.push_back({{"layer", key.layer}, {"key", key.steps}, {"counts", counts}});
  }
  return {{"format", "edgemoe-profile"},
          {"version", kProfileVersion},
          {"config_digest", p.digest_},
          {"experts_per_layer", p.experts_},
          {"encoder_moe_layers", p.encoder_layers_},
          {"decoder_moe_layers", p.decoder_layers_},
          {"routing_k", p.routing_k_},
          {"history", p.options_.history},
          {"alpha", p.options_.alpha},
          {"min_count", p.options_.min_count},
          {"tokens", p.tokens_},
          {"entries", std::move(entries)},
          {"marginals", {{"encoder", p.encoder_marginals_}, {"decoder", p.decoder_marginals_}}}};
}

ActivationProfile profile_from_json(const nlohmann::json& j) {
  try {
    const int version = j.at("version").get<int>();
    if (version != kProfileVersion) {
      throw ConfigError("profile version " + std::to_string(version) + " is not supported (expected " +
                        std::to_string(kProfileVersion) + ")");
    }
    ActivationProfile p;
    p.digest_ = j.at("config_digest").get<std::string>();
    p.experts_ = j.at("experts_per_layer").get<std::uint32_t>();
    p.encoder_layers_ = j.at("encoder_moe_layers").get<std::uint32_t>();
    p.decoder_layers_ = j.at("decoder_moe_layers").get<std::uint32_t>();
    p.routing_k_ = j.at("routing_k").get<std::uint32_t>();
    p.options_.history = j.at("history").get<std::uint32_t>();
    p.options_.alpha = j.at("alpha").get<double>();
    p.options_.min_count = j.at("min_count").get<std::uint64_t>();
    p.tokens_ = j.at("tokens").get<std::uint64_t>();
    check_options(p.options_);
    if (p.routing_k_ < 1 || p.experts_ < 2) throw ConfigError("profile has an invalid topology");
    for (const auto& e : j.at("entries")) {
      HistoryKey key{e.at("layer").get<std::uint32_t>(), e.at("key").get<std::vector<std::vector<std::uint32_t>>>()};
      auto counts = e.at("counts").get<std::vector<std::uint64_t>>();
      if (counts.size() != p.experts_ || key.layer >= p.decoder_layers_) {
        throw ConfigError("profile entry " + to_string(key) + " does not fit the profile topology");
      }
      p.counts_.emplace(std::move(key), std::move(counts));
    }
    p.encoder_marginals_ = j.at("marginals").at("encoder").get<std::vector<std::vector<std::uint64_t>>>();
    p.decoder_marginals_ = j.at("marginals").at("decoder").get<std::vector<std::vector<std::uint64_t>>>();
    auto shaped = [&](const auto& table, std::uint32_t layers) {
      if (table.size() != layers) return false;
      return std::all_of(table.begin(), table.end(), [&](const auto& row) { return row.size() == p.experts_; });
    };
    if (!shaped(p.encoder_marginals_, p.encoder_layers_) || !shaped(p.decoder_marginals_, p.decoder_layers_)) {
      throw ConfigError("profile marginals do not fit the profile topology");
    }
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError(std::string("malformed profile: ") + e.what());
  }
}

void save_profile(const ActivationProfile& profile, const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot write profile " + path.string());
  out << profile_to_json(profile).dump() << '\n';
}

ActivationProfile load_profile(const std::filesystem::path& path, const MoEConfig* expected) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open profile " + path.string());
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(in);
  } catch (const nlohmann::json::parse_error& e) {
    throw ParseError(path.string(), 0, e.what());
  }
  ActivationProfile p = profile_from_json(j);
  if (expected != nullptr) {
    if (p.experts_per_layer() != expected->experts_per_layer) {
      throw ConfigError("profile was built for " + std::to_string(p.experts_per_layer()) +
                        " experts per layer, config has " + std::to_string(expected->experts_per_layer));
    }
    if (p.config_digest() != config_digest(*expected)) {
      throw DigestMismatch("profile", config_digest(*expected), p.config_digest());
    }
  }
  return p;
}

}  // namespace edgemoe
