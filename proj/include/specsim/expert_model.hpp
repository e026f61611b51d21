// expert_model.hpp
//
// Memory-movement cost model for speculative decoding over MoE layers.
// An iteration verifying k draft tokens has k+1 tokens in flight; each
// token routes to top_k experts per layer, so the batch collectively
// touches more expert weights than a single token would. Iteration time
// is decomposed into attention (constant in k), expert data movement
// (scales with unique experts fetched), drafting, and rejection sampling.

#pragma once

#include <array>
#include <bit>
#include <cmath>
#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace specsim {

using Rng = std::mt19937_64;

// Routing geometry of one MoE model. experts_per_layer counts the routed
// pool only; shared experts are on top of it and always fetched.
struct ExpertConfig {
    std::string name = "custom";
    int num_layers = 32;
    int experts_per_layer = 8;   // routed pool (E)
    int top_k = 2;               // experts activated per token per layer
    int shared_experts = 0;      // always-active experts
    double affinity = 0.0;       // P(token reuses the previous token's expert set)
    double baseline_iter_time = 1.0;  // 1-token decode step, abstract units
    double attention_fraction = 0.08; // share of baseline time spent in attention

    void validate() const {
        if (num_layers < 1)
            throw std::invalid_argument("ExpertConfig: num_layers must be >= 1");
        if (top_k < 1 || shared_experts < 0 ||
            top_k + shared_experts < 1 || top_k > experts_per_layer)
            throw std::invalid_argument(
                "ExpertConfig: need 1 <= top_k + shared_experts and top_k <= experts_per_layer");
        if (affinity < 0.0 || affinity > 1.0)
            throw std::invalid_argument("ExpertConfig: affinity must be in [0,1]");
        if (attention_fraction <= 0.0 || attention_fraction >= 1.0)
            throw std::invalid_argument("ExpertConfig: attention_fraction must be in (0,1)");
        if (baseline_iter_time <= 0.0)
            throw std::invalid_argument("ExpertConfig: baseline_iter_time must be > 0");
    }
};

// One iteration's time split. total is always the sum of the four parts.
struct CostBreakdown {
    double attention_time = 0.0;
    double expert_time = 0.0;
    double draft_time = 0.0;
    double sampling_time = 0.0;
    double active_experts_per_layer = 0.0; // mean unique experts fetched per layer
    double total = 0.0;
};

enum class DraftKind {
    free,             // no drafter state to keep warm (n-gram style)
    per_token_linear, // model-based drafter, must run even at k=0 for KV consistency
};

// Drafter-side overheads as fractions of the baseline iteration time.
struct DraftCostModel {
    DraftKind kind = DraftKind::free;
    double per_k_overhead = 0.0;     // added per unit of k while drafting
    double sampling_overhead = 0.0;  // rejection sampling, charged when k >= 1
    double always_on_overhead = 0.0; // drafter kept warm at k=0 (per_token_linear only)

    void validate() const {
        if (per_k_overhead < 0.0 || sampling_overhead < 0.0 || always_on_overhead < 0.0)
            throw std::invalid_argument("DraftCostModel: overheads must be >= 0");
    }
};

// Expected number of distinct experts activated by `tokens` tokens that each
// draw top_k experts uniformly without replacement from a pool of E.
// Shared experts are excluded; callers add them.
inline double expected_unique_experts(int experts, int top_k, int tokens) {
    if (top_k < 1 || top_k > experts)
        throw std::invalid_argument("expected_unique_experts: need 1 <= top_k <= experts");
    if (tokens < 1)
        throw std::invalid_argument("expected_unique_experts: need tokens >= 1");
    const double e = static_cast<double>(experts);
    const double miss = 1.0 - static_cast<double>(top_k) / e; // P(expert not hit by one token)
    return e * (1.0 - std::pow(miss, static_cast<double>(tokens)));
}

namespace detail {

inline constexpr int kMaxRoutedExperts = 128;

// Draws top_k distinct experts into `mask` by rejection; pool sizes here are
// small (<= 128) and top_k/E <= 1/2, so retries are rare.
inline void draw_expert_set(std::array<std::uint64_t, 2>& mask, int experts, int top_k, Rng& rng) {
    mask = {0, 0};
    std::uniform_int_distribution<int> pick(0, experts - 1);
    int chosen = 0;
    while (chosen < top_k) {
        const int e = pick(rng);
        std::uint64_t& word = mask[static_cast<std::size_t>(e >> 6)];
        const std::uint64_t bit = std::uint64_t{1} << (e & 63);
        if (word & bit) continue;
        word |= bit;
        ++chosen;
    }
}

} // namespace detail

// Samples the unique-expert count of one layer for `tokens` in-flight tokens.
// The first token draws a fresh expert set; each later token reuses the
// previous token's whole set with probability cfg.affinity, otherwise draws
// fresh. Returns distinct routed experts plus shared_experts.
inline double sample_active_experts(const ExpertConfig& cfg, int tokens, Rng& rng) {
    if (tokens < 1)
        throw std::invalid_argument("sample_active_experts: need tokens >= 1");
    if (cfg.experts_per_layer > detail::kMaxRoutedExperts)
        throw std::invalid_argument("sample_active_experts: expert pool too large");

    std::array<std::uint64_t, 2> token_set{};
    detail::draw_expert_set(token_set, cfg.experts_per_layer, cfg.top_k, rng);
    std::array<std::uint64_t, 2> seen = token_set;

    std::uniform_real_distribution<double> unit(0.0, 1.0);
    for (int t = 1; t < tokens; ++t) {
        if (unit(rng) < cfg.affinity) continue; // token reuses previous set
        detail::draw_expert_set(token_set, cfg.experts_per_layer, cfg.top_k, rng);
        seen[0] |= token_set[0];
        seen[1] |= token_set[1];
    }
    const int distinct = std::popcount(seen[0]) + std::popcount(seen[1]);
    return static_cast<double>(distinct + cfg.shared_experts);
}

// Cost of one decode iteration verifying k draft tokens (k+1 in flight).
// Expert time scales with the mean unique-expert count across layers,
// normalized to the single-token activation (top_k + shared). Attention
// stays constant in k.
inline CostBreakdown iteration_cost(const ExpertConfig& cfg, const DraftCostModel& draft,
                                    int k, Rng& rng) {
    if (k < 0) throw std::invalid_argument("iteration_cost: need k >= 0");
    const int tokens = k + 1;
    const double b = cfg.baseline_iter_time;

    double active_sum = 0.0;
    for (int layer = 0; layer < cfg.num_layers; ++layer)
        active_sum += sample_active_experts(cfg, tokens, rng);
    const double active = active_sum / cfg.num_layers;
    const double single_token = static_cast<double>(cfg.top_k + cfg.shared_experts);

    CostBreakdown out;
    out.active_experts_per_layer = active;
    out.attention_time = cfg.attention_fraction * b;
    out.expert_time = (1.0 - cfg.attention_fraction) * b * (active / single_token);
    if (k >= 1) {
        out.draft_time = draft.per_k_overhead * k * b;
        out.sampling_time = draft.sampling_overhead * b;
    } else {
        out.draft_time = (draft.kind == DraftKind::per_token_linear)
                             ? draft.always_on_overhead * b
                             : 0.0;
        out.sampling_time = 0.0;
    }
    out.total = out.attention_time + out.expert_time + out.draft_time + out.sampling_time;
    return out;
}

// Routing geometries of the evaluated models. experts_per_layer is the
// routed pool, i.e. total experts minus shared ones.
inline ExpertConfig expert_preset(std::string_view name) {
    ExpertConfig c;
    c.name = std::string(name);
    if (name == "mixtral") {
        c.num_layers = 32; c.experts_per_layer = 8;  c.top_k = 2; c.shared_experts = 0;
        c.affinity = 0.10; c.baseline_iter_time = 28.0;
    } else if (name == "phi35") {
        c.num_layers = 32; c.experts_per_layer = 16; c.top_k = 2; c.shared_experts = 0;
        c.affinity = 0.30;
    } else if (name == "olmoe") {
        c.num_layers = 16; c.experts_per_layer = 64; c.top_k = 8; c.shared_experts = 0;
        c.affinity = 0.60; c.baseline_iter_time = 6.0;
    } else if (name == "deepseekv1") {
        c.num_layers = 28; c.experts_per_layer = 64; c.top_k = 6; c.shared_experts = 2;
        c.affinity = 0.35;
    } else if (name == "qwen15") {
        c.num_layers = 24; c.experts_per_layer = 60; c.top_k = 4; c.shared_experts = 4;
        c.affinity = 0.35;
    } else if (name == "dense") {
        // Degenerate geometry: every token activates the full pool, so expert
        // time is constant in k. Useful as a dense-model reference.
        c.num_layers = 32; c.experts_per_layer = 2; c.top_k = 2; c.shared_experts = 0;
        c.affinity = 0.0;
    } else {
        throw std::invalid_argument("unknown expert preset: " + std::string(name));
    }
    c.validate();
    return c;
}

inline DraftCostModel draft_preset(std::string_view name) {
    DraftCostModel d;
    if (name == "ngram") {
        d.kind = DraftKind::free;
        d.per_k_overhead = 0.005;
        d.sampling_overhead = 0.01;
        d.always_on_overhead = 0.0;
    } else if (name == "eagle") {
        d.kind = DraftKind::per_token_linear;
        d.per_k_overhead = 0.05;
        d.sampling_overhead = 0.01;
        d.always_on_overhead = 0.025;
    } else if (name == "free") {
        d = DraftCostModel{};
    } else {
        throw std::invalid_argument("unknown draft preset: " + std::string(name));
    }
    d.validate();
    return d;
}

} // namespace specsim
