// workload.hpp
//
// Acceptance-side model of a drafter. Each iteration offering k draft
// tokens draws per-token Bernoulli accept/reject outcomes and keeps the
// accepted prefix (a rejection discards all later drafts), so the target
// emits accepted+1 tokens. Acceptance probability moves through phases to
// give runs the short-interval locality real request streams show.

#pragma once

#include <cstdint>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "specsim/expert_model.hpp"

namespace specsim {

struct AcceptancePhase {
    double per_token_accept_prob = 0.5;         // p
    double mean_duration = 1.0;                  // iterations, geometric mean
    std::optional<double> affinity_override;     // per-phase routing affinity
};

enum class PhaseTransition { cyclic, markov };

struct OutputLenDistribution {
    int lo = 256;
    int hi = 256; // inclusive; lo == hi means fixed length

    int sample(Rng& rng) const {
        if (lo == hi) return lo;
        return std::uniform_int_distribution<int>(lo, hi)(rng);
    }
};

struct WorkloadProfile {
    std::string name = "custom";
    std::vector<AcceptancePhase> phases;
    PhaseTransition transition = PhaseTransition::cyclic;
    std::vector<std::vector<double>> transition_matrix; // markov only, row-stochastic
    OutputLenDistribution output_len;
    std::optional<double> expert_affinity; // task-level routing affinity

    void validate() const {
        if (phases.empty())
            throw std::invalid_argument("WorkloadProfile: need at least one phase");
        for (const auto& ph : phases) {
            if (ph.per_token_accept_prob < 0.0 || ph.per_token_accept_prob > 1.0)
                throw std::invalid_argument("WorkloadProfile: accept prob must be in [0,1]");
            if (ph.mean_duration < 1.0)
                throw std::invalid_argument("WorkloadProfile: phase mean_duration must be >= 1");
        }
        if (output_len.lo < 1 || output_len.hi < output_len.lo)
            throw std::invalid_argument("WorkloadProfile: output lengths must be >= 1");
        if (transition == PhaseTransition::markov) {
            const std::size_t n = phases.size();
            if (transition_matrix.size() != n)
                throw std::invalid_argument("WorkloadProfile: transition matrix must be n_phases x n_phases");
            for (const auto& row : transition_matrix) {
                if (row.size() != n)
                    throw std::invalid_argument("WorkloadProfile: transition matrix must be square");
                double sum = 0.0;
                for (double v : row) {
                    if (v < 0.0) throw std::invalid_argument("WorkloadProfile: negative transition prob");
                    sum += v;
                }
                if (sum < 0.999 || sum > 1.001)
                    throw std::invalid_argument("WorkloadProfile: transition rows must sum to 1");
            }
        }
    }
};

// Accepted-prefix draw for one iteration offering k tokens at accept prob p.
inline int sample_accepted(double p, int k, Rng& rng) {
    if (k < 0) throw std::invalid_argument("sample_accepted: need k >= 0");
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    int accepted = 0;
    while (accepted < k && unit(rng) < p) ++accepted;
    return accepted;
}

// Per-request view of a profile: tracks the current phase and its remaining
// duration. Durations are geometric with the configured mean, so the phase
// process is memoryless.
class ProfileState {
public:
    ProfileState(const WorkloadProfile& profile, Rng& rng)
        : profile_(&profile), phase_idx_(0) {
        profile.validate();
        remaining_ = sample_duration(rng);
    }

    const AcceptancePhase& phase() const { return profile_->phases[phase_idx_]; }
    std::size_t phase_index() const { return phase_idx_; }

    int sample_accepted(int k, Rng& rng) const {
        return specsim::sample_accepted(phase().per_token_accept_prob, k, rng);
    }

    // Consumes one iteration of the current phase and transitions when it
    // is exhausted.
    void advance(Rng& rng) {
        if (--remaining_ > 0) return;
        switch (profile_->transition) {
        case PhaseTransition::cyclic:
            phase_idx_ = (phase_idx_ + 1) % profile_->phases.size();
            break;
        case PhaseTransition::markov: {
            const auto& row = profile_->transition_matrix[phase_idx_];
            std::uniform_real_distribution<double> unit(0.0, 1.0);
            double u = unit(rng);
            std::size_t next = row.size() - 1;
            for (std::size_t j = 0; j < row.size(); ++j) {
                if (u < row[j]) { next = j; break; }
                u -= row[j];
            }
            phase_idx_ = next;
            break;
        }
        }
        remaining_ = sample_duration(rng);
    }

private:
    long sample_duration(Rng& rng) const {
        const double mean = profile_->phases[phase_idx_].mean_duration;
        if (mean <= 1.0) return 1;
        // geometric on {1,2,...} with the given mean
        std::geometric_distribution<long> extra(1.0 / mean);
        return 1 + extra(rng);
    }

    const WorkloadProfile* profile_;
    std::size_t phase_idx_;
    long remaining_ = 1;
};

inline void advance_phase(ProfileState& state, Rng& rng) { state.advance(rng); }

// A request mix with a total token budget. Seeding comes from the scenario
// so every policy sees the same stream.
struct RequestStream {
    std::vector<std::pair<WorkloadProfile, double>> mix; // (profile, share)
    long max_tokens = 20000;

    void validate() const {
        if (mix.empty()) throw std::invalid_argument("RequestStream: empty mix");
        double total = 0.0;
        for (const auto& [profile, share] : mix) {
            profile.validate();
            if (share <= 0.0) throw std::invalid_argument("RequestStream: shares must be > 0");
            total += share;
        }
        if (total < 0.999 || total > 1.001)
            throw std::invalid_argument("RequestStream: shares must sum to 1");
        if (max_tokens < 1) throw std::invalid_argument("RequestStream: max_tokens must be >= 1");
    }
};

struct StreamExhausted : std::runtime_error {
    StreamExhausted() : std::runtime_error("request stream budget exhausted") {}
};

class StreamSampler {
public:
    explicit StreamSampler(const RequestStream& stream) : stream_(&stream) {
        stream.validate();
    }

    bool exhausted() const { return tokens_issued_ >= stream_->max_tokens; }
    long tokens_issued() const { return tokens_issued_; }

    // Samples the next request's profile (by share) and output length.
    std::pair<const WorkloadProfile*, int> next_request(Rng& rng) {
        if (exhausted()) throw StreamExhausted{};
        std::uniform_real_distribution<double> unit(0.0, 1.0);
        double u = unit(rng);
        const WorkloadProfile* chosen = &stream_->mix.back().first;
        for (const auto& [profile, share] : stream_->mix) {
            if (u < share) { chosen = &profile; break; }
            u -= share;
        }
        const int len = chosen->output_len.sample(rng);
        tokens_issued_ += len;
        return {chosen, len};
    }

private:
    const RequestStream* stream_;
    long tokens_issued_ = 0;
};

} // namespace specsim
