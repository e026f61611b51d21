// utility.hpp
//
// Speculation utility bookkeeping. Utility is the ratio of speculation's
// benefit (tokens emitted per iteration) to its cost (iteration time over
// the no-speculation baseline). Windowed utility is computed over a short
// sliding window of recent iterations; run utility over totals, where it
// coincides exactly with the baseline-to-TPOT ratio.

#pragma once

#include <deque>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "specsim/expert_model.hpp"

namespace specsim {

enum class PhaseTag { baseline_probe, test, set };

inline const char* to_string(PhaseTag tag) {
    switch (tag) {
    case PhaseTag::baseline_probe: return "probe";
    case PhaseTag::test: return "test";
    case PhaseTag::set: return "set";
    }
    return "?";
}

struct IterationRecord {
    long iter_index = 0;
    int k_used = 0;
    int tokens_emitted = 1;
    double draft_time = 0.0;
    double verify_time = 0.0; // attention + expert movement
    double sampling_time = 0.0;
    double total_time = 0.0;
    PhaseTag tag = PhaseTag::set;
    int trial_no = 0; // meaningful when tag == test
};

struct BaselineEstimate {
    double t_base = 0.0;
    int samples = 0;
    long last_refresh_iter = -1;

    bool valid() const { return t_base > 0.0; }
};

struct MissingBaselineError : std::logic_error {
    MissingBaselineError()
        : std::logic_error("baseline iteration time requested before any k=0 probes completed") {}
};

// Cumulative utility over a run: (tokens/iter) / ((time/iter) / t_base).
// Algebraically equal to t_base / TPOT.
inline double run_utility(long total_tokens, long iterations, double total_time, double t_base) {
    if (iterations < 1 || total_tokens < 1)
        throw std::invalid_argument("run_utility: need at least one recorded iteration");
    if (t_base <= 0.0) throw std::invalid_argument("run_utility: t_base must be > 0");
    const double etr = static_cast<double>(total_tokens) / static_cast<double>(iterations);
    const double cost = (total_time / static_cast<double>(iterations)) / t_base;
    return etr / cost;
}

inline double run_utility(std::span<const IterationRecord> records, double t_base) {
    long tokens = 0;
    double time = 0.0;
    for (const auto& rec : records) {
        tokens += rec.tokens_emitted;
        time += rec.total_time;
    }
    return run_utility(tokens, static_cast<long>(records.size()), time, t_base);
}

// Tracks a sliding window of recent iterations plus run totals, and owns the
// no-speculation baseline estimate. Baseline probe records never enter the
// utility window; they accumulate separately until a refresh folds them into
// the estimate.
class UtilityAnalyzer {
public:
    explicit UtilityAnalyzer(int window_len = 16) : window_len_(window_len) {
        if (window_len < 1)
            throw std::invalid_argument("UtilityAnalyzer: window_len must be >= 1");
    }

    void record(const IterationRecord& rec) {
        if (rec.tokens_emitted < 1 || rec.tokens_emitted > rec.k_used + 1)
            throw std::invalid_argument("IterationRecord: tokens_emitted must be in [1, k_used+1]");
        total_tokens_ += rec.tokens_emitted;
        total_time_ += rec.total_time;
        ++total_iterations_;
        if (rec.tag == PhaseTag::baseline_probe) {
            pending_probes_.push_back(rec);
            return;
        }
        window_.push_back(rec);
        if (static_cast<int>(window_.size()) > window_len_) window_.pop_front();
    }

    // Folds a batch of k=0 probe records into a fresh baseline estimate.
    BaselineEstimate refresh_baseline(std::span<const IterationRecord> probes) {
        if (probes.empty())
            throw std::invalid_argument("refresh_baseline: no probe records");
        double sum = 0.0;
        long last_iter = baseline_.last_refresh_iter;
        for (const auto& rec : probes) {
            sum += rec.total_time;
            if (rec.iter_index > last_iter) last_iter = rec.iter_index;
        }
        baseline_.t_base = sum / static_cast<double>(probes.size());
        baseline_.samples = static_cast<int>(probes.size());
        baseline_.last_refresh_iter = last_iter;
        return baseline_;
    }

    // Refresh from the probes accumulated since the last refresh.
    BaselineEstimate refresh_from_pending() {
        auto est = refresh_baseline(pending_probes_);
        pending_probes_.clear();
        return est;
    }

    std::size_t pending_probe_count() const { return pending_probes_.size(); }

    // Pins the baseline directly; used when the no-speculation time is known
    // by construction (e.g. static-policy runs with no probe schedule).
    void set_baseline(double t_base) {
        if (t_base <= 0.0) throw std::invalid_argument("set_baseline: t_base must be > 0");
        baseline_.t_base = t_base;
        baseline_.samples = 0;
    }

    const BaselineEstimate& baseline() const { return baseline_; }

    double window_etr() const {
        require_window();
        long tokens = 0;
        for (const auto& rec : window_) tokens += rec.tokens_emitted;
        return static_cast<double>(tokens) / static_cast<double>(window_.size());
    }

    double window_cost() const {
        require_window();
        if (!baseline_.valid()) throw MissingBaselineError{};
        double time = 0.0;
        for (const auto& rec : window_) time += rec.total_time;
        return (time / static_cast<double>(window_.size())) / baseline_.t_base;
    }

    double window_utility() const { return window_etr() / window_cost(); }

    std::size_t window_size() const { return window_.size(); }
    int window_len() const { return window_len_; }

    long total_tokens() const { return total_tokens_; }
    long total_iterations() const { return total_iterations_; }
    double total_time() const { return total_time_; }

    // Cumulative utility of everything recorded so far, probes included.
    double run_utility() const {
        if (!baseline_.valid()) throw MissingBaselineError{};
        return specsim::run_utility(total_tokens_, total_iterations_, total_time_, baseline_.t_base);
    }

private:
    void require_window() const {
        if (window_.empty())
            throw std::logic_error("utility window is empty");
    }

    int window_len_;
    std::deque<IterationRecord> window_;
    std::vector<IterationRecord> pending_probes_;
    BaselineEstimate baseline_;
    long total_tokens_ = 0;
    long total_iterations_ = 0;
    double total_time_ = 0.0;
};

// Harmonic mean, the cross-request aggregate used for task-level utility.
inline double harmonic_mean(std::span<const double> values) {
    if (values.empty()) throw std::invalid_argument("harmonic_mean: empty input");
    double inv_sum = 0.0;
    for (double v : values) {
        if (v <= 0.0) throw std::invalid_argument("harmonic_mean: values must be > 0");
        inv_sum += 1.0 / v;
    }
    return static_cast<double>(values.size()) / inv_sum;
}

} // namespace specsim
