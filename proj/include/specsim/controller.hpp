// controller.hpp
//
// Speculation manager. Per request it runs a short k=0 warmup to measure the
// no-speculation baseline, then alternates test and set phases: the test
// phase hill-climbs over candidate speculation lengths in trials of t_trial
// iterations, the set phase commits to the best-performing k (k=0 when no
// trial reached utility 1). Whenever a set phase runs at k=0 the next set
// doubles in length, so testing cost decays when speculation keeps losing;
// a set phase at k >= 1 resets the back-off.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <stdexcept>
#include <vector>

#include "specsim/utility.hpp"

namespace specsim {

struct ControllerConfig {
    int t_trial = 4;                    // iterations per trial
    int max_trials = 4;                 // M; test phase is at most M * t_trial
    int s_set = 16;                     // base set-phase length
    int s_cap = 256;                    // back-off ceiling for the set length
    int k_max = 3;
    int k_start = 3;                    // first-cycle k when history is empty
    double convergence_band = 0.10;     // relative utility gap treated as converged
    int baseline_refresh_interval = 100;
    int baseline_probe_len = 4;
    bool backoff_enabled = true;

    int test_phase_len() const { return max_trials * t_trial; }

    void validate() const {
        if (t_trial < 1) throw std::invalid_argument("ControllerConfig: t_trial must be >= 1");
        if (max_trials < 1) throw std::invalid_argument("ControllerConfig: max_trials must be >= 1");
        if (s_set < t_trial) throw std::invalid_argument("ControllerConfig: s_set must be >= t_trial");
        if (s_cap < s_set) throw std::invalid_argument("ControllerConfig: s_cap must be >= s_set");
        if (k_max < 1 || k_max > 7) throw std::invalid_argument("ControllerConfig: k_max must be in [1,7]");
        if (k_start < 1 || k_start > k_max)
            throw std::invalid_argument("ControllerConfig: k_start must be in [1,k_max]");
        if (convergence_band <= 0.0 || convergence_band >= 1.0)
            throw std::invalid_argument("ControllerConfig: convergence_band must be in (0,1)");
        if (baseline_refresh_interval < 1 || baseline_probe_len < 1)
            throw std::invalid_argument("ControllerConfig: baseline schedule values must be >= 1");
    }
};

enum class ControllerPhase { baseline_warmup, test, set };

struct KUtility {
    int k = 0;
    double utility = 0.0;
};

struct ControllerState {
    ControllerPhase phase = ControllerPhase::baseline_warmup;
    int trial_no = 0;            // 1-based within the current test phase
    int trial_iters_done = 0;
    int set_k = 0;
    int set_iters_remaining = 0;
    int curr_k = 0;
    int prev_k = 0;
    double curr_util = 0.0;
    double prev_util = 0.0;
    int best_k = 0;              // best trial of the current test phase
    double best_util = 0.0;
    std::deque<KUtility> k_history; // completed trial and set intervals
    int backoff_level = 0;
};

struct HillClimbStep {
    bool converged = false;
    int next_k = 0;
};

class SpeculationController {
public:
    explicit SpeculationController(ControllerConfig cfg) : cfg_(cfg) {
        cfg_.validate();
    }

    const ControllerConfig& config() const { return cfg_; }
    const ControllerState& state() const { return st_; }

    int current_k() const {
        switch (st_.phase) {
        case ControllerPhase::baseline_warmup: return 0;
        case ControllerPhase::test: return st_.curr_k;
        case ControllerPhase::set: return st_.set_k;
        }
        return 0;
    }

    PhaseTag current_tag() const {
        switch (st_.phase) {
        case ControllerPhase::baseline_warmup: return PhaseTag::baseline_probe;
        case ControllerPhase::test: return PhaseTag::test;
        case ControllerPhase::set: return PhaseTag::set;
        }
        return PhaseTag::set;
    }

    int current_trial() const { return st_.phase == ControllerPhase::test ? st_.trial_no : 0; }

    // Current set-phase length under back-off.
    int s_current() const {
        long s = cfg_.s_set;
        for (int i = 0; i < st_.backoff_level && s < cfg_.s_cap; ++i) s *= 2;
        return static_cast<int>(std::min<long>(s, cfg_.s_cap));
    }

    // Starting k for a test phase: the non-zero k with the best recorded
    // utility, falling back to the configured k_start on empty history.
    static int select_k_start(const ControllerState& st, const ControllerConfig& cfg) {
        int best_k = 0;
        double best_util = 0.0;
        for (const auto& entry : st.k_history) {
            if (entry.k == 0) continue;
            if (best_k == 0 || entry.utility > best_util ||
                (entry.utility == best_util && entry.k < best_k)) {
                best_k = entry.k;
                best_util = entry.utility;
            }
        }
        if (best_k == 0) return cfg.k_start;
        return std::clamp(best_k, 1, cfg.k_max);
    }

    // Picks the next trial k from two consecutive trials. Rising utility
    // keeps moving in the direction of the last step; falling utility
    // backtracks one step past the previous k; a gap inside the convergence
    // band, or a move that has nowhere to go, ends the search.
    static HillClimbStep hill_climb_next_k(const KUtility& prev, const KUtility& curr,
                                           const ControllerConfig& cfg) {
        const auto clamp_k = [&cfg](int k) { return std::clamp(k, 1, cfg.k_max); };
        if (prev.k == curr.k) {
            // First trial: probe downward when speculation is already losing.
            const int next = clamp_k(curr.utility < 1.0 ? curr.k - 1 : curr.k + 1);
            return {next == curr.k, next};
        }
        if (std::abs(curr.utility - prev.utility) < cfg.convergence_band * std::abs(prev.utility))
            return {true, curr.k};
        const int direction = curr.k > prev.k ? 1 : -1;
        if (curr.utility > prev.utility) {
            const int next = clamp_k(curr.k + direction);
            return {next == curr.k, next};
        }
        const int next = clamp_k(prev.k - direction);
        return {next == curr.k, next};
    }

    // Consumes the just-completed iteration (which ran at current_k with
    // current_tag) and returns the k for the next one. The analyzer receives
    // every record; probe batches refresh its baseline estimate.
    int next_k(const IterationRecord& rec, UtilityAnalyzer& analyzer) {
        analyzer.record(rec);
        ++iters_seen_;
        switch (st_.phase) {
        case ControllerPhase::baseline_warmup: on_probe_iteration(analyzer); break;
        case ControllerPhase::test: on_test_iteration(rec, analyzer); break;
        case ControllerPhase::set: on_set_iteration(rec, analyzer); break;
        }
        return current_k();
    }

private:
    void on_probe_iteration(UtilityAnalyzer& analyzer) {
        if (static_cast<int>(analyzer.pending_probe_count()) < cfg_.baseline_probe_len) return;
        analyzer.refresh_from_pending();
        last_refresh_at_ = iters_seen_;
        const int start = first_warmup_ ? select_k_start(st_, cfg_) : k_after_probe_;
        first_warmup_ = false;
        enter_test(start);
    }

    void on_test_iteration(const IterationRecord& rec, UtilityAnalyzer& analyzer) {
        trial_tokens_ += rec.tokens_emitted;
        trial_time_ += rec.total_time;
        if (++st_.trial_iters_done < cfg_.t_trial) return;
        const double t_base = analyzer.baseline().t_base;
        const double trial_util =
            static_cast<double>(trial_tokens_) * t_base / trial_time_;
        end_of_trial(trial_util);
    }

    void end_of_trial(double trial_util) {
        st_.curr_util = trial_util;
        push_history({st_.curr_k, trial_util});
        trials_this_phase_.push_back({st_.curr_k, trial_util});
        if (trials_this_phase_.size() == 1 || trial_util > st_.best_util ||
            (trial_util == st_.best_util && st_.curr_k < st_.best_k)) {
            st_.best_k = st_.curr_k;
            st_.best_util = trial_util;
        }

        // Losing at the most conservative length: disable without more trials.
        if (trial_util < 1.0 && st_.curr_k == 1) {
            enter_set(0);
            return;
        }
        if (st_.trial_no >= cfg_.max_trials) {
            finish_test_phase();
            return;
        }

        HillClimbStep step;
        if (st_.trial_no == 1) {
            step = hill_climb_next_k({st_.curr_k, trial_util}, {st_.curr_k, trial_util}, cfg_);
        } else {
            step = hill_climb_next_k({st_.prev_k, st_.prev_util}, {st_.curr_k, trial_util}, cfg_);
            if (!step.converged) {
                if (trial_util < st_.prev_util) ++consecutive_decreases_;
                else consecutive_decreases_ = 0;
                if (consecutive_decreases_ >= 2) {
                    finish_test_phase();
                    return;
                }
            }
        }
        if (step.converged || already_tested(step.next_k)) {
            finish_test_phase();
            return;
        }

        st_.prev_k = st_.curr_k;
        st_.prev_util = trial_util;
        st_.curr_k = step.next_k;
        ++st_.trial_no;
        st_.trial_iters_done = 0;
        trial_tokens_ = 0;
        trial_time_ = 0.0;
    }

    void finish_test_phase() {
        enter_set(st_.best_util >= 1.0 ? st_.best_k : 0);
    }

    bool already_tested(int k) const {
        for (const auto& t : trials_this_phase_)
            if (t.k == k) return true;
        return false;
    }

    void enter_set(int k) {
        st_.phase = ControllerPhase::set;
        st_.set_k = k;
        st_.set_iters_remaining = s_current();
        set_tokens_ = 0;
        set_time_ = 0.0;
    }

    void on_set_iteration(const IterationRecord& rec, UtilityAnalyzer& analyzer) {
        set_tokens_ += rec.tokens_emitted;
        set_time_ += rec.total_time;
        if (--st_.set_iters_remaining > 0) return;
        end_of_set(analyzer);
    }

    void end_of_set(UtilityAnalyzer& analyzer) {
        const double t_base = analyzer.baseline().t_base;
        if (set_time_ > 0.0)
            push_history({st_.set_k, static_cast<double>(set_tokens_) * t_base / set_time_});

        int next_start;
        if (st_.set_k == 0) {
            if (cfg_.backoff_enabled && s_current() < cfg_.s_cap) ++st_.backoff_level;
            next_start = 1; // conservative re-probe after a disabled interval
        } else {
            st_.backoff_level = 0;
            next_start = select_k_start(st_, cfg_);
        }

        if (iters_seen_ - last_refresh_at_ >= cfg_.baseline_refresh_interval) {
            k_after_probe_ = next_start;
            st_.phase = ControllerPhase::baseline_warmup;
            return;
        }
        enter_test(next_start);
    }

    void enter_test(int k0) {
        st_.phase = ControllerPhase::test;
        st_.trial_no = 1;
        st_.trial_iters_done = 0;
        st_.curr_k = std::clamp(k0, 1, cfg_.k_max);
        st_.prev_k = st_.curr_k;
        st_.curr_util = 0.0;
        st_.prev_util = 0.0;
        st_.best_k = st_.curr_k;
        st_.best_util = 0.0;
        trials_this_phase_.clear();
        consecutive_decreases_ = 0;
        trial_tokens_ = 0;
        trial_time_ = 0.0;
    }

    void push_history(KUtility entry) {
        st_.k_history.push_back(entry);
        if (st_.k_history.size() > kHistoryCap) st_.k_history.pop_front();
    }

    static constexpr std::size_t kHistoryCap = 32;

    ControllerConfig cfg_;
    ControllerState st_;
    std::vector<KUtility> trials_this_phase_;
    int consecutive_decreases_ = 0;
    long trial_tokens_ = 0;
    double trial_time_ = 0.0;
    long set_tokens_ = 0;
    double set_time_ = 0.0;
    long iters_seen_ = 0;
    long last_refresh_at_ = 0;
    int k_after_probe_ = 1;
    bool first_warmup_ = true;
};

} // namespace specsim
