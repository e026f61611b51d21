// engine.hpp
//
// Iteration loop wiring workload, cost model, analyzer, and policy, plus the
// scenario runner that sweeps (model x task x policy) cells, normalizes
// against the no-speculation policy, and fits the utility-vs-speedup
// regression across cells.

#pragma once

#include <atomic>
#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "specsim/controller.hpp"
#include "specsim/expert_model.hpp"
#include "specsim/trace.hpp"
#include "specsim/utility.hpp"
#include "specsim/workload.hpp"

namespace specsim {

struct Policy {
    enum class Kind { none, static_k, adaptive };
    Kind kind = Kind::none;
    int k = 0;
    ControllerConfig controller;

    static Policy none() { return Policy{}; }
    static Policy static_k(int k) {
        if (k < 0 || k > 7) throw std::invalid_argument("static policy: k must be in [0,7]");
        Policy p;
        p.kind = Kind::static_k;
        p.k = k;
        return p;
    }
    static Policy adaptive(ControllerConfig cfg = {}) {
        cfg.validate();
        Policy p;
        p.kind = Kind::adaptive;
        p.controller = cfg;
        return p;
    }

    std::string label() const {
        switch (kind) {
        case Kind::none: return "none";
        case Kind::static_k: return "static:" + std::to_string(k);
        case Kind::adaptive: return "adaptive";
        }
        return "?";
    }
};

struct RequestMetrics {
    long tokens = 0;
    long iterations = 0;
    double total_time = 0.0;
    double t_base = 0.0;
    double tpot = 0.0;
    double etr = 0.0;
    double cost = 0.0;
    double utility = 0.0;
    std::vector<IterationRecord> telemetry; // kept only when requested
};

struct EngineOptions {
    bool keep_telemetry = false;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ull;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
    return x ^ (x >> 31);
}

namespace detail {

// The no-speculation anchor: a k=0 iteration with the drafter fully absent
// costs exactly the configured baseline time.
inline double analytic_t_base(const ExpertConfig& cfg) { return cfg.baseline_iter_time; }

// Requests shorter than the warmup never complete a probe batch; fold in the
// partial probes (or fall back to the analytic baseline) so metrics stay sane.
inline void ensure_baseline(UtilityAnalyzer& analyzer, const ExpertConfig& cfg) {
    if (analyzer.baseline().valid()) return;
    if (analyzer.pending_probe_count() > 0) analyzer.refresh_from_pending();
    else analyzer.set_baseline(analytic_t_base(cfg));
}

inline RequestMetrics finalize_metrics(const UtilityAnalyzer& analyzer,
                                       std::vector<IterationRecord>&& telemetry) {
    RequestMetrics m;
    m.tokens = analyzer.total_tokens();
    m.iterations = analyzer.total_iterations();
    m.total_time = analyzer.total_time();
    m.t_base = analyzer.baseline().t_base;
    m.tpot = m.total_time / static_cast<double>(m.tokens);
    m.etr = static_cast<double>(m.tokens) / static_cast<double>(m.iterations);
    m.cost = (m.total_time / static_cast<double>(m.iterations)) / m.t_base;
    m.utility = m.etr / m.cost;
    m.telemetry = std::move(telemetry);
    return m;
}

} // namespace detail

// Runs a single request to output_len tokens. The policy yields k each
// iteration, the workload draws the accepted prefix, the cost model prices
// the step, and the analyzer accumulates records.
inline RequestMetrics run_request(const WorkloadProfile& profile, const Policy& policy,
                                  const ExpertConfig& cost_cfg, const DraftCostModel& draft_cfg,
                                  Rng& rng, int output_len = 0, EngineOptions opts = {}) {
    cost_cfg.validate();
    draft_cfg.validate();
    profile.validate();

    ProfileState pstate(profile, rng);
    if (output_len <= 0) output_len = profile.output_len.sample(rng);

    // `none` means speculation machinery entirely absent, drafter included.
    const DraftCostModel draft =
        policy.kind == Policy::Kind::none ? DraftCostModel{} : draft_cfg;

    UtilityAnalyzer analyzer(16);
    std::optional<SpeculationController> controller;
    if (policy.kind == Policy::Kind::adaptive) {
        controller.emplace(policy.controller);
    } else {
        analyzer.set_baseline(detail::analytic_t_base(cost_cfg));
    }

    std::vector<IterationRecord> telemetry;
    long iter = 0;
    long tokens = 0;
    while (tokens < output_len) {
        int k;
        PhaseTag tag;
        int trial_no = 0;
        switch (policy.kind) {
        case Policy::Kind::none: k = 0; tag = PhaseTag::set; break;
        case Policy::Kind::static_k: k = policy.k; tag = PhaseTag::set; break;
        case Policy::Kind::adaptive:
            k = controller->current_k();
            tag = controller->current_tag();
            trial_no = controller->current_trial();
            break;
        }

        ExpertConfig iter_cfg = cost_cfg;
        if (profile.expert_affinity) iter_cfg.affinity = *profile.expert_affinity;
        if (pstate.phase().affinity_override) iter_cfg.affinity = *pstate.phase().affinity_override;

        const CostBreakdown cost = iteration_cost(iter_cfg, draft, k, rng);
        const int accepted = pstate.sample_accepted(k, rng);

        IterationRecord rec;
        rec.iter_index = iter;
        rec.k_used = k;
        rec.tokens_emitted = accepted + 1;
        rec.draft_time = cost.draft_time;
        rec.verify_time = cost.attention_time + cost.expert_time;
        rec.sampling_time = cost.sampling_time;
        rec.total_time = cost.total;
        rec.tag = tag;
        rec.trial_no = trial_no;

        if (controller) controller->next_k(rec, analyzer);
        else analyzer.record(rec);
        if (opts.keep_telemetry) telemetry.push_back(rec);

        pstate.advance(rng);
        tokens += rec.tokens_emitted;
        ++iter;
    }
    detail::ensure_baseline(analyzer, cost_cfg);
    return detail::finalize_metrics(analyzer, std::move(telemetry));
}

inline RequestMetrics run_request(const WorkloadProfile& profile, const Policy& policy,
                                  const ExpertConfig& cost_cfg, const DraftCostModel& draft_cfg,
                                  std::uint64_t seed, int output_len = 0, EngineOptions opts = {}) {
    Rng rng(splitmix64(seed));
    return run_request(profile, policy, cost_cfg, draft_cfg, rng, output_len, opts);
}

// Replays a recorded request: acceptance outcomes come from the trace
// (truncated to the offered k), costs from the cost model. The request spans
// exactly its recorded iterations.
inline RequestMetrics replay_request(const AcceptanceTrace& trace, long request_id,
                                     const Policy& policy, const ExpertConfig& cost_cfg,
                                     const DraftCostModel& draft_cfg, Rng& rng,
                                     EngineOptions opts = {}) {
    cost_cfg.validate();
    draft_cfg.validate();
    const auto recorded = trace.iterations_of(request_id);
    if (recorded.empty()) throw MissingRecordError(request_id, 0);

    const DraftCostModel draft =
        policy.kind == Policy::Kind::none ? DraftCostModel{} : draft_cfg;

    UtilityAnalyzer analyzer(16);
    std::optional<SpeculationController> controller;
    if (policy.kind == Policy::Kind::adaptive) controller.emplace(policy.controller);
    else analyzer.set_baseline(detail::analytic_t_base(cost_cfg));

    std::vector<IterationRecord> telemetry;
    long iter = 0;
    for (const TraceRecord* src : recorded) {
        int k;
        PhaseTag tag;
        int trial_no = 0;
        switch (policy.kind) {
        case Policy::Kind::none: k = 0; tag = PhaseTag::set; break;
        case Policy::Kind::static_k: k = policy.k; tag = PhaseTag::set; break;
        case Policy::Kind::adaptive:
            k = controller->current_k();
            tag = controller->current_tag();
            trial_no = controller->current_trial();
            break;
        }

        const CostBreakdown cost = iteration_cost(cost_cfg, draft, k, rng);
        const int accepted = std::min(src->accepted, k);

        IterationRecord rec;
        rec.iter_index = iter;
        rec.k_used = k;
        rec.tokens_emitted = accepted + 1;
        rec.draft_time = cost.draft_time;
        rec.verify_time = cost.attention_time + cost.expert_time;
        rec.sampling_time = cost.sampling_time;
        rec.total_time = cost.total;
        rec.tag = tag;
        rec.trial_no = trial_no;

        if (controller) controller->next_k(rec, analyzer);
        else analyzer.record(rec);
        if (opts.keep_telemetry) telemetry.push_back(rec);
        ++iter;
    }
    detail::ensure_baseline(analyzer, cost_cfg);
    return detail::finalize_metrics(analyzer, std::move(telemetry));
}

struct TaskSpec {
    std::string name;
    RequestStream stream;
};

struct CellResult {
    std::size_t model_idx = 0, task_idx = 0, policy_idx = 0;
    std::string model, task, policy;
    bool failed = false;
    std::string error;
    long requests = 0;
    long iterations = 0;
    long tokens = 0;
    double total_time = 0.0;
    double t_base = 0.0;
    double tpot = 0.0;
    double etr = 0.0;
    double cost = 0.0;
    double utility = 0.0;        // totals-based
    double utility_hmean = 0.0;  // harmonic mean over requests
    double speedup = 0.0;        // vs the none policy; filled by compare_policies
    std::vector<IterationRecord> first_request_telemetry; // kept on request
};

struct RegressionStats {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 0.0;
    long n = 0;
};

struct ScenarioConfig {
    std::string name = "scenario";
    std::uint64_t seed = 1;
    bool seed_in_file = false; // whether the config file pinned the seed
    std::vector<ExpertConfig> models;
    std::vector<TaskSpec> tasks;
    std::vector<Policy> policies;
    DraftCostModel draft = draft_preset("ngram");
    long tokens_per_cell = 20000;
    int jobs = 1;
    bool keep_first_request_telemetry = false;

    void validate() const {
        if (models.empty() || tasks.empty() || policies.empty())
            throw std::invalid_argument("scenario needs at least one model, task, and policy");
        for (const auto& m : models) m.validate();
        for (const auto& t : tasks) t.stream.validate();
        draft.validate();
        if (tokens_per_cell < 1) throw std::invalid_argument("tokens_per_cell must be >= 1");
        if (jobs < 1) throw std::invalid_argument("jobs must be >= 1");
    }
};

struct ScenarioReport {
    std::string name;
    std::uint64_t seed = 0;
    std::vector<CellResult> cells;
    RegressionStats utility_speedup;
    bool has_baseline_policy = false;
};

struct MissingBaselinePolicyError : std::runtime_error {
    MissingBaselinePolicyError()
        : std::runtime_error("report does not contain the `none` policy required for speedups") {}
};

inline RegressionStats ols_regression(const std::vector<std::pair<double, double>>& xy) {
    RegressionStats r;
    r.n = static_cast<long>(xy.size());
    if (xy.size() < 2) return r;
    double sx = 0, sy = 0;
    for (const auto& [x, y] : xy) { sx += x; sy += y; }
    const double mx = sx / xy.size(), my = sy / xy.size();
    double sxx = 0, syy = 0, sxy = 0;
    for (const auto& [x, y] : xy) {
        sxx += (x - mx) * (x - mx);
        syy += (y - my) * (y - my);
        sxy += (x - mx) * (y - my);
    }
    if (sxx == 0.0) return r;
    r.slope = sxy / sxx;
    r.intercept = my - r.slope * mx;
    r.r2 = (syy == 0.0) ? 1.0 : (sxy * sxy) / (sxx * syy);
    return r;
}

namespace detail {

inline CellResult run_cell(const ScenarioConfig& cfg, std::size_t mi, std::size_t ti,
                           std::size_t pi) {
    const ExpertConfig& model = cfg.models[mi];
    const TaskSpec& task = cfg.tasks[ti];
    const Policy& policy = cfg.policies[pi];

    CellResult cell;
    cell.model_idx = mi;
    cell.task_idx = ti;
    cell.policy_idx = pi;
    cell.model = model.name;
    cell.task = task.name;
    cell.policy = policy.label();

    // Seeds depend on (scenario, model, task) but not the policy, so every
    // policy faces the identical request sequence and per-request seeds.
    const std::uint64_t workload_seed =
        splitmix64(cfg.seed ^ splitmix64((mi + 1) * 0x10001ull + (ti + 1) * 0x101ull));
    Rng stream_rng(workload_seed);

    RequestStream stream = task.stream;
    stream.max_tokens = cfg.tokens_per_cell;
    StreamSampler sampler(stream);

    std::vector<double> request_utilities;
    double t_base_sum = 0.0;
    while (!sampler.exhausted()) {
        const auto [profile, output_len] = sampler.next_request(stream_rng);
        EngineOptions opts;
        opts.keep_telemetry = cfg.keep_first_request_telemetry && cell.requests == 0;
        Rng rng(splitmix64(workload_seed + 0x5bd1e995ull * static_cast<std::uint64_t>(cell.requests + 1)));
        RequestMetrics m = run_request(*profile, policy, model, cfg.draft, rng, output_len, opts);
        if (opts.keep_telemetry) cell.first_request_telemetry = std::move(m.telemetry);
        cell.requests += 1;
        cell.iterations += m.iterations;
        cell.tokens += m.tokens;
        cell.total_time += m.total_time;
        t_base_sum += m.t_base;
        request_utilities.push_back(m.utility);
    }
    cell.t_base = t_base_sum / static_cast<double>(cell.requests);
    cell.tpot = cell.total_time / static_cast<double>(cell.tokens);
    cell.etr = static_cast<double>(cell.tokens) / static_cast<double>(cell.iterations);
    cell.cost = (cell.total_time / static_cast<double>(cell.iterations)) / cell.t_base;
    cell.utility = cell.etr / cell.cost;
    cell.utility_hmean = harmonic_mean(request_utilities);
    return cell;
}

} // namespace detail

// Fills per-cell speedups relative to the `none` policy on the same
// (model, task) and summarizes the utility-vs-speedup relation.
inline void compare_policies(ScenarioReport& report) {
    std::vector<const CellResult*> baselines;
    for (const auto& cell : report.cells)
        if (!cell.failed && cell.policy == "none") baselines.push_back(&cell);
    if (baselines.empty()) throw MissingBaselinePolicyError{};

    std::vector<std::pair<double, double>> points;
    for (auto& cell : report.cells) {
        if (cell.failed) continue;
        if (cell.policy == "none") {
            cell.speedup = 1.0;
        } else {
            const CellResult* base = nullptr;
            for (const CellResult* b : baselines)
                if (b->model_idx == cell.model_idx && b->task_idx == cell.task_idx) base = b;
            if (!base) throw MissingBaselinePolicyError{};
            cell.speedup = base->tpot / cell.tpot;
        }
        points.emplace_back(cell.utility, cell.speedup);
    }
    report.utility_speedup = ols_regression(points);
    report.has_baseline_policy = true;
}

// Executes every (model, task, policy) cell, optionally across threads.
// Cell failures are recorded and do not abort the sweep.
inline ScenarioReport run_scenario(const ScenarioConfig& cfg) {
    cfg.validate();
    ScenarioReport report;
    report.name = cfg.name;
    report.seed = cfg.seed;

    const std::size_t n_cells = cfg.models.size() * cfg.tasks.size() * cfg.policies.size();
    report.cells.resize(n_cells);

    std::atomic<std::size_t> next{0};
    auto worker = [&]() {
        while (true) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= n_cells) break;
            const std::size_t pi = idx % cfg.policies.size();
            const std::size_t ti = (idx / cfg.policies.size()) % cfg.tasks.size();
            const std::size_t mi = idx / (cfg.policies.size() * cfg.tasks.size());
            try {
                report.cells[idx] = detail::run_cell(cfg, mi, ti, pi);
            } catch (const std::exception& e) {
                CellResult& cell = report.cells[idx];
                cell.model_idx = mi;
                cell.task_idx = ti;
                cell.policy_idx = pi;
                cell.model = cfg.models[mi].name;
                cell.task = cfg.tasks[ti].name;
                cell.policy = cfg.policies[pi].label();
                cell.failed = true;
                cell.error = e.what();
            }
        }
    };

    const int jobs = std::min<int>(cfg.jobs, static_cast<int>(n_cells));
    if (jobs <= 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        pool.reserve(static_cast<std::size_t>(jobs));
        for (int i = 0; i < jobs; ++i) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }

    bool has_none = false;
    for (const auto& p : cfg.policies)
        if (p.kind == Policy::Kind::none) has_none = true;
    if (has_none) compare_policies(report);
    return report;
}

} // namespace specsim
