// specsim.cpp
//
// Command-line front end over the simulator.
//
//   specsim run    <scenario.json> [--out DIR] [--seed N] [--jobs N] [--tokens N] [--telemetry]
//   specsim sweep  <scenario.json> [--policies L] [--models L] [--tasks L] [--seed N] ...
//   specsim replay <trace> --model M --policy P [--draft D] [--out DIR] [--seed N] [--telemetry]
//   specsim report <dir> [--format table|csv|json]
//
// Flag precedence: flags > config file > defaults. Exit codes: 0 success,
// 2 usage error, 1 configuration or I/O error.

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "specsim/report.hpp"
#include "specsim/scenario.hpp"

namespace fs = std::filesystem;
using namespace specsim;

namespace {

std::string sanitize(std::string s) {
    for (char& c : s)
        if (c == ':' || c == '/' || c == ' ') c = '-';
    return s;
}

std::vector<std::string> split_list(const std::string& text) {
    std::vector<std::string> out;
    std::string part;
    for (char c : text) {
        if (c == ',') { out.push_back(part); part.clear(); }
        else part.push_back(c);
    }
    if (!part.empty()) out.push_back(part);
    return out;
}

void write_report_files(const ScenarioReport& report, const fs::path& out_dir,
                        bool telemetry) {
    fs::create_directories(out_dir);
    write_cells_csv(report, out_dir / "cells.csv");
    write_summary_json(report, out_dir / "summary.json");
    if (telemetry) {
        for (const auto& cell : report.cells) {
            if (cell.first_request_telemetry.empty()) continue;
            const std::string name = "telemetry_" + sanitize(cell.model) + "_" +
                                     sanitize(cell.task) + "_" + sanitize(cell.policy) + ".csv";
            write_telemetry_csv(cell.first_request_telemetry, out_dir / name);
        }
    }
    std::cout << "wrote " << (out_dir / "cells.csv").string() << " and summary.json ("
              << report.cells.size() << " cells)\n";
}

struct CommonOverrides {
    std::string out_dir = "out";
    std::uint64_t seed = 0;
    bool seed_set = false;
    int jobs = 0;
    long tokens = 0;
    bool telemetry = false;
};

void apply_overrides(ScenarioConfig& cfg, const CommonOverrides& ov) {
    if (ov.seed_set) {
        cfg.seed = ov.seed;
    } else if (!cfg.seed_in_file) {
        cfg.seed = std::random_device{}(); // recorded in summary.json meta
    }
    if (ov.jobs > 0) cfg.jobs = ov.jobs;
    if (ov.tokens > 0) cfg.tokens_per_cell = ov.tokens;
    cfg.keep_first_request_telemetry = ov.telemetry;
}

int cmd_run(const std::string& scenario_path, const CommonOverrides& ov) {
    ScenarioConfig cfg = load_scenario(scenario_path);
    apply_overrides(cfg, ov);
    ScenarioReport report = run_scenario(cfg);
    write_report_files(report, ov.out_dir, ov.telemetry);
    for (const auto& cell : report.cells)
        if (cell.failed)
            std::cerr << "cell failed: " << cell.model << "/" << cell.task << "/" << cell.policy
                      << ": " << cell.error << "\n";
    return 0;
}

int cmd_sweep(const std::string& scenario_path, const CommonOverrides& ov,
              const std::string& policies, const std::string& models,
              const std::string& tasks) {
    ScenarioConfig cfg = load_scenario(scenario_path);
    ControllerConfig ctl;
    for (const auto& p : cfg.policies)
        if (p.kind == Policy::Kind::adaptive) ctl = p.controller;
    if (!policies.empty()) {
        cfg.policies.clear();
        for (const auto& spec : split_list(policies))
            for (auto& p : parse_policies(spec, ctl)) cfg.policies.push_back(std::move(p));
    }
    if (!models.empty()) {
        cfg.models.clear();
        for (const auto& name : split_list(models)) cfg.models.push_back(expert_preset(name));
    }
    if (!tasks.empty()) {
        cfg.tasks.clear();
        for (const auto& name : split_list(tasks)) cfg.tasks.push_back(task_preset(name));
    }
    apply_overrides(cfg, ov);
    cfg.validate();
    ScenarioReport report = run_scenario(cfg);
    write_report_files(report, ov.out_dir, ov.telemetry);
    return 0;
}

int cmd_replay(const std::string& trace_path, const std::string& model,
               const std::string& policy_spec, const std::string& draft,
               const CommonOverrides& ov) {
    const AcceptanceTrace trace = AcceptanceTrace::load(trace_path);
    const ExpertConfig cfg = expert_preset(model);
    const DraftCostModel draft_cfg = draft_preset(draft);
    const auto policies = parse_policies(policy_spec, ControllerConfig{});
    if (policies.size() != 1)
        throw std::invalid_argument("replay takes a single policy, got: " + policy_spec);
    const Policy& policy = policies.front();

    Rng rng(splitmix64(ov.seed_set ? ov.seed : 1));
    fs::create_directories(ov.out_dir);

    long tokens = 0, iterations = 0;
    double total_time = 0.0;
    std::vector<double> utilities;
    const fs::path cells_path = fs::path(ov.out_dir) / "replay.csv";
    std::ofstream out(cells_path);
    if (!out) throw std::runtime_error("cannot write " + cells_path.string());
    out << "request_id,iterations,tokens,total_time,t_base,tpot,etr,cost,utility\n";
    for (long request_id : trace.request_ids()) {
        EngineOptions opts;
        opts.keep_telemetry = ov.telemetry;
        RequestMetrics m = replay_request(trace, request_id, policy, cfg, draft_cfg, rng, opts);
        out << request_id << ',' << m.iterations << ',' << m.tokens << ','
            << fmt_num(m.total_time) << ',' << fmt_num(m.t_base) << ',' << fmt_num(m.tpot) << ','
            << fmt_num(m.etr) << ',' << fmt_num(m.cost) << ',' << fmt_num(m.utility) << "\n";
        tokens += m.tokens;
        iterations += m.iterations;
        total_time += m.total_time;
        utilities.push_back(m.utility);
        if (ov.telemetry)
            write_telemetry_csv(m.telemetry, fs::path(ov.out_dir) /
                                                 ("telemetry_request_" + std::to_string(request_id) + ".csv"));
    }
    std::cout << "replayed " << utilities.size() << " requests: " << tokens << " tokens over "
              << iterations << " iterations, tpot "
              << fmt_num(total_time / static_cast<double>(tokens)) << ", utility_hmean "
              << fmt_num(harmonic_mean(utilities)) << "\n";
    std::cout << "wrote " << cells_path.string() << "\n";
    return 0;
}

int cmd_report(const std::string& in_dir, const std::string& format) {
    const auto cells = load_cells_csv(fs::path(in_dir) / "cells.csv");
    if (format == "csv") {
        std::cout << "model,task,policy,speedup,utility\n";
        for (const auto& c : cells)
            if (!c.failed)
                std::cout << c.model << ',' << c.task << ',' << c.policy << ','
                          << fmt_num(c.speedup) << ',' << fmt_num(c.utility) << "\n";
        return 0;
    }
    if (format == "json") {
        nlohmann::json j = nlohmann::json::array();
        for (const auto& c : cells)
            if (!c.failed)
                j.push_back({{"model", c.model}, {"task", c.task}, {"policy", c.policy},
                             {"speedup", c.speedup}, {"utility", c.utility}});
        std::cout << j.dump(2) << "\n";
        return 0;
    }

    // Plain-text table: one row per (model, task), one column per policy.
    std::vector<std::string> policies;
    for (const auto& c : cells) {
        bool seen = false;
        for (const auto& p : policies) if (p == c.policy) seen = true;
        if (!seen) policies.push_back(c.policy);
    }
    std::printf("%-12s %-14s", "model", "task");
    for (const auto& p : policies) std::printf(" %12s", p.c_str());
    std::printf("\n");
    std::string last_key;
    for (const auto& c : cells) {
        const std::string key = c.model + "\x01" + c.task;
        if (key == last_key) continue;
        last_key = key;
        std::printf("%-12s %-14s", c.model.c_str(), c.task.c_str());
        for (const auto& p : policies) {
            double v = 0.0;
            bool found = false;
            for (const auto& c2 : cells)
                if (!c2.failed && c2.model == c.model && c2.task == c.task && c2.policy == p) {
                    v = c2.speedup;
                    found = true;
                }
            if (found) std::printf(" %12.4f", v);
            else std::printf(" %12s", "-");
        }
        std::printf("\n");
    }
    std::printf("\nworst-case speedup per policy:\n");
    for (const auto& p : policies) {
        double worst = 0.0;
        std::string worst_cell;
        for (const auto& c : cells)
            if (!c.failed && c.policy == p && c.speedup > 0.0 &&
                (worst_cell.empty() || c.speedup < worst)) {
                worst = c.speedup;
                worst_cell = c.model + "/" + c.task;
            }
        if (!worst_cell.empty())
            std::printf("  %-12s %.4f (%s)\n", p.c_str(), worst, worst_cell.c_str());
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"speculative-decoding simulator for MoE serving"};
    app.require_subcommand(1);

    CommonOverrides ov;

    std::string scenario_path;
    auto* run = app.add_subcommand("run", "run a scenario file and write cells.csv + summary.json");
    run->add_option("scenario", scenario_path, "scenario JSON file")->required();
    run->add_option("--out", ov.out_dir, "output directory (default: out)");
    run->add_option("--seed", ov.seed, "override the scenario seed")->each([&](const std::string&) {
        ov.seed_set = true;
    });
    run->add_option("--jobs", ov.jobs, "parallel cell workers");
    run->add_option("--tokens", ov.tokens, "token budget per cell");
    run->add_flag("--telemetry", ov.telemetry, "dump first-request telemetry per cell");

    std::string policies_override, models_override, tasks_override;
    auto* sweep = app.add_subcommand("sweep", "run a scenario with grid overrides");
    sweep->add_option("scenario", scenario_path, "scenario JSON file")->required();
    sweep->add_option("--policies", policies_override,
                      "comma list, e.g. none,static:0..7,adaptive");
    sweep->add_option("--models", models_override, "comma list of model presets");
    sweep->add_option("--tasks", tasks_override, "comma list of task fixtures");
    sweep->add_option("--out", ov.out_dir, "output directory (default: out)");
    sweep->add_option("--seed", ov.seed, "seed (drawn from entropy and recorded if omitted)")
        ->each([&](const std::string&) { ov.seed_set = true; });
    sweep->add_option("--jobs", ov.jobs, "parallel cell workers");
    sweep->add_option("--tokens", ov.tokens, "token budget per cell");
    sweep->add_flag("--telemetry", ov.telemetry, "dump first-request telemetry per cell");

    std::string trace_path, model = "mixtral", policy_spec = "adaptive", draft = "ngram";
    auto* replay = app.add_subcommand("replay", "replay a recorded acceptance trace");
    replay->add_option("trace", trace_path, "trace file")->required();
    replay->add_option("--model", model, "cost-model preset (default: mixtral)");
    replay->add_option("--policy", policy_spec, "none | static:K | adaptive");
    replay->add_option("--draft", draft, "draft preset: ngram | eagle | free");
    replay->add_option("--out", ov.out_dir, "output directory (default: out)");
    replay->add_option("--seed", ov.seed, "cost-model sampling seed")->each([&](const std::string&) {
        ov.seed_set = true;
    });
    replay->add_flag("--telemetry", ov.telemetry, "dump per-request telemetry");

    std::string in_dir, format = "table";
    auto* rep = app.add_subcommand("report", "summarize a results directory");
    rep->add_option("dir", in_dir, "directory containing cells.csv")->required();
    rep->add_option("--format", format, "table | csv | json");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 2;
    }

    try {
        if (*run) return cmd_run(scenario_path, ov);
        if (*sweep) return cmd_sweep(scenario_path, ov, policies_override, models_override,
                                     tasks_override);
        if (*replay) return cmd_replay(trace_path, model, policy_spec, draft, ov);
        if (*rep) return cmd_report(in_dir, format);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
