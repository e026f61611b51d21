// scenario.hpp
//
// Scenario files wire model presets, task fixtures, policies, and budgets
// into a sweep. JSON schema (all fields except models/tasks/policies are
// optional):
//
// {
//   "name": "mixtral_all3",
//   "seed": 42,
//   "models": ["mixtral", {"name": "tiny", "experts_per_layer": 8, ...}],
//   "tasks": ["all3", {"name": "custom", "mix": [{"share": 1.0, "profile": {...}}]}],
//   "policies": ["none", "static:0..3", "adaptive"],
//   "draft": "ngram" | {"kind": "free", "per_k_overhead": 0.005, ...},
//   "controller": {"k_max": 3, "k_start": 3, ...},
//   "tokens_per_cell": 20000,
//   "jobs": 1
// }

#pragma once

#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "specsim/engine.hpp"

namespace specsim {

// Acceptance-process fixtures for the three single-task workloads. The
// accept probabilities, phase structure, and routing affinities are tuned so
// the Mixtral-geometry sweep shows the qualitative regimes of interest:
// code speculates well and wants the largest k, math loses at every k, and
// extraction alternates between marginally-good and bad windows.
inline WorkloadProfile task_profile_preset(std::string_view name) {
    WorkloadProfile p;
    p.name = std::string(name);
    p.output_len = {360, 520};
    if (name == "code") {
        p.phases = {{0.78, 1.0, std::nullopt}};
        p.expert_affinity = 0.55;
    } else if (name == "math") {
        p.phases = {{0.22, 1.0, std::nullopt}};
        p.expert_affinity = 0.15;
    } else if (name == "extract") {
        p.phases = {{0.62, 45.0, std::nullopt}, {0.28, 55.0, std::nullopt}};
        p.transition = PhaseTransition::cyclic;
        p.expert_affinity = 0.25;
    } else {
        throw std::invalid_argument("unknown task profile preset: " + std::string(name));
    }
    p.validate();
    return p;
}

// The seven shipped task fixtures: three single tasks plus the two- and
// three-way even mixes.
inline TaskSpec task_preset(std::string_view name) {
    TaskSpec task;
    task.name = std::string(name);
    auto add = [&task](std::string_view profile, double share) {
        task.stream.mix.emplace_back(task_profile_preset(profile), share);
    };
    if (name == "code" || name == "math" || name == "extract") {
        add(name, 1.0);
    } else if (name == "code+math") {
        add("code", 0.5); add("math", 0.5);
    } else if (name == "math+extract") {
        add("math", 0.5); add("extract", 0.5);
    } else if (name == "code+extract") {
        add("code", 0.5); add("extract", 0.5);
    } else if (name == "all3") {
        add("code", 1.0 / 3.0); add("math", 1.0 / 3.0); add("extract", 1.0 / 3.0);
    } else {
        throw std::invalid_argument("unknown task preset: " + std::string(name));
    }
    return task;
}

inline std::vector<std::string> task_preset_names() {
    return {"code", "math", "extract", "code+math", "math+extract", "code+extract", "all3"};
}

// Parses "none", "adaptive", "static:K", or "static:A..B" (inclusive range).
inline std::vector<Policy> parse_policies(const std::string& text, const ControllerConfig& ctl) {
    std::vector<Policy> out;
    if (text == "none") {
        out.push_back(Policy::none());
    } else if (text == "adaptive") {
        out.push_back(Policy::adaptive(ctl));
    } else if (text.rfind("static:", 0) == 0) {
        const std::string spec = text.substr(7);
        const auto dots = spec.find("..");
        try {
            if (dots == std::string::npos) {
                out.push_back(Policy::static_k(std::stoi(spec)));
            } else {
                const int lo = std::stoi(spec.substr(0, dots));
                const int hi = std::stoi(spec.substr(dots + 2));
                if (hi < lo) throw std::invalid_argument("empty range");
                for (int k = lo; k <= hi; ++k) out.push_back(Policy::static_k(k));
            }
        } catch (const std::exception&) {
            throw std::invalid_argument("bad policy spec: " + text);
        }
    } else {
        throw std::invalid_argument("bad policy spec: " + text);
    }
    return out;
}

namespace cfgjson {

using nlohmann::json;

inline ExpertConfig parse_model(const json& j) {
    if (j.is_string()) return expert_preset(j.get<std::string>());
    ExpertConfig c;
    if (j.contains("preset")) c = expert_preset(j.at("preset").get<std::string>());
    if (j.contains("name")) c.name = j.at("name").get<std::string>();
    if (j.contains("num_layers")) c.num_layers = j.at("num_layers").get<int>();
    if (j.contains("experts_per_layer")) c.experts_per_layer = j.at("experts_per_layer").get<int>();
    if (j.contains("top_k")) c.top_k = j.at("top_k").get<int>();
    if (j.contains("shared_experts")) c.shared_experts = j.at("shared_experts").get<int>();
    if (j.contains("affinity")) c.affinity = j.at("affinity").get<double>();
    if (j.contains("baseline_iter_time")) c.baseline_iter_time = j.at("baseline_iter_time").get<double>();
    if (j.contains("attention_fraction")) c.attention_fraction = j.at("attention_fraction").get<double>();
    c.validate();
    return c;
}

inline WorkloadProfile parse_profile(const json& j) {
    if (j.is_string()) return task_profile_preset(j.get<std::string>());
    WorkloadProfile p;
    if (j.contains("preset")) p = task_profile_preset(j.at("preset").get<std::string>());
    if (j.contains("name")) p.name = j.at("name").get<std::string>();
    if (j.contains("phases")) {
        p.phases.clear();
        for (const auto& pj : j.at("phases")) {
            AcceptancePhase ph;
            ph.per_token_accept_prob = pj.at("accept_prob").get<double>();
            if (pj.contains("mean_duration")) ph.mean_duration = pj.at("mean_duration").get<double>();
            if (pj.contains("affinity")) ph.affinity_override = pj.at("affinity").get<double>();
            p.phases.push_back(ph);
        }
    }
    if (j.contains("transition")) {
        const std::string t = j.at("transition").get<std::string>();
        if (t == "cyclic") p.transition = PhaseTransition::cyclic;
        else if (t == "markov") p.transition = PhaseTransition::markov;
        else throw std::invalid_argument("bad phase transition: " + t);
    }
    if (j.contains("transition_matrix"))
        p.transition_matrix = j.at("transition_matrix").get<std::vector<std::vector<double>>>();
    if (j.contains("output_len")) {
        const auto& ol = j.at("output_len");
        if (ol.is_number_integer()) {
            p.output_len = {ol.get<int>(), ol.get<int>()};
        } else {
            p.output_len = {ol.at(0).get<int>(), ol.at(1).get<int>()};
        }
    }
    if (j.contains("expert_affinity")) p.expert_affinity = j.at("expert_affinity").get<double>();
    p.validate();
    return p;
}

inline TaskSpec parse_task(const json& j) {
    if (j.is_string()) return task_preset(j.get<std::string>());
    TaskSpec t;
    t.name = j.at("name").get<std::string>();
    for (const auto& entry : j.at("mix"))
        t.stream.mix.emplace_back(parse_profile(entry.at("profile")),
                                  entry.at("share").get<double>());
    return t;
}

inline DraftCostModel parse_draft(const json& j) {
    if (j.is_string()) return draft_preset(j.get<std::string>());
    DraftCostModel d;
    if (j.contains("preset")) d = draft_preset(j.at("preset").get<std::string>());
    if (j.contains("kind")) {
        const std::string k = j.at("kind").get<std::string>();
        if (k == "free") d.kind = DraftKind::free;
        else if (k == "per_token_linear") d.kind = DraftKind::per_token_linear;
        else throw std::invalid_argument("bad draft kind: " + k);
    }
    if (j.contains("per_k_overhead")) d.per_k_overhead = j.at("per_k_overhead").get<double>();
    if (j.contains("sampling_overhead")) d.sampling_overhead = j.at("sampling_overhead").get<double>();
    if (j.contains("always_on_overhead")) d.always_on_overhead = j.at("always_on_overhead").get<double>();
    d.validate();
    return d;
}

inline ControllerConfig parse_controller(const json& j, ControllerConfig base = {}) {
    if (j.contains("t_trial")) base.t_trial = j.at("t_trial").get<int>();
    if (j.contains("max_trials")) base.max_trials = j.at("max_trials").get<int>();
    if (j.contains("s_set")) base.s_set = j.at("s_set").get<int>();
    if (j.contains("s_cap")) base.s_cap = j.at("s_cap").get<int>();
    if (j.contains("k_max")) base.k_max = j.at("k_max").get<int>();
    if (j.contains("k_start")) base.k_start = j.at("k_start").get<int>();
    if (j.contains("convergence_band")) base.convergence_band = j.at("convergence_band").get<double>();
    if (j.contains("baseline_refresh_interval"))
        base.baseline_refresh_interval = j.at("baseline_refresh_interval").get<int>();
    if (j.contains("baseline_probe_len")) base.baseline_probe_len = j.at("baseline_probe_len").get<int>();
    if (j.contains("backoff")) base.backoff_enabled = j.at("backoff").get<bool>();
    base.validate();
    return base;
}

} // namespace cfgjson

inline ScenarioConfig scenario_from_json(const nlohmann::json& j) {
    ScenarioConfig cfg;
    if (j.contains("name")) cfg.name = j.at("name").get<std::string>();
    if (j.contains("seed")) {
        cfg.seed = j.at("seed").get<std::uint64_t>();
        cfg.seed_in_file = true;
    }
    ControllerConfig ctl;
    if (j.contains("controller")) ctl = cfgjson::parse_controller(j.at("controller"));
    for (const auto& mj : j.at("models")) cfg.models.push_back(cfgjson::parse_model(mj));
    for (const auto& tj : j.at("tasks")) cfg.tasks.push_back(cfgjson::parse_task(tj));
    for (const auto& pj : j.at("policies"))
        for (auto& p : parse_policies(pj.get<std::string>(), ctl))
            cfg.policies.push_back(std::move(p));
    if (j.contains("draft")) cfg.draft = cfgjson::parse_draft(j.at("draft"));
    if (j.contains("tokens_per_cell")) cfg.tokens_per_cell = j.at("tokens_per_cell").get<long>();
    if (j.contains("jobs")) cfg.jobs = j.at("jobs").get<int>();
    cfg.validate();
    return cfg;
}

inline ScenarioConfig load_scenario(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open scenario file: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad JSON in " + path.string() + ": " + e.what());
    }
    try {
        return scenario_from_json(j);
    } catch (const nlohmann::json::exception& e) {
        throw std::runtime_error("bad scenario config " + path.string() + ": " + e.what());
    }
}

} // namespace specsim
