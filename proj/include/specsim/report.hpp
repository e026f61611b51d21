// report.hpp
//
// Report artifacts: cells.csv with one row per (model, task, policy) cell,
// summary.json with per-policy aggregates and the utility-vs-speedup
// regression, and optional per-iteration telemetry dumps. Numbers are
// printed with a fixed format so identical runs produce identical bytes;
// the only run-dependent value is the timestamp in summary.json metadata.

#pragma once

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "specsim/engine.hpp"

namespace specsim {

inline std::string fmt_num(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.12g", v);
    return buf;
}

inline constexpr const char* kCellsCsvHeader =
    "model,task,policy,requests,iterations,tokens,total_time,t_base,tpot,etr,cost,"
    "utility,utility_hmean,speedup,failed,error";

inline void write_cells_csv(const ScenarioReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kCellsCsvHeader << "\n";
    for (const auto& c : report.cells) {
        std::string error = c.error; // keep the row parseable
        for (char& ch : error)
            if (ch == ',' || ch == '\n') ch = ';';
        out << c.model << ',' << c.task << ',' << c.policy << ',' << c.requests << ','
            << c.iterations << ',' << c.tokens << ',' << fmt_num(c.total_time) << ','
            << fmt_num(c.t_base) << ',' << fmt_num(c.tpot) << ',' << fmt_num(c.etr) << ','
            << fmt_num(c.cost) << ',' << fmt_num(c.utility) << ',' << fmt_num(c.utility_hmean)
            << ',' << fmt_num(c.speedup) << ',' << (c.failed ? 1 : 0) << ','
            << error << "\n";
    }
}

struct PolicySummary {
    std::string policy;
    double mean_speedup = 0.0;
    double worst_speedup = 0.0;
    std::string worst_cell;
    long cells = 0;
};

inline std::vector<PolicySummary> summarize_policies(const ScenarioReport& report) {
    std::map<std::string, PolicySummary> by_policy;
    for (const auto& c : report.cells) {
        if (c.failed || c.speedup <= 0.0) continue;
        auto& s = by_policy[c.policy];
        if (s.cells == 0) {
            s.policy = c.policy;
            s.worst_speedup = c.speedup;
            s.worst_cell = c.model + "/" + c.task;
        } else if (c.speedup < s.worst_speedup) {
            s.worst_speedup = c.speedup;
            s.worst_cell = c.model + "/" + c.task;
        }
        s.mean_speedup += c.speedup;
        s.cells += 1;
    }
    std::vector<PolicySummary> out;
    for (auto& [name, s] : by_policy) {
        s.mean_speedup /= static_cast<double>(s.cells);
        out.push_back(s);
    }
    return out;
}

inline nlohmann::json summary_json(const ScenarioReport& report, bool with_timestamp = true) {
    nlohmann::json j;
    j["meta"]["name"] = report.name;
    j["meta"]["seed"] = report.seed;
    if (with_timestamp) {
        const auto now = std::chrono::system_clock::now();
        j["meta"]["generated_at_unix_ms"] =
            std::chrono::duration_cast<std::chrono::milliseconds>(now.time_since_epoch()).count();
    }
    j["cells"] = report.cells.size();
    nlohmann::json failed = nlohmann::json::array();
    for (const auto& c : report.cells)
        if (c.failed)
            failed.push_back({{"model", c.model}, {"task", c.task}, {"policy", c.policy},
                              {"error", c.error}});
    j["failed_cells"] = failed;
    if (report.has_baseline_policy) {
        nlohmann::json pols = nlohmann::json::array();
        for (const auto& s : summarize_policies(report))
            pols.push_back({{"policy", s.policy},
                            {"mean_speedup", s.mean_speedup},
                            {"worst_speedup", s.worst_speedup},
                            {"worst_cell", s.worst_cell},
                            {"cells", s.cells}});
        j["policies"] = pols;
        j["regression"] = {{"slope", report.utility_speedup.slope},
                           {"intercept", report.utility_speedup.intercept},
                           {"r2", report.utility_speedup.r2},
                           {"points", report.utility_speedup.n}};
    }
    return j;
}

inline void write_summary_json(const ScenarioReport& report, const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << summary_json(report).dump(2) << "\n";
}

inline constexpr const char* kTelemetryCsvHeader =
    "iter_index,k_used,tokens_emitted,draft_time,verify_time,sampling_time,total_time,"
    "phase_tag,trial_no";

inline void write_telemetry_csv(const std::vector<IterationRecord>& records,
                                const std::filesystem::path& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << kTelemetryCsvHeader << "\n";
    for (const auto& r : records) {
        out << r.iter_index << ',' << r.k_used << ',' << r.tokens_emitted << ','
            << fmt_num(r.draft_time) << ',' << fmt_num(r.verify_time) << ','
            << fmt_num(r.sampling_time) << ',' << fmt_num(r.total_time) << ','
            << to_string(r.tag) << ',' << r.trial_no << "\n";
    }
}

// Minimal cells.csv reader for the `report` command.
inline std::vector<CellResult> load_cells_csv(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("cannot open " + path.string());
    std::vector<CellResult> cells;
    std::string line;
    if (!std::getline(in, line) || line != kCellsCsvHeader)
        throw std::runtime_error("unexpected cells.csv header in " + path.string());
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<std::string> fields;
        std::string field;
        for (char ch : line) {
            if (ch == ',') { fields.push_back(field); field.clear(); }
            else field.push_back(ch);
        }
        fields.push_back(field);
        if (fields.size() < 16) throw std::runtime_error("short row in " + path.string());
        CellResult c;
        c.model = fields[0];
        c.task = fields[1];
        c.policy = fields[2];
        c.requests = std::stol(fields[3]);
        c.iterations = std::stol(fields[4]);
        c.tokens = std::stol(fields[5]);
        c.total_time = std::stod(fields[6]);
        c.t_base = std::stod(fields[7]);
        c.tpot = std::stod(fields[8]);
        c.etr = std::stod(fields[9]);
        c.cost = std::stod(fields[10]);
        c.utility = std::stod(fields[11]);
        c.utility_hmean = std::stod(fields[12]);
        c.speedup = std::stod(fields[13]);
        c.failed = fields[14] == "1";
        c.error = fields[15];
        cells.push_back(std::move(c));
    }
    return cells;
}

} // namespace specsim
