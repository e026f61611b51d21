// trace.hpp
//
// Line-delimited acceptance traces: one record per iteration with fields
// request_id, iter, k_offered, accepted. Replaying a record with a smaller
// offered k truncates to the prefix, keeping acceptance causal.

#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace specsim {

struct TraceRecord {
    long request_id = 0;
    long iter = 0;
    int k_offered = 0;
    int accepted = 0;
};

struct MissingRecordError : std::runtime_error {
    MissingRecordError(long request_id, long iter)
        : std::runtime_error("trace has no record for request " + std::to_string(request_id) +
                             ", iteration " + std::to_string(iter)) {}
};

class AcceptanceTrace {
public:
    static constexpr const char* kHeader = "request_id,iter,k_offered,accepted";

    void add(const TraceRecord& rec) {
        if (rec.accepted < 0 || rec.accepted > rec.k_offered)
            throw std::invalid_argument("trace record: need 0 <= accepted <= k_offered");
        records_.push_back(rec);
        index_[{rec.request_id, rec.iter}] = records_.size() - 1;
    }

    const std::vector<TraceRecord>& records() const { return records_; }

    // Request ids in first-appearance order.
    std::vector<long> request_ids() const {
        std::vector<long> ids;
        for (const auto& rec : records_) {
            if (ids.empty() || ids.back() != rec.request_id) {
                bool seen = false;
                for (long id : ids) if (id == rec.request_id) { seen = true; break; }
                if (!seen) ids.push_back(rec.request_id);
            }
        }
        return ids;
    }

    std::vector<const TraceRecord*> iterations_of(long request_id) const {
        std::vector<const TraceRecord*> out;
        for (const auto& rec : records_)
            if (rec.request_id == request_id) out.push_back(&rec);
        return out;
    }

    // Accepted count when the controller offers `k` drafts at a recorded
    // iteration; a smaller offer truncates the recorded prefix.
    int replay(long request_id, long iter, int k) const {
        auto it = index_.find({request_id, iter});
        if (it == index_.end()) throw MissingRecordError(request_id, iter);
        const TraceRecord& rec = records_[it->second];
        return std::min(rec.accepted, k);
    }

    static AcceptanceTrace load(const std::filesystem::path& path) {
        std::ifstream in(path);
        if (!in) throw std::runtime_error("cannot open trace file: " + path.string());
        AcceptanceTrace trace;
        std::string line;
        long line_no = 0;
        while (std::getline(in, line)) {
            ++line_no;
            if (line.empty()) continue;
            if (line_no == 1 && line.rfind("request_id", 0) == 0) continue; // header
            std::istringstream ls(line);
            TraceRecord rec;
            char c1 = 0, c2 = 0, c3 = 0;
            if (!(ls >> rec.request_id >> c1 >> rec.iter >> c2 >> rec.k_offered >> c3 >> rec.accepted) ||
                c1 != ',' || c2 != ',' || c3 != ',')
                throw std::runtime_error("bad trace record at " + path.string() + ":" +
                                         std::to_string(line_no));
            if (rec.accepted < 0 || rec.accepted > rec.k_offered)
                throw std::runtime_error("trace record violates 0 <= accepted <= k_offered at " +
                                         path.string() + ":" + std::to_string(line_no));
            trace.add(rec);
        }
        return trace;
    }

    void save(const std::filesystem::path& path) const {
        std::ofstream out(path);
        if (!out) throw std::runtime_error("cannot write trace file: " + path.string());
        out << kHeader << "\n";
        for (const auto& rec : records_)
            out << rec.request_id << ',' << rec.iter << ',' << rec.k_offered << ','
                << rec.accepted << "\n";
    }

private:
    std::vector<TraceRecord> records_;
    std::map<std::pair<long, long>, std::size_t> index_;
};

inline int replay_acceptance(const AcceptanceTrace& trace, long request_id, long iter, int k) {
    return trace.replay(request_id, iter, k);
}

} // namespace specsim
