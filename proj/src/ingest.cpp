#include "powerprof/ingest.hpp"

#include <algorithm>
#include <unordered_map>

#include <json.hpp>

namespace powerprof {

using nlohmann::json;

namespace {

// Iterate lines without copying; yields (line, 1-based number). Accepts both
// trailing-newline and no-trailing-newline files, and tolerates \r\n.
template <typename Fn>
void for_each_line(std::string_view text, Fn&& fn) {
    std::size_t line_no = 0;
    std::size_t pos = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        fn(line, line_no);
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
}

}  // namespace

// ---------------------------------------------------------------------------
// Telemetry
// ---------------------------------------------------------------------------

std::vector<PowerSample> parse_telemetry_text(std::string_view text, const std::string& origin) {
    std::vector<PowerSample> out;
    bool header_seen = false;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (!header_seen) {
            if (line != "timestamp,hostname,input_power_w") {
                throw DataError(origin + ": bad telemetry header, line 1");
            }
            header_seen = true;
            return;
        }
        if (line.empty()) return;
        auto fields = split_csv_line(line);
        if (fields.size() != 3) {
            throw DataError(origin + ": expected 3 fields, line " + std::to_string(line_no));
        }
        PowerSample s;
        s.timestamp = parse_int(fields[0], origin + " line " + std::to_string(line_no));
        s.hostname = std::string(fields[1]);
        if (s.hostname.empty()) {
            throw DataError(origin + ": empty hostname, line " + std::to_string(line_no));
        }
        s.input_power_w = parse_double(fields[2], origin + " line " + std::to_string(line_no));
        if (s.input_power_w < 0.0) {
            throw DataError(origin + ": negative power, line " + std::to_string(line_no));
        }
        out.push_back(std::move(s));
    });
    if (!header_seen) throw DataError(origin + ": empty telemetry file");
    return out;
}

std::vector<PowerSample> parse_telemetry(const std::filesystem::path& path) {
    return parse_telemetry_text(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Jobs
// ---------------------------------------------------------------------------

std::vector<JobRecord> parse_jobs_text(std::string_view text, const std::string& origin) {
    std::vector<JobRecord> out;
    std::unordered_map<std::string, std::size_t> seen;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(origin + ": bad json, line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        JobRecord r;
        try {
            r.job_id = j.at("job_id").get<std::string>();
            r.start = j.at("start").get<std::int64_t>();
            r.end = j.at("end").get<std::int64_t>();
            r.nodes = j.at("nodes").get<std::vector<std::string>>();
            if (j.contains("project") && !j["project"].is_null()) {
                r.project = j["project"].get<std::string>();
            }
            if (j.contains("domain") && !j["domain"].is_null()) {
                r.domain = j["domain"].get<std::string>();
            }
        } catch (const json::exception& e) {
            throw DataError(origin + ": bad job record, line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        if (r.end <= r.start) {
            throw DataError(origin + ": job " + r.job_id + " has end <= start, line " +
                            std::to_string(line_no));
        }
        if (r.nodes.empty()) {
            throw DataError(origin + ": job " + r.job_id + " has no nodes, line " +
                            std::to_string(line_no));
        }
        auto [it, inserted] = seen.emplace(r.job_id, line_no);
        if (!inserted) {
            throw DataError(origin + ": duplicate job_id " + r.job_id + ", line " +
                            std::to_string(line_no));
        }
        out.push_back(std::move(r));
    });
    return out;
}

std::vector<JobRecord> parse_jobs(const std::filesystem::path& path) {
    return parse_jobs_text(read_text_file(path), path.string());
}

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

AggregateResult aggregate_10s(const std::vector<std::pair<std::int64_t, double>>& samples,
                              std::int64_t t0, std::int64_t t1) {
    AggregateResult result;
    if (t1 <= t0) return result;
    std::size_t n_windows = static_cast<std::size_t>((t1 - t0) / kWindowSeconds);
    if (n_windows == 0) return result;

    result.values.reserve(n_windows);
    std::size_t cursor = 0;
    // skip samples before t0
    while (cursor < samples.size() && samples[cursor].first < t0) ++cursor;

    for (std::size_t w = 0; w < n_windows; ++w) {
        std::int64_t w_end = t0 + static_cast<std::int64_t>(w + 1) * kWindowSeconds;
        double sum = 0.0;
        std::size_t count = 0;
        while (cursor < samples.size() && samples[cursor].first < w_end) {
            sum += samples[cursor].second;
            ++count;
            ++cursor;
        }
        if (count > 0) {
            result.values.push_back(sum / static_cast<double>(count));
        } else if (w == 0) {
            result.leading_gap = true;
            result.values.clear();
            return result;
        } else {
            result.values.push_back(result.values.back());  // carry previous window
        }
    }
    return result;
}

// ---------------------------------------------------------------------------
// Profile building
// ---------------------------------------------------------------------------

BuildResult build_profiles(const std::vector<JobRecord>& jobs,
                           const std::vector<PowerSample>& telemetry) {
    // Index telemetry per host. The (timestamp, power) sort makes window sums
    // independent of input row order, so profiles are bitwise reproducible.
    std::unordered_map<std::string, std::vector<std::pair<std::int64_t, double>>> by_host;
    for (const PowerSample& s : telemetry) {
        by_host[s.hostname].emplace_back(s.timestamp, s.input_power_w);
    }
    for (auto& [host, samples] : by_host) {
        std::sort(samples.begin(), samples.end());
    }

    std::vector<const JobRecord*> ordered;
    ordered.reserve(jobs.size());
    for (const JobRecord& j : jobs) ordered.push_back(&j);
    std::sort(ordered.begin(), ordered.end(),
              [](const JobRecord* a, const JobRecord* b) { return a->job_id < b->job_id; });

    BuildResult result;
    for (const JobRecord* job : ordered) {
        std::size_t n_windows = static_cast<std::size_t>((job->end - job->start) / kWindowSeconds);
        if (n_windows < kMinProfileLen) {
            result.drops.push_back({job->job_id, "too_short"});
            continue;
        }

        std::vector<std::string> nodes = job->nodes;
        std::sort(nodes.begin(), nodes.end());

        std::vector<double> combined(n_windows, 0.0);
        bool dropped = false;
        for (const std::string& node : nodes) {
            auto it = by_host.find(node);
            if (it == by_host.end()) {
                result.drops.push_back({job->job_id, "no_telemetry"});
                dropped = true;
                break;
            }
            const auto& samples = it->second;
            auto lo = std::lower_bound(samples.begin(), samples.end(), job->start,
                                       [](const auto& s, std::int64_t t) { return s.first < t; });
            auto hi = std::lower_bound(lo, samples.end(), job->end,
                                       [](const auto& s, std::int64_t t) { return s.first < t; });
            std::vector<std::pair<std::int64_t, double>> slice(lo, hi);
            if (slice.empty()) {
                result.drops.push_back({job->job_id, "no_telemetry"});
                dropped = true;
                break;
            }
            AggregateResult agg = aggregate_10s(slice, job->start, job->end);
            if (agg.leading_gap) {
                result.drops.push_back({job->job_id, "leading_gap"});
                dropped = true;
                break;
            }
            for (std::size_t w = 0; w < n_windows; ++w) combined[w] += agg.values[w];
        }
        if (dropped) continue;

        JobProfile p;
        p.job_id = job->job_id;
        p.t0 = job->start;
        p.step = kWindowSeconds;
        p.node_count = static_cast<int>(nodes.size());
        p.domain = job->domain;
        p.values.resize(n_windows);
        for (std::size_t w = 0; w < n_windows; ++w) {
            p.values[w] = combined[w] / static_cast<double>(nodes.size());
        }
        result.profiles.push_back(std::move(p));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Profile JSONL IO
// ---------------------------------------------------------------------------

std::string profiles_to_jsonl(const std::vector<JobProfile>& profiles) {
    std::string out;
    for (const JobProfile& p : profiles) {
        json j{{"job_id", p.job_id},
               {"t0", p.t0},
               {"step", p.step},
               {"node_count", p.node_count},
               {"domain", p.domain},
               {"values", p.values}};
        out += j.dump();
        out += '\n';
    }
    return out;
}

std::vector<JobProfile> profiles_from_jsonl(std::string_view text, const std::string& origin) {
    std::vector<JobProfile> out;
    for_each_line(text, [&](std::string_view line, std::size_t line_no) {
        if (line.empty()) return;
        json j;
        try {
            j = json::parse(line);
        } catch (const json::exception& e) {
            throw DataError(origin + ": bad json, line " + std::to_string(line_no) + ": " +
                            e.what());
        }
        JobProfile p;
        try {
            p.job_id = j.at("job_id").get<std::string>();
            p.t0 = j.at("t0").get<std::int64_t>();
            p.step = j.at("step").get<int>();
            p.node_count = j.at("node_count").get<int>();
            p.domain = j.value("domain", std::string());
            p.values = j.at("values").get<std::vector<double>>();
        } catch (const json::exception& e) {
            throw DataError(origin + ": bad profile record, line " + std::to_string(line_no) +
                            ": " + e.what());
        }
        out.push_back(std::move(p));
    });
    return out;
}

void write_profiles(const std::filesystem::path& path, const std::vector<JobProfile>& profiles) {
    write_text_file(path, profiles_to_jsonl(profiles));
}

std::vector<JobProfile> read_profiles(const std::filesystem::path& path) {
    return profiles_from_jsonl(read_text_file(path), path.string());
}

}  // namespace powerprof
