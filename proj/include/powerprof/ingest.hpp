#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "powerprof/common.hpp"

namespace powerprof {

// One telemetry row: per-node instantaneous input power, nominally 1 Hz.
struct PowerSample {
    std::int64_t timestamp = 0;  // epoch seconds
    std::string hostname;
    double input_power_w = 0.0;
};

// Scheduler log entry.
struct JobRecord {
    std::string job_id;
    std::int64_t start = 0;
    std::int64_t end = 0;
    std::vector<std::string> nodes;
    std::string project;  // optional, may be empty
    std::string domain;   // optional, may be empty
};

// Per-job power profile: one mean-power value per 10 s window, averaged
// across the job's nodes. Windows are aligned to the job start; the final
// partial window is dropped.
struct JobProfile {
    std::string job_id;
    std::int64_t t0 = 0;
    int step = 10;  // seconds per window
    int node_count = 0;
    std::string domain;
    std::vector<double> values;
};

inline constexpr int kWindowSeconds = 10;
inline constexpr std::size_t kMinProfileLen = 8;

// ---------------------------------------------------------------------------
// Parsing
// ---------------------------------------------------------------------------

// CSV with header "timestamp,hostname,input_power_w". Malformed rows and
// negative power raise DataError carrying the line number.
std::vector<PowerSample> parse_telemetry(const std::filesystem::path& path);
std::vector<PowerSample> parse_telemetry_text(std::string_view text, const std::string& origin);

// JSONL, one job per line: {job_id, start, end, nodes[], project?, domain?}.
std::vector<JobRecord> parse_jobs(const std::filesystem::path& path);
std::vector<JobRecord> parse_jobs_text(std::string_view text, const std::string& origin);

// ---------------------------------------------------------------------------
// Aggregation
// ---------------------------------------------------------------------------

struct AggregateResult {
    std::vector<double> values;
    bool leading_gap = false;  // first window had no samples; values left empty
};

// Mean power per 10 s window over [t0, t1), drop the final partial window.
// A window with no samples inherits the previous window's value; a gap in the
// very first window is reported via leading_gap instead.
// `samples` are (timestamp, power) pairs for one node, sorted by timestamp.
AggregateResult aggregate_10s(const std::vector<std::pair<std::int64_t, double>>& samples,
                              std::int64_t t0, std::int64_t t1);

// ---------------------------------------------------------------------------
// Profile building
// ---------------------------------------------------------------------------

struct DropRecord {
    std::string job_id;
    std::string reason;  // "too_short" | "leading_gap" | "no_telemetry"
};

struct BuildResult {
    std::vector<JobProfile> profiles;  // sorted by job_id
    std::vector<DropRecord> drops;
};

// Join telemetry against the job log. Per node: window the samples, then mean
// across nodes per window (each node normalized into windows first). Jobs are
// dropped, with a recorded reason, when any node is absent from telemetry,
// any node's first window is empty, or fewer than kMinProfileLen full windows
// fit the job's duration.
BuildResult build_profiles(const std::vector<JobRecord>& jobs,
                           const std::vector<PowerSample>& telemetry);

// ---------------------------------------------------------------------------
// Profile JSONL IO
// ---------------------------------------------------------------------------

std::string profiles_to_jsonl(const std::vector<JobProfile>& profiles);
std::vector<JobProfile> profiles_from_jsonl(std::string_view text, const std::string& origin);
void write_profiles(const std::filesystem::path& path, const std::vector<JobProfile>& profiles);
std::vector<JobProfile> read_profiles(const std::filesystem::path& path);

}  // namespace powerprof
