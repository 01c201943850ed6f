#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "powerprof/common.hpp"
#include "powerprof/ingest.hpp"

namespace powerprof {

enum class PatternFamily {
    Constant,
    SquareWave,
    RampUp,
    RampDown,
    SpikeTrain,
    PlateauShift,
    NoiseFlat,
};

PatternFamily pattern_family_from_string(const std::string& s);
std::string pattern_family_to_string(PatternFamily f);

// One generated job class. Periodic families (square_wave, spike_train)
// require period >= 2 windows. The optional submit window restricts this
// class's jobs to months [submit_month_lo, submit_month_hi) of the synthetic
// year, which lets tests construct calendars where classes appear late.
struct PatternSpec {
    PatternFamily family = PatternFamily::Constant;
    double base_power = 0.0;       // watts
    double swing_amplitude = 0.0;  // watts, peak-to-peak
    int period = 4;                // windows
    double noise_std = 0.0;        // watts
    std::string intensity = "high";  // "high" | "low"
    int submit_month_lo = 0;
    int submit_month_hi = 12;
};

struct SynthConfig {
    std::size_t jobs_per_class = 250;
    std::size_t min_len = 32;   // windows
    std::size_t max_len = 96;   // windows
    std::int64_t year_start_epoch = 1700000000;
    // Job-id namespace ("<prefix>-c0-000"). Separately generated batches that
    // will meet in one pool/catalog need distinct prefixes, or their ids
    // collide.
    std::string prefix = "synth";
};

inline constexpr std::int64_t kSynthSecondsPerMonth = 30LL * 86400LL;  // 30-day months

struct SynthDataset {
    std::vector<JobProfile> profiles;            // sorted by job_id
    std::map<std::string, int> labels;           // job_id -> class index
    std::map<std::string, std::int64_t> submits;  // job_id -> submit epoch
};

// Noise-free kernel value for window t of a length-n profile.
double pattern_kernel(const PatternSpec& spec, std::size_t t, std::size_t n);

// Deterministic for a fixed seed: lengths uniform in [min_len, max_len],
// Gaussian noise added per window and clipped at 0, submit epochs uniform
// over each pattern's month window of the synthetic year.
SynthDataset generate_dataset(const std::vector<PatternSpec>& specs, const SynthConfig& cfg,
                              std::uint64_t seed);

// JSON array of pattern specs.
std::vector<PatternSpec> parse_pattern_specs(const std::filesystem::path& path);
std::vector<PatternSpec> parse_pattern_specs_text(std::string_view text, const std::string& origin);

// labels.csv: "job_id,class_id,submit_epoch", sorted by job_id.
std::string labels_to_csv(const SynthDataset& ds);
void write_labels(const std::filesystem::path& path, const SynthDataset& ds);

struct LabelRow {
    std::string job_id;
    int class_id = 0;
    std::int64_t submit_epoch = 0;
};
std::vector<LabelRow> read_labels(const std::filesystem::path& path);
std::vector<LabelRow> parse_labels_text(std::string_view text, const std::string& origin);

}  // namespace powerprof
