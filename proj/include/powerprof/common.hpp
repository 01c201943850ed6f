#pragma once

#include <cstdint>
#include <filesystem>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace powerprof {

// Error taxonomy mapped to CLI exit codes: config=2, data=3, numeric=4.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

class DataError : public std::runtime_error {
public:
    explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& msg) : std::runtime_error(msg) {}
};

// ---------------------------------------------------------------------------
// Seeded RNG.
//
// mt19937_64 is fully specified by the standard; the distribution transforms
// live here (not std::*_distribution, which is implementation-defined) so a
// fixed seed gives identical output everywhere. One generator per pipeline
// stage, derived from the master seed and the stage name.
// ---------------------------------------------------------------------------
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    // Derive an independent stream for a named stage.
    static Rng for_stage(std::uint64_t master_seed, std::string_view stage);

    std::uint64_t next_u64() { return engine_(); }

    // Uniform in [0, 1).
    double uniform();
    double uniform(double lo, double hi);

    // Uniform integer in [0, n). n must be > 0.
    std::uint64_t uniform_int(std::uint64_t n);

    // Box-Muller, no spare caching (two u64 draws per sample).
    double normal(double mean = 0.0, double stddev = 1.0);

    // Fisher-Yates shuffle of 0..n-1.
    std::vector<std::size_t> permutation(std::size_t n);

private:
    std::mt19937_64 engine_;
};

// FNV-1a, used for stage-seed derivation only (not a content digest).
std::uint64_t fnv1a64(std::string_view s);

// ---------------------------------------------------------------------------
// Float formatting: shortest representation that round-trips at 64-bit.
// Used for every CSV/JSONL value so artifact bytes are deterministic.
// ---------------------------------------------------------------------------
std::string fmt_double(double v);
double parse_double(std::string_view s, const std::string& context);
long long parse_int(std::string_view s, const std::string& context);

// SHA-256 content digest, lowercase hex.
std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

// Whole-file text IO.
std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view content);

// Split a CSV line on commas (no quoting; the formats here never need it).
std::vector<std::string_view> split_csv_line(std::string_view line);

// ---------------------------------------------------------------------------
// Logging
// ---------------------------------------------------------------------------
enum class LogLevel { Debug = 0, Info = 1, Warn = 2, Error = 3 };

void set_log_level(LogLevel level);
LogLevel log_level_from_string(const std::string& s);
void log_debug(const std::string& msg);
void log_info(const std::string& msg);
void log_warn(const std::string& msg);
void log_error(const std::string& msg);

}  // namespace powerprof
