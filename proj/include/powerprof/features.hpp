#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "powerprof/common.hpp"
#include "powerprof/ingest.hpp"

namespace powerprof {

// ---------------------------------------------------------------------------
// Canonical feature vector layout (186 values):
//   [0..3]     per-bin mean power, bins 1..4
//   [4..7]     per-bin median power, bins 1..4
//   [8..183]   swing counts / n, ordered by (bin, lag, direction, range):
//              bin 1..4 outermost, lag {1,2}, direction {rising, falling},
//              then the 11 magnitude ranges ascending
//   [184]      whole-series mean power
//   [185]      series length n
// 4*11*2*2 + 4 + 4 + 1 + 1 = 186.
// ---------------------------------------------------------------------------

inline constexpr std::size_t kNumBins = 4;
inline constexpr std::size_t kNumLags = 2;       // lags 1 and 2
inline constexpr std::size_t kNumDirections = 2; // rising, falling
inline constexpr std::size_t kNumRanges = 11;
inline constexpr std::size_t kNumFeatures =
    kNumBins * kNumLags * kNumDirections * kNumRanges + kNumBins + kNumBins + 1 + 1;
static_assert(kNumFeatures == 186);

// Swing magnitude ranges in watts, half-open [lo, hi). Deltas below 25 W or
// at/above 3000 W are ignored.
inline constexpr std::array<std::pair<double, double>, kNumRanges> kSwingRanges = {{
    {25.0, 50.0},
    {50.0, 100.0},
    {100.0, 200.0},
    {200.0, 300.0},
    {300.0, 400.0},
    {400.0, 500.0},
    {500.0, 700.0},
    {700.0, 1000.0},
    {1000.0, 1500.0},
    {1500.0, 2000.0},
    {2000.0, 3000.0},
}};

using FeatureVector = std::array<double, kNumFeatures>;

// Four contiguous index ranges [begin, end) covering 0..n-1 whose lengths
// differ by at most one; the remainder r = n % 4 goes to the first r bins.
// n < 8 raises DataError.
std::array<std::pair<std::size_t, std::size_t>, kNumBins> split_bins(std::size_t n);

// counts[bin][direction][range] of deltas series[t+lag] - series[t],
// attributed to the bin containing the left index t. direction 0 = rising
// (delta > 0), 1 = falling (delta < 0); zero deltas are ignored.
using SwingCounts =
    std::array<std::array<std::array<std::size_t, kNumRanges>, kNumDirections>, kNumBins>;
SwingCounts swing_counts(const std::vector<double>& series, std::size_t lag,
                         const std::array<std::pair<std::size_t, std::size_t>, kNumBins>& bins);

FeatureVector extract_features(const JobProfile& profile);

// Index of feature fNNN by name; names documented in FEATURES.md.
std::vector<std::string> canonical_feature_names();

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

struct Scaler {
    std::vector<double> means;
    std::vector<double> stds;  // population std; 0 marks a degenerate feature
};

struct FeatureMatrix {
    std::vector<std::string> job_ids;       // row order
    std::vector<FeatureVector> rows;
};

FeatureMatrix extract_feature_matrix(const std::vector<JobProfile>& profiles);

// Requires >= 2 rows. Degenerate (constant) features keep std 0.
Scaler fit_scaler(const FeatureMatrix& m);

// (x - mean) / std per feature; degenerate features map to 0.
FeatureMatrix apply_scaler(const Scaler& s, const FeatureMatrix& m);

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

// CSV with header "job_id,f000..f185", rows sorted by job_id.
std::string feature_matrix_to_csv(const FeatureMatrix& m);
FeatureMatrix feature_matrix_from_csv(std::string_view text, const std::string& origin);
void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m);
FeatureMatrix read_feature_matrix(const std::filesystem::path& path);

// {"means": [...], "stds": [...]}
std::string scaler_to_json(const Scaler& s);
Scaler scaler_from_json(std::string_view text, const std::string& origin);
void write_scaler(const std::filesystem::path& path, const Scaler& s);
Scaler read_scaler(const std::filesystem::path& path);

}  // namespace powerprof
