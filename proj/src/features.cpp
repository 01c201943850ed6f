#include "powerprof/features.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace powerprof {

using nlohmann::json;

std::array<std::pair<std::size_t, std::size_t>, kNumBins> split_bins(std::size_t n) {
    if (n < 2 * kNumBins) {
        throw DataError("split_bins: series length " + std::to_string(n) + " is below the minimum " +
                        std::to_string(2 * kNumBins));
    }
    std::array<std::pair<std::size_t, std::size_t>, kNumBins> bins;
    std::size_t base = n / kNumBins;
    std::size_t rem = n % kNumBins;
    std::size_t start = 0;
    for (std::size_t b = 0; b < kNumBins; ++b) {
        std::size_t len = base + (b < rem ? 1 : 0);
        bins[b] = {start, start + len};
        start += len;
    }
    return bins;
}

namespace {

// Range index for a positive magnitude, or kNumRanges when out of the table.
std::size_t range_index(double magnitude) {
    for (std::size_t r = 0; r < kNumRanges; ++r) {
        if (magnitude >= kSwingRanges[r].first && magnitude < kSwingRanges[r].second) return r;
    }
    return kNumRanges;
}

std::size_t bin_of(const std::array<std::pair<std::size_t, std::size_t>, kNumBins>& bins,
                   std::size_t t) {
    for (std::size_t b = 0; b < kNumBins; ++b) {
        if (t >= bins[b].first && t < bins[b].second) return b;
    }
    throw NumericError("bin_of: index out of range");
}

}  // namespace

SwingCounts swing_counts(const std::vector<double>& series, std::size_t lag,
                         const std::array<std::pair<std::size_t, std::size_t>, kNumBins>& bins) {
    SwingCounts counts{};
    if (series.size() <= lag) return counts;
    for (std::size_t t = 0; t + lag < series.size(); ++t) {
        double delta = series[t + lag] - series[t];
        if (delta == 0.0) continue;
        std::size_t dir = delta > 0.0 ? 0 : 1;
        std::size_t r = range_index(std::abs(delta));
        if (r == kNumRanges) continue;  // below 25 W or at/above 3000 W
        counts[bin_of(bins, t)][dir][r] += 1;
    }
    return counts;
}

FeatureVector extract_features(const JobProfile& profile) {
    const std::vector<double>& v = profile.values;
    const std::size_t n = v.size();
    auto bins = split_bins(n);

    FeatureVector f{};

    // per-bin mean
    for (std::size_t b = 0; b < kNumBins; ++b) {
        double sum = 0.0;
        for (std::size_t t = bins[b].first; t < bins[b].second; ++t) sum += v[t];
        f[b] = sum / static_cast<double>(bins[b].second - bins[b].first);
    }

    // per-bin median; even length takes the mean of the two middle values
    for (std::size_t b = 0; b < kNumBins; ++b) {
        std::vector<double> window(v.begin() + static_cast<std::ptrdiff_t>(bins[b].first),
                                   v.begin() + static_cast<std::ptrdiff_t>(bins[b].second));
        std::sort(window.begin(), window.end());
        std::size_t len = window.size();
        double median = len % 2 == 1 ? window[len / 2]
                                     : (window[len / 2 - 1] + window[len / 2]) / 2.0;
        f[kNumBins + b] = median;
    }

    // swing counts, normalized by series length
    std::array<SwingCounts, kNumLags> by_lag = {swing_counts(v, 1, bins),
                                                swing_counts(v, 2, bins)};
    std::size_t idx = 2 * kNumBins;
    for (std::size_t b = 0; b < kNumBins; ++b) {
        for (std::size_t lag = 0; lag < kNumLags; ++lag) {
            for (std::size_t dir = 0; dir < kNumDirections; ++dir) {
                for (std::size_t r = 0; r < kNumRanges; ++r) {
                    f[idx++] = static_cast<double>(by_lag[lag][b][dir][r]) /
                               static_cast<double>(n);
                }
            }
        }
    }

    // whole-series mean and length
    double total = 0.0;
    for (double x : v) total += x;
    f[184] = total / static_cast<double>(n);
    f[185] = static_cast<double>(n);
    return f;
}

std::vector<std::string> canonical_feature_names() {
    std::vector<std::string> names;
    names.reserve(kNumFeatures);
    for (std::size_t b = 0; b < kNumBins; ++b) {
        names.push_back("bin" + std::to_string(b + 1) + "_mean_power");
    }
    for (std::size_t b = 0; b < kNumBins; ++b) {
        names.push_back("bin" + std::to_string(b + 1) + "_median_power");
    }
    for (std::size_t b = 0; b < kNumBins; ++b) {
        for (std::size_t lag = 1; lag <= kNumLags; ++lag) {
            for (const char* dir : {"rise", "fall"}) {
                for (const auto& [lo, hi] : kSwingRanges) {
                    names.push_back("bin" + std::to_string(b + 1) + "_lag" + std::to_string(lag) +
                                    "_" + dir + "_" + std::to_string(static_cast<int>(lo)) + "_" +
                                    std::to_string(static_cast<int>(hi)));
                }
            }
        }
    }
    names.push_back("mean_power");
    names.push_back("length");
    return names;
}

// ---------------------------------------------------------------------------
// Standardization
// ---------------------------------------------------------------------------

FeatureMatrix extract_feature_matrix(const std::vector<JobProfile>& profiles) {
    FeatureMatrix m;
    m.job_ids.reserve(profiles.size());
    m.rows.reserve(profiles.size());
    for (const JobProfile& p : profiles) {
        m.job_ids.push_back(p.job_id);
        m.rows.push_back(extract_features(p));
    }
    return m;
}

Scaler fit_scaler(const FeatureMatrix& m) {
    if (m.rows.size() < 2) throw DataError("fit_scaler: need at least 2 rows");
    const double n = static_cast<double>(m.rows.size());
    Scaler s;
    s.means.assign(kNumFeatures, 0.0);
    s.stds.assign(kNumFeatures, 0.0);
    for (const FeatureVector& row : m.rows) {
        for (std::size_t j = 0; j < kNumFeatures; ++j) s.means[j] += row[j];
    }
    for (std::size_t j = 0; j < kNumFeatures; ++j) s.means[j] /= n;
    for (const FeatureVector& row : m.rows) {
        for (std::size_t j = 0; j < kNumFeatures; ++j) {
            double d = row[j] - s.means[j];
            s.stds[j] += d * d;
        }
    }
    for (std::size_t j = 0; j < kNumFeatures; ++j) s.stds[j] = std::sqrt(s.stds[j] / n);
    return s;
}

FeatureMatrix apply_scaler(const Scaler& s, const FeatureMatrix& m) {
    if (s.means.size() != kNumFeatures || s.stds.size() != kNumFeatures) {
        throw DataError("apply_scaler: scaler has wrong width");
    }
    FeatureMatrix out;
    out.job_ids = m.job_ids;
    out.rows.resize(m.rows.size());
    for (std::size_t i = 0; i < m.rows.size(); ++i) {
        for (std::size_t j = 0; j < kNumFeatures; ++j) {
            out.rows[i][j] =
                s.stds[j] == 0.0 ? 0.0 : (m.rows[i][j] - s.means[j]) / s.stds[j];
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// IO
// ---------------------------------------------------------------------------

std::string feature_matrix_to_csv(const FeatureMatrix& m) {
    std::string out = "job_id";
    char buf[8];
    for (std::size_t j = 0; j < kNumFeatures; ++j) {
        std::snprintf(buf, sizeof(buf), ",f%03zu", j);
        out += buf;
    }
    out += '\n';

    std::vector<std::size_t> order(m.job_ids.size());
    for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
    std::sort(order.begin(), order.end(),
              [&](std::size_t a, std::size_t b) { return m.job_ids[a] < m.job_ids[b]; });

    for (std::size_t i : order) {
        out += m.job_ids[i];
        for (std::size_t j = 0; j < kNumFeatures; ++j) {
            out += ',';
            out += fmt_double(m.rows[i][j]);
        }
        out += '\n';
    }
    return out;
}

FeatureMatrix feature_matrix_from_csv(std::string_view text, const std::string& origin) {
    FeatureMatrix m;
    std::size_t pos = 0, line_no = 0;
    bool header_seen = false;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (!header_seen) {
            auto fields = split_csv_line(line);
            if (fields.size() != kNumFeatures + 1 || fields[0] != "job_id" ||
                fields[1] != "f000" || fields.back() != "f185") {
                throw DataError(origin + ": bad feature csv header");
            }
            header_seen = true;
        } else if (!line.empty()) {
            auto fields = split_csv_line(line);
            if (fields.size() != kNumFeatures + 1) {
                throw DataError(origin + ": expected " + std::to_string(kNumFeatures + 1) +
                                " fields, line " + std::to_string(line_no));
            }
            m.job_ids.emplace_back(fields[0]);
            FeatureVector row{};
            for (std::size_t j = 0; j < kNumFeatures; ++j) {
                row[j] = parse_double(fields[j + 1], origin + " line " + std::to_string(line_no));
            }
            m.rows.push_back(row);
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!header_seen) throw DataError(origin + ": empty feature csv");
    return m;
}

void write_feature_matrix(const std::filesystem::path& path, const FeatureMatrix& m) {
    write_text_file(path, feature_matrix_to_csv(m));
}

FeatureMatrix read_feature_matrix(const std::filesystem::path& path) {
    return feature_matrix_from_csv(read_text_file(path), path.string());
}

std::string scaler_to_json(const Scaler& s) {
    json j{{"means", s.means}, {"stds", s.stds}};
    return j.dump(2) + "\n";
}

Scaler scaler_from_json(std::string_view text, const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw DataError(origin + ": bad scaler json: " + e.what());
    }
    Scaler s;
    try {
        s.means = j.at("means").get<std::vector<double>>();
        s.stds = j.at("stds").get<std::vector<double>>();
    } catch (const json::exception& e) {
        throw DataError(origin + ": bad scaler json: " + e.what());
    }
    if (s.means.size() != kNumFeatures || s.stds.size() != kNumFeatures) {
        throw DataError(origin + ": scaler width is not " + std::to_string(kNumFeatures));
    }
    return s;
}

void write_scaler(const std::filesystem::path& path, const Scaler& s) {
    write_text_file(path, scaler_to_json(s));
}

Scaler read_scaler(const std::filesystem::path& path) {
    return scaler_from_json(read_text_file(path), path.string());
}

}  // namespace powerprof
