#include "powerprof/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include <json.hpp>

namespace powerprof {

using nlohmann::json;

PatternFamily pattern_family_from_string(const std::string& s) {
    if (s == "constant") return PatternFamily::Constant;
    if (s == "square_wave") return PatternFamily::SquareWave;
    if (s == "ramp_up") return PatternFamily::RampUp;
    if (s == "ramp_down") return PatternFamily::RampDown;
    if (s == "spike_train") return PatternFamily::SpikeTrain;
    if (s == "plateau_shift") return PatternFamily::PlateauShift;
    if (s == "noise_flat") return PatternFamily::NoiseFlat;
    throw ConfigError("unknown pattern family: " + s);
}

std::string pattern_family_to_string(PatternFamily f) {
    switch (f) {
        case PatternFamily::Constant: return "constant";
        case PatternFamily::SquareWave: return "square_wave";
        case PatternFamily::RampUp: return "ramp_up";
        case PatternFamily::RampDown: return "ramp_down";
        case PatternFamily::SpikeTrain: return "spike_train";
        case PatternFamily::PlateauShift: return "plateau_shift";
        case PatternFamily::NoiseFlat: return "noise_flat";
    }
    throw ConfigError("bad pattern family value");
}

namespace {

void validate_spec(const PatternSpec& spec, std::size_t index) {
    auto fail = [&](const std::string& msg) {
        throw ConfigError("pattern spec " + std::to_string(index) + ": " + msg);
    };
    if (spec.base_power <= 0.0) fail("base_power must be > 0");
    if (spec.swing_amplitude < 0.0) fail("swing_amplitude must be >= 0");
    if (spec.noise_std < 0.0) fail("noise_std must be >= 0");
    if (spec.intensity != "high" && spec.intensity != "low") fail("intensity must be high or low");
    bool periodic = spec.family == PatternFamily::SquareWave ||
                    spec.family == PatternFamily::SpikeTrain;
    if (periodic && spec.period < 2) fail("period must be >= 2 windows");
    if (spec.submit_month_lo < 0 || spec.submit_month_hi > 12 ||
        spec.submit_month_lo >= spec.submit_month_hi) {
        fail("submit month window must satisfy 0 <= lo < hi <= 12");
    }
}

}  // namespace

double pattern_kernel(const PatternSpec& spec, std::size_t t, std::size_t n) {
    const double amp = spec.swing_amplitude;
    switch (spec.family) {
        case PatternFamily::Constant:
        case PatternFamily::NoiseFlat:
            return spec.base_power;
        case PatternFamily::SquareWave: {
            // high for the first ceil(period/2) windows of each period
            std::size_t period = static_cast<std::size_t>(spec.period);
            std::size_t phase = t % period;
            std::size_t high_len = (period + 1) / 2;
            return phase < high_len ? spec.base_power + amp / 2.0 : spec.base_power - amp / 2.0;
        }
        case PatternFamily::RampUp: {
            if (n <= 1) return spec.base_power;
            double frac = static_cast<double>(t) / static_cast<double>(n - 1);
            return spec.base_power - amp / 2.0 + amp * frac;
        }
        case PatternFamily::RampDown: {
            if (n <= 1) return spec.base_power;
            double frac = static_cast<double>(t) / static_cast<double>(n - 1);
            return spec.base_power + amp / 2.0 - amp * frac;
        }
        case PatternFamily::SpikeTrain: {
            // one spiked window per period, offset to mid-period
            std::size_t period = static_cast<std::size_t>(spec.period);
            return t % period == period / 2 ? spec.base_power + amp : spec.base_power;
        }
        case PatternFamily::PlateauShift:
            return t < n / 2 ? spec.base_power - amp / 2.0 : spec.base_power + amp / 2.0;
    }
    throw ConfigError("bad pattern family value");
}

SynthDataset generate_dataset(const std::vector<PatternSpec>& specs, const SynthConfig& cfg,
                              std::uint64_t seed) {
    if (specs.empty()) throw ConfigError("generate_dataset: no pattern specs");
    if (cfg.jobs_per_class == 0) throw ConfigError("generate_dataset: jobs_per_class must be > 0");
    if (cfg.min_len < kMinProfileLen) {
        throw ConfigError("generate_dataset: min_len must be >= " +
                          std::to_string(kMinProfileLen));
    }
    if (cfg.max_len < cfg.min_len) throw ConfigError("generate_dataset: max_len < min_len");
    for (std::size_t c = 0; c < specs.size(); ++c) validate_spec(specs[c], c);

    Rng rng = Rng::for_stage(seed, "synth");
    SynthDataset ds;

    int class_digits = 1;
    for (std::size_t v = specs.size(); v >= 10; v /= 10) ++class_digits;
    int job_digits = 1;
    for (std::size_t v = cfg.jobs_per_class; v >= 10; v /= 10) ++job_digits;

    for (std::size_t c = 0; c < specs.size(); ++c) {
        const PatternSpec& spec = specs[c];
        for (std::size_t j = 0; j < cfg.jobs_per_class; ++j) {
            std::size_t n = cfg.min_len + rng.uniform_int(cfg.max_len - cfg.min_len + 1);

            std::int64_t lo = cfg.year_start_epoch + spec.submit_month_lo * kSynthSecondsPerMonth;
            std::int64_t hi = cfg.year_start_epoch + spec.submit_month_hi * kSynthSecondsPerMonth;
            std::int64_t submit = lo + static_cast<std::int64_t>(
                                           rng.uniform_int(static_cast<std::uint64_t>(hi - lo)));

            JobProfile p;
            {
                char buf[64];
                std::snprintf(buf, sizeof(buf), "-c%0*zu-%0*zu", class_digits, c, job_digits, j);
                p.job_id = cfg.prefix + buf;
            }
            p.t0 = submit;
            p.step = kWindowSeconds;
            p.node_count = 1;
            p.domain = pattern_family_to_string(spec.family);
            p.values.resize(n);
            for (std::size_t t = 0; t < n; ++t) {
                double v = pattern_kernel(spec, t, n);
                if (spec.noise_std > 0.0) v += rng.normal(0.0, spec.noise_std);
                p.values[t] = std::max(v, 0.0);  // power cannot go negative
            }

            ds.labels[p.job_id] = static_cast<int>(c);
            ds.submits[p.job_id] = submit;
            ds.profiles.push_back(std::move(p));
        }
    }
    std::sort(ds.profiles.begin(), ds.profiles.end(),
              [](const JobProfile& a, const JobProfile& b) { return a.job_id < b.job_id; });
    return ds;
}

std::vector<PatternSpec> parse_pattern_specs_text(std::string_view text,
                                                  const std::string& origin) {
    json j;
    try {
        j = json::parse(text);
    } catch (const json::exception& e) {
        throw ConfigError(origin + ": bad json: " + e.what());
    }
    if (!j.is_array()) throw ConfigError(origin + ": expected a json array of pattern specs");
    std::vector<PatternSpec> specs;
    for (std::size_t i = 0; i < j.size(); ++i) {
        const json& sj = j[i];
        PatternSpec s;
        try {
            s.family = pattern_family_from_string(sj.at("family").get<std::string>());
            s.base_power = sj.at("base_power").get<double>();
            s.swing_amplitude = sj.value("swing_amplitude", 0.0);
            s.period = sj.value("period", 4);
            s.noise_std = sj.value("noise_std", 0.0);
            s.intensity = sj.value("intensity", std::string("high"));
            s.submit_month_lo = sj.value("submit_month_lo", 0);
            s.submit_month_hi = sj.value("submit_month_hi", 12);
        } catch (const json::exception& e) {
            throw ConfigError(origin + ": spec " + std::to_string(i) + ": " + e.what());
        }
        validate_spec(s, i);
        specs.push_back(s);
    }
    if (specs.empty()) throw ConfigError(origin + ": no pattern specs");
    return specs;
}

std::vector<PatternSpec> parse_pattern_specs(const std::filesystem::path& path) {
    return parse_pattern_specs_text(read_text_file(path), path.string());
}

std::string labels_to_csv(const SynthDataset& ds) {
    std::string out = "job_id,class_id,submit_epoch\n";
    for (const auto& [job_id, class_id] : ds.labels) {  // std::map: already sorted
        out += job_id;
        out += ',';
        out += std::to_string(class_id);
        out += ',';
        out += std::to_string(ds.submits.at(job_id));
        out += '\n';
    }
    return out;
}

void write_labels(const std::filesystem::path& path, const SynthDataset& ds) {
    write_text_file(path, labels_to_csv(ds));
}

std::vector<LabelRow> parse_labels_text(std::string_view text, const std::string& origin) {
    std::vector<LabelRow> out;
    bool header_seen = false;
    std::size_t pos = 0, line_no = 0;
    while (pos < text.size()) {
        std::size_t nl = text.find('\n', pos);
        std::string_view line =
            nl == std::string_view::npos ? text.substr(pos) : text.substr(pos, nl - pos);
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        ++line_no;
        if (!header_seen) {
            if (line != "job_id,class_id,submit_epoch" && line != "job_id,class_id") {
                throw DataError(origin + ": bad labels header");
            }
            header_seen = true;
        } else if (!line.empty()) {
            auto fields = split_csv_line(line);
            if (fields.size() != 3 && fields.size() != 2) {
                throw DataError(origin + ": expected 2 or 3 fields, line " +
                                std::to_string(line_no));
            }
            LabelRow row;
            row.job_id = std::string(fields[0]);
            row.class_id = static_cast<int>(
                parse_int(fields[1], origin + " line " + std::to_string(line_no)));
            if (fields.size() == 3) {
                row.submit_epoch = parse_int(fields[2], origin + " line " + std::to_string(line_no));
            }
            out.push_back(std::move(row));
        }
        if (nl == std::string_view::npos) break;
        pos = nl + 1;
    }
    if (!header_seen) throw DataError(origin + ": empty labels file");
    return out;
}

std::vector<LabelRow> read_labels(const std::filesystem::path& path) {
    return parse_labels_text(read_text_file(path), path.string());
}

}  // namespace powerprof
