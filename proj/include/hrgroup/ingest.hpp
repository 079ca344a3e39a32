#ifndef HRGROUP_INGEST_HPP
#define HRGROUP_INGEST_HPP

// Annotated heart-rate corpora: CSV reading/writing, uniform resampling, and
// a seeded synthetic cohort generator that follows the five-segment protocol.

#include "hrgroup/error.hpp"
#include "hrgroup/io.hpp"
#include "hrgroup/rng.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace hrgroup {

enum class ActivityLabel : int { Rest = 0, Breathe = 1, Activity = 2, RestAC = 3, Type = 4 };

inline constexpr int kActivityCount = 5;

inline constexpr std::array<ActivityLabel, kActivityCount> kAllActivities{
    ActivityLabel::Rest, ActivityLabel::Breathe, ActivityLabel::Activity, ActivityLabel::RestAC,
    ActivityLabel::Type};

inline std::string_view label_name(ActivityLabel label) {
    switch (label) {
    case ActivityLabel::Rest: return "Rest";
    case ActivityLabel::Breathe: return "Breathe";
    case ActivityLabel::Activity: return "Activity";
    case ActivityLabel::RestAC: return "RestAC";
    case ActivityLabel::Type: return "Type";
    }
    return "?";
}

inline int label_index(ActivityLabel label) { return static_cast<int>(label); }

inline ActivityLabel label_from_index(int i) {
    if (i < 0 || i >= kActivityCount) fail(ErrorCode::UnknownLabel, "label index " + std::to_string(i));
    return static_cast<ActivityLabel>(i);
}

/// Accepts the canonical names case-insensitively plus a few spellings seen
/// in protocol annotations ("Rest after Activity", "rest_ac").
inline ActivityLabel parse_label(std::string_view text) {
    std::string key;
    for (unsigned char c : io::trim(text))
        if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
    if (key == "rest" || key == "seatedrest") return ActivityLabel::Rest;
    if (key == "breathe" || key == "breathing" || key == "deepbreathing") return ActivityLabel::Breathe;
    if (key == "activity" || key == "physicalactivity" || key == "walking") return ActivityLabel::Activity;
    if (key == "restac" || key == "restafteractivity") return ActivityLabel::RestAC;
    if (key == "type" || key == "typing") return ActivityLabel::Type;
    fail(ErrorCode::UnknownLabel, std::string(text));
}

struct HeartRateSample {
    double timestamp = 0.0; // seconds since session start
    double bpm = 0.0;
    ActivityLabel label = ActivityLabel::Rest;

    friend bool operator==(const HeartRateSample&, const HeartRateSample&) = default;
};

inline constexpr double kMinBpm = 20.0;
inline constexpr double kMaxBpm = 250.0;

struct SubjectSeries {
    std::string subject_id;
    std::string device_id;
    std::vector<HeartRateSample> samples;

    std::size_t size() const { return samples.size(); }

    friend bool operator==(const SubjectSeries&, const SubjectSeries&) = default;
};

/// Column names used to locate the five required fields. An empty device
/// column means the file carries a single unnamed device stream.
struct CorpusSchema {
    std::string subject = "subject";
    std::string device = "device";
    std::string timestamp = "timestamp";
    std::string bpm = "bpm";
    std::string label = "label";
    /// Rows whose device does not match are dropped; empty keeps all devices.
    /// Matching ignores case, spaces and punctuation.
    std::string device_filter = "AppleWatch";
};

namespace detail {

inline std::string device_key(std::string_view s) {
    std::string key;
    for (unsigned char c : s)
        if (std::isalnum(c)) key.push_back(static_cast<char>(std::tolower(c)));
    return key;
}

inline long long days_from_civil(long long y, unsigned m, unsigned d) {
    y -= m <= 2;
    const long long era = (y >= 0 ? y : y - 399) / 400;
    const auto yoe = static_cast<unsigned>(y - era * 400);
    const unsigned doy = (153 * (m + (m > 2 ? -3 : 9)) + 2) / 5 + d - 1;
    const unsigned doe = yoe * 365 + yoe / 4 - yoe / 100 + doy;
    return era * 146097 + static_cast<long long>(doe) - 719468;
}

} // namespace detail

/// Parses "YYYY-MM-DD[THH:MM[:SS[.fff]]][Z|+HH:MM|-HH:MM]" (a space may
/// replace the T) into seconds since the Unix epoch.
inline std::optional<double> parse_iso8601(std::string_view s) {
    s = io::trim(s);
    auto digits = [&](std::size_t pos, std::size_t n) -> std::optional<int> {
        if (pos + n > s.size()) return std::nullopt;
        int v = 0;
        for (std::size_t i = 0; i < n; ++i) {
            const char c = s[pos + i];
            if (c < '0' || c > '9') return std::nullopt;
            v = v * 10 + (c - '0');
        }
        return v;
    };
    const auto year = digits(0, 4);
    if (!year || s.size() < 10 || s[4] != '-' || s[7] != '-') return std::nullopt;
    const auto month = digits(5, 2);
    const auto day = digits(8, 2);
    if (!month || !day || *month < 1 || *month > 12 || *day < 1 || *day > 31) return std::nullopt;
    double secs = static_cast<double>(detail::days_from_civil(*year, static_cast<unsigned>(*month),
                                                              static_cast<unsigned>(*day))) *
                  86400.0;
    std::size_t pos = 10;
    if (pos == s.size()) return secs;
    if (s[pos] != 'T' && s[pos] != ' ') return std::nullopt;
    ++pos;
    const auto hh = digits(pos, 2);
    if (!hh || pos + 5 > s.size() || s[pos + 2] != ':') return std::nullopt;
    const auto mm = digits(pos + 3, 2);
    if (!mm || *hh > 23 || *mm > 59) return std::nullopt;
    secs += *hh * 3600.0 + *mm * 60.0;
    pos += 5;
    if (pos < s.size() && s[pos] == ':') {
        const auto ss = digits(pos + 1, 2);
        if (!ss || *ss > 60) return std::nullopt;
        secs += *ss;
        pos += 3;
        if (pos < s.size() && (s[pos] == '.' || s[pos] == ',')) {
            std::size_t end = pos + 1;
            double scale = 0.1;
            double frac = 0.0;
            while (end < s.size() && s[end] >= '0' && s[end] <= '9') {
                frac += (s[end] - '0') * scale;
                scale /= 10.0;
                ++end;
            }
            if (end == pos + 1) return std::nullopt;
            secs += frac;
            pos = end;
        }
    }
    if (pos == s.size()) return secs;
    if (s[pos] == 'Z' && pos + 1 == s.size()) return secs;
    if (s[pos] == '+' || s[pos] == '-') {
        const double sign = s[pos] == '+' ? 1.0 : -1.0;
        const auto oh = digits(pos + 1, 2);
        if (!oh) return std::nullopt;
        std::size_t p = pos + 3;
        int om = 0;
        if (p < s.size() && s[p] == ':') ++p;
        if (p < s.size()) {
            const auto m2 = digits(p, 2);
            if (!m2 || p + 2 != s.size()) return std::nullopt;
            om = *m2;
        }
        return secs - sign * (*oh * 3600.0 + om * 60.0);
    }
    return std::nullopt;
}

namespace detail {

struct RawRow {
    double time;
    double bpm;
    ActivityLabel label;
};

inline std::size_t column_index(const std::vector<std::string>& header, const std::string& name) {
    for (std::size_t i = 0; i < header.size(); ++i)
        if (io::trim(header[i]) == name) return i;
    fail(ErrorCode::MissingColumn, name);
}

/// Sorts one series' rows, collapses equal timestamps (mean bpm, labels must
/// agree) and rebases time to the first sample.
inline SubjectSeries finish_series(std::string subject, std::string device, std::vector<RawRow> rows) {
    std::stable_sort(rows.begin(), rows.end(),
                     [](const RawRow& a, const RawRow& b) { return a.time < b.time; });
    SubjectSeries series{std::move(subject), std::move(device), {}};
    const double t0 = rows.front().time;
    for (std::size_t i = 0; i < rows.size();) {
        std::size_t j = i;
        double sum = 0.0;
        while (j < rows.size() && rows[j].time == rows[i].time) {
            if (rows[j].label != rows[i].label)
                fail(ErrorCode::NonMonotonicTimestamps,
                     series.subject_id + ": conflicting labels at t=" + io::fmt(rows[i].time));
            sum += rows[j].bpm;
            ++j;
        }
        series.samples.push_back({rows[i].time - t0, sum / static_cast<double>(j - i), rows[i].label});
        i = j;
    }
    return series;
}

} // namespace detail

/// Parses one CSV document. Series are keyed by (subject, device) and come
/// back sorted by that key.
inline std::vector<SubjectSeries> parse_corpus_text(std::string_view text, const CorpusSchema& schema = {}) {
    const auto lines = io::split_lines(text);
    if (lines.empty()) fail(ErrorCode::MissingColumn, "empty input (no header)");
    const auto header = io::split_csv_line(lines.front());
    const auto c_subject = detail::column_index(header, schema.subject);
    const auto c_time = detail::column_index(header, schema.timestamp);
    const auto c_bpm = detail::column_index(header, schema.bpm);
    const auto c_label = detail::column_index(header, schema.label);
    const std::optional<std::size_t> c_device =
        schema.device.empty() ? std::nullopt : std::optional(detail::column_index(header, schema.device));
    const std::string want_device = detail::device_key(schema.device_filter);

    struct Pending {
        std::vector<std::string> fields;
        std::size_t line_no;
    };
    std::vector<Pending> rows;
    for (std::size_t n = 1; n < lines.size(); ++n) {
        if (io::trim(lines[n]).empty()) continue;
        auto fields = io::split_csv_line(lines[n]);
        if (fields.size() < header.size())
            fail(ErrorCode::MalformedInput, "line " + std::to_string(n + 1) + ": too few fields");
        if (c_device && !want_device.empty() && detail::device_key(fields[*c_device]) != want_device) continue;
        rows.push_back({std::move(fields), n + 1});
    }

    // Timestamp format is decided once per document: all numeric (epoch
    // seconds) or all ISO-8601.
    bool numeric = true;
    for (const auto& r : rows)
        if (!io::parse_double(r.fields[c_time])) {
            numeric = false;
            break;
        }

    std::map<std::pair<std::string, std::string>, std::vector<detail::RawRow>> grouped;
    for (const auto& r : rows) {
        const auto& f = r.fields;
        const std::string where = "line " + std::to_string(r.line_no);
        const auto bpm_text = io::trim(f[c_bpm]);
        if (bpm_text.empty()) continue; // missing measurement
        const auto bpm = io::parse_double(bpm_text);
        if (!bpm) fail(ErrorCode::MalformedInput, where + ": bpm '" + std::string(bpm_text) + "'");
        if (!(*bpm > kMinBpm && *bpm < kMaxBpm)) fail(ErrorCode::OutOfRangeBpm, where + ": " + io::fmt(*bpm));
        const auto t = numeric ? io::parse_double(f[c_time]) : parse_iso8601(f[c_time]);
        if (!t || !std::isfinite(*t))
            fail(ErrorCode::MalformedInput, where + ": timestamp '" + f[c_time] + "' (mixed formats?)");
        const auto label = parse_label(f[c_label]);
        std::string device = c_device ? std::string(io::trim(f[*c_device])) : std::string("unknown");
        grouped[{std::string(io::trim(f[c_subject])), std::move(device)}].push_back({*t, *bpm, label});
    }

    std::vector<SubjectSeries> out;
    for (auto& [key, raw] : grouped) out.push_back(detail::finish_series(key.first, key.second, std::move(raw)));
    return out;
}

/// Reads a single CSV file or every *.csv file of a directory (in file name
/// order). Series split across files are merged.
inline std::vector<SubjectSeries> parse_corpus(const std::filesystem::path& path, const CorpusSchema& schema = {}) {
    namespace fs = std::filesystem;
    std::vector<fs::path> files;
    if (fs::is_directory(path)) {
        for (const auto& entry : fs::directory_iterator(path))
            if (entry.is_regular_file() && io::lower(entry.path().extension().string()) == ".csv")
                files.push_back(entry.path());
        std::sort(files.begin(), files.end());
    } else if (fs::exists(path)) {
        files.push_back(path);
    } else {
        fail(ErrorCode::IoError, "no such corpus: " + path.string());
    }

    std::map<std::pair<std::string, std::string>, std::vector<SubjectSeries>> parts;
    for (const auto& f : files)
        for (auto& s : parse_corpus_text(io::read_file(f), schema)) {
            auto key = std::pair(s.subject_id, s.device_id);
            parts[key].push_back(std::move(s));
        }
    std::vector<SubjectSeries> out;
    for (auto& [key, list] : parts) {
        if (list.size() == 1) {
            out.push_back(std::move(list.front()));
            continue;
        }
        // Each file is rebased to its own origin, so parts cannot be aligned.
        fail(ErrorCode::MalformedInput, "series " + key.first + "/" + key.second + " spans several files");
    }
    return out;
}

/// Writes series in the default schema. Numbers use shortest round-trip text,
/// so parse_corpus_text(write_corpus_csv(x)) == x for rebased series.
inline std::string write_corpus_csv(const std::vector<SubjectSeries>& corpus) {
    std::string out = "subject,device,timestamp,bpm,label\n";
    for (const auto& s : corpus)
        for (const auto& smp : s.samples) {
            out += s.subject_id;
            out += ',';
            out += s.device_id;
            out += ',';
            out += io::fmt(smp.timestamp);
            out += ',';
            out += io::fmt(smp.bpm);
            out += ',';
            out += label_name(smp.label);
            out += '\n';
        }
    return out;
}

// ---------------------------------------------------------------------------
// Resampling

struct Gap {
    std::string subject_id;
    double start_s; // last original sample before the gap (exclusive)
    double end_s;   // first original sample after the gap (inclusive)

    friend bool operator==(const Gap&, const Gap&) = default;
};

struct ResampledSeries {
    SubjectSeries series;
    std::vector<Gap> gaps;
};

inline constexpr double kDefaultGapFactor = 10.0;

/// Linear interpolation onto a uniform grid from the first to the last
/// timestamp. Labels come from the nearest original sample (ties go to the
/// earlier one). Gaps longer than gap_factor * period are forward-filled and
/// reported instead of interpolated.
inline ResampledSeries resample_uniform(const SubjectSeries& series, double period_s = 1.0,
                                        double gap_factor = kDefaultGapFactor) {
    if (series.samples.empty()) fail(ErrorCode::EmptySeries, series.subject_id);
    if (!(period_s > 0.0) || !std::isfinite(period_s)) fail(ErrorCode::InvalidSpec, "period must be positive");
    const auto& in = series.samples;
    const double t0 = in.front().timestamp;
    const double span = in.back().timestamp - t0;
    const auto n_points = static_cast<std::size_t>(std::floor(span / period_s + 1e-9)) + 1;

    ResampledSeries result{{series.subject_id, series.device_id, {}}, {}};
    result.series.samples.reserve(n_points);
    const double gap_limit = gap_factor * period_s;
    std::size_t seg = 0; // in[seg].timestamp <= t < in[seg+1].timestamp
    for (std::size_t k = 0; k < n_points; ++k) {
        const double t = t0 + static_cast<double>(k) * period_s;
        while (seg + 1 < in.size() && in[seg + 1].timestamp <= t) ++seg;
        const auto& a = in[seg];
        HeartRateSample out{t, a.bpm, a.label};
        if (t != a.timestamp && seg + 1 < in.size()) {
            const auto& b = in[seg + 1];
            const double dt = b.timestamp - a.timestamp;
            if (dt > gap_limit) {
                if (result.gaps.empty() || result.gaps.back().start_s != a.timestamp)
                    result.gaps.push_back({series.subject_id, a.timestamp, b.timestamp});
            } else {
                out.bpm = a.bpm + (b.bpm - a.bpm) * (t - a.timestamp) / dt;
            }
            out.label = (b.timestamp - t < t - a.timestamp) ? b.label : a.label;
        }
        result.series.samples.push_back(out);
    }
    return result;
}

inline std::string gap_report_csv(const std::vector<Gap>& gaps) {
    std::string out = "subject_id,gap_start_s,gap_end_s\n";
    for (const auto& g : gaps) out += g.subject_id + ',' + io::fmt(g.start_s) + ',' + io::fmt(g.end_s) + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic cohorts

using OffsetProfile = std::array<double, kActivityCount>;

struct SyntheticCohortSpec {
    int n_subjects = 30;
    int n_groups = 2;
    std::uint64_t seed = 1;
    double period_s = 1.0;
    OffsetProfile segment_durations_s{240.0, 60.0, 300.0, 120.0, 60.0};
    /// One offset vector per group; empty selects default_group_offsets().
    std::vector<OffsetProfile> group_offset_profiles;
    double lag_tau_s = 20.0;
    double noise_ar_coeff = 0.8;
    double noise_std = 1.5;
    double baseline_mean = 65.0;
    double baseline_std = 8.0;
    /// Each subject's segment durations are scaled by independent factors
    /// drawn from U(1 - jitter, 1 + jitter); 0 keeps the protocol exact.
    double duration_jitter = 0.0;
    /// Std of a per-subject, per-segment deviation added to the group offsets.
    double subject_offset_std = 0.0;
};

/// Offsets that grow with the group index: higher groups respond more
/// strongly to every segment.
inline std::vector<OffsetProfile> default_group_offsets(int n_groups) {
    std::vector<OffsetProfile> out;
    for (int g = 0; g < n_groups; ++g) {
        const double s = g;
        out.push_back({6.0 * s, 4.0 + 4.0 * s, 25.0 + 20.0 * s, 10.0 + 8.0 * s, 3.0 + 3.0 * s});
    }
    return out;
}

struct SyntheticCohort {
    std::vector<SubjectSeries> series;
    std::map<std::string, int> groups; // subject id -> latent group
};

inline void validate(const SyntheticCohortSpec& spec) {
    if (spec.n_subjects <= 0) fail(ErrorCode::InvalidSpec, "n_subjects must be positive");
    if (spec.n_groups <= 0) fail(ErrorCode::InvalidSpec, "n_groups must be positive");
    if (spec.n_groups > spec.n_subjects) fail(ErrorCode::InvalidSpec, "n_groups exceeds n_subjects");
    if (!(spec.period_s > 0.0)) fail(ErrorCode::InvalidSpec, "period must be positive");
    for (double d : spec.segment_durations_s)
        if (!(d > 0.0)) fail(ErrorCode::InvalidSpec, "segment durations must be positive");
    if (!spec.group_offset_profiles.empty() &&
        spec.group_offset_profiles.size() != static_cast<std::size_t>(spec.n_groups))
        fail(ErrorCode::InvalidSpec, "need one offset profile per group");
    if (!(spec.lag_tau_s >= 0.0)) fail(ErrorCode::InvalidSpec, "lag_tau_s must be non-negative");
    if (!(spec.noise_ar_coeff >= 0.0 && spec.noise_ar_coeff < 1.0))
        fail(ErrorCode::InvalidSpec, "noise_ar_coeff must lie in [0, 1)");
    if (!(spec.noise_std >= 0.0)) fail(ErrorCode::InvalidSpec, "noise_std must be non-negative");
    if (!(spec.duration_jitter >= 0.0 && spec.duration_jitter < 1.0))
        fail(ErrorCode::InvalidSpec, "duration_jitter must lie in [0, 1)");
    if (!(spec.subject_offset_std >= 0.0)) fail(ErrorCode::InvalidSpec, "subject_offset_std must be non-negative");
}

inline std::string synthetic_subject_id(int i) {
    std::string digits = std::to_string(i + 1);
    return "S" + std::string(digits.size() < 3 ? 3 - digits.size() : 0, '0') + digits;
}

/// Builds a cohort following the five-segment protocol. Each subject has a
/// resting baseline ~ N(mean, std) clamped to [45, 100]; the group's offset
/// profile sets the per-segment target; the level approaches each new target
/// with an exponential lag; AR(1) noise with stationary std noise_std is added.
/// Output depends only on the spec.
inline SyntheticCohort generate_synthetic(const SyntheticCohortSpec& spec) {
    validate(spec);
    const auto profiles =
        spec.group_offset_profiles.empty() ? default_group_offsets(spec.n_groups) : spec.group_offset_profiles;

    // Balanced group sizes, shuffled.
    std::vector<int> group_of(static_cast<std::size_t>(spec.n_subjects));
    for (int i = 0; i < spec.n_subjects; ++i) group_of[static_cast<std::size_t>(i)] = i % spec.n_groups;
    Rng assign_rng(derive_seed(spec.seed, {0x67726f7570ULL}));
    assign_rng.shuffle(std::span<int>(group_of));

    const double decay = spec.lag_tau_s > 0.0 ? std::exp(-spec.period_s / spec.lag_tau_s) : 0.0;
    const double innovation_std = spec.noise_std * std::sqrt(1.0 - spec.noise_ar_coeff * spec.noise_ar_coeff);

    SyntheticCohort cohort;
    for (int i = 0; i < spec.n_subjects; ++i) {
        const int group = group_of[static_cast<std::size_t>(i)];
        Rng rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i)}));
        const double baseline = std::clamp(rng.normal(spec.baseline_mean, spec.baseline_std), 45.0, 100.0);
        OffsetProfile offsets = profiles[static_cast<std::size_t>(group)];
        if (spec.subject_offset_std > 0.0) {
            Rng offset_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i), 0x6f6666ULL}));
            for (auto& o : offsets) o += offset_rng.normal(0.0, spec.subject_offset_std);
        }
        OffsetProfile durations = spec.segment_durations_s;
        if (spec.duration_jitter > 0.0) {
            Rng jitter_rng(derive_seed(spec.seed, {static_cast<std::uint64_t>(i), 0x6a6974ULL}));
            for (auto& d : durations) d *= jitter_rng.uniform(1.0 - spec.duration_jitter, 1.0 + spec.duration_jitter);
        }
        double total = 0.0;
        for (double d : durations) total += d;
        const auto n_samples = static_cast<std::size_t>(std::floor(total / spec.period_s + 1e-9));

        SubjectSeries s{synthetic_subject_id(i), "AppleWatch", {}};
        s.samples.reserve(n_samples);
        double level = baseline + offsets[0];
        double noise = spec.noise_std * rng.normal();
        for (std::size_t k = 0; k < n_samples; ++k) {
            const double t = static_cast<double>(k) * spec.period_s;
            int segment = 0;
            double boundary = durations[0];
            while (segment + 1 < kActivityCount && t >= boundary) {
                ++segment;
                boundary += durations[static_cast<std::size_t>(segment)];
            }
            const double target = baseline + offsets[static_cast<std::size_t>(segment)];
            if (k > 0) {
                level = target + (level - target) * decay;
                noise = spec.noise_ar_coeff * noise + innovation_std * rng.normal();
            }
            const double bpm = std::clamp(level + noise, kMinBpm + 1.0, kMaxBpm - 1.0);
            s.samples.push_back({t, bpm, label_from_index(segment)});
        }
        cohort.groups[s.subject_id] = group;
        cohort.series.push_back(std::move(s));
    }
    return cohort;
}

} // namespace hrgroup

#endif
