#ifndef HRGROUP_PREPROCESS_HPP
#define HRGROUP_PREPROCESS_HPP

#include "hrgroup/error.hpp"
#include "hrgroup/ingest.hpp"

#include <array>
#include <cmath>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrgroup {

struct WindowConfig {
    int window_size = 80; // samples
    int stride = 10;      // samples

    void validate() const {
        if (window_size < 2) fail(ErrorCode::InvalidSpec, "window size must be >= 2");
        if (stride < 1) fail(ErrorCode::InvalidSpec, "stride must be >= 1");
    }

    friend bool operator==(const WindowConfig&, const WindowConfig&) = default;
};

struct Window {
    std::string subject_id;
    int start_index = 0;
    std::vector<double> values;
    ActivityLabel label = ActivityLabel::Rest;
};

enum class StandardizationMode { None, DataStd, FeatureStd };

inline std::string_view standardization_name(StandardizationMode m) {
    switch (m) {
    case StandardizationMode::None: return "None";
    case StandardizationMode::DataStd: return "DataStd";
    case StandardizationMode::FeatureStd: return "FeatureStd";
    }
    return "?";
}

inline constexpr double kStdEpsilon = 1e-12;

/// Number of windows segment() produces for a series of n samples.
inline std::size_t window_count(std::size_t n, const WindowConfig& cfg) {
    const auto w = static_cast<std::size_t>(cfg.window_size);
    if (n < w) return 0;
    return (n - w) / static_cast<std::size_t>(cfg.stride) + 1;
}

/// Majority label over the samples; a tie goes to the tied label that occurs
/// last in the window (the last sample's label whenever it is among the tied).
inline ActivityLabel majority_label(std::span<const ActivityLabel> labels) {
    std::array<int, kActivityCount> count{};
    std::array<std::size_t, kActivityCount> last{};
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const auto a = static_cast<std::size_t>(label_index(labels[i]));
        ++count[a];
        last[a] = i;
    }
    std::size_t best = 0;
    for (std::size_t a = 1; a < kActivityCount; ++a)
        if (count[a] > count[best] || (count[a] == count[best] && count[a] > 0 && last[a] > last[best]))
            best = a;
    return static_cast<ActivityLabel>(best);
}

/// Windows start at 0, S, 2S, ...; a series shorter than W yields none.
inline std::vector<Window> segment(const SubjectSeries& series, const WindowConfig& cfg) {
    cfg.validate();
    const auto n_windows = window_count(series.size(), cfg);
    const auto w = static_cast<std::size_t>(cfg.window_size);
    std::vector<Window> out;
    out.reserve(n_windows);
    std::vector<ActivityLabel> labels(w);
    for (std::size_t k = 0; k < n_windows; ++k) {
        const std::size_t start = k * static_cast<std::size_t>(cfg.stride);
        Window win{series.subject_id, static_cast<int>(start), std::vector<double>(w), ActivityLabel::Rest};
        for (std::size_t i = 0; i < w; ++i) {
            win.values[i] = series.samples[start + i].bpm;
            labels[i] = series.samples[start + i].label;
        }
        win.label = majority_label(labels);
        out.push_back(std::move(win));
    }
    return out;
}

/// Mean and sample standard deviation of one subject's whole series.
struct SeriesStats {
    double mean = 0.0;
    double std = 1.0;

    double apply(double v) const { return (v - mean) / std; }
};

inline SeriesStats series_stats(const SubjectSeries& series) {
    const auto n = series.samples.size();
    if (n < 2) fail(ErrorCode::DegenerateSeries, series.subject_id + ": fewer than two samples");
    double mean = 0.0;
    for (const auto& s : series.samples) mean += s.bpm;
    mean /= static_cast<double>(n);
    double ss = 0.0;
    for (const auto& s : series.samples) ss += (s.bpm - mean) * (s.bpm - mean);
    const double std = std::sqrt(ss / static_cast<double>(n - 1));
    if (!(std >= kStdEpsilon)) fail(ErrorCode::DegenerateSeries, series.subject_id + ": zero variance");
    return {mean, std};
}

/// Per-subject z-score of the full series (data standardization).
inline SubjectSeries standardize_series(const SubjectSeries& series) {
    const auto stats = series_stats(series);
    SubjectSeries out = series;
    for (auto& s : out.samples) s.bpm = stats.apply(s.bpm);
    return out;
}

inline std::vector<double> standardize_values(std::span<const double> values, const SeriesStats& stats) {
    std::vector<double> out(values.size());
    for (std::size_t i = 0; i < values.size(); ++i) out[i] = stats.apply(values[i]);
    return out;
}

/// Per-dimension z-scoring learned from training vectors only.
struct Scaler {
    std::vector<double> mean;
    std::vector<double> std;

    std::size_t dim() const { return mean.size(); }
};

inline Scaler fit_scaler(std::span<const std::vector<double>> train, double epsilon = kStdEpsilon) {
    if (train.empty()) fail(ErrorCode::EmptyDataset, "cannot fit a scaler on no vectors");
    const auto d = train.front().size();
    Scaler sc{std::vector<double>(d, 0.0), std::vector<double>(d, 1.0)};
    for (const auto& v : train) {
        if (v.size() != d) fail(ErrorCode::DimensionMismatch, "ragged training vectors");
        for (std::size_t j = 0; j < d; ++j) sc.mean[j] += v[j];
    }
    const auto n = static_cast<double>(train.size());
    for (auto& m : sc.mean) m /= n;
    if (train.size() > 1) {
        std::vector<double> ss(d, 0.0);
        for (const auto& v : train)
            for (std::size_t j = 0; j < d; ++j) ss[j] += (v[j] - sc.mean[j]) * (v[j] - sc.mean[j]);
        for (std::size_t j = 0; j < d; ++j) {
            const double s = std::sqrt(ss[j] / (n - 1.0));
            sc.std[j] = s < epsilon ? 1.0 : s;
        }
    }
    return sc;
}

inline std::vector<double> apply_scaler(const Scaler& scaler, std::span<const double> v) {
    if (v.size() != scaler.dim())
        fail(ErrorCode::DimensionMismatch,
             "scaler dim " + std::to_string(scaler.dim()) + " vs vector dim " + std::to_string(v.size()));
    std::vector<double> out(v.size());
    for (std::size_t j = 0; j < v.size(); ++j) out[j] = (v[j] - scaler.mean[j]) / scaler.std[j];
    return out;
}

} // namespace hrgroup

#endif
