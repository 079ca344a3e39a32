#ifndef HRGROUP_FEATURES_HPP
#define HRGROUP_FEATURES_HPP

// Handcrafted window features. Every family returns values in a fixed,
// documented order; names carry the "0_" prefix used in importance reports.

#include "hrgroup/error.hpp"
#include "hrgroup/io.hpp"
#include "hrgroup/preprocess.hpp"

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <memory>
#include <numbers>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrgroup {

enum class FeatureSetKind { Base, BaseMfcc, Statistical, Temporal, StatTemporal };

inline std::string_view feature_set_name(FeatureSetKind k) {
    switch (k) {
    case FeatureSetKind::Base: return "Base";
    case FeatureSetKind::BaseMfcc: return "BaseMfcc";
    case FeatureSetKind::Statistical: return "Statistical";
    case FeatureSetKind::Temporal: return "Temporal";
    case FeatureSetKind::StatTemporal: return "StatTemporal";
    }
    return "?";
}

struct MfccConfig {
    int n_mel_bands = 10;
    int n_coefficients = 5;
    double sample_rate_hz = 1.0;

    void validate() const {
        if (n_mel_bands < 1 || n_coefficients < 1 || n_coefficients > n_mel_bands || !(sample_rate_hz > 0.0))
            fail(ErrorCode::InvalidSpec, "invalid MFCC configuration");
    }
};

using FeatureNames = std::shared_ptr<const std::vector<std::string>>;

struct FeatureVector {
    FeatureNames names;
    std::vector<double> values;
    std::string subject_id;
    int start_index = 0;

    std::size_t size() const { return values.size(); }
};

inline constexpr std::string_view kFeaturePrefix = "0_";

namespace features_detail {

inline void require_length(std::span<const double> x, std::size_t min_len, std::string_view what) {
    if (x.size() < min_len)
        fail(ErrorCode::WindowTooShort, std::string(what) + " needs at least " + std::to_string(min_len) +
                                            " samples, got " + std::to_string(x.size()));
}

inline double mean(std::span<const double> x) {
    double s = 0.0;
    for (double v : x) s += v;
    return s / static_cast<double>(x.size());
}

inline double sample_variance(std::span<const double> x, double mu) {
    double ss = 0.0;
    for (double v : x) ss += (v - mu) * (v - mu);
    return ss / static_cast<double>(x.size() - 1);
}

/// Linear-interpolated quantile of sorted data.
inline double quantile_sorted(std::span<const double> sorted, double q) {
    const double pos = q * static_cast<double>(sorted.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(pos));
    const auto hi = std::min(lo + 1, sorted.size() - 1);
    return sorted[lo] + (pos - static_cast<double>(lo)) * (sorted[hi] - sorted[lo]);
}

inline FeatureNames make_names(std::initializer_list<std::string_view> raw) {
    auto names = std::make_shared<std::vector<std::string>>();
    for (auto r : raw) names->push_back(std::string(kFeaturePrefix) + std::string(r));
    return names;
}

inline const FeatureNames& base_names() {
    static const FeatureNames names = make_names(
        {"Max", "Min", "Mean", "Standard deviation", "Mean diff", "Mean second diff"});
    return names;
}

inline const FeatureNames& statistical_names() {
    static const FeatureNames names =
        make_names({"Mean", "Standard deviation", "Variance", "Min", "Max", "Median", "Interquartile range",
                    "Skewness", "Kurtosis", "Root mean square", "Mean absolute deviation", "Entropy"});
    return names;
}

inline const FeatureNames& temporal_names() {
    static const FeatureNames names =
        make_names({"Autocorrelation", "Zero crossings", "Mean absolute diff", "Mean diff",
                    "Sum absolute diff", "Slope", "Peak to peak distance", "Local maxima", "Centroid",
                    "Area under the curve"});
    return names;
}

inline FeatureNames mfcc_names(int n) {
    auto names = std::make_shared<std::vector<std::string>>();
    for (int i = 0; i < n; ++i) names->push_back(std::string(kFeaturePrefix) + "MFCC_" + std::to_string(i));
    return names;
}

/// In-place iterative radix-2 FFT; size must be a power of two.
inline void fft(std::vector<std::complex<double>>& a) {
    const std::size_t n = a.size();
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        const double ang = -2.0 * std::numbers::pi / static_cast<double>(len);
        for (std::size_t i = 0; i < n; i += len)
            for (std::size_t k = 0; k < len / 2; ++k) {
                const std::complex<double> w(std::cos(ang * static_cast<double>(k)),
                                             std::sin(ang * static_cast<double>(k)));
                const auto u = a[i + k];
                const auto v = a[i + k + len / 2] * w;
                a[i + k] = u + v;
                a[i + k + len / 2] = u - v;
            }
    }
}

} // namespace features_detail

inline const std::vector<std::string>& base_feature_names() { return *features_detail::base_names(); }
inline const std::vector<std::string>& statistical_feature_names() { return *features_detail::statistical_names(); }
inline const std::vector<std::string>& temporal_feature_names() { return *features_detail::temporal_names(); }

// ---------------------------------------------------------------------------
// Base

/// [max, min, mean, sample std, mean first difference, mean second difference]
inline std::vector<double> base_values(std::span<const double> x) {
    using namespace features_detail;
    require_length(x, 3, "base features");
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    const double mu = mean(x);
    const std::size_t n = x.size();
    // Both difference means telescope.
    const double d1 = (x[n - 1] - x[0]) / static_cast<double>(n - 1);
    const double d2 = ((x[n - 1] - x[n - 2]) - (x[1] - x[0])) / static_cast<double>(n - 2);
    return {*mx, *mn, mu, std::sqrt(sample_variance(x, mu)), d1, d2};
}

// ---------------------------------------------------------------------------
// MFCC

inline double hz_to_mel(double hz) { return 2595.0 * std::log10(1.0 + hz / 700.0); }
inline double mel_to_hz(double mel) { return 700.0 * (std::pow(10.0, mel / 2595.0) - 1.0); }

/// The n_mel_bands + 2 filter edge frequencies, equally spaced in mel from 0
/// to the Nyquist frequency. Band j (0-based) peaks at edges[j + 1].
inline std::vector<double> mel_edges(const MfccConfig& cfg) {
    const double top = hz_to_mel(cfg.sample_rate_hz / 2.0);
    std::vector<double> edges(static_cast<std::size_t>(cfg.n_mel_bands) + 2);
    for (std::size_t i = 0; i < edges.size(); ++i)
        edges[i] = mel_to_hz(top * static_cast<double>(i) / static_cast<double>(cfg.n_mel_bands + 1));
    return edges;
}

inline double mel_weight(const std::vector<double>& edges, std::size_t band, double f) {
    const double lo = edges[band], mid = edges[band + 1], hi = edges[band + 2];
    if (f <= lo || f >= hi) return 0.0;
    return f <= mid ? (f - lo) / (mid - lo) : (hi - f) / (hi - mid);
}

inline constexpr double kLogEnergyFloor = 1e-10;

/// Mel band power of the whole window taken as one frame: mean removed, Hann
/// tapered, zero padded to the next power of two.
inline std::vector<double> mel_band_energies(std::span<const double> x, const MfccConfig& cfg = {}) {
    using namespace features_detail;
    require_length(x, 8, "MFCC");
    cfg.validate();
    const std::size_t w = x.size();
    std::size_t n = 1;
    while (n < w) n <<= 1;
    const double mu = mean(x);
    std::vector<std::complex<double>> buf(n, 0.0);
    for (std::size_t i = 0; i < w; ++i) {
        const double hann = 0.5 - 0.5 * std::cos(2.0 * std::numbers::pi * static_cast<double>(i) /
                                                 static_cast<double>(w - 1));
        buf[i] = (x[i] - mu) * hann;
    }
    fft(buf);
    const auto edges = mel_edges(cfg);
    std::vector<double> energy(static_cast<std::size_t>(cfg.n_mel_bands), 0.0);
    for (std::size_t k = 0; k <= n / 2; ++k) {
        const double f = static_cast<double>(k) * cfg.sample_rate_hz / static_cast<double>(n);
        const double power = std::norm(buf[k]);
        for (std::size_t b = 0; b < energy.size(); ++b) energy[b] += mel_weight(edges, b, f) * power;
    }
    return energy;
}

/// Orthonormal DCT-II of the floored log band energies, first n_coefficients.
inline std::vector<double> mfcc_values(std::span<const double> x, const MfccConfig& cfg = {}) {
    const auto energy = mel_band_energies(x, cfg);
    const auto m = energy.size();
    std::vector<double> logs(m);
    for (std::size_t i = 0; i < m; ++i) logs[i] = std::log(std::max(energy[i], kLogEnergyFloor));
    std::vector<double> out(static_cast<std::size_t>(cfg.n_coefficients));
    for (std::size_t k = 0; k < out.size(); ++k) {
        double s = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            s += logs[i] * std::cos(std::numbers::pi * static_cast<double>(k) * (static_cast<double>(i) + 0.5) /
                                    static_cast<double>(m));
        out[k] = s * std::sqrt((k == 0 ? 1.0 : 2.0) / static_cast<double>(m));
    }
    return out;
}

// ---------------------------------------------------------------------------
// Statistical

/// Fixed order: mean, sample std, sample variance, min, max, median, IQR,
/// skewness (biased), excess kurtosis (biased), RMS, mean absolute deviation,
/// 10-bin histogram entropy. Zero-variance windows get skewness = kurtosis = 0.
inline std::vector<double> statistical_values(std::span<const double> x) {
    using namespace features_detail;
    require_length(x, 3, "statistical features");
    const auto n = static_cast<double>(x.size());
    const double mu = mean(x);
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const double var = sample_variance(x, mu);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0, sq = 0.0, mad = 0.0;
    for (double v : x) {
        const double d = v - mu;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
        sq += v * v;
        mad += std::abs(d);
    }
    m2 /= n;
    m3 /= n;
    m4 /= n;
    const bool degenerate = m2 <= 1e-24 * std::max(1.0, mu * mu);
    const double skew = degenerate ? 0.0 : m3 / std::pow(m2, 1.5);
    const double kurt = degenerate ? 0.0 : m4 / (m2 * m2) - 3.0;

    const double lo = sorted.front(), hi = sorted.back();
    double entropy = 0.0;
    if (hi > lo) {
        constexpr int kBins = 10;
        int counts[kBins] = {};
        const double width = (hi - lo) / kBins;
        for (double v : x) ++counts[std::min(kBins - 1, static_cast<int>((v - lo) / width))];
        for (int c : counts)
            if (c > 0) {
                const double p = c / n;
                entropy -= p * std::log(p);
            }
    }
    return {mu,
            std::sqrt(var),
            var,
            lo,
            hi,
            quantile_sorted(sorted, 0.5),
            quantile_sorted(sorted, 0.75) - quantile_sorted(sorted, 0.25),
            skew,
            kurt,
            std::sqrt(sq / n),
            mad / n,
            entropy};
}

// ---------------------------------------------------------------------------
// Temporal

/// Fixed order: lag-1 autocorrelation, zero crossings of the mean-removed
/// signal, mean |diff|, mean diff, sum |diff|, least-squares slope,
/// peak-to-peak, strict local maxima, temporal centroid, trapezoidal area.
inline std::vector<double> temporal_values(std::span<const double> x) {
    using namespace features_detail;
    require_length(x, 3, "temporal features");
    const std::size_t n = x.size();
    const double mu = mean(x);

    // Pearson correlation of x[0..n-2] with x[1..n-1].
    const auto head = x.first(n - 1);
    const auto tail = x.last(n - 1);
    const double mh = mean(head), mt = mean(tail);
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        sxy += (head[i] - mh) * (tail[i] - mt);
        sxx += (head[i] - mh) * (head[i] - mh);
        syy += (tail[i] - mt) * (tail[i] - mt);
    }
    const double floor = 1e-24 * std::max(1.0, mu * mu) * static_cast<double>(n);
    const double autocorr = (sxx <= floor || syy <= floor) ? 0.0 : sxy / std::sqrt(sxx * syy);

    int crossings = 0, maxima = 0;
    double abs_diff = 0.0, area = 0.0, weighted = 0.0, mass = 0.0;
    for (std::size_t i = 0; i + 1 < n; ++i) {
        if ((x[i] - mu) * (x[i + 1] - mu) < 0.0) ++crossings;
        abs_diff += std::abs(x[i + 1] - x[i]);
        area += 0.5 * (x[i] + x[i + 1]);
        if (i > 0 && x[i - 1] < x[i] && x[i] > x[i + 1]) ++maxima;
    }
    for (std::size_t i = 0; i < n; ++i) {
        weighted += static_cast<double>(i) * std::abs(x[i]);
        mass += std::abs(x[i]);
    }
    const double idx_mean = static_cast<double>(n - 1) / 2.0;
    double sxi = 0.0, sii = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double di = static_cast<double>(i) - idx_mean;
        sxi += di * (x[i] - mu);
        sii += di * di;
    }
    const auto [mn, mx] = std::minmax_element(x.begin(), x.end());
    const auto steps = static_cast<double>(n - 1);
    return {autocorr,
            static_cast<double>(crossings),
            abs_diff / steps,
            (x[n - 1] - x[0]) / steps,
            abs_diff,
            sxi / sii,
            *mx - *mn,
            static_cast<double>(maxima),
            mass > 0.0 ? weighted / mass : 0.0,
            area};
}

// ---------------------------------------------------------------------------
// Feature sets

inline FeatureNames feature_names(FeatureSetKind kind, const MfccConfig& mfcc = {}) {
    using namespace features_detail;
    auto concat = [](const FeatureNames& a, const FeatureNames& b) {
        auto out = std::make_shared<std::vector<std::string>>(*a);
        out->insert(out->end(), b->begin(), b->end());
        return FeatureNames(out);
    };
    switch (kind) {
    case FeatureSetKind::Base: return base_names();
    case FeatureSetKind::BaseMfcc: return concat(base_names(), mfcc_names(mfcc.n_coefficients));
    case FeatureSetKind::Statistical: return statistical_names();
    case FeatureSetKind::Temporal: return temporal_names();
    case FeatureSetKind::StatTemporal: {
        static const FeatureNames names = concat(statistical_names(), temporal_names());
        return names;
    }
    }
    fail(ErrorCode::InvalidSpec, "unknown feature set");
}

inline std::size_t feature_dim(FeatureSetKind kind, const MfccConfig& mfcc = {}) {
    switch (kind) {
    case FeatureSetKind::Base: return 6;
    case FeatureSetKind::BaseMfcc: return 6 + static_cast<std::size_t>(mfcc.n_coefficients);
    case FeatureSetKind::Statistical: return 12;
    case FeatureSetKind::Temporal: return 10;
    case FeatureSetKind::StatTemporal: return 22;
    }
    return 0;
}

inline std::vector<double> feature_values(std::span<const double> x, FeatureSetKind kind, const MfccConfig& mfcc = {}) {
    auto append = [](std::vector<double> a, const std::vector<double>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    switch (kind) {
    case FeatureSetKind::Base: return base_values(x);
    case FeatureSetKind::BaseMfcc: return append(base_values(x), mfcc_values(x, mfcc));
    case FeatureSetKind::Statistical: return statistical_values(x);
    case FeatureSetKind::Temporal: return temporal_values(x);
    case FeatureSetKind::StatTemporal: return append(statistical_values(x), temporal_values(x));
    }
    fail(ErrorCode::InvalidSpec, "unknown feature set");
}

inline FeatureVector base_features(const Window& w) {
    return {features_detail::base_names(), base_values(w.values), w.subject_id, w.start_index};
}

inline FeatureVector mfcc_features(const Window& w, const MfccConfig& cfg = {}) {
    return {features_detail::mfcc_names(cfg.n_coefficients), mfcc_values(w.values, cfg), w.subject_id,
            w.start_index};
}

inline FeatureVector statistical_features(const Window& w) {
    return {features_detail::statistical_names(), statistical_values(w.values), w.subject_id, w.start_index};
}

inline FeatureVector temporal_features(const Window& w) {
    return {features_detail::temporal_names(), temporal_values(w.values), w.subject_id, w.start_index};
}

using SubjectStatsTable = std::map<std::string, SeriesStats, std::less<>>;

/// Features for every window, in input order. With on_standardized_input the
/// window is first mapped through its subject's (mean, std) from `stats`,
/// which equals windowing the standardized series.
inline std::vector<FeatureVector> extract(std::span<const Window> windows, FeatureSetKind kind,
                                          bool on_standardized_input, const SubjectStatsTable& stats = {},
                                          const MfccConfig& mfcc = {}) {
    const auto names = feature_names(kind, mfcc);
    std::vector<FeatureVector> out;
    out.reserve(windows.size());
    for (const auto& w : windows) {
        std::vector<double> values;
        if (on_standardized_input) {
            const auto it = stats.find(w.subject_id);
            if (it == stats.end()) fail(ErrorCode::InvalidSpec, "no standardization stats for " + w.subject_id);
            values = feature_values(standardize_values(w.values, it->second), kind, mfcc);
        } else {
            values = feature_values(w.values, kind, mfcc);
        }
        out.push_back({names, std::move(values), w.subject_id, w.start_index});
    }
    return out;
}

/// One row per window: feature columns, then subject_id, start_index, label.
inline std::string feature_matrix_csv(std::span<const FeatureVector> rows, std::span<const Window> windows) {
    if (rows.size() != windows.size()) fail(ErrorCode::DimensionMismatch, "rows and windows differ in count");
    std::string out;
    if (!rows.empty()) {
        for (const auto& name : *rows.front().names) out += name + ',';
    }
    out += "subject_id,start_index,label\n";
    for (std::size_t i = 0; i < rows.size(); ++i) {
        for (double v : rows[i].values) out += io::fmt(v) + ',';
        out += rows[i].subject_id + ',' + std::to_string(rows[i].start_index) + ',' +
               std::string(label_name(windows[i].label)) + '\n';
    }
    return out;
}

} // namespace hrgroup

#endif
