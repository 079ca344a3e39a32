#include "hrgroup/preprocess.hpp"
#include "hrgroup/rng.hpp"

#include <gtest/gtest.h>

#include <cmath>

using namespace hrgroup;

namespace {

SubjectSeries series_of(const std::vector<double>& bpm, const std::vector<ActivityLabel>& labels = {}) {
    SubjectSeries s{"S", "AppleWatch", {}};
    for (std::size_t i = 0; i < bpm.size(); ++i)
        s.samples.push_back({static_cast<double>(i), bpm[i], labels.empty() ? ActivityLabel::Rest : labels[i]});
    return s;
}

} // namespace

TEST(Segment, CountExamples) {
    EXPECT_EQ(segment(series_of(std::vector<double>(780, 70.0)), {50, 10}).size(), 74u);
    EXPECT_EQ(segment(series_of(std::vector<double>(49, 70.0)), {50, 10}).size(), 0u);
    EXPECT_EQ(segment(series_of(std::vector<double>(780, 70.0)), {120, 120}).size(), 6u);
}

TEST(Segment, MajorityLabelWithLastSampleTieBreak) {
    std::vector<ActivityLabel> labels(30, ActivityLabel::Rest);
    labels.resize(50, ActivityLabel::Activity);
    const auto w = segment(series_of(std::vector<double>(50, 70.0), labels), {50, 50});
    ASSERT_EQ(w.size(), 1u);
    EXPECT_EQ(w[0].label, ActivityLabel::Rest);

    std::vector<ActivityLabel> tie(25, ActivityLabel::Rest);
    tie.resize(50, ActivityLabel::Breathe);
    EXPECT_EQ(segment(series_of(std::vector<double>(50, 70.0), tie), {50, 50})[0].label, ActivityLabel::Breathe);
    std::vector<ActivityLabel> tie2(25, ActivityLabel::Type);
    tie2.resize(50, ActivityLabel::Rest);
    EXPECT_EQ(segment(series_of(std::vector<double>(50, 70.0), tie2), {50, 50})[0].label, ActivityLabel::Rest);
}

TEST(Segment, WindowsCarryValuesAndStarts) {
    std::vector<double> bpm;
    for (int i = 0; i < 10; ++i) bpm.push_back(60.0 + i);
    const auto w = segment(series_of(bpm), {4, 3});
    ASSERT_EQ(w.size(), 3u);
    EXPECT_EQ(w[2].start_index, 6);
    EXPECT_EQ(w[2].values, (std::vector<double>{66, 67, 68, 69}));
}

TEST(Segment, InvalidConfig) {
    EXPECT_THROW(segment(series_of({1, 2, 3}), {1, 1}), Error);
    EXPECT_THROW(segment(series_of({1, 2, 3}), {2, 0}), Error);
}

// Randomized: the closed-form count equals a direct enumeration of start
// positions, and with S <= W every sample before the uncovered tail is covered.
TEST(Segment, CountFormulaAndCoverageProperty) {
    Rng rng(2024);
    for (int trial = 0; trial < 1000; ++trial) {
        const auto n = static_cast<std::size_t>(rng.index(100001));
        const int w = 2 + static_cast<int>(rng.index(300));
        const int s = 1 + static_cast<int>(rng.index(300));
        std::size_t enumerated = 0;
        for (std::size_t start = 0; start + static_cast<std::size_t>(w) <= n; start += static_cast<std::size_t>(s))
            ++enumerated;
        ASSERT_EQ(window_count(n, {w, s}), enumerated) << n << ' ' << w << ' ' << s;
    }
    for (int trial = 0; trial < 200; ++trial) {
        const std::size_t n = 2 + rng.index(400);
        const int w = 2 + static_cast<int>(rng.index(std::min<std::size_t>(n - 1, 60)));
        const int s = 1 + static_cast<int>(rng.index(static_cast<std::uint64_t>(w)));
        const auto windows = segment(series_of(std::vector<double>(n, 70.0)), {w, s});
        ASSERT_EQ(windows.size(), window_count(n, {w, s}));
        std::vector<bool> covered(n, false);
        for (const auto& win : windows)
            for (int i = 0; i < w; ++i) covered[static_cast<std::size_t>(win.start_index + i)] = true;
        const std::size_t last_end = static_cast<std::size_t>(windows.back().start_index + w);
        for (std::size_t i = 0; i < last_end; ++i) EXPECT_TRUE(covered[i]);
        EXPECT_LT(n - last_end, static_cast<std::size_t>(w));
    }
}

TEST(StandardizeSeries, Examples) {
    const auto z = standardize_series(series_of({60, 70, 80}));
    EXPECT_DOUBLE_EQ(z.samples[0].bpm, -1.0);
    EXPECT_DOUBLE_EQ(z.samples[1].bpm, 0.0);
    EXPECT_DOUBLE_EQ(z.samples[2].bpm, 1.0);
    try {
        standardize_series(series_of({70, 70, 70}));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::DegenerateSeries);
    }
}

TEST(StandardizeSeries, ZeroMeanUnitSampleStd) {
    Rng rng(5);
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> bpm(2 + rng.index(1000));
        for (auto& v : bpm) v = rng.uniform(50, 160);
        const auto z = standardize_series(series_of(bpm));
        double m = 0.0;
        for (const auto& s : z.samples) m += s.bpm;
        m /= static_cast<double>(bpm.size());
        double ss = 0.0;
        for (const auto& s : z.samples) ss += (s.bpm - m) * (s.bpm - m);
        EXPECT_LT(std::abs(m), 1e-12);
        EXPECT_NEAR(std::sqrt(ss / static_cast<double>(bpm.size() - 1)), 1.0, 1e-12);
    }
}

// Standardizing then windowing equals windowing then applying the subject's
// global affine map, elementwise.
TEST(StandardizeSeries, CommutesWithSegmentation) {
    Rng rng(9);
    std::vector<double> bpm(300);
    for (auto& v : bpm) v = rng.uniform(55, 140);
    const auto series = series_of(bpm);
    const auto stats = series_stats(series);
    const auto a = segment(standardize_series(series), {50, 7});
    const auto b = segment(series, {50, 7});
    ASSERT_EQ(a.size(), b.size());
    for (std::size_t w = 0; w < a.size(); ++w) {
        const auto mapped = standardize_values(b[w].values, stats);
        for (std::size_t i = 0; i < mapped.size(); ++i) EXPECT_NEAR(a[w].values[i], mapped[i], 1e-12);
    }
}

TEST(Scaler, Examples) {
    const std::vector<std::vector<double>> train{{0.0}, {2.0}};
    const auto sc = fit_scaler(train);
    EXPECT_DOUBLE_EQ(sc.mean[0], 1.0);
    EXPECT_DOUBLE_EQ(sc.std[0], std::sqrt(2.0));
    EXPECT_DOUBLE_EQ(apply_scaler(sc, std::vector<double>{1.0})[0], 0.0);

    const std::vector<std::vector<double>> constant{{5.0, 1.0}, {5.0, 3.0}};
    const auto sc2 = fit_scaler(constant);
    EXPECT_DOUBLE_EQ(sc2.std[0], 1.0);
    EXPECT_DOUBLE_EQ(apply_scaler(sc2, std::vector<double>{7.5, 2.0})[0], 2.5);

    EXPECT_THROW(apply_scaler(sc2, std::vector<double>{1.0}), Error);
}

TEST(Scaler, TrainingSetBecomesStandard) {
    Rng rng(3);
    std::vector<std::vector<double>> train(200, std::vector<double>(6));
    for (auto& v : train)
        for (std::size_t j = 0; j < v.size(); ++j) v[j] = rng.normal(10.0 * static_cast<double>(j), 1.0 + static_cast<double>(j));
    const auto sc = fit_scaler(train);
    for (std::size_t j = 0; j < 6; ++j) {
        double m = 0.0, ss = 0.0;
        std::vector<double> col;
        for (const auto& v : train) col.push_back(apply_scaler(sc, v)[j]);
        for (double c : col) m += c;
        m /= static_cast<double>(col.size());
        for (double c : col) ss += (c - m) * (c - m);
        EXPECT_LT(std::abs(m), 1e-9);
        EXPECT_NEAR(std::sqrt(ss / static_cast<double>(col.size() - 1)), 1.0, 1e-9);
    }
}
