#include "hrgroup/clustering.hpp"

#include "oracles.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

using namespace hrgroup;
using oracle::brute_force_inertia;
using oracle::random_points;

namespace {

Window labelled(const std::string& id, ActivityLabel label, double level) {
    return {id, 0, std::vector<double>(4, level), label};
}

} // namespace

TEST(Profiles, Examples) {
    std::vector<Window> windows;
    for (auto a : kAllActivities) windows.push_back(labelled("A", a, 70));
    windows.push_back(labelled("B", ActivityLabel::Rest, 60));
    windows.push_back(labelled("B", ActivityLabel::Rest, 80));
    for (auto a : kAllActivities)
        if (a != ActivityLabel::Rest) windows.push_back(labelled("B", a, 90));
    const auto p = build_profiles(windows);
    ASSERT_EQ(p.size(), 2u);
    EXPECT_EQ(p[0].subject_id, "A");
    for (double v : p[0].profile) EXPECT_EQ(v, 70.0);
    EXPECT_EQ(p[1].profile[0], 70.0);
    EXPECT_EQ(p[1].profile[2], 90.0);

    windows.clear();
    for (auto a : kAllActivities)
        if (a != ActivityLabel::Type) windows.push_back(labelled("C", a, 70));
    try {
        build_profiles(windows);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::MissingActivity);
    }
}

TEST(KMeans, Examples) {
    const std::vector<std::vector<double>> pts{{1, 2}, {3, 4}, {5, 9}};
    auto r = kmeans_fit(pts, 1, 7);
    ASSERT_EQ(r.centroids.size(), 1u);
    EXPECT_NEAR(r.centroids[0][0], 3.0, 1e-12);
    EXPECT_NEAR(r.centroids[0][1], 5.0, 1e-12);

    r = kmeans_fit(std::vector<std::vector<double>>{{0}, {0}, {10}, {10}}, 2, 1);
    auto c = r.centroids;
    std::sort(c.begin(), c.end());
    EXPECT_EQ(c, (std::vector<std::vector<double>>{{0}, {10}}));
    EXPECT_EQ(r.inertia, 0.0);
    EXPECT_EQ(r.labels[0], r.labels[1]);
    EXPECT_NE(r.labels[0], r.labels[2]);

    try {
        kmeans_fit(pts, 4, 1);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::TooFewVectors);
    }
}

TEST(KMeans, ReachesBruteForceOptimumOnSmallInstances) {
    for (std::uint64_t seed = 1; seed <= 8; ++seed) {
        Rng rng(seed);
        const auto all = random_points(rng, 30, 2);
        const std::vector<std::vector<double>> sub(all.begin(), all.begin() + 12);
        const double oracle = brute_force_inertia(sub, 3);
        EXPECT_NEAR(kmeans_fit(sub, 3, seed).inertia, oracle, 1e-9 * std::max(1.0, oracle)) << "seed " << seed;
    }
}

TEST(KMeans, InertiaNeverIncreases) {
    for (std::uint64_t seed = 1; seed <= 30; ++seed) {
        Rng rng(seed);
        const auto pts = random_points(rng, 200, 3);
        for (int k : {2, 5, 9}) {
            const auto r = kmeans_fit(pts, k, seed);
            ASSERT_FALSE(r.inertia_history.empty());
            for (std::size_t i = 1; i < r.inertia_history.size(); ++i)
                ASSERT_LE(r.inertia_history[i], r.inertia_history[i - 1] * (1 + 1e-12));
            EXPECT_NEAR(r.inertia_history.back(), r.inertia, 1e-9 * r.inertia);
        }
    }
}

TEST(KMeans, PermutationInvariant) {
    for (std::uint64_t seed = 1; seed <= 20; ++seed) {
        Rng rng(seed);
        auto pts = random_points(rng, 60, 2);
        const auto a = kmeans_fit(pts, 4, 11);
        std::vector<std::size_t> perm(pts.size());
        std::iota(perm.begin(), perm.end(), std::size_t{0});
        rng.shuffle(std::span<std::size_t>(perm));
        std::vector<std::vector<double>> shuffled;
        for (auto i : perm) shuffled.push_back(pts[i]);
        const auto b = kmeans_fit(shuffled, 4, 11);
        EXPECT_EQ(a.inertia, b.inertia);
        std::vector<int> a_perm;
        for (auto i : perm) a_perm.push_back(a.labels[i]);
        EXPECT_EQ(adjusted_rand_index(a_perm, b.labels), 1.0);
    }
}

TEST(KMeans, DeterministicAndHandlesDuplicates) {
    Rng rng(3);
    const auto pts = random_points(rng, 50, 4);
    const auto a = kmeans_fit(pts, 6, 5), b = kmeans_fit(pts, 6, 5);
    EXPECT_EQ(a.centroids, b.centroids);
    EXPECT_EQ(a.labels, b.labels);
    // Fewer distinct points than k forces empty-cluster repair.
    const std::vector<std::vector<double>> dup{{1}, {1}, {1}, {2}, {2}};
    const auto r = kmeans_fit(dup, 3, 1);
    EXPECT_EQ(r.inertia, 0.0);
    for (const auto& c : r.centroids) EXPECT_TRUE(std::isfinite(c[0]));
}

TEST(AssignWindow, ExamplesAndTieRule) {
    ClusterModel m;
    m.k = 3;
    m.space = ClusterSpace::MeanBpmProfile;
    m.centroids = {{0, 0, 0, 0, 0}, {2, 0, 0, 0, 0}, {5, 5, 5, 5, 5}};
    EXPECT_EQ(assign_window(m, std::vector<double>{5, 5, 5, 5, 5}), 2);
    EXPECT_EQ(assign_window(m, std::vector<double>{1, 0, 0, 0, 0}), 0);
    EXPECT_THROW(assign_window(m, std::vector<double>{1, 0}), Error);
}

TEST(AssignWindow, MatchesLinearScan) {
    Rng rng(99);
    ClusterModel m;
    m.k = 7;
    m.centroids = random_points(rng, 7, 12);
    m.space = ClusterSpace::StatisticalWindow;
    for (int i = 0; i < 1000; ++i) {
        const auto v = random_points(rng, 1, 12).front();
        std::size_t best = 0;
        for (std::size_t c = 1; c < m.centroids.size(); ++c) {
            double dc = 0, db = 0;
            for (std::size_t j = 0; j < v.size(); ++j) {
                dc += (v[j] - m.centroids[c][j]) * (v[j] - m.centroids[c][j]);
                db += (v[j] - m.centroids[best][j]) * (v[j] - m.centroids[best][j]);
            }
            if (dc < db) best = c;
        }
        ASSERT_EQ(assign_window(m, v), static_cast<int>(best));
    }
}

TEST(AssignWindow, CentroidMapsToItself) {
    for (std::uint64_t seed = 1; seed <= 10; ++seed) {
        Rng rng(seed);
        const auto pts = random_points(rng, 80, 10);
        for (bool standardize : {false, true}) {
            auto fit = fit_cluster_model(pts, 5, ClusterSpace::TemporalWindow, seed, standardize);
            ClusterModel raw = fit.model;
            raw.scaler.reset();
            for (int c = 0; c < 5; ++c)
                EXPECT_EQ(assign_window(raw, raw.centroids[static_cast<std::size_t>(c)]), c);
        }
    }
}

TEST(RouteSubject, MajorityAndTies) {
    EXPECT_EQ(majority_cluster(std::vector<int>{1, 1, 2}, 3), 1);
    EXPECT_EQ(majority_cluster(std::vector<int>{0, 1}, 2), 0);
    EXPECT_EQ(majority_cluster(std::vector<int>{2, 1}, 3), 1);
    ClusterModel m;
    m.k = 2;
    m.centroids = {{0.0}, {1.0}};
    try {
        route_subject(m, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::NoWindows);
    }
}

// Two groups whose activity responses differ strongly; subjects are fitted on
// the mean of their window vectors and routed by majority over their windows.
TEST(RouteSubject, RecoversLatentGroups) {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        SyntheticCohortSpec spec;
        spec.seed = seed;
        spec.group_offset_profiles = {{0, 0, 10, 0, 0}, {10, 15, 50, 25, 10}};
        const auto cohort = generate_synthetic(spec);
        std::vector<std::vector<double>> summaries;
        std::vector<std::vector<std::vector<double>>> per_subject;
        std::vector<int> truth;
        for (const auto& s : cohort.series) {
            std::vector<std::vector<double>> v;
            for (const auto& w : segment(standardize_series(s), {80, 10}))
                v.push_back(window_space_vector(w.values, ClusterSpace::StatisticalWindow));
            summaries.push_back(mean_vector(v));
            per_subject.push_back(std::move(v));
            truth.push_back(cohort.groups.at(s.subject_id));
        }
        const auto fit = fit_cluster_model(summaries, 2, ClusterSpace::StatisticalWindow, seed, true);
        std::vector<int> routed;
        for (const auto& v : per_subject) routed.push_back(route_subject(fit.model, v));
        EXPECT_GE(adjusted_rand_index(fit.labels, truth), 0.9) << "seed " << seed;
        EXPECT_GE(adjusted_rand_index(routed, truth), 0.9) << "seed " << seed;
    }
}

TEST(AdjustedRandIndex, KnownValues) {
    EXPECT_EQ(adjusted_rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{5, 5, 3, 3}), 1.0);
    // Contingency [[1,1],[1,1]]: index 0, expected 2*2/6, max 2.
    EXPECT_NEAR(adjusted_rand_index(std::vector<int>{0, 0, 1, 1}, std::vector<int>{0, 1, 0, 1}), -0.5, 1e-12);
}

TEST(ClusterReport, JsonShape) {
    ClusterModel m;
    m.k = 2;
    m.space = ClusterSpace::MeanBpmProfile;
    m.centroids = {{1, 2, 3, 4, 5}, {6, 7, 8, 9, 10}};
    m.seed = 4;
    m.inertia = 2.5;
    const auto j = cluster_report_json(m, {{"S001", 1}, {"S002", 0}, {"S003", 1}});
    EXPECT_EQ(j["k"], 2);
    EXPECT_EQ(j["space"], "MeanBpmProfile");
    EXPECT_EQ(j["members"][1], (nlohmann::json{"S001", "S003"}));
    EXPECT_EQ(j["seed"], 4);
    EXPECT_EQ(j["centroids"][1][4], 10.0);
}
