#ifndef HRGROUP_CLUSTERING_HPP
#define HRGROUP_CLUSTERING_HPP

// Subject grouping: activity-mean profiles, seeded k-means++ with restarts,
// and routing of unseen windows/subjects to the nearest group.

#include "hrgroup/error.hpp"
#include "hrgroup/features.hpp"
#include "hrgroup/preprocess.hpp"
#include "hrgroup/rng.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace hrgroup {

enum class ClusterSpace { MeanBpmProfile, StatisticalWindow, TemporalWindow };

inline std::string_view cluster_space_name(ClusterSpace s) {
    switch (s) {
    case ClusterSpace::MeanBpmProfile: return "MeanBpmProfile";
    case ClusterSpace::StatisticalWindow: return "StatisticalWindow";
    case ClusterSpace::TemporalWindow: return "TemporalWindow";
    }
    return "?";
}

inline std::size_t cluster_space_dim(ClusterSpace s) {
    switch (s) {
    case ClusterSpace::MeanBpmProfile: return kActivityCount;
    case ClusterSpace::StatisticalWindow: return 12;
    case ClusterSpace::TemporalWindow: return 10;
    }
    return 0;
}

struct SubjectProfile {
    std::string subject_id;
    std::array<double, kActivityCount> profile{}; // Rest, Breathe, Activity, RestAC, Type
};

/// profile[a] = mean over the subject's windows labelled a of the window mean.
/// Subjects are returned in id order.
inline std::vector<SubjectProfile> build_profiles(std::span<const Window> windows) {
    std::map<std::string, std::array<std::pair<double, int>, kActivityCount>> acc;
    for (const auto& w : windows) {
        double m = 0.0;
        for (double v : w.values) m += v;
        m /= static_cast<double>(w.values.size());
        auto& slot = acc[w.subject_id][static_cast<std::size_t>(label_index(w.label))];
        slot.first += m;
        ++slot.second;
    }
    std::vector<SubjectProfile> out;
    for (const auto& [id, slots] : acc) {
        SubjectProfile p{id, {}};
        for (std::size_t a = 0; a < kActivityCount; ++a) {
            if (slots[a].second == 0)
                fail(ErrorCode::MissingActivity,
                     id + " has no " + std::string(label_name(static_cast<ActivityLabel>(a))) + " window");
            p.profile[a] = slots[a].first / slots[a].second;
        }
        out.push_back(std::move(p));
    }
    return out;
}

/// The per-window vector of a window-feature space.
inline std::vector<double> window_space_vector(std::span<const double> values, ClusterSpace space) {
    switch (space) {
    case ClusterSpace::StatisticalWindow: return statistical_values(values);
    case ClusterSpace::TemporalWindow: return temporal_values(values);
    case ClusterSpace::MeanBpmProfile: break;
    }
    fail(ErrorCode::InvalidSpec, "MeanBpmProfile has no per-window representation");
}

/// Component-wise mean of vectors, used as the subject summary in window spaces.
inline std::vector<double> mean_vector(std::span<const std::vector<double>> vectors) {
    if (vectors.empty()) fail(ErrorCode::NoWindows, "mean of no vectors");
    std::vector<double> m(vectors.front().size(), 0.0);
    for (const auto& v : vectors)
        for (std::size_t j = 0; j < m.size(); ++j) m[j] += v[j];
    for (auto& x : m) x /= static_cast<double>(vectors.size());
    return m;
}

inline double squared_distance(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t j = 0; j < a.size(); ++j) {
        const double d = a[j] - b[j];
        s += d * d;
    }
    return s;
}

/// Index of the nearest centroid; ties go to the lowest index.
inline int nearest_centroid(std::span<const std::vector<double>> centroids, std::span<const double> v) {
    int best = 0;
    double best_d = std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < centroids.size(); ++c) {
        const double d = squared_distance(centroids[c], v);
        if (d < best_d) {
            best_d = d;
            best = static_cast<int>(c);
        }
    }
    return best;
}

struct KMeansOptions {
    int restarts = 10;
    int max_iter = 300;
    double tol = 1e-6;
};

struct KMeansResult {
    std::vector<std::vector<double>> centroids;
    std::vector<int> labels; // per input vector, in input order
    double inertia = 0.0;
    int best_restart = 0;
    /// Inertia after each assignment step of the winning restart.
    std::vector<double> inertia_history;
};

namespace kmeans_detail {

struct Run {
    std::vector<std::vector<double>> centroids;
    std::vector<int> labels;
    double inertia = 0.0;
    std::vector<double> history;
};

inline double assign_all(const std::vector<std::vector<double>>& pts, const std::vector<std::vector<double>>& centroids,
                         std::vector<int>& labels) {
    double inertia = 0.0;
    for (std::size_t i = 0; i < pts.size(); ++i) {
        labels[i] = nearest_centroid(centroids, pts[i]);
        inertia += squared_distance(pts[i], centroids[static_cast<std::size_t>(labels[i])]);
    }
    return inertia;
}

inline std::vector<std::vector<double>> kmeanspp_init(const std::vector<std::vector<double>>& pts, int k, Rng& rng) {
    const std::size_t n = pts.size();
    std::vector<std::vector<double>> centroids;
    centroids.push_back(pts[static_cast<std::size_t>(rng.index(n))]);
    std::vector<double> d2(n);
    for (std::size_t i = 0; i < n; ++i) d2[i] = squared_distance(pts[i], centroids[0]);
    while (static_cast<int>(centroids.size()) < k) {
        const double total = std::accumulate(d2.begin(), d2.end(), 0.0);
        std::size_t pick = 0;
        if (total > 0.0) {
            const double r = rng.uniform() * total;
            double cum = 0.0;
            pick = n - 1;
            for (std::size_t i = 0; i < n; ++i) {
                cum += d2[i];
                if (r < cum && d2[i] > 0.0) {
                    pick = i;
                    break;
                }
            }
        }
        centroids.push_back(pts[pick]);
        for (std::size_t i = 0; i < n; ++i) d2[i] = std::min(d2[i], squared_distance(pts[i], centroids.back()));
    }
    return centroids;
}

inline Run lloyd(const std::vector<std::vector<double>>& pts, int k, Rng& rng, const KMeansOptions& opt) {
    const std::size_t n = pts.size(), d = pts.front().size();
    Run run;
    run.centroids = kmeanspp_init(pts, k, rng);
    run.labels.assign(n, 0);
    for (int it = 0; it < opt.max_iter; ++it) {
        run.history.push_back(assign_all(pts, run.centroids, run.labels));

        std::vector<int> size(static_cast<std::size_t>(k), 0);
        for (int l : run.labels) ++size[static_cast<std::size_t>(l)];
        // Empty clusters take the point farthest from its centroid.
        for (int c = 0; c < k; ++c) {
            if (size[static_cast<std::size_t>(c)] > 0) continue;
            std::size_t far = n;
            double far_d = -1.0;
            for (std::size_t i = 0; i < n; ++i) {
                if (size[static_cast<std::size_t>(run.labels[i])] < 2) continue;
                const double dist = squared_distance(pts[i], run.centroids[static_cast<std::size_t>(run.labels[i])]);
                if (dist > far_d) {
                    far_d = dist;
                    far = i;
                }
            }
            if (far == n) break;
            --size[static_cast<std::size_t>(run.labels[far])];
            run.labels[far] = c;
            size[static_cast<std::size_t>(c)] = 1;
        }

        std::vector<std::vector<double>> next(static_cast<std::size_t>(k), std::vector<double>(d, 0.0));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < d; ++j) next[static_cast<std::size_t>(run.labels[i])][j] += pts[i][j];
        double shift = 0.0;
        for (std::size_t c = 0; c < next.size(); ++c) {
            if (size[c] == 0) {
                next[c] = run.centroids[c];
                continue;
            }
            for (auto& v : next[c]) v /= size[c];
            shift = std::max(shift, std::sqrt(squared_distance(next[c], run.centroids[c])));
        }
        run.centroids = std::move(next);
        if (shift < opt.tol) break;
    }
    run.inertia = assign_all(pts, run.centroids, run.labels);
    return run;
}

} // namespace kmeans_detail

/// k-means with k-means++ seeding, best of `restarts` by (inertia, restart
/// index). Points are processed in a canonical (lexicographic) order, so the
/// result does not depend on the order of the input.
inline KMeansResult kmeans_fit(std::span<const std::vector<double>> vectors, int k, std::uint64_t seed,
                               const KMeansOptions& opt = {}) {
    if (k < 1) fail(ErrorCode::InvalidSpec, "k must be positive");
    if (vectors.size() < static_cast<std::size_t>(k))
        fail(ErrorCode::TooFewVectors,
             std::to_string(vectors.size()) + " vectors for k=" + std::to_string(k));
    const std::size_t d = vectors.front().size();
    for (const auto& v : vectors) {
        if (v.size() != d) fail(ErrorCode::DimensionMismatch, "ragged input to k-means");
        for (double x : v)
            if (!std::isfinite(x)) fail(ErrorCode::NonFiniteFeature, "non-finite input to k-means");
    }

    std::vector<std::size_t> order(vectors.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return vectors[a] < vectors[b]; });
    std::vector<std::vector<double>> pts;
    pts.reserve(order.size());
    for (auto i : order) pts.push_back(vectors[i]);

    kmeans_detail::Run best;
    int best_r = -1;
    for (int r = 0; r < std::max(1, opt.restarts); ++r) {
        Rng rng(derive_seed(seed, {static_cast<std::uint64_t>(r)}));
        auto run = kmeans_detail::lloyd(pts, k, rng, opt);
        if (best_r < 0 || run.inertia < best.inertia) {
            best = std::move(run);
            best_r = r;
        }
    }

    KMeansResult result;
    result.centroids = std::move(best.centroids);
    result.inertia = best.inertia;
    result.best_restart = best_r;
    result.inertia_history = std::move(best.history);
    result.labels.assign(vectors.size(), 0);
    for (std::size_t s = 0; s < order.size(); ++s) result.labels[order[s]] = best.labels[s];
    return result;
}

struct ClusterModel {
    int k = 0;
    std::vector<std::vector<double>> centroids; // in (scaled) space coordinates
    ClusterSpace space = ClusterSpace::MeanBpmProfile;
    std::optional<Scaler> scaler;
    std::uint64_t seed = 0;
    double inertia = 0.0;

    std::size_t dim() const { return centroids.empty() ? 0 : centroids.front().size(); }
};

using ClusterAssignment = std::map<std::string, int>;

struct ClusterFit {
    ClusterModel model;
    std::vector<int> labels;
};

/// Fits a model over one vector per entity. With `standardize` a scaler is
/// fitted on the inputs first and kept in the model for later assignment.
inline ClusterFit fit_cluster_model(std::span<const std::vector<double>> vectors, int k, ClusterSpace space,
                                    std::uint64_t seed, bool standardize, const KMeansOptions& opt = {}) {
    if (vectors.empty()) fail(ErrorCode::TooFewVectors, "no vectors to cluster");
    if (vectors.front().size() != cluster_space_dim(space))
        fail(ErrorCode::DimensionMismatch, "vector dimension does not match " + std::string(cluster_space_name(space)));
    ClusterFit fit;
    fit.model.space = space;
    fit.model.seed = seed;
    fit.model.k = k;
    std::vector<std::vector<double>> pts(vectors.begin(), vectors.end());
    if (standardize) {
        fit.model.scaler = fit_scaler(vectors);
        for (auto& p : pts) p = apply_scaler(*fit.model.scaler, p);
    }
    auto km = kmeans_fit(pts, k, seed, opt);
    fit.model.centroids = std::move(km.centroids);
    fit.model.inertia = km.inertia;
    fit.labels = std::move(km.labels);
    return fit;
}

/// Nearest centroid after the model's scaler (if any); ties to lowest index.
inline int assign_window(const ClusterModel& model, std::span<const double> vec) {
    if (vec.size() != model.dim())
        fail(ErrorCode::DimensionMismatch,
             "vector dim " + std::to_string(vec.size()) + " vs model dim " + std::to_string(model.dim()));
    if (model.scaler) return nearest_centroid(model.centroids, apply_scaler(*model.scaler, vec));
    return nearest_centroid(model.centroids, vec);
}

/// Majority cluster over per-window assignments; ties to lowest index.
inline int majority_cluster(std::span<const int> assignments, int k) {
    if (assignments.empty()) fail(ErrorCode::NoWindows, "no window assignments");
    std::vector<int> votes(static_cast<std::size_t>(std::max(k, 1)), 0);
    for (int a : assignments) {
        if (a < 0) fail(ErrorCode::InvariantViolation, "negative cluster index");
        if (static_cast<std::size_t>(a) >= votes.size()) votes.resize(static_cast<std::size_t>(a) + 1, 0);
        ++votes[static_cast<std::size_t>(a)];
    }
    return static_cast<int>(std::max_element(votes.begin(), votes.end()) - votes.begin());
}

inline int route_subject(const ClusterModel& model, std::span<const std::vector<double>> window_vectors) {
    if (window_vectors.empty()) fail(ErrorCode::NoWindows, "subject has no windows");
    std::vector<int> assigned;
    assigned.reserve(window_vectors.size());
    for (const auto& v : window_vectors) assigned.push_back(assign_window(model, v));
    return majority_cluster(assigned, model.k);
}

/// Adjusted Rand index of two labelings of the same items.
inline double adjusted_rand_index(std::span<const int> a, std::span<const int> b) {
    if (a.size() != b.size()) fail(ErrorCode::DimensionMismatch, "labelings differ in length");
    std::map<std::pair<int, int>, long long> joint;
    std::map<int, long long> ra, rb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        ++joint[{a[i], b[i]}];
        ++ra[a[i]];
        ++rb[b[i]];
    }
    auto c2 = [](long long n) { return static_cast<double>(n) * static_cast<double>(n - 1) / 2.0; };
    double sum_joint = 0.0, sum_a = 0.0, sum_b = 0.0;
    for (const auto& [key, n] : joint) sum_joint += c2(n);
    for (const auto& [key, n] : ra) sum_a += c2(n);
    for (const auto& [key, n] : rb) sum_b += c2(n);
    const double total = c2(static_cast<long long>(a.size()));
    const double expected = total > 0 ? sum_a * sum_b / total : 0.0;
    const double max_index = 0.5 * (sum_a + sum_b);
    if (max_index == expected) return 1.0;
    return (sum_joint - expected) / (max_index - expected);
}

/// JSON cluster report: k, space, members per cluster, centroids, inertia, seed.
inline nlohmann::json cluster_report_json(const ClusterModel& model, const ClusterAssignment& assignment) {
    nlohmann::json members = nlohmann::json::array();
    for (int c = 0; c < model.k; ++c) {
        nlohmann::json ids = nlohmann::json::array();
        for (const auto& [id, cl] : assignment)
            if (cl == c) ids.push_back(id);
        members.push_back(ids);
    }
    nlohmann::json j;
    j["k"] = model.k;
    j["space"] = std::string(cluster_space_name(model.space));
    j["members"] = members;
    j["centroids"] = model.centroids;
    j["inertia"] = model.inertia;
    j["seed"] = model.seed;
    if (model.scaler) j["scaler"] = {{"mean", model.scaler->mean}, {"std", model.scaler->std}};
    return j;
}

} // namespace hrgroup

#endif
