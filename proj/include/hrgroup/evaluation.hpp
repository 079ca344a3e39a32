#ifndef HRGROUP_EVALUATION_HPP
#define HRGROUP_EVALUATION_HPP

#include "hrgroup/clustering.hpp"
#include "hrgroup/error.hpp"
#include "hrgroup/features.hpp"
#include "hrgroup/ingest.hpp"
#include "hrgroup/io.hpp"
#include "hrgroup/neuralnet.hpp"
#include "hrgroup/parallel.hpp"
#include "hrgroup/preprocess.hpp"
#include "hrgroup/rng.hpp"
#include "hrgroup/svm.hpp"

#include "json.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

namespace hrgroup {

inline constexpr int kReportSchemaVersion = 1;

// ---------------------------------------------------------------------------
// Classifier settings

enum class ModelKind { Svm, Net };

/// How a net sees the raw window: as produced by the standardization mode, or
/// additionally z-scored within each window (level removed, shape kept).
enum class WindowInput { Series, WindowZScore };

/// What an SVM is trained on.
enum class SvmInput { Features, RawWindow };

inline std::string_view model_kind_name(ModelKind m) { return m == ModelKind::Svm ? "svm" : "net"; }
inline std::string_view window_input_name(WindowInput w) {
    return w == WindowInput::Series ? "series" : "window-zscore";
}

struct ClassifierSpec {
    ModelKind model = ModelKind::Svm;
    FeatureSetKind features = FeatureSetKind::StatTemporal;
    StandardizationMode standardization = StandardizationMode::FeatureStd;
    MfccConfig mfcc;
    /// Compute features on the per-subject standardized series; unset follows
    /// the window standardization (DataStd).
    std::optional<bool> features_on_standardized;
    // svm
    SvmInput svm_input = SvmInput::Features;
    KernelSpec kernel;
    double C = 1.0;
    SvmOptions svm;
    // net; window_size, hc_dim and seed are filled in per training run
    ArchitectureId arch = ArchitectureId::Baseline;
    NetConfig net;
    WindowInput window_input = WindowInput::Series;

    bool uses_features() const {
        return model == ModelKind::Svm ? svm_input == SvmInput::Features : arch != ArchitectureId::Baseline;
    }
    bool uses_window() const { return model == ModelKind::Net || svm_input == SvmInput::RawWindow; }
    bool standardized_features() const {
        return features_on_standardized.value_or(standardization == StandardizationMode::DataStd);
    }
};

inline nlohmann::json classifier_spec_json(const ClassifierSpec& s) {
    nlohmann::json j;
    j["model"] = std::string(model_kind_name(s.model));
    j["standardization"] = std::string(standardization_name(s.standardization));
    if (s.model == ModelKind::Svm) j["input"] = s.svm_input == SvmInput::Features ? "features" : "raw-window";
    if (s.uses_features()) {
        j["features"] = std::string(feature_set_name(s.features));
        j["standardized_input"] = s.standardized_features();
        if (s.features == FeatureSetKind::BaseMfcc)
            j["mfcc"] = {{"bands", s.mfcc.n_mel_bands}, {"coefficients", s.mfcc.n_coefficients},
                         {"sample_rate", s.mfcc.sample_rate_hz}};
    }
    if (s.model == ModelKind::Svm) {
        j["kernel"] = s.kernel.kind == KernelKind::Linear ? "linear" : "rbf";
        if (s.kernel.gamma) j["gamma"] = *s.kernel.gamma;
        j["C"] = s.C;
        j["tol"] = s.svm.tol;
    } else {
        j["architecture"] = std::string(architecture_name(s.arch));
        j["window_input"] = std::string(window_input_name(s.window_input));
        j["epochs"] = s.net.epochs;
        j["batch_size"] = s.net.batch_size;
        j["learning_rate"] = s.net.learning_rate;
        j["dropout"] = s.net.dropout_p;
    }
    return j;
}

// ---------------------------------------------------------------------------
// Prepared window dataset

struct WindowDataset {
    WindowConfig window;
    std::vector<Window> windows; // values after series-level standardization (DataStd)
    std::vector<std::vector<double>> hc; // unscaled features; empty rows when unused
    std::vector<int> labels;             // label index
    std::vector<std::string> subject_ids;
    std::vector<std::size_t> subject_of; // window -> index into subject_ids
    FeatureNames hc_names;

    std::size_t size() const { return windows.size(); }
    std::size_t hc_dim() const { return hc_names ? hc_names->size() : 0; }
};

/// Segments every series and computes the inputs the classifier needs.
/// Subjects are ordered by id.
inline WindowDataset prepare_dataset(std::span<const SubjectSeries> corpus, const WindowConfig& cfg,
                                     const ClassifierSpec& spec, int workers = 1) {
    cfg.validate();
    std::vector<const SubjectSeries*> sorted;
    for (const auto& s : corpus) sorted.push_back(&s);
    std::sort(sorted.begin(), sorted.end(),
              [](const SubjectSeries* a, const SubjectSeries* b) { return a->subject_id < b->subject_id; });
    for (std::size_t i = 1; i < sorted.size(); ++i)
        if (sorted[i]->subject_id == sorted[i - 1]->subject_id)
            fail(ErrorCode::MalformedInput, "duplicate subject " + sorted[i]->subject_id);

    struct Part {
        std::vector<Window> windows;
        std::vector<std::vector<double>> hc;
    };
    auto parts = parallel_map(sorted.size(), workers, [&](std::size_t i) {
        const SubjectSeries& s = *sorted[i];
        Part p;
        const bool std_windows = spec.standardization == StandardizationMode::DataStd;
        p.windows = std_windows ? segment(standardize_series(s), cfg) : segment(s, cfg);
        if (!spec.uses_features()) {
            p.hc.assign(p.windows.size(), {});
            return p;
        }
        std::vector<Window> source;
        if (spec.standardized_features() != std_windows)
            source = spec.standardized_features() ? segment(standardize_series(s), cfg) : segment(s, cfg);
        const auto& fw = source.empty() ? p.windows : source;
        for (const auto& w : fw) p.hc.push_back(feature_values(w.values, spec.features, spec.mfcc));
        return p;
    });

    WindowDataset ds;
    ds.window = cfg;
    if (spec.uses_features()) ds.hc_names = feature_names(spec.features, spec.mfcc);
    for (std::size_t i = 0; i < sorted.size(); ++i) {
        ds.subject_ids.push_back(sorted[i]->subject_id);
        for (std::size_t w = 0; w < parts[i].windows.size(); ++w) {
            ds.labels.push_back(label_index(parts[i].windows[w].label));
            ds.subject_of.push_back(i);
            ds.windows.push_back(std::move(parts[i].windows[w]));
            ds.hc.push_back(std::move(parts[i].hc[w]));
        }
    }
    return ds;
}

inline std::vector<std::size_t> windows_of_subjects(const WindowDataset& ds, const std::set<std::size_t>& subjects) {
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < ds.size(); ++i)
        if (subjects.count(ds.subject_of[i])) out.push_back(i);
    return out;
}

inline std::size_t subject_index(const WindowDataset& ds, std::string_view id) {
    const auto it = std::lower_bound(ds.subject_ids.begin(), ds.subject_ids.end(), id);
    if (it == ds.subject_ids.end() || *it != id) fail(ErrorCode::NoWindows, "subject " + std::string(id) + " has no windows");
    return static_cast<std::size_t>(it - ds.subject_ids.begin());
}

// ---------------------------------------------------------------------------
// Trained classifier

struct TrainedClassifier {
    ClassifierSpec spec;
    std::optional<Scaler> hc_scaler;  // features, or raw windows for a raw-input SVM
    SeriesStats window_scale{0.0, 1.0}; // FeatureStd nets: pooled train statistics
    std::optional<OvoSvm> svm;
    std::optional<NetModel> net;

    std::vector<double> net_window(std::span<const double> window) const {
        std::vector<double> v(window.begin(), window.end());
        if (spec.standardization == StandardizationMode::FeatureStd)
            for (auto& x : v) x = (x - window_scale.mean) / window_scale.std;
        if (spec.window_input == WindowInput::WindowZScore) {
            double m = 0.0;
            for (double x : v) m += x;
            m /= static_cast<double>(v.size());
            double ss = 0.0;
            for (double x : v) ss += (x - m) * (x - m);
            const double sd = v.size() > 1 ? std::sqrt(ss / static_cast<double>(v.size() - 1)) : 0.0;
            for (auto& x : v) x = sd > kStdEpsilon ? (x - m) / sd : x - m;
        }
        return v;
    }

    std::vector<double> scaled_hc(std::span<const double> hc) const {
        if (hc_scaler) return apply_scaler(*hc_scaler, hc);
        return {hc.begin(), hc.end()};
    }

    /// Class index (label index) for one window and its unscaled features.
    int predict(std::span<const double> window, std::span<const double> hc) const {
        if (svm) return predict_ovo(*svm, scaled_hc(spec.uses_window() ? window : hc));
        if (net) return predict_class(*net, net_window(window), spec.uses_features() ? scaled_hc(hc) : std::vector<double>{});
        fail(ErrorCode::InvariantViolation, "classifier was never trained");
    }
};

/// Fits the classifier on the given rows only; no statistic is taken from any
/// other row of the dataset.
inline TrainedClassifier train_classifier(const WindowDataset& ds, std::span<const std::size_t> train,
                                          const ClassifierSpec& spec, std::uint64_t seed) {
    if (train.empty()) fail(ErrorCode::EmptyDataset, "no training windows");
    TrainedClassifier tc;
    tc.spec = spec;
    if (spec.model == ModelKind::Svm) {
        auto input = [&](std::size_t i) -> const std::vector<double>& {
            return spec.uses_window() ? ds.windows[i].values : ds.hc[i];
        };
        if (spec.standardization == StandardizationMode::FeatureStd) {
            std::vector<std::vector<double>> rows;
            rows.reserve(train.size());
            for (auto i : train) rows.push_back(input(i));
            tc.hc_scaler = fit_scaler(rows);
        }
        std::vector<std::vector<double>> x;
        std::vector<int> y;
        for (auto i : train) {
            x.push_back(tc.scaled_hc(input(i)));
            y.push_back(ds.labels[i]);
        }
        tc.svm = train_ovo(x, y, spec.kernel, spec.C, spec.svm, seed);
        return tc;
    }

    if (spec.uses_features()) {
        std::vector<std::vector<double>> rows;
        rows.reserve(train.size());
        for (auto i : train) rows.push_back(ds.hc[i]);
        tc.hc_scaler = fit_scaler(rows);
    }
    if (spec.standardization == StandardizationMode::FeatureStd) {
        long double s = 0, ss = 0;
        std::size_t n = 0;
        for (auto i : train)
            for (double v : ds.windows[i].values) {
                s += v;
                ss += static_cast<long double>(v) * v;
                ++n;
            }
        const double mean = static_cast<double>(s / n);
        const double var = n > 1 ? static_cast<double>((ss - s * s / n) / (n - 1)) : 0.0;
        tc.window_scale = {mean, var > kStdEpsilon * kStdEpsilon ? std::sqrt(var) : 1.0};
    }
    NetConfig cfg = spec.net;
    cfg.window_size = ds.window.window_size;
    cfg.hc_dim = spec.uses_features() ? static_cast<int>(ds.hc_dim()) : 0;
    cfg.seed = seed;
    std::vector<NetExample> data;
    data.reserve(train.size());
    for (auto i : train)
        data.push_back({tc.net_window(ds.windows[i].values),
                        spec.uses_features() ? tc.scaled_hc(ds.hc[i]) : std::vector<double>{}, ds.labels[i]});
    tc.net = hrgroup::train(build(spec.arch, cfg), data);
    return tc;
}

// ---------------------------------------------------------------------------
// Metrics

using Confusion = std::array<std::array<long long, kActivityCount>, kActivityCount>; // [true][pred]

struct Metrics {
    double accuracy = 0.0;
    double balanced_accuracy = 0.0;
    long long n = 0;
};

inline Metrics metrics_of(const Confusion& c) {
    Metrics m;
    long long trace = 0;
    double recall_sum = 0.0;
    int present = 0;
    for (std::size_t t = 0; t < kActivityCount; ++t) {
        long long row = 0;
        for (std::size_t p = 0; p < kActivityCount; ++p) row += c[t][p];
        m.n += row;
        trace += c[t][t];
        if (row > 0) {
            recall_sum += static_cast<double>(c[t][t]) / static_cast<double>(row);
            ++present;
        }
    }
    if (m.n > 0) m.accuracy = static_cast<double>(trace) / static_cast<double>(m.n);
    if (present > 0) m.balanced_accuracy = recall_sum / present;
    return m;
}

inline Confusion& operator+=(Confusion& a, const Confusion& b) {
    for (std::size_t t = 0; t < kActivityCount; ++t)
        for (std::size_t p = 0; p < kActivityCount; ++p) a[t][p] += b[t][p];
    return a;
}

inline Confusion confusion_of(std::span<const int> truth, std::span<const int> pred) {
    if (truth.size() != pred.size()) fail(ErrorCode::DimensionMismatch, "truth and predictions differ in length");
    Confusion c{};
    for (std::size_t i = 0; i < truth.size(); ++i)
        ++c[static_cast<std::size_t>(truth[i])][static_cast<std::size_t>(pred[i])];
    return c;
}

/// Rest<->Activity confusions in both directions.
inline long long rest_activity_confusions(const Confusion& c) {
    const auto r = static_cast<std::size_t>(label_index(ActivityLabel::Rest));
    const auto a = static_cast<std::size_t>(label_index(ActivityLabel::Activity));
    return c[r][a] + c[a][r];
}

inline std::string confusion_csv(const Confusion& c) {
    std::string out = "true\\pred";
    for (auto l : kAllActivities) out += ',' + std::string(label_name(l));
    out += '\n';
    for (std::size_t t = 0; t < kActivityCount; ++t) {
        out += std::string(label_name(kAllActivities[t]));
        for (std::size_t p = 0; p < kActivityCount; ++p) out += ',' + std::to_string(c[t][p]);
        out += '\n';
    }
    return out;
}

// ---------------------------------------------------------------------------
// Reports

struct FoldRecord {
    int fold = 0;
    std::string held_out; // subject ids joined by '+', or a split name
    Metrics metrics;
    std::size_t n_train = 0;
};

struct EvalReport {
    Confusion confusion{};
    Metrics overall;
    std::vector<FoldRecord> folds;
    nlohmann::json config = nlohmann::json::object();
    std::vector<std::string> warnings;

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["schema_version"] = kReportSchemaVersion;
        j["config"] = config;
        j["accuracy"] = overall.accuracy;
        j["balanced_accuracy"] = overall.balanced_accuracy;
        j["n"] = overall.n;
        nlohmann::json labels = nlohmann::json::array();
        for (auto l : kAllActivities) labels.push_back(std::string(label_name(l)));
        j["labels"] = labels;
        j["confusion_matrix"] = confusion;
        nlohmann::json folds_j = nlohmann::json::array();
        for (const auto& f : folds)
            folds_j.push_back({{"fold", f.fold},
                               {"held_out", f.held_out},
                               {"accuracy", f.metrics.accuracy},
                               {"balanced_accuracy", f.metrics.balanced_accuracy},
                               {"n_test", f.metrics.n},
                               {"n_train", f.n_train}});
        j["folds"] = folds_j;
        j["warnings"] = warnings;
        return j;
    }

    /// One row per fold.
    std::string to_csv() const {
        std::string out = "fold,held_out,n_train,n_test,accuracy,balanced_accuracy\n";
        for (const auto& f : folds)
            out += std::to_string(f.fold) + ',' + f.held_out + ',' + std::to_string(f.n_train) + ',' +
                   std::to_string(f.metrics.n) + ',' + io::fmt(f.metrics.accuracy) + ',' +
                   io::fmt(f.metrics.balanced_accuracy) + '\n';
        return out;
    }
};

// ---------------------------------------------------------------------------
// Splits

enum class SplitKind { RandomWindow, LeaveSubjectOut, WithinClusterLoso, CrossCluster };

inline std::string_view split_kind_name(SplitKind k) {
    switch (k) {
    case SplitKind::RandomWindow: return "random-window";
    case SplitKind::LeaveSubjectOut: return "leave-subject-out";
    case SplitKind::WithinClusterLoso: return "within-cluster-loso";
    case SplitKind::CrossCluster: return "cross-cluster";
    }
    return "?";
}

struct SplitPlan {
    SplitKind kind = SplitKind::LeaveSubjectOut;
    std::uint64_t seed = 1;
    double test_fraction = 0.3; // RandomWindow
    int n_folds = 0;            // LeaveSubjectOut: 0 = one subject per fold
    int train_cluster = 0;      // CrossCluster
    int test_cluster = 0;
};

struct Fold {
    std::string name;
    std::vector<std::size_t> train, test;
};

/// Stratified by label; subject identity is ignored.
inline Fold random_window_split(const WindowDataset& ds, std::uint64_t seed, double test_fraction) {
    if (!(test_fraction > 0.0 && test_fraction < 1.0)) fail(ErrorCode::InvalidSpec, "test_fraction must be in (0,1)");
    Fold f{"random-window", {}, {}};
    for (std::size_t l = 0; l < kActivityCount; ++l) {
        std::vector<std::size_t> idx;
        for (std::size_t i = 0; i < ds.size(); ++i)
            if (ds.labels[i] == static_cast<int>(l)) idx.push_back(i);
        Rng rng(derive_seed(seed, {0x7374726174ULL, l}));
        rng.shuffle(std::span<std::size_t>(idx));
        const auto n_test = static_cast<std::size_t>(std::llround(test_fraction * static_cast<double>(idx.size())));
        f.test.insert(f.test.end(), idx.begin(), idx.begin() + static_cast<std::ptrdiff_t>(n_test));
        f.train.insert(f.train.end(), idx.begin() + static_cast<std::ptrdiff_t>(n_test), idx.end());
    }
    std::sort(f.train.begin(), f.train.end());
    std::sort(f.test.begin(), f.test.end());
    return f;
}

/// Partition of subject indices into folds. n_folds 0 (or >= subject count)
/// gives one subject per fold in id order; otherwise subjects are shuffled
/// with the seed and dealt round-robin.
inline std::vector<std::vector<std::size_t>> subject_folds(std::size_t n_subjects, std::uint64_t seed, int n_folds) {
    std::vector<std::vector<std::size_t>> folds;
    if (n_folds <= 0 || static_cast<std::size_t>(n_folds) >= n_subjects) {
        for (std::size_t s = 0; s < n_subjects; ++s) folds.push_back({s});
        return folds;
    }
    if (n_folds < 2) fail(ErrorCode::InvalidSpec, "leave-subject-out needs at least 2 folds");
    std::vector<std::size_t> order(n_subjects);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng(derive_seed(seed, {0x666f6c64ULL}));
    rng.shuffle(std::span<std::size_t>(order));
    folds.resize(static_cast<std::size_t>(n_folds));
    for (std::size_t p = 0; p < order.size(); ++p) folds[p % folds.size()].push_back(order[p]);
    for (auto& f : folds) std::sort(f.begin(), f.end());
    return folds;
}

inline std::vector<Fold> leave_subject_out_folds(const WindowDataset& ds, std::uint64_t seed, int n_folds) {
    if (ds.subject_ids.size() < 2) fail(ErrorCode::InvalidSpec, "leave-subject-out needs at least 2 subjects");
    std::vector<Fold> out;
    for (const auto& group : subject_folds(ds.subject_ids.size(), seed, n_folds)) {
        const std::set<std::size_t> held(group.begin(), group.end());
        Fold f;
        for (auto s : group) f.name += (f.name.empty() ? "" : "+") + ds.subject_ids[s];
        for (std::size_t i = 0; i < ds.size(); ++i) (held.count(ds.subject_of[i]) ? f.test : f.train).push_back(i);
        for (auto i : f.train)
            if (held.count(ds.subject_of[i])) fail(ErrorCode::InvariantViolation, "subject leaked into training fold");
        out.push_back(std::move(f));
    }
    return out;
}

struct FoldOutcome {
    std::vector<int> predictions; // aligned with Fold::test
    Confusion confusion{};
};

inline FoldOutcome predict_rows(const TrainedClassifier& tc, const WindowDataset& ds, std::span<const std::size_t> rows) {
    FoldOutcome o;
    std::vector<int> truth;
    for (auto i : rows) {
        o.predictions.push_back(tc.predict(ds.windows[i].values, ds.hc[i]));
        truth.push_back(ds.labels[i]);
    }
    o.confusion = confusion_of(truth, o.predictions);
    return o;
}

/// Trains and tests every fold; fold j uses seed derive(seed, j). Metrics are
/// pooled over folds and also recorded per fold.
inline EvalReport evaluate_folds(const WindowDataset& ds, std::span<const Fold> folds, const ClassifierSpec& spec,
                                 std::uint64_t seed, int workers = 1) {
    auto outcomes = parallel_map(folds.size(), workers, [&](std::size_t j) {
        if (folds[j].test.empty()) fail(ErrorCode::EmptyDataset, "fold " + folds[j].name + " has no test windows");
        const auto tc = train_classifier(ds, folds[j].train, spec, derive_seed(seed, {j}));
        return predict_rows(tc, ds, folds[j].test);
    });
    EvalReport r;
    for (std::size_t j = 0; j < folds.size(); ++j) {
        r.confusion += outcomes[j].confusion;
        r.folds.push_back({static_cast<int>(j), folds[j].name, metrics_of(outcomes[j].confusion), folds[j].train.size()});
    }
    r.overall = metrics_of(r.confusion);
    r.config["classifier"] = classifier_spec_json(spec);
    r.config["window"] = ds.window.window_size;
    r.config["stride"] = ds.window.stride;
    r.config["seed"] = seed;
    return r;
}

inline EvalReport evaluate_split(const WindowDataset& ds, const SplitPlan& plan, const ClassifierSpec& spec,
                                 int workers = 1) {
    std::vector<Fold> folds;
    switch (plan.kind) {
    case SplitKind::RandomWindow: folds.push_back(random_window_split(ds, plan.seed, plan.test_fraction)); break;
    case SplitKind::LeaveSubjectOut: folds = leave_subject_out_folds(ds, plan.seed, plan.n_folds); break;
    default: fail(ErrorCode::InvalidSpec, "split kind needs a cluster assignment");
    }
    auto r = evaluate_folds(ds, folds, spec, plan.seed, workers);
    r.config["split"] = std::string(split_kind_name(plan.kind));
    if (plan.kind == SplitKind::RandomWindow) r.config["test_fraction"] = plan.test_fraction;
    else r.config["n_folds"] = folds.size();
    return r;
}

// ---------------------------------------------------------------------------
// Window/stride sweep

struct SweepCell {
    WindowConfig window;
    EvalReport report;
};

inline std::vector<SweepCell> run_sweep(std::span<const SubjectSeries> corpus, std::span<const int> window_sizes,
                                        std::span<const int> strides, const SplitPlan& split,
                                        const ClassifierSpec& spec, int workers = 1) {
    if (window_sizes.empty() || strides.empty()) fail(ErrorCode::InvalidSpec, "empty sweep grid");
    for (int w : window_sizes)
        for (int s : strides) WindowConfig{w, s}.validate();
    std::vector<SweepCell> cells;
    for (int w : window_sizes)
        for (int s : strides) {
            const WindowConfig cfg{w, s};
            const auto ds = prepare_dataset(corpus, cfg, spec, workers);
            cells.push_back({cfg, evaluate_split(ds, split, spec, workers)});
        }
    return cells;
}

inline std::string sweep_summary_csv(std::span<const SweepCell> cells) {
    std::string out = "window,stride,n,accuracy,balanced_accuracy\n";
    for (const auto& c : cells)
        out += std::to_string(c.window.window_size) + ',' + std::to_string(c.window.stride) + ',' +
               std::to_string(c.report.overall.n) + ',' + io::fmt(c.report.overall.accuracy) + ',' +
               io::fmt(c.report.overall.balanced_accuracy) + '\n';
    return out;
}

// ---------------------------------------------------------------------------
// Cluster experiments

inline std::set<std::size_t> cluster_members(const WindowDataset& ds, const ClusterAssignment& assignment, int cluster) {
    std::set<std::size_t> out;
    for (const auto& [id, c] : assignment)
        if (c == cluster) out.insert(subject_index(ds, id));
    return out;
}

struct SubjectClustering {
    ClusterModel model;
    ClusterAssignment assignment;
};

/// One vector per subject: the activity profile, or the mean of the subject's
/// window vectors in a window space.
inline std::vector<std::vector<double>> subject_vectors(const WindowDataset& ds, ClusterSpace space, int workers = 1) {
    std::vector<std::vector<double>> out;
    if (space == ClusterSpace::MeanBpmProfile) {
        for (const auto& p : build_profiles(ds.windows)) out.emplace_back(p.profile.begin(), p.profile.end());
        return out;
    }
    const auto vectors = parallel_map(ds.size(), workers,
                                      [&](std::size_t i) { return window_space_vector(ds.windows[i].values, space); });
    std::vector<std::vector<std::vector<double>>> per(ds.subject_ids.size());
    for (std::size_t i = 0; i < ds.size(); ++i) per[ds.subject_of[i]].push_back(vectors[i]);
    for (const auto& v : per) out.push_back(mean_vector(v));
    return out;
}

inline SubjectClustering cluster_subjects(const WindowDataset& ds, int k, ClusterSpace space, std::uint64_t seed,
                                          bool standardize, const KMeansOptions& opt = {}, int workers = 1) {
    const auto vectors = subject_vectors(ds, space, workers);
    auto fit = fit_cluster_model(vectors, k, space, seed, standardize, opt);
    SubjectClustering out{std::move(fit.model), {}};
    for (std::size_t s = 0; s < ds.subject_ids.size(); ++s) out.assignment[ds.subject_ids[s]] = fit.labels[s];
    return out;
}

/// Train on every window of one cluster's subjects, test on another's.
inline EvalReport cross_cluster_eval(const WindowDataset& ds, const ClusterAssignment& assignment, int train_cluster,
                                     int test_cluster, const ClassifierSpec& spec, std::uint64_t seed) {
    const auto train_s = cluster_members(ds, assignment, train_cluster);
    const auto test_s = cluster_members(ds, assignment, test_cluster);
    if (train_s.empty()) fail(ErrorCode::EmptyCluster, "cluster " + std::to_string(train_cluster) + " is empty");
    if (test_s.empty()) fail(ErrorCode::EmptyCluster, "cluster " + std::to_string(test_cluster) + " is empty");
    Fold f{std::to_string(train_cluster) + "->" + std::to_string(test_cluster), windows_of_subjects(ds, train_s),
           windows_of_subjects(ds, test_s)};
    auto r = evaluate_folds(ds, std::span<const Fold>(&f, 1), spec, seed);
    r.config["split"] = std::string(split_kind_name(SplitKind::CrossCluster));
    r.config["train_cluster"] = train_cluster;
    r.config["test_cluster"] = test_cluster;
    return r;
}

struct ClusterLosoResult {
    int cluster = 0;
    std::vector<std::string> subjects;
    std::vector<FoldRecord> per_subject;
    Metrics mean; // unweighted mean over subjects
    bool skipped = false;
};

struct WithinClusterResult {
    std::vector<ClusterLosoResult> clusters;
    std::vector<FoldRecord> baseline; // leave-subject-out over every assigned subject
    Metrics baseline_mean;
    std::vector<std::string> warnings;
    nlohmann::json config = nlohmann::json::object();

    /// Baseline mean restricted to the given subjects.
    Metrics baseline_mean_for(std::span<const std::string> subjects) const {
        Metrics m;
        for (const auto& f : baseline)
            if (std::find(subjects.begin(), subjects.end(), f.held_out) != subjects.end()) {
                m.accuracy += f.metrics.accuracy;
                m.balanced_accuracy += f.metrics.balanced_accuracy;
                ++m.n;
            }
        if (m.n > 0) {
            m.accuracy /= static_cast<double>(m.n);
            m.balanced_accuracy /= static_cast<double>(m.n);
        }
        return m;
    }

    nlohmann::json to_json() const {
        auto records = [](const std::vector<FoldRecord>& v) {
            nlohmann::json a = nlohmann::json::array();
            for (const auto& f : v)
                a.push_back({{"subject", f.held_out},
                             {"accuracy", f.metrics.accuracy},
                             {"balanced_accuracy", f.metrics.balanced_accuracy},
                             {"n_test", f.metrics.n}});
            return a;
        };
        nlohmann::json j;
        j["schema_version"] = kReportSchemaVersion;
        j["config"] = config;
        nlohmann::json cl = nlohmann::json::array();
        for (const auto& c : clusters)
            cl.push_back({{"cluster", c.cluster},
                          {"subjects", c.subjects},
                          {"skipped", c.skipped},
                          {"mean_accuracy", c.mean.accuracy},
                          {"mean_balanced_accuracy", c.mean.balanced_accuracy},
                          {"per_subject", records(c.per_subject)}});
        j["clusters"] = cl;
        j["baseline"] = {{"mean_accuracy", baseline_mean.accuracy},
                         {"mean_balanced_accuracy", baseline_mean.balanced_accuracy},
                         {"per_subject", records(baseline)}};
        j["warnings"] = warnings;
        return j;
    }

    std::string to_csv() const {
        std::string out = "scope,cluster,subject,accuracy,balanced_accuracy\n";
        for (const auto& c : clusters)
            for (const auto& f : c.per_subject)
                out += "cluster," + std::to_string(c.cluster) + ',' + f.held_out + ',' + io::fmt(f.metrics.accuracy) +
                       ',' + io::fmt(f.metrics.balanced_accuracy) + '\n';
        for (const auto& f : baseline)
            out += "baseline,," + f.held_out + ',' + io::fmt(f.metrics.accuracy) + ',' +
                   io::fmt(f.metrics.balanced_accuracy) + '\n';
        return out;
    }
};

inline Metrics mean_of(std::span<const FoldRecord> records) {
    Metrics m;
    for (const auto& f : records) {
        m.accuracy += f.metrics.accuracy;
        m.balanced_accuracy += f.metrics.balanced_accuracy;
    }
    m.n = static_cast<long long>(records.size());
    if (m.n > 0) {
        m.accuracy /= static_cast<double>(m.n);
        m.balanced_accuracy /= static_cast<double>(m.n);
    }
    return m;
}

/// Leave-one-subject-out inside every cluster, plus the no-clustering
/// baseline over all assigned subjects. Clusters with fewer than two subjects
/// are skipped and reported as warnings.
inline WithinClusterResult within_cluster_loso(const WindowDataset& ds, const ClusterAssignment& assignment,
                                               const ClassifierSpec& spec, std::uint64_t seed, int workers = 1) {
    if (assignment.empty()) fail(ErrorCode::InvalidSpec, "empty cluster assignment");
    std::map<int, std::vector<std::size_t>> members;
    for (const auto& [id, c] : assignment) {
        if (c < 0) fail(ErrorCode::InvalidSpec, "negative cluster index for " + id);
        members[c].push_back(subject_index(ds, id));
    }

    struct Job {
        int cluster; // -1 for the baseline
        std::size_t subject;
        std::vector<std::size_t> train_subjects;
    };
    std::vector<Job> jobs;
    WithinClusterResult res;
    for (auto& [c, subj] : members) {
        std::sort(subj.begin(), subj.end());
        if (subj.size() < 2) {
            res.warnings.push_back(std::string(error_code_name(ErrorCode::ClusterTooSmall)) + ": cluster " +
                                   std::to_string(c) + " has " + std::to_string(subj.size()) + " subject; skipped");
            continue;
        }
        for (auto s : subj) {
            Job j{c, s, {}};
            for (auto t : subj)
                if (t != s) j.train_subjects.push_back(t);
            jobs.push_back(std::move(j));
        }
    }
    std::vector<std::size_t> all;
    for (const auto& [c, subj] : members) all.insert(all.end(), subj.begin(), subj.end());
    std::sort(all.begin(), all.end());
    if (all.size() >= 2)
        for (auto s : all) {
            Job j{-1, s, {}};
            for (auto t : all)
                if (t != s) j.train_subjects.push_back(t);
            jobs.push_back(std::move(j));
        }

    auto records = parallel_map(jobs.size(), workers, [&](std::size_t k) {
        const auto& job = jobs[k];
        const auto train = windows_of_subjects(ds, {job.train_subjects.begin(), job.train_subjects.end()});
        const auto test = windows_of_subjects(ds, {job.subject});
        const auto tc = train_classifier(
            ds, train, spec,
            derive_seed(seed, {static_cast<std::uint64_t>(job.cluster + 1), static_cast<std::uint64_t>(job.subject)}));
        const auto o = predict_rows(tc, ds, test);
        return FoldRecord{static_cast<int>(k), ds.subject_ids[job.subject], metrics_of(o.confusion), train.size()};
    });

    for (const auto& [c, subj] : members) {
        ClusterLosoResult cr;
        cr.cluster = c;
        for (auto s : subj) cr.subjects.push_back(ds.subject_ids[s]);
        cr.skipped = subj.size() < 2;
        for (std::size_t k = 0; k < jobs.size(); ++k)
            if (jobs[k].cluster == c) cr.per_subject.push_back(records[k]);
        cr.mean = mean_of(cr.per_subject);
        res.clusters.push_back(std::move(cr));
    }
    for (std::size_t k = 0; k < jobs.size(); ++k)
        if (jobs[k].cluster < 0) res.baseline.push_back(records[k]);
    res.baseline_mean = mean_of(res.baseline);
    res.config["classifier"] = classifier_spec_json(spec);
    res.config["window"] = ds.window.window_size;
    res.config["stride"] = ds.window.stride;
    res.config["seed"] = seed;
    return res;
}

// ---------------------------------------------------------------------------
// Cluster-routed classification

enum class RoutingMode { PerWindow, PerSubject };

inline std::string_view routing_name(RoutingMode r) { return r == RoutingMode::PerWindow ? "per-window" : "per-subject"; }

/// Per-window vectors of the routing space, computed from the window values
/// the classifier sees.
inline std::vector<std::vector<double>> routing_vectors(const WindowDataset& ds, ClusterSpace space, int workers = 1) {
    return parallel_map(ds.size(), workers,
                        [&](std::size_t i) { return window_space_vector(ds.windows[i].values, space); });
}

/// Leave-subject-out evaluation where, per fold, subjects of the training
/// side are clustered (mean of their window vectors), one classifier is
/// trained per cluster, and test windows are routed to a cluster either one
/// by one or by the subject's majority cluster.
inline EvalReport routed_eval(const WindowDataset& ds, int k, RoutingMode routing, ClusterSpace space,
                              const ClassifierSpec& spec, const SplitPlan& split, int workers = 1,
                              const KMeansOptions& kmeans = {}) {
    if (space == ClusterSpace::MeanBpmProfile)
        fail(ErrorCode::InvalidSpec, "routing needs a window-feature space");
    const auto vectors = routing_vectors(ds, space, workers);
    const auto folds = leave_subject_out_folds(ds, split.seed, split.n_folds);

    struct Outcome {
        Confusion confusion{};
        std::vector<std::pair<std::string, int>> routed; // per held-out subject (PerSubject)
    };
    auto outcomes = parallel_map(folds.size(), workers, [&](std::size_t j) {
        const auto& fold = folds[j];
        std::map<std::size_t, std::vector<std::size_t>> by_subject; // train subject -> windows
        for (auto i : fold.train) by_subject[ds.subject_of[i]].push_back(i);
        std::vector<std::vector<double>> summaries;
        std::vector<std::size_t> train_subjects;
        for (const auto& [s, rows] : by_subject) {
            std::vector<std::vector<double>> v;
            for (auto i : rows) v.push_back(vectors[i]);
            summaries.push_back(mean_vector(v));
            train_subjects.push_back(s);
        }
        const std::uint64_t fold_seed = derive_seed(split.seed, {j});
        const auto fit = fit_cluster_model(summaries, k, space, fold_seed, true, kmeans);

        std::vector<TrainedClassifier> classifiers;
        for (int c = 0; c < k; ++c) {
            std::vector<std::size_t> rows;
            for (std::size_t t = 0; t < train_subjects.size(); ++t)
                if (fit.labels[t] == c) {
                    const auto& r = by_subject[train_subjects[t]];
                    rows.insert(rows.end(), r.begin(), r.end());
                }
            if (rows.empty()) fail(ErrorCode::EmptyCluster, "cluster " + std::to_string(c) + " has no training subject");
            std::sort(rows.begin(), rows.end());
            classifiers.push_back(train_classifier(ds, rows, spec, derive_seed(fold_seed, {static_cast<std::uint64_t>(c)})));
        }

        Outcome o;
        std::map<std::size_t, std::vector<std::size_t>> test_subjects;
        for (auto i : fold.test) test_subjects[ds.subject_of[i]].push_back(i);
        for (const auto& [s, rows] : test_subjects) {
            int subject_cluster = -1;
            if (routing == RoutingMode::PerSubject) {
                std::vector<std::vector<double>> v;
                for (auto i : rows) v.push_back(vectors[i]);
                subject_cluster = route_subject(fit.model, v);
                o.routed.emplace_back(ds.subject_ids[s], subject_cluster);
            }
            for (auto i : rows) {
                const int c = routing == RoutingMode::PerSubject ? subject_cluster : assign_window(fit.model, vectors[i]);
                const int pred = classifiers[static_cast<std::size_t>(c)].predict(ds.windows[i].values, ds.hc[i]);
                ++o.confusion[static_cast<std::size_t>(ds.labels[i])][static_cast<std::size_t>(pred)];
            }
        }
        return o;
    });

    EvalReport r;
    nlohmann::json routed = nlohmann::json::object();
    for (std::size_t j = 0; j < folds.size(); ++j) {
        r.confusion += outcomes[j].confusion;
        r.folds.push_back({static_cast<int>(j), folds[j].name, metrics_of(outcomes[j].confusion), folds[j].train.size()});
        for (const auto& [id, c] : outcomes[j].routed) routed[id] = c;
    }
    r.overall = metrics_of(r.confusion);
    r.config["classifier"] = classifier_spec_json(spec);
    r.config["window"] = ds.window.window_size;
    r.config["stride"] = ds.window.stride;
    r.config["seed"] = split.seed;
    r.config["split"] = std::string(split_kind_name(SplitKind::LeaveSubjectOut));
    r.config["n_folds"] = folds.size();
    r.config["routing"] = std::string(routing_name(routing));
    r.config["k"] = k;
    r.config["space"] = std::string(cluster_space_name(space));
    if (routing == RoutingMode::PerSubject) r.config["routed_clusters"] = routed;
    return r;
}

// ---------------------------------------------------------------------------
// Permutation importance

struct ImportanceEntry {
    std::string name;
    double importance = 0.0;
    int rank = 0; // 1-based, by descending importance
};

struct ImportanceReport {
    double baseline_balanced_accuracy = 0.0;
    int repeats = 0;
    std::vector<ImportanceEntry> entries; // sorted by rank

    std::string to_csv(std::size_t top = 0) const {
        std::string out = "name,importance,rank\n";
        const std::size_t n = top == 0 ? entries.size() : std::min(top, entries.size());
        for (std::size_t i = 0; i < n; ++i)
            out += entries[i].name + ',' + io::fmt(entries[i].importance) + ',' + std::to_string(entries[i].rank) + '\n';
        return out;
    }
};

inline std::string raw_input_name(std::size_t t) { return std::to_string(t); }

/// Inputs the classifier consumes: raw timesteps (nets) followed by
/// handcrafted features.
inline std::vector<std::string> classifier_input_names(const TrainedClassifier& tc, const WindowDataset& ds) {
    std::vector<std::string> names;
    if (tc.spec.uses_window())
        for (int t = 0; t < ds.window.window_size; ++t) names.push_back(raw_input_name(static_cast<std::size_t>(t)));
    if (tc.spec.uses_features())
        for (const auto& n : *ds.hc_names) names.push_back(n);
    return names;
}

/// Mean drop in balanced accuracy when one input is shuffled across the
/// evaluation rows; repeat r of input j shuffles with derive(seed, j, r).
inline ImportanceReport permutation_importance(const TrainedClassifier& tc, const WindowDataset& ds,
                                               std::span<const std::size_t> rows, int repeats, std::uint64_t seed,
                                               int workers = 1) {
    if (repeats < 5) fail(ErrorCode::InvalidSpec, "permutation importance needs at least 5 repeats");
    if (rows.empty()) fail(ErrorCode::EmptyDataset, "no evaluation rows");
    const auto names = classifier_input_names(tc, ds);
    const std::size_t n_window = tc.spec.uses_window() ? static_cast<std::size_t>(ds.window.window_size) : 0;
    std::vector<int> truth;
    for (auto i : rows) truth.push_back(ds.labels[i]);

    auto balanced = [&](auto&& value_of) {
        std::vector<int> pred;
        pred.reserve(rows.size());
        std::vector<double> w, h;
        for (std::size_t r = 0; r < rows.size(); ++r) {
            w = ds.windows[rows[r]].values;
            h = ds.hc[rows[r]];
            value_of(r, w, h);
            pred.push_back(tc.predict(w, h));
        }
        return metrics_of(confusion_of(truth, pred)).balanced_accuracy;
    };
    const double base = balanced([](std::size_t, std::vector<double>&, std::vector<double>&) {});

    auto drops = parallel_map(names.size(), workers, [&](std::size_t j) {
        std::vector<double> column;
        for (auto i : rows) column.push_back(j < n_window ? ds.windows[i].values[j] : ds.hc[i][j - n_window]);
        double total = 0.0;
        for (int r = 0; r < repeats; ++r) {
            std::vector<std::size_t> perm(rows.size());
            std::iota(perm.begin(), perm.end(), std::size_t{0});
            Rng rng(derive_seed(seed, {j, static_cast<std::uint64_t>(r)}));
            rng.shuffle(std::span<std::size_t>(perm));
            total += base - balanced([&](std::size_t row, std::vector<double>& w, std::vector<double>& h) {
                const double v = column[perm[row]];
                if (j < n_window) w[j] = v;
                else h[j - n_window] = v;
            });
        }
        return total / repeats;
    });

    ImportanceReport rep;
    rep.baseline_balanced_accuracy = base;
    rep.repeats = repeats;
    std::vector<std::size_t> order(names.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return drops[a] > drops[b]; });
    for (std::size_t r = 0; r < order.size(); ++r)
        rep.entries.push_back({names[order[r]], drops[order[r]], static_cast<int>(r) + 1});
    return rep;
}

// ---------------------------------------------------------------------------
// Misclassification timeline

struct TimelineRow {
    double t = 0.0;
    double bpm = 0.0;
    ActivityLabel truth = ActivityLabel::Rest;
    ActivityLabel pred = ActivityLabel::Rest;
    bool correct = false;
    bool transition = false; // label differs from the previous sample
};

struct Timeline {
    std::string subject_id;
    std::vector<TimelineRow> rows;

    std::size_t transitions() const {
        return static_cast<std::size_t>(std::count_if(rows.begin(), rows.end(), [](const TimelineRow& r) { return r.transition; }));
    }

    std::string to_csv() const {
        std::string out = "t,bpm,true,pred,correct,transition\n";
        for (const auto& r : rows)
            out += io::fmt(r.t) + ',' + io::fmt(r.bpm) + ',' + std::string(label_name(r.truth)) + ',' +
                   std::string(label_name(r.pred)) + ',' + (r.correct ? "1" : "0") + ',' + (r.transition ? "1" : "0") +
                   '\n';
        return out;
    }
};

/// Predicts every window of the series and labels each sample with the
/// prediction of the window whose centre is nearest (earlier window on ties).
inline Timeline misclassification_timeline(const TrainedClassifier& tc, const SubjectSeries& series,
                                           const WindowConfig& cfg) {
    cfg.validate();
    if (window_count(series.samples.size(), cfg) == 0)
        fail(ErrorCode::SeriesTooShort, series.subject_id + " is shorter than one window");
    const auto ds = prepare_dataset(std::span<const SubjectSeries>(&series, 1), cfg, tc.spec);
    std::vector<ActivityLabel> pred;
    for (std::size_t i = 0; i < ds.size(); ++i) pred.push_back(label_from_index(tc.predict(ds.windows[i].values, ds.hc[i])));

    Timeline tl;
    tl.subject_id = series.subject_id;
    std::size_t w = 0;
    const double half = 0.5 * (cfg.window_size - 1);
    auto center = [&](std::size_t k) { return static_cast<double>(ds.windows[k].start_index) + half; };
    for (std::size_t i = 0; i < series.samples.size(); ++i) {
        const double x = static_cast<double>(i);
        while (w + 1 < ds.size() && std::abs(center(w + 1) - x) < std::abs(center(w) - x)) ++w;
        const auto& s = series.samples[i];
        TimelineRow row{s.timestamp, s.bpm, s.label, pred[w], pred[w] == s.label,
                        i > 0 && s.label != series.samples[i - 1].label};
        tl.rows.push_back(row);
    }
    return tl;
}

struct TransitionErrorRates {
    double after_transition = 0.0; // error rate within the horizon after a transition
    double steady = 0.0;           // error rate elsewhere
    std::size_t n_after = 0, n_steady = 0;
};

inline TransitionErrorRates transition_error_rates(std::span<const Timeline> timelines, double horizon_s = 60.0) {
    TransitionErrorRates out;
    std::size_t err_after = 0, err_steady = 0;
    for (const auto& tl : timelines) {
        double last_transition = -std::numeric_limits<double>::infinity();
        for (const auto& r : tl.rows) {
            if (r.transition) last_transition = r.t;
            if (r.t - last_transition < horizon_s) {
                ++out.n_after;
                err_after += !r.correct;
            } else {
                ++out.n_steady;
                err_steady += !r.correct;
            }
        }
    }
    if (out.n_after) out.after_transition = static_cast<double>(err_after) / static_cast<double>(out.n_after);
    if (out.n_steady) out.steady = static_cast<double>(err_steady) / static_cast<double>(out.n_steady);
    return out;
}

} // namespace hrgroup

#endif
