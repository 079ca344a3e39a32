#ifndef HRGROUP_CONFIG_HPP
#define HRGROUP_CONFIG_HPP

// Experiment configuration: a sectioned key = value text file, the effective
// configuration it describes, run ids, and classifier files.
//
//   # comment
//   [section]
//   key = value

#include "hrgroup/evaluation.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <map>
#include <optional>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <type_traits>
#include <vector>

namespace hrgroup {

// ---------------------------------------------------------------------------
// Sectioned key = value text

/// section -> key -> value, in file order of first appearance per map.
using IniDoc = std::map<std::string, std::map<std::string, std::string>>;

inline IniDoc parse_ini(std::string_view text) {
    IniDoc doc;
    std::string section;
    int line_no = 0;
    for (const auto& raw : io::split_lines(text)) {
        ++line_no;
        auto line = io::trim(raw);
        if (line.empty() || line.front() == '#' || line.front() == ';') continue;
        const auto where = "line " + std::to_string(line_no) + ": ";
        if (line.front() == '[') {
            if (line.back() != ']') fail(ErrorCode::ConfigError, where + "unterminated section header");
            section = io::lower(io::trim(line.substr(1, line.size() - 2)));
            if (section.empty()) fail(ErrorCode::ConfigError, where + "empty section name");
            doc[section];
            continue;
        }
        const auto eq = line.find('=');
        if (eq == std::string_view::npos) fail(ErrorCode::ConfigError, where + "expected key = value");
        if (section.empty()) fail(ErrorCode::ConfigError, where + "key outside of a section");
        const auto key = io::lower(io::trim(line.substr(0, eq)));
        if (key.empty()) fail(ErrorCode::ConfigError, where + "empty key");
        auto& slot = doc[section];
        if (slot.count(key)) fail(ErrorCode::ConfigError, where + "duplicate key " + section + "." + key);
        slot[key] = std::string(io::trim(line.substr(eq + 1)));
    }
    return doc;
}

/// Applies "section.key=value".
inline void apply_override(IniDoc& doc, std::string_view assignment) {
    const auto eq = assignment.find('=');
    const auto dot = assignment.find('.');
    if (eq == std::string_view::npos || dot == std::string_view::npos || dot > eq)
        fail(ErrorCode::ConfigError, "override must look like section.key=value: " + std::string(assignment));
    const auto section = io::lower(io::trim(assignment.substr(0, dot)));
    const auto key = io::lower(io::trim(assignment.substr(dot + 1, eq - dot - 1)));
    if (section.empty() || key.empty()) fail(ErrorCode::ConfigError, "empty section or key in " + std::string(assignment));
    doc[section][key] = std::string(io::trim(assignment.substr(eq + 1)));
}

// ---------------------------------------------------------------------------
// Effective configuration

enum class CorpusSource { Synthetic, Files };
enum class RoutingChoice { None, PerWindow, PerSubject };

struct ExperimentConfig {
    std::optional<std::uint64_t> seed;

    // corpus
    CorpusSource source = CorpusSource::Synthetic;
    std::string path;
    CorpusSchema schema;
    double period_s = 1.0;
    double gap_factor = kDefaultGapFactor;
    SyntheticCohortSpec synthetic;

    // windows; train/eval/importance/timeline use the first size and stride
    std::vector<int> window_sizes{80};
    std::vector<int> strides{10};

    ClassifierSpec classifier;

    // clustering
    ClusterSpace space = ClusterSpace::MeanBpmProfile;
    int k = 4;
    RoutingChoice routing = RoutingChoice::None;
    bool cluster_standardize = true;
    KMeansOptions kmeans;

    SplitPlan split;

    int importance_repeats = 5;
    int importance_top = 20;

    std::vector<std::string> timeline_subjects; // empty: the first fold's held-out subjects
    double timeline_horizon_s = 60.0;

    WindowConfig window() const { return {window_sizes.front(), strides.front()}; }
    std::uint64_t run_seed() const {
        if (!seed) fail(ErrorCode::ConfigError, "seed is required ([run] seed or --seed)");
        return *seed;
    }
};

namespace config_detail {

template <class E, std::size_t N>
E parse_enum(std::string_view value, const std::array<std::pair<std::string_view, E>, N>& table, std::string_view key) {
    const auto v = io::lower(value);
    for (const auto& [name, e] : table)
        if (v == io::lower(name)) return e;
    std::string options;
    for (const auto& [name, e] : table) options += (options.empty() ? "" : ", ") + std::string(name);
    fail(ErrorCode::ConfigError, std::string(key) + ": '" + std::string(value) + "' is not one of " + options);
}

template <class E, std::size_t N>
std::string_view enum_name(E e, const std::array<std::pair<std::string_view, E>, N>& table) {
    for (const auto& [name, v] : table)
        if (v == e) return name;
    return "?";
}

inline constexpr std::array<std::pair<std::string_view, CorpusSource>, 2> kSources{
    {{"synthetic", CorpusSource::Synthetic}, {"files", CorpusSource::Files}}};
inline constexpr std::array<std::pair<std::string_view, FeatureSetKind>, 5> kFeatureSets{
    {{"Base", FeatureSetKind::Base},
     {"BaseMfcc", FeatureSetKind::BaseMfcc},
     {"Statistical", FeatureSetKind::Statistical},
     {"Temporal", FeatureSetKind::Temporal},
     {"StatTemporal", FeatureSetKind::StatTemporal}}};
inline constexpr std::array<std::pair<std::string_view, StandardizationMode>, 3> kStandardization{
    {{"None", StandardizationMode::None},
     {"DataStd", StandardizationMode::DataStd},
     {"FeatureStd", StandardizationMode::FeatureStd}}};
inline constexpr std::array<std::pair<std::string_view, ModelKind>, 2> kModels{
    {{"svm", ModelKind::Svm}, {"net", ModelKind::Net}}};
inline constexpr std::array<std::pair<std::string_view, SvmInput>, 2> kSvmInputs{
    {{"features", SvmInput::Features}, {"raw-window", SvmInput::RawWindow}}};
inline constexpr std::array<std::pair<std::string_view, KernelKind>, 2> kKernels{
    {{"rbf", KernelKind::Rbf}, {"linear", KernelKind::Linear}}};
inline constexpr std::array<std::pair<std::string_view, ArchitectureId>, 4> kArchitectures{
    {{"Baseline", ArchitectureId::Baseline},
     {"Model1", ArchitectureId::Model1},
     {"Model2", ArchitectureId::Model2},
     {"Model3", ArchitectureId::Model3}}};
inline constexpr std::array<std::pair<std::string_view, WindowInput>, 2> kWindowInputs{
    {{"series", WindowInput::Series}, {"window-zscore", WindowInput::WindowZScore}}};
inline constexpr std::array<std::pair<std::string_view, ClusterSpace>, 3> kSpaces{
    {{"MeanBpmProfile", ClusterSpace::MeanBpmProfile},
     {"StatisticalWindow", ClusterSpace::StatisticalWindow},
     {"TemporalWindow", ClusterSpace::TemporalWindow}}};
inline constexpr std::array<std::pair<std::string_view, RoutingChoice>, 3> kRoutings{
    {{"none", RoutingChoice::None}, {"per-window", RoutingChoice::PerWindow}, {"per-subject", RoutingChoice::PerSubject}}};
inline constexpr std::array<std::pair<std::string_view, SplitKind>, 4> kSplits{
    {{"random-window", SplitKind::RandomWindow},
     {"leave-subject-out", SplitKind::LeaveSubjectOut},
     {"within-cluster-loso", SplitKind::WithinClusterLoso},
     {"cross-cluster", SplitKind::CrossCluster}}};

class Reader {
public:
    explicit Reader(const IniDoc& doc) : doc_(doc) {}

    std::optional<std::string> get(const std::string& section, const std::string& key) {
        used_[section].insert(key);
        const auto s = doc_.find(section);
        if (s == doc_.end()) return std::nullopt;
        const auto k = s->second.find(key);
        if (k == s->second.end()) return std::nullopt;
        return k->second;
    }

    std::string name(const std::string& section, const std::string& key) const { return section + "." + key; }

    void str(const std::string& section, const std::string& key, std::string& out) {
        if (auto v = get(section, key)) out = *v;
    }
    void real(const std::string& section, const std::string& key, double& out) {
        if (auto v = get(section, key)) {
            const auto d = io::parse_double(*v);
            if (!d || !std::isfinite(*d)) fail(ErrorCode::ConfigError, name(section, key) + ": not a number: " + *v);
            out = *d;
        }
    }
    template <class Int>
    void integer(const std::string& section, const std::string& key, Int& out) {
        if (auto v = get(section, key)) {
            const auto i = io::parse_int(*v);
            if (!i) fail(ErrorCode::ConfigError, name(section, key) + ": not an integer: " + *v);
            if constexpr (std::is_unsigned_v<Int>)
                if (*i < 0) fail(ErrorCode::ConfigError, name(section, key) + ": must be non-negative");
            out = static_cast<Int>(*i);
        }
    }
    void boolean(const std::string& section, const std::string& key, bool& out) {
        if (auto v = get(section, key)) out = parse_bool(*v, name(section, key));
    }
    void int_list(const std::string& section, const std::string& key, std::vector<int>& out) {
        if (auto v = get(section, key)) {
            out.clear();
            for (const auto& part : io::split(*v, ',')) {
                const auto i = io::parse_int(part);
                if (!i) fail(ErrorCode::ConfigError, name(section, key) + ": not an integer list: " + *v);
                out.push_back(static_cast<int>(*i));
            }
        }
    }
    template <class E, std::size_t N>
    void choice(const std::string& section, const std::string& key, E& out,
                const std::array<std::pair<std::string_view, E>, N>& table) {
        if (auto v = get(section, key)) out = parse_enum(*v, table, name(section, key));
    }

    static bool parse_bool(std::string_view v, const std::string& what) {
        const auto s = io::lower(v);
        if (s == "true" || s == "yes" || s == "1" || s == "on") return true;
        if (s == "false" || s == "no" || s == "0" || s == "off") return false;
        fail(ErrorCode::ConfigError, what + ": not a boolean: " + std::string(v));
    }

    /// Every key in the document must have been read.
    void reject_unknown() const {
        for (const auto& [section, keys] : doc_) {
            const auto u = used_.find(section);
            if (u == used_.end()) fail(ErrorCode::ConfigError, "unknown section [" + section + "]");
            for (const auto& [key, value] : keys)
                if (!u->second.count(key)) fail(ErrorCode::ConfigError, "unknown key " + section + "." + key);
        }
    }

private:
    const IniDoc& doc_;
    std::map<std::string, std::set<std::string>> used_;
};

} // namespace config_detail

inline void validate(const ExperimentConfig& c) {
    if (c.source == CorpusSource::Files && c.path.empty())
        fail(ErrorCode::ConfigError, "corpus.path is required when corpus.source = files");
    if (c.window_sizes.empty() || c.strides.empty()) fail(ErrorCode::ConfigError, "window sizes and strides must be non-empty");
    for (int w : c.window_sizes)
        for (int s : c.strides) WindowConfig{w, s}.validate();
    if (!(c.period_s > 0.0)) fail(ErrorCode::ConfigError, "corpus.period must be positive");
    if (!(c.gap_factor > 0.0)) fail(ErrorCode::ConfigError, "corpus.gap_factor must be positive");
    if (c.k < 1) fail(ErrorCode::ConfigError, "clustering.k must be positive");
    if (c.kmeans.restarts < 1 || c.kmeans.max_iter < 1) fail(ErrorCode::ConfigError, "clustering restarts/max_iter must be positive");
    if (!(c.classifier.C > 0.0)) fail(ErrorCode::ConfigError, "model.C must be positive");
    if (c.classifier.kernel.gamma && !(*c.classifier.kernel.gamma > 0.0))
        fail(ErrorCode::ConfigError, "model.gamma must be positive");
    if (c.classifier.model == ModelKind::Net) {
        const auto& n = c.classifier.net;
        if (n.epochs < 1 || n.batch_size < 1 || !(n.learning_rate > 0.0) || !(n.dropout_p >= 0.0 && n.dropout_p < 1.0))
            fail(ErrorCode::ConfigError, "invalid net training settings");
    }
    c.classifier.mfcc.validate();
    if (!(c.split.test_fraction > 0.0 && c.split.test_fraction < 1.0))
        fail(ErrorCode::ConfigError, "split.test_fraction must lie in (0, 1)");
    if (c.split.n_folds < 0) fail(ErrorCode::ConfigError, "split.folds must be non-negative");
    if (c.importance_repeats < 5) fail(ErrorCode::ConfigError, "importance.repeats must be at least 5");
    if (c.importance_top < 0) fail(ErrorCode::ConfigError, "importance.top must be non-negative");
    if (!(c.timeline_horizon_s > 0.0)) fail(ErrorCode::ConfigError, "timeline.horizon must be positive");
    hrgroup::validate(c.synthetic);
}

inline ExperimentConfig config_from_ini(const IniDoc& doc) {
    using namespace config_detail;
    ExperimentConfig c;
    Reader r(doc);
    if (auto v = r.get("run", "seed")) {
        const auto i = io::parse_int(*v);
        if (!i || *i < 0) fail(ErrorCode::ConfigError, "run.seed must be a non-negative integer");
        c.seed = static_cast<std::uint64_t>(*i);
    }

    r.choice("corpus", "source", c.source, kSources);
    r.str("corpus", "path", c.path);
    r.str("corpus", "device", c.schema.device_filter);
    r.real("corpus", "period", c.period_s);
    r.real("corpus", "gap_factor", c.gap_factor);
    auto& syn = c.synthetic;
    r.integer("corpus", "subjects", syn.n_subjects);
    r.integer("corpus", "groups", syn.n_groups);
    r.real("corpus", "baseline_mean", syn.baseline_mean);
    r.real("corpus", "baseline_std", syn.baseline_std);
    r.real("corpus", "lag_tau", syn.lag_tau_s);
    r.real("corpus", "noise_ar", syn.noise_ar_coeff);
    r.real("corpus", "noise_std", syn.noise_std);
    r.real("corpus", "duration_jitter", syn.duration_jitter);
    r.real("corpus", "offset_std", syn.subject_offset_std);

    r.int_list("window", "sizes", c.window_sizes);
    r.int_list("window", "strides", c.strides);

    auto& cl = c.classifier;
    r.choice("features", "set", cl.features, kFeatureSets);
    if (auto v = r.get("features", "standardized_input"); v && io::lower(*v) != "auto")
        cl.features_on_standardized = Reader::parse_bool(*v, "features.standardized_input");
    r.integer("features", "mfcc_bands", cl.mfcc.n_mel_bands);
    r.integer("features", "mfcc_coefficients", cl.mfcc.n_coefficients);
    r.real("features", "mfcc_sample_rate", cl.mfcc.sample_rate_hz);
    r.choice("preprocess", "standardization", cl.standardization, kStandardization);

    r.choice("model", "kind", cl.model, kModels);
    r.choice("model", "input", cl.svm_input, kSvmInputs);
    r.choice("model", "kernel", cl.kernel.kind, kKernels);
    r.real("model", "c", cl.C);
    if (auto v = r.get("model", "gamma"); v && io::lower(*v) != "auto") {
        const auto d = io::parse_double(*v);
        if (!d) fail(ErrorCode::ConfigError, "model.gamma: not a number: " + *v);
        cl.kernel.gamma = *d;
    }
    r.real("model", "tol", cl.svm.tol);
    r.choice("model", "architecture", cl.arch, kArchitectures);
    r.choice("model", "window_input", cl.window_input, kWindowInputs);
    r.integer("model", "epochs", cl.net.epochs);
    r.integer("model", "batch_size", cl.net.batch_size);
    r.real("model", "learning_rate", cl.net.learning_rate);
    r.real("model", "dropout", cl.net.dropout_p);

    r.choice("clustering", "space", c.space, kSpaces);
    r.integer("clustering", "k", c.k);
    r.choice("clustering", "routing", c.routing, kRoutings);
    r.boolean("clustering", "standardize", c.cluster_standardize);
    r.integer("clustering", "restarts", c.kmeans.restarts);
    r.integer("clustering", "max_iter", c.kmeans.max_iter);

    r.choice("split", "kind", c.split.kind, kSplits);
    r.integer("split", "folds", c.split.n_folds);
    r.real("split", "test_fraction", c.split.test_fraction);
    r.integer("split", "train_cluster", c.split.train_cluster);
    r.integer("split", "test_cluster", c.split.test_cluster);

    r.integer("importance", "repeats", c.importance_repeats);
    r.integer("importance", "top", c.importance_top);

    if (auto v = r.get("timeline", "subjects"); v && !v->empty()) c.timeline_subjects = io::split(*v, ',');
    r.real("timeline", "horizon", c.timeline_horizon_s);

    r.reject_unknown();
    validate(c);
    return c;
}

inline ExperimentConfig parse_config(std::string_view text) { return config_from_ini(parse_ini(text)); }

/// Canonical text of the effective configuration: every key, fixed order,
/// round-trip number formatting. Parsing it gives back the same config.
inline std::string config_to_ini(const ExperimentConfig& c) {
    using namespace config_detail;
    std::ostringstream o;
    auto list = [](const std::vector<int>& v) {
        std::string s;
        for (int x : v) s += (s.empty() ? "" : ",") + std::to_string(x);
        return s;
    };
    const auto& cl = c.classifier;
    const auto& syn = c.synthetic;
    o << "[run]\n";
    if (c.seed) o << "seed = " << *c.seed << '\n';
    o << "\n[corpus]\n"
      << "source = " << enum_name(c.source, kSources) << '\n'
      << "path = " << c.path << '\n'
      << "device = " << c.schema.device_filter << '\n'
      << "period = " << io::fmt(c.period_s) << '\n'
      << "gap_factor = " << io::fmt(c.gap_factor) << '\n'
      << "subjects = " << syn.n_subjects << '\n'
      << "groups = " << syn.n_groups << '\n'
      << "baseline_mean = " << io::fmt(syn.baseline_mean) << '\n'
      << "baseline_std = " << io::fmt(syn.baseline_std) << '\n'
      << "lag_tau = " << io::fmt(syn.lag_tau_s) << '\n'
      << "noise_ar = " << io::fmt(syn.noise_ar_coeff) << '\n'
      << "noise_std = " << io::fmt(syn.noise_std) << '\n'
      << "duration_jitter = " << io::fmt(syn.duration_jitter) << '\n'
      << "offset_std = " << io::fmt(syn.subject_offset_std) << '\n';
    o << "\n[window]\n"
      << "sizes = " << list(c.window_sizes) << '\n'
      << "strides = " << list(c.strides) << '\n';
    o << "\n[features]\n"
      << "set = " << enum_name(cl.features, kFeatureSets) << '\n'
      << "standardized_input = "
      << (cl.features_on_standardized ? (*cl.features_on_standardized ? "true" : "false") : "auto") << '\n'
      << "mfcc_bands = " << cl.mfcc.n_mel_bands << '\n'
      << "mfcc_coefficients = " << cl.mfcc.n_coefficients << '\n'
      << "mfcc_sample_rate = " << io::fmt(cl.mfcc.sample_rate_hz) << '\n';
    o << "\n[preprocess]\n"
      << "standardization = " << enum_name(cl.standardization, kStandardization) << '\n';
    o << "\n[model]\n"
      << "kind = " << enum_name(cl.model, kModels) << '\n'
      << "input = " << enum_name(cl.svm_input, kSvmInputs) << '\n'
      << "kernel = " << enum_name(cl.kernel.kind, kKernels) << '\n'
      << "C = " << io::fmt(cl.C) << '\n'
      << "gamma = " << (cl.kernel.gamma ? io::fmt(*cl.kernel.gamma) : std::string("auto")) << '\n'
      << "tol = " << io::fmt(cl.svm.tol) << '\n'
      << "architecture = " << enum_name(cl.arch, kArchitectures) << '\n'
      << "window_input = " << enum_name(cl.window_input, kWindowInputs) << '\n'
      << "epochs = " << cl.net.epochs << '\n'
      << "batch_size = " << cl.net.batch_size << '\n'
      << "learning_rate = " << io::fmt(cl.net.learning_rate) << '\n'
      << "dropout = " << io::fmt(cl.net.dropout_p) << '\n';
    o << "\n[clustering]\n"
      << "space = " << enum_name(c.space, kSpaces) << '\n'
      << "k = " << c.k << '\n'
      << "routing = " << enum_name(c.routing, kRoutings) << '\n'
      << "standardize = " << (c.cluster_standardize ? "true" : "false") << '\n'
      << "restarts = " << c.kmeans.restarts << '\n'
      << "max_iter = " << c.kmeans.max_iter << '\n';
    o << "\n[split]\n"
      << "kind = " << enum_name(c.split.kind, kSplits) << '\n'
      << "folds = " << c.split.n_folds << '\n'
      << "test_fraction = " << io::fmt(c.split.test_fraction) << '\n'
      << "train_cluster = " << c.split.train_cluster << '\n'
      << "test_cluster = " << c.split.test_cluster << '\n';
    o << "\n[importance]\n"
      << "repeats = " << c.importance_repeats << '\n'
      << "top = " << c.importance_top << '\n';
    std::string subjects;
    for (const auto& s : c.timeline_subjects) subjects += (subjects.empty() ? "" : ",") + s;
    o << "\n[timeline]\n"
      << "subjects = " << subjects << '\n'
      << "horizon = " << io::fmt(c.timeline_horizon_s) << '\n';
    return o.str();
}

/// Content hash of the command and its effective configuration.
inline std::string run_id(std::string_view command, const ExperimentConfig& c) {
    return std::string(command) + "-" + io::hex64(io::fnv1a(config_to_ini(c), io::fnv1a(std::string(command) + "\n")));
}

// ---------------------------------------------------------------------------
// Classifier files

inline constexpr std::string_view kClassifierFormatTag = "hrgroup-classifier";
inline constexpr int kClassifierFormatVersion = 1;

struct ClassifierFile {
    ExperimentConfig config; // source of the classifier settings and window
    TrainedClassifier classifier;
};

inline std::string save_classifier(const ExperimentConfig& cfg, const TrainedClassifier& tc) {
    std::ostringstream o;
    o << kClassifierFormatTag << ' ' << kClassifierFormatVersion << '\n';
    const auto ini = config_to_ini(cfg);
    o << "config " << io::split_lines(ini).size() << '\n' << ini;
    if (tc.hc_scaler) {
        o << "scaler " << tc.hc_scaler->dim() << '\n';
        for (std::size_t j = 0; j < tc.hc_scaler->dim(); ++j)
            o << io::hexfloat(tc.hc_scaler->mean[j]) << ' ' << io::hexfloat(tc.hc_scaler->std[j]) << '\n';
    } else {
        o << "scaler none\n";
    }
    o << "window_scale " << io::hexfloat(tc.window_scale.mean) << ' ' << io::hexfloat(tc.window_scale.std) << '\n';
    if (tc.svm) o << "model svm\n" << serialize_svm(*tc.svm);
    else if (tc.net) o << "model net\n" << save_net(*tc.net);
    else fail(ErrorCode::InvariantViolation, "classifier was never trained");
    return o.str();
}

inline ClassifierFile load_classifier(std::string_view text) {
    const auto lines = io::split_lines(text);
    std::size_t at = 0;
    auto line = [&]() -> const std::string& {
        if (at >= lines.size()) fail(ErrorCode::MalformedInput, "classifier file: truncated");
        return lines[at++];
    };
    auto words = [&]() { return io::split(line(), ' '); };
    auto w = words();
    if (w.size() != 2 || w[0] != kClassifierFormatTag || w[1] != std::to_string(kClassifierFormatVersion))
        fail(ErrorCode::MalformedInput, "classifier file: bad header");
    w = words();
    const auto n_config = w.size() == 2 && w[0] == "config" ? io::parse_int(w[1]) : std::nullopt;
    if (!n_config || *n_config < 0) fail(ErrorCode::MalformedInput, "classifier file: expected config");
    std::string ini;
    for (long long i = 0; i < *n_config; ++i) ini += line() + '\n';
    ClassifierFile f;
    try {
        f.config = parse_config(ini);
    } catch (const Error& e) {
        fail(ErrorCode::MalformedInput, std::string("classifier file: embedded config: ") + e.what());
    }
    auto& tc = f.classifier;
    tc.spec = f.config.classifier;
    w = words();
    if (w.size() != 2 || w[0] != "scaler") fail(ErrorCode::MalformedInput, "classifier file: expected scaler");
    if (w[1] != "none") {
        const auto d = io::parse_int(w[1]);
        if (!d || *d < 0) fail(ErrorCode::MalformedInput, "classifier file: scaler size");
        Scaler sc;
        for (long long j = 0; j < *d; ++j) {
            const auto p = words();
            if (p.size() != 2) fail(ErrorCode::MalformedInput, "classifier file: scaler row");
            sc.mean.push_back(io::parse_hexfloat(p[0]));
            sc.std.push_back(io::parse_hexfloat(p[1]));
        }
        tc.hc_scaler = std::move(sc);
    }
    w = words();
    if (w.size() != 3 || w[0] != "window_scale") fail(ErrorCode::MalformedInput, "classifier file: expected window_scale");
    tc.window_scale = {io::parse_hexfloat(w[1]), io::parse_hexfloat(w[2])};
    w = words();
    if (w.size() != 2 || w[0] != "model") fail(ErrorCode::MalformedInput, "classifier file: expected model");
    std::string rest;
    while (at < lines.size()) rest += line() + '\n';
    if (w[1] == "svm") tc.svm = deserialize_svm(rest);
    else if (w[1] == "net") tc.net = load_net(rest);
    else fail(ErrorCode::MalformedInput, "classifier file: unknown model kind " + w[1]);
    if ((tc.spec.model == ModelKind::Svm) != tc.svm.has_value())
        fail(ErrorCode::MalformedInput, "classifier file: model kind does not match its config");
    return f;
}

} // namespace hrgroup

#endif
