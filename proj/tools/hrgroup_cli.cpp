// hrgroup command-line front end. Every command reads an experiment config,
// writes its artifacts to <out>/<run-id>/ together with manifest.json and the
// effective config.ini, and exits 0 (ok), 2 (config), 3 (data) or 4 (internal).

#include "hrgroup/config.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace hrgroup;

namespace {

struct Options {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::string out = "out";
    int workers = 1;
    std::vector<std::string> overrides;
    // command specific
    std::optional<int> subjects, groups;
    std::string input;
    std::string model;
};

int exit_code(ErrorCode c) {
    switch (c) {
    case ErrorCode::ConfigError:
    case ErrorCode::InvalidSpec:
    case ErrorCode::InvalidConfig: return 2;
    case ErrorCode::InvariantViolation: return 4;
    default: return 3;
    }
}

ExperimentConfig load_config(const Options& o) {
    IniDoc doc;
    if (!o.config_path.empty()) {
        std::string text;
        try {
            text = io::read_file(o.config_path);
        } catch (const Error& e) {
            fail(ErrorCode::ConfigError, e.what());
        }
        doc = parse_ini(text);
    }
    for (const auto& s : o.overrides) apply_override(doc, s);
    if (o.seed) doc["run"]["seed"] = std::to_string(*o.seed);
    if (o.subjects) doc["corpus"]["subjects"] = std::to_string(*o.subjects);
    if (o.groups) doc["corpus"]["groups"] = std::to_string(*o.groups);
    if (!o.input.empty()) {
        doc["corpus"]["source"] = "files";
        doc["corpus"]["path"] = o.input;
    }
    auto cfg = config_from_ini(doc);
    cfg.run_seed();
    return cfg;
}

/// Collects artifacts in memory and publishes them atomically.
class RunWriter {
public:
    RunWriter(std::string command, const ExperimentConfig& cfg) : command_(std::move(command)), cfg_(cfg) {}

    void add(const std::string& rel, std::string content) { files_[rel] = std::move(content); }
    void input(const std::string& name, const std::string& content) { inputs_[name] = io::hex64(io::fnv1a(content)); }

    fs::path publish(const fs::path& out_root) {
        const auto id = run_id(command_, cfg_);
        const auto ini = config_to_ini(cfg_);
        add("config.ini", ini);

        nlohmann::json manifest;
        manifest["schema_version"] = kReportSchemaVersion;
        manifest["command"] = command_;
        manifest["run_id"] = id;
        manifest["seed"] = cfg_.run_seed();
        nlohmann::json config = nlohmann::json::object();
        for (const auto& [section, keys] : parse_ini(ini))
            for (const auto& [key, value] : keys) config[section][key] = value;
        manifest["config"] = config;
        nlohmann::json artifacts = nlohmann::json::array();
        for (const auto& [rel, content] : files_)
            artifacts.push_back({{"path", rel}, {"bytes", content.size()}, {"fnv1a64", io::hex64(io::fnv1a(content))}});
        manifest["artifacts"] = artifacts;
        if (!inputs_.empty()) manifest["inputs"] = inputs_;

        const auto final_dir = out_root / id;
        const auto tmp = out_root / ("." + id + ".partial");
        std::error_code ec;
        fs::create_directories(out_root, ec);
        if (ec) fail(ErrorCode::IoError, "cannot create " + out_root.string() + ": " + ec.message());
        fs::remove_all(tmp, ec);
        try {
            fs::create_directories(tmp);
            for (const auto& [rel, content] : files_) {
                const auto p = tmp / rel;
                fs::create_directories(p.parent_path());
                io::write_file(p, content);
            }
            io::write_file(tmp / "manifest.json", manifest.dump(2) + "\n");
            fs::remove_all(final_dir);
            fs::rename(tmp, final_dir);
        } catch (const fs::filesystem_error& e) {
            fs::remove_all(tmp, ec);
            fail(ErrorCode::IoError, e.what());
        } catch (...) {
            fs::remove_all(tmp, ec);
            throw;
        }
        return final_dir;
    }

private:
    std::string command_;
    const ExperimentConfig& cfg_;
    std::map<std::string, std::string> files_;
    std::map<std::string, std::string> inputs_;
};

struct Corpus {
    std::vector<SubjectSeries> series;
    std::optional<ClusterAssignment> latent_groups;
    std::vector<Gap> gaps;
};

Corpus load_corpus(const ExperimentConfig& cfg) {
    Corpus c;
    if (cfg.source == CorpusSource::Synthetic) {
        auto spec = cfg.synthetic;
        spec.seed = cfg.run_seed();
        auto cohort = generate_synthetic(spec);
        c.series = std::move(cohort.series);
        c.latent_groups = ClusterAssignment(cohort.groups.begin(), cohort.groups.end());
        return c;
    }
    for (const auto& s : parse_corpus(cfg.path, cfg.schema)) {
        auto r = resample_uniform(s, cfg.period_s, cfg.gap_factor);
        c.gaps.insert(c.gaps.end(), r.gaps.begin(), r.gaps.end());
        c.series.push_back(std::move(r.series));
    }
    if (c.series.empty()) fail(ErrorCode::EmptyDataset, "no series in " + cfg.path);
    return c;
}

SplitPlan split_of(const ExperimentConfig& cfg) {
    auto p = cfg.split;
    p.seed = cfg.run_seed();
    return p;
}

std::string wsuffix(const WindowConfig& w) {
    return "W" + std::to_string(w.window_size) + "_S" + std::to_string(w.stride);
}

// First fold of the configured split (leave-subject-out or random-window).
Fold first_fold(const WindowDataset& ds, const ExperimentConfig& cfg) {
    const auto plan = split_of(cfg);
    if (plan.kind == SplitKind::RandomWindow) return random_window_split(ds, plan.seed, plan.test_fraction);
    if (plan.kind != SplitKind::LeaveSubjectOut)
        fail(ErrorCode::ConfigError, "this command needs split.kind = leave-subject-out or random-window");
    return leave_subject_out_folds(ds, plan.seed, plan.n_folds).front();
}

std::string gaps_json(const std::vector<Gap>& gaps) {
    nlohmann::json j = nlohmann::json::array();
    for (const auto& g : gaps) j.push_back({{"subject", g.subject_id}, {"start_s", g.start_s}, {"end_s", g.end_s}});
    return j.dump(2) + "\n";
}

// ---------------------------------------------------------------------------
// Commands

void cmd_generate(const ExperimentConfig& cfg, RunWriter& w) {
    if (cfg.source != CorpusSource::Synthetic) fail(ErrorCode::ConfigError, "generate needs corpus.source = synthetic");
    const auto c = load_corpus(cfg);
    for (const auto& s : c.series) w.add("corpus/" + s.subject_id + ".csv", write_corpus_csv({s}));
    nlohmann::json groups = nlohmann::json::object();
    for (const auto& [id, g] : *c.latent_groups) groups[id] = g;
    w.add("groups.json", groups.dump(2) + "\n");
}

void cmd_ingest(const ExperimentConfig& cfg, RunWriter& w) {
    const auto c = load_corpus(cfg);
    nlohmann::json summary = nlohmann::json::array();
    for (const auto& s : c.series) {
        w.add("corpus/" + s.subject_id + ".csv", write_corpus_csv({s}));
        summary.push_back({{"subject", s.subject_id}, {"samples", s.size()}});
    }
    w.add("subjects.json", summary.dump(2) + "\n");
    w.add("gaps.json", gaps_json(c.gaps));
}

void cmd_sweep(const ExperimentConfig& cfg, RunWriter& w, int workers) {
    const auto c = load_corpus(cfg);
    const auto cells = run_sweep(c.series, cfg.window_sizes, cfg.strides, split_of(cfg), cfg.classifier, workers);
    for (const auto& cell : cells) w.add("reports/" + wsuffix(cell.window) + ".json", cell.report.to_json().dump(2) + "\n");
    w.add("summary.csv", sweep_summary_csv(cells));
}

void cmd_cluster(const ExperimentConfig& cfg, RunWriter& w, int workers) {
    const auto c = load_corpus(cfg);
    const auto ds = prepare_dataset(c.series, cfg.window(), cfg.classifier, workers);
    const auto cl = cluster_subjects(ds, cfg.k, cfg.space, cfg.run_seed(), cfg.cluster_standardize, cfg.kmeans, workers);
    auto report = cluster_report_json(cl.model, cl.assignment);
    if (c.latent_groups) {
        std::vector<int> a, b;
        for (const auto& [id, g] : *c.latent_groups) {
            a.push_back(g);
            b.push_back(cl.assignment.at(id));
        }
        report["ari_vs_latent_groups"] = adjusted_rand_index(a, b);
    }
    w.add("clusters.json", report.dump(2) + "\n");
    std::string csv = "subject,cluster\n";
    for (const auto& [id, k] : cl.assignment) csv += id + "," + std::to_string(k) + "\n";
    w.add("assignment.csv", csv);
}

void cmd_train(const ExperimentConfig& cfg, RunWriter& w, int workers) {
    const auto c = load_corpus(cfg);
    const auto ds = prepare_dataset(c.series, cfg.window(), cfg.classifier, workers);
    std::vector<std::size_t> all(ds.size());
    std::iota(all.begin(), all.end(), std::size_t{0});
    const auto tc = train_classifier(ds, all, cfg.classifier, cfg.run_seed());
    const auto o = predict_rows(tc, ds, all);
    const auto m = metrics_of(o.confusion);
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["classifier"] = classifier_spec_json(cfg.classifier);
    j["window"] = cfg.window().window_size;
    j["stride"] = cfg.window().stride;
    j["n_windows"] = ds.size();
    j["n_subjects"] = ds.subject_ids.size();
    j["train_accuracy"] = m.accuracy;
    j["train_balanced_accuracy"] = m.balanced_accuracy;
    if (tc.net) {
        j["initial_loss"] = tc.net->log.initial_loss;
        j["epoch_loss"] = tc.net->log.epoch_loss;
    }
    w.add("classifier.txt", save_classifier(cfg, tc));
    w.add("train.json", j.dump(2) + "\n");
}

void write_report(RunWriter& w, const EvalReport& r) {
    w.add("report.json", r.to_json().dump(2) + "\n");
    w.add("folds.csv", r.to_csv());
    w.add("confusion.csv", confusion_csv(r.confusion));
}

void cmd_eval(const ExperimentConfig& cfg, RunWriter& w, int workers) {
    const auto c = load_corpus(cfg);
    const auto ds = prepare_dataset(c.series, cfg.window(), cfg.classifier, workers);
    const auto plan = split_of(cfg);
    if (cfg.routing != RoutingChoice::None) {
        if (plan.kind != SplitKind::LeaveSubjectOut)
            fail(ErrorCode::ConfigError, "routing needs split.kind = leave-subject-out");
        const auto mode = cfg.routing == RoutingChoice::PerWindow ? RoutingMode::PerWindow : RoutingMode::PerSubject;
        write_report(w, routed_eval(ds, cfg.k, mode, cfg.space, cfg.classifier, plan, workers, cfg.kmeans));
        return;
    }
    switch (plan.kind) {
    case SplitKind::RandomWindow:
    case SplitKind::LeaveSubjectOut: write_report(w, evaluate_split(ds, plan, cfg.classifier, workers)); return;
    case SplitKind::WithinClusterLoso:
    case SplitKind::CrossCluster: break;
    }
    const auto cl = cluster_subjects(ds, cfg.k, cfg.space, plan.seed, cfg.cluster_standardize, cfg.kmeans, workers);
    w.add("clusters.json", cluster_report_json(cl.model, cl.assignment).dump(2) + "\n");
    if (plan.kind == SplitKind::CrossCluster) {
        write_report(w, cross_cluster_eval(ds, cl.assignment, plan.train_cluster, plan.test_cluster, cfg.classifier,
                                           plan.seed));
        return;
    }
    auto r = within_cluster_loso(ds, cl.assignment, cfg.classifier, plan.seed, workers);
    r.config["k"] = cfg.k;
    r.config["space"] = std::string(cluster_space_name(cfg.space));
    w.add("within_cluster.json", r.to_json().dump(2) + "\n");
    w.add("within_cluster.csv", r.to_csv());
}

// Trained classifier for importance/timeline: loaded from --model, or fitted
// on the training side of the first fold.
struct Prepared {
    ExperimentConfig cfg;
    WindowDataset ds;
    TrainedClassifier tc;
    Fold fold;
};

Prepared prepare_model(const ExperimentConfig& cfg, const Corpus& c, const std::string& model_path, RunWriter& w,
                       int workers) {
    Prepared p{cfg, {}, {}, {}};
    if (!model_path.empty()) {
        const auto text = io::read_file(model_path);
        w.input("model", text);
        auto f = load_classifier(text);
        p.cfg.classifier = f.config.classifier;
        p.cfg.window_sizes = {f.config.window().window_size};
        p.cfg.strides = {f.config.window().stride};
        p.tc = std::move(f.classifier);
    }
    p.ds = prepare_dataset(c.series, p.cfg.window(), p.cfg.classifier, workers);
    p.fold = first_fold(p.ds, p.cfg);
    if (model_path.empty()) p.tc = train_classifier(p.ds, p.fold.train, p.cfg.classifier, cfg.run_seed());
    return p;
}

void cmd_importance(const ExperimentConfig& cfg, RunWriter& w, const std::string& model, int workers) {
    const auto c = load_corpus(cfg);
    const auto p = prepare_model(cfg, c, model, w, workers);
    const auto rep = permutation_importance(p.tc, p.ds, p.fold.test, cfg.importance_repeats, cfg.run_seed(), workers);
    w.add("importance.csv", rep.to_csv());
    w.add("importance_top.csv", rep.to_csv(static_cast<std::size_t>(cfg.importance_top)));
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["baseline_balanced_accuracy"] = rep.baseline_balanced_accuracy;
    j["repeats"] = rep.repeats;
    j["n_rows"] = p.fold.test.size();
    j["fold"] = p.fold.name;
    w.add("importance.json", j.dump(2) + "\n");
}

void cmd_timeline(const ExperimentConfig& cfg, RunWriter& w, const std::string& model, int workers) {
    const auto c = load_corpus(cfg);
    const auto p = prepare_model(cfg, c, model, w, workers);
    std::vector<std::string> ids = cfg.timeline_subjects;
    if (ids.empty()) {
        std::set<std::size_t> held;
        for (auto i : p.fold.test) held.insert(p.ds.subject_of[i]);
        for (auto s : held) ids.push_back(p.ds.subject_ids[s]);
    }
    std::vector<Timeline> tls;
    for (const auto& id : ids) {
        const auto it = std::find_if(c.series.begin(), c.series.end(),
                                     [&](const SubjectSeries& s) { return s.subject_id == id; });
        if (it == c.series.end()) fail(ErrorCode::ConfigError, "timeline subject " + id + " is not in the corpus");
        tls.push_back(misclassification_timeline(p.tc, *it, p.cfg.window()));
        w.add("timelines/" + id + ".csv", tls.back().to_csv());
    }
    const auto rates = transition_error_rates(tls, cfg.timeline_horizon_s);
    nlohmann::json j;
    j["schema_version"] = kReportSchemaVersion;
    j["subjects"] = ids;
    j["horizon_s"] = cfg.timeline_horizon_s;
    j["error_rate_after_transition"] = rates.after_transition;
    j["error_rate_steady"] = rates.steady;
    j["n_after_transition"] = rates.n_after;
    j["n_steady"] = rates.n_steady;
    w.add("transitions.json", j.dump(2) + "\n");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Heart-rate activity classification experiments"};
    app.require_subcommand(1, 1);
    Options o;
    app.add_option("--config", o.config_path, "Experiment config file")->check(CLI::ExistingFile);
    app.add_option("--seed", o.seed, "Global seed (overrides [run] seed)");
    app.add_option("--out", o.out, "Output root directory")->capture_default_str();
    app.add_option("--workers", o.workers, "Worker threads (results do not depend on it)")
        ->check(CLI::Range(1, 256))
        ->capture_default_str();
    app.add_option("--set", o.overrides, "Config override section.key=value (repeatable)");

    auto* generate = app.add_subcommand("generate", "Write a synthetic cohort in the corpus CSV schema");
    generate->add_option("--subjects", o.subjects, "Number of subjects");
    generate->add_option("--groups", o.groups, "Number of latent groups");
    auto* ingest = app.add_subcommand("ingest", "Read, validate and resample a CSV corpus");
    ingest->add_option("--input", o.input, "Corpus CSV file or directory");
    app.add_subcommand("sweep", "Window/stride grid evaluation");
    app.add_subcommand("cluster", "Cluster subjects");
    app.add_subcommand("train", "Train a classifier on every window");
    app.add_subcommand("eval", "Evaluate with the configured split, clustering and routing");
    auto* importance = app.add_subcommand("importance", "Permutation importance of the classifier inputs");
    importance->add_option("--model", o.model, "Classifier file from train");
    auto* timeline = app.add_subcommand("timeline", "Per-sample misclassification timelines");
    timeline->add_option("--model", o.model, "Classifier file from train");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    const std::string command = app.get_subcommands().front()->get_name();
    try {
        const auto cfg = load_config(o);
        RunWriter w(command, cfg);
        if (command == "generate") cmd_generate(cfg, w);
        else if (command == "ingest") cmd_ingest(cfg, w);
        else if (command == "sweep") cmd_sweep(cfg, w, o.workers);
        else if (command == "cluster") cmd_cluster(cfg, w, o.workers);
        else if (command == "train") cmd_train(cfg, w, o.workers);
        else if (command == "eval") cmd_eval(cfg, w, o.workers);
        else if (command == "importance") cmd_importance(cfg, w, o.model, o.workers);
        else if (command == "timeline") cmd_timeline(cfg, w, o.model, o.workers);
        const auto dir = w.publish(o.out);
        std::cout << dir.string() << '\n';
        return 0;
    } catch (const Error& e) {
        std::cerr << "hrgroup " << command << ": " << e.what() << '\n';
        return exit_code(e.code());
    } catch (const std::exception& e) {
        std::cerr << "hrgroup " << command << ": internal error: " << e.what() << '\n';
        return 4;
    }
}
