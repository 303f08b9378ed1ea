#pragma once

// Command implementations behind the advlab CLI. Each command is a plain
// function returning a summary so tests can drive the pipeline in-process.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <functional>
#include <optional>
#include <ostream>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/checkpoint.hpp"
#include "advlab/config.hpp"
#include "advlab/hierarchy.hpp"
#include "advlab/metrics.hpp"
#include "advlab/report.hpp"
#include "advlab/synthetic.hpp"
#include "advlab/transfer.hpp"

namespace advlab {

/// Where commands send their human-readable output. Logging hooks may be empty.
struct Console {
    std::ostream* out = nullptr;
    std::function<void(const std::string&)> info;
    std::function<void(const std::string&)> warn;

    void print(const std::string& line) const {
        if (out) *out << line << '\n';
    }
    void note(const std::string& msg) const {
        if (info) info(msg);
    }
    void warning(const std::string& msg) const {
        if (warn) warn(msg);
    }
};

/// Command-line values that override the config file when present.
struct Overrides {
    std::optional<std::string> out;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> jobs;
    std::optional<std::size_t> top_k;
    std::optional<std::string> attack;  // pgd | cw | both
    std::optional<std::string> mode;    // untargeted | targeted
};

inline void apply_overrides(ExperimentConfig& cfg, const Overrides& ov) {
    if (ov.out) cfg.out = *ov.out;
    if (ov.seed) cfg.seed = *ov.seed;
    if (ov.jobs) cfg.jobs = std::max<std::size_t>(1, *ov.jobs);
    if (ov.top_k) cfg.top_k = *ov.top_k;
    if (ov.attack && *ov.attack != "both") {
        if (*ov.attack != "pgd" && *ov.attack != "cw") throw ConfigError("--attack must be pgd, cw or both");
        const bool want_pgd = *ov.attack == "pgd";
        std::erase_if(cfg.attacks, [&](const AttackConfig& a) { return a.is_pgd() != want_pgd; });
        if (cfg.attacks.empty()) throw ConfigError("config has no " + *ov.attack + " attack");
    }
    if (ov.mode) {
        if (*ov.mode != "untargeted" && *ov.mode != "targeted") throw ConfigError("--mode must be untargeted or targeted");
        for (auto& a : cfg.attacks) {
            AttackMode& m = a.mode();
            if (*ov.mode == "untargeted") {
                m = AttackMode::untargeted();
            } else if (!m.targeted) {
                m = AttackMode::targeted_any();
            }
        }
    }
}

namespace detail {

inline void ensure_dir(const std::filesystem::path& dir) {
    std::error_code ec;
    std::filesystem::create_directories(dir, ec);
    if (ec) throw ValidationError("cannot create directory '" + dir.string() + "': " + ec.message());
}

inline std::string fmt_rate(std::size_t num, std::size_t den) {
    char buf[64];
    if (den == 0) return "n/a";
    std::snprintf(buf, sizeof buf, "%zu/%zu (%.1f%%)", num, den, 100.0 * double(num) / double(den));
    return buf;
}

inline std::string dump(const nlohmann::ordered_json& j) { return j.dump(2) + "\n"; }

/// File-name-safe form of a model or attack name.
inline std::string slug(const std::string& s) {
    std::string out;
    for (char c : s) out += (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') ? c : '_';
    return out;
}

} // namespace detail

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

struct TrainedEntry {
    std::string name;
    std::string checkpoint;
    double train_accuracy = 0.0;
    double eval_accuracy = 0.0;
};

struct TrainSummary {
    std::vector<TrainedEntry> models;
    std::string summary_path;
};

inline TrainSummary cmd_train(const ExperimentConfig& cfg, const Console& con = {}) {
    validate_experiment_config(cfg);
    const SyntheticData data = load_experiment_data(cfg);
    detail::ensure_dir(cfg.models_dir());
    TrainSummary summary;
    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["epochs"] = cfg.training.epochs;
    j["learning_rate"] = cfg.training.learning_rate;
    j["batch_size"] = cfg.training.batch_size;
    j["train_items"] = data.train.size();
    j["eval_items"] = data.eval.size();
    auto models = nlohmann::ordered_json::array();
    for (const auto& entry : cfg.models) {
        con.note("training '" + entry.name + "'");
        TrainedModel model;
        try {
            model = train(model_spec(entry, data.train), data.train, cfg.training);
        } catch (const TrainingDivergedError& e) {
            throw TrainingDivergedError("model '" + entry.name + "': " + e.what(), e.epoch());
        }
        const std::string path = cfg.checkpoint_path(entry.name);
        save_model(model, path);
        TrainedEntry t{entry.name, path, model.info().final_accuracy, accuracy(model, data.eval)};
        con.print("trained " + t.name + ": train accuracy " + format_pct(100.0 * t.train_accuracy) +
                  "%, eval accuracy " + format_pct(100.0 * t.eval_accuracy) + "%");
        models.push_back({{"name", t.name},
                          {"checkpoint", std::filesystem::path(path).filename().string()},
                          {"hidden_dims", entry.hidden_dims},
                          {"seed", entry.seed},
                          {"train_accuracy", t.train_accuracy},
                          {"eval_accuracy", t.eval_accuracy}});
        summary.models.push_back(std::move(t));
    }
    j["models"] = std::move(models);
    summary.summary_path = (std::filesystem::path(cfg.out) / "train_summary.json").string();
    write_text_file(summary.summary_path, detail::dump(j));
    return summary;
}

// ---------------------------------------------------------------------------
// attack
// ---------------------------------------------------------------------------

struct AttackSummary {
    std::size_t eval_items = 0;
    std::size_t source_items = 0;  // commonly-correct items that were attacked
    StudyResult study;
    std::string log_path;
    std::string sources_path;
};

inline std::vector<TrainedModel> load_zoo(const ExperimentConfig& cfg) {
    std::vector<TrainedModel> zoo;
    for (const auto& entry : cfg.models) {
        const std::string path = cfg.checkpoint_path(entry.name);
        if (!std::filesystem::exists(path)) {
            throw LookupError("missing checkpoint '" + path + "' for model '" + entry.name + "'; run train first");
        }
        TrainedModel m = load_model(path);
        if (m.name() != entry.name) {
            throw ConsistencyError("checkpoint '" + path + "' holds model '" + m.name() + "'", 0);
        }
        zoo.push_back(std::move(m));
    }
    return zoo;
}

inline AttackSummary cmd_attack(const ExperimentConfig& cfg, const Console& con = {}) {
    validate_experiment_config(cfg);
    if (cfg.attacks.empty()) throw ConfigError("config lists no attacks");
    const SyntheticData data = load_experiment_data(cfg);
    const std::vector<TrainedModel> zoo = load_zoo(cfg);
    for (const auto& m : zoo) {
        if (m.input_dim() != data.eval.input_dim() || m.num_classes() != data.eval.num_classes()) {
            throw DimensionError("model '" + m.name() + "' does not match the dataset; retrain");
        }
    }
    if (const auto same = indistinct_models(zoo, data.probe); !same.empty()) {
        throw ExperimentError("models '" + same.front().a + "' and '" + same.front().b +
                              "' agree on every probe input; the zoo cannot show transfer");
    }

    LabeledDataset sources = filter_commonly_correct(data.eval, zoo);
    if (sources.warning()) con.warning(*sources.warning());
    if (cfg.attack_items > 0 && sources.size() > cfg.attack_items) {
        std::vector<LabeledItem> head(sources.items().begin(),
                                      sources.items().begin() + static_cast<std::ptrdiff_t>(cfg.attack_items));
        sources = LabeledDataset(sources.num_classes(), std::move(head));
    }

    AttackSummary summary;
    summary.eval_items = data.eval.size();
    summary.source_items = sources.size();
    con.note(std::to_string(sources.size()) + " of " + std::to_string(data.eval.size()) +
             " eval items are classified correctly by every model");
    if (!sources.empty()) summary.study = run_transfer_study(sources, zoo, cfg.attacks, {cfg.top_k, cfg.jobs});

    detail::ensure_dir(cfg.out);
    summary.log_path = cfg.log_path();
    summary.sources_path = cfg.sources_path();
    export_prediction_log(summary.study.records, summary.log_path);
    write_text_file(summary.sources_path, format_sources(sources));

    nlohmann::ordered_json j;
    j["seed"] = cfg.seed;
    j["eval_items"] = summary.eval_items;
    j["source_items"] = summary.source_items;
    j["top_k"] = cfg.top_k;
    auto attacks = nlohmann::ordered_json::array();
    for (const auto& a : cfg.attacks) attacks.push_back(attack_json(a));
    j["attacks"] = std::move(attacks);
    auto wb = nlohmann::ordered_json::array();
    for (const auto& s : summary.study.white_box) {
        wb.push_back({{"source_model", s.source_model},
                      {"attack", s.attack},
                      {"attempted", s.attempted},
                      {"successes", s.successes}});
        con.print("white-box " + s.source_model + " " + s.attack + ": " + detail::fmt_rate(s.successes, s.attempted));
    }
    j["white_box"] = std::move(wb);
    j["records"] = summary.study.records.size();
    write_text_file((std::filesystem::path(cfg.out) / "attack_summary.json").string(), detail::dump(j));
    return summary;
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct ReportOptions {
    std::string log_path;
    std::string hierarchy_path;
    std::optional<std::string> sources_path;  // defaults to sources.csv beside the log, if present
    std::string out_dir;
    std::size_t top_k = 5;                    // top-K table covers K = 2..top_k
    std::vector<std::size_t> ks{3, 5};        // top-K columns of the collection table
    bool cross_model_only = false;
    bool breakdowns = true;                   // per-attack and per-target-model collection tables
};

struct ReportSummary {
    std::size_t records = 0;
    std::vector<TransferMatrix> matrices;
    std::vector<TopKResult> topk;
    std::vector<CollectionReportRow> collections;
    std::vector<std::string> files;
};

inline ReportOptions report_options(const ExperimentConfig& cfg) {
    ReportOptions o;
    o.log_path = cfg.log_path();
    o.hierarchy_path = cfg.hierarchy;
    o.out_dir = (std::filesystem::path(cfg.out) / "report").string();
    o.top_k = cfg.top_k;
    o.ks = cfg.report.ks;
    o.cross_model_only = cfg.report.cross_model_only;
    return o;
}

inline ReportSummary cmd_report(const ReportOptions& opt, const Console& con = {}) {
    if (opt.log_path.empty()) throw ConfigError("report needs a prediction log");
    if (opt.hierarchy_path.empty()) throw ConfigError("report needs a hierarchy file");
    if (opt.top_k < 2) throw ConfigError("--top-k must be >= 2");

    std::vector<TransferRecord> records = ingest_prediction_log(opt.log_path);
    const HierarchyTree tree = load_hierarchy(opt.hierarchy_path);

    std::optional<SourceIndex> sources;
    std::string sources_path = opt.sources_path.value_or(
        (std::filesystem::path(opt.log_path).parent_path() / "sources.csv").string());
    if (opt.sources_path || std::filesystem::exists(sources_path)) sources = parse_sources(read_text_file(sources_path));
    if (sources) {
        for (const auto& r : records) {
            const auto it = sources->find(r.item_id);
            if (it == sources->end() || it->second != r.true_class) {
                throw ConsistencyError("log item '" + r.item_id + "' is missing from or disagrees with '" +
                                           sources_path + "'",
                                       0);
            }
        }
    }
    if (opt.cross_model_only) records = filter_records(records, RecordFilter{{}, {}, {}, true});

    ReportSummary summary;
    summary.records = records.size();
    if (records.empty()) con.warning("prediction log '" + opt.log_path + "' has no records; reports are empty");

    const std::optional<std::size_t> attempted =
        sources ? std::optional<std::size_t>(sources->size()) : std::nullopt;
    const auto models = model_order(records);
    for (const auto& attack : attack_order(records)) {
        summary.matrices.push_back(transfer_matrix(records, attack, MatrixMode::Untargeted, attempted, models));
        const bool targeted = std::any_of(records.begin(), records.end(),
                                          [&](const TransferRecord& r) { return r.attack == attack && r.target_class; });
        if (targeted) summary.matrices.push_back(transfer_matrix(records, attack, MatrixMode::Targeted, attempted, models));
    }

    for (std::size_t k = 2; k <= opt.top_k; ++k) summary.topk.push_back(topk_misclassification(records, k));

    // Collection columns deeper than the requested top-K depth are dropped.
    std::vector<std::size_t> ks;
    for (std::size_t k : opt.ks) {
        if (k <= opt.top_k) ks.push_back(k);
        else con.warning("dropping top-" + std::to_string(k) + " column: deeper than --top-k " + std::to_string(opt.top_k));
    }
    CollectionReportOptions copt;
    copt.ks = ks;
    copt.sources = sources;
    summary.collections = collection_report(records, tree, {}, copt);

    detail::ensure_dir(opt.out_dir);
    const auto write = [&](const std::filesystem::path& rel, const std::string& text) {
        const auto path = std::filesystem::path(opt.out_dir) / rel;
        detail::ensure_dir(path.parent_path());
        write_text_file(path.string(), text);
        summary.files.push_back(rel.generic_string());
    };
    write("transfer_matrix.csv", matrix_csv(summary.matrices));
    write("transfer_matrix.json", detail::dump(matrix_json(summary.matrices)));
    write("topk_per_class.csv", topk_csv(summary.topk));
    write("topk_per_class.json", detail::dump(topk_json(summary.topk)));
    write("collection_report.csv", collection_csv(summary.collections, ks));
    write("collection_report.json", detail::dump(collection_json(summary.collections)));

    if (opt.breakdowns) {
        for (const auto& attack : attack_order(records)) {
            const auto sub = filter_records(records, RecordFilter{attack, {}, {}, false});
            write(std::filesystem::path("by_attack") / (detail::slug(attack) + "_collection_report.csv"),
                  collection_csv(collection_report(sub, tree, {}, copt), ks));
        }
        for (const auto& model : models) {
            const auto sub = filter_records(records, RecordFilter{{}, {}, model, false});
            write(std::filesystem::path("by_target") / (detail::slug(model) + "_collection_report.csv"),
                  collection_csv(collection_report(sub, tree, {}, copt), ks));
        }
    }

    for (const auto& t : summary.topk) {
        char buf[96];
        if (t.overall.total == 0) {
            std::snprintf(buf, sizeof buf, "top-%zu: no untargeted transfers", t.k);
        } else {
            std::snprintf(buf, sizeof buf, "top-%zu: %zu/%zu (%.1f%%)", t.k, t.overall.in_top_k, t.overall.total,
                          100.0 * *t.overall.rate());
        }
        con.print(buf);
    }
    con.print("wrote " + std::to_string(summary.files.size()) + " files to " + opt.out_dir);
    return summary;
}

// ---------------------------------------------------------------------------
// ingest
// ---------------------------------------------------------------------------

struct IngestSummary {
    std::size_t records = 0;
    std::size_t items = 0;
    std::vector<std::string> attacks;
    std::vector<std::string> models;
    std::optional<std::string> written;
};

/// Validates an external prediction log and, given `out_path`, re-exports it
/// in canonical form (flag columns dropped).
inline IngestSummary cmd_ingest(const std::string& log_path, const std::optional<std::string>& out_path,
                                const Console& con = {}) {
    const auto records = ingest_prediction_log(log_path);
    IngestSummary s;
    s.records = records.size();
    std::set<std::string> items;
    for (const auto& r : records) items.insert(r.item_id);
    s.items = items.size();
    s.attacks = attack_order(records);
    s.models = model_order(records);
    if (out_path) {
        const auto parent = std::filesystem::path(*out_path).parent_path();
        if (!parent.empty()) detail::ensure_dir(parent);
        export_prediction_log(records, *out_path);
        s.written = *out_path;
    }
    con.print(std::to_string(s.records) + " records, " + std::to_string(s.items) + " items, " +
              std::to_string(s.attacks.size()) + " attacks, " + std::to_string(s.models.size()) + " models");
    if (records.empty()) con.warning("prediction log '" + log_path + "' has no records");
    return s;
}

} // namespace advlab
