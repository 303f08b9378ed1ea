#pragma once

// Experiment configuration (JSON). Relative paths resolve against the
// directory of the config file. Command-line flags override file values.
//
//   {
//     "seed": 7,
//     "dataset": {"generator": {"groups": [[0,1,2],[3,4,5],[6,7]], "input_dim": 16,
//                               "train_per_class": 80, "eval_per_class": 30,
//                               "group_radius": 0.25, "class_radius": 0.12, "noise": 0.03}}
//              | {"train_path": "train.csv", "eval_path": "eval.csv"},
//     "models": [{"name": "mlp_a", "hidden_dims": [32], "seed": 11}, ...],
//     "training": {"epochs": 40, "learning_rate": 0.1, "batch_size": 16},
//     "attacks": [{"name": "PGD", "kind": "pgd", "epsilon": 0.149, "alpha": 0.0149,
//                  "max_iters": 50, "mode": "untargeted"},
//                 {"name": "CW", "kind": "cw", "kappa": 20, "l2_weight": 1.0,
//                  "step_size": 0.01, "max_iters": 1000, "mode": "untargeted"}],
//     "hierarchy": "fixture_hierarchy.json",
//     "out": "out",
//     "top_k": 5,
//     "attack_items": 0,             0 = every filtered eval item
//     "jobs": 1,
//     "report": {"ks": [3, 5], "cross_model_only": false}
//   }
//
// Dataset CSV files: header `item_id,true_class,x0,...,x{d-1}`, one item per row.

#include <algorithm>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks.hpp"
#include "advlab/classifier.hpp"
#include "advlab/dataset.hpp"
#include "advlab/error.hpp"
#include "advlab/synthetic.hpp"
#include "advlab/transfer.hpp"

namespace advlab {

struct ModelEntry {
    std::string name;
    std::vector<std::size_t> hidden_dims;
    std::uint64_t seed = 0;
};

struct DatasetConfig {
    std::optional<HierarchicalGaussianSpec> generator;
    std::string train_path;
    std::string eval_path;
};

struct ReportConfig {
    std::vector<std::size_t> ks{3, 5};
    bool cross_model_only = false;
};

struct ExperimentConfig {
    std::uint64_t seed = 0;
    DatasetConfig dataset;
    std::vector<ModelEntry> models;
    TrainOptions training;
    std::vector<AttackConfig> attacks;
    std::string hierarchy;
    std::string out = "out";
    std::size_t top_k = 5;
    std::size_t attack_items = 0;
    std::size_t jobs = 1;
    ReportConfig report;

    std::string models_dir() const { return (std::filesystem::path(out) / "models").string(); }
    std::string checkpoint_path(const std::string& model) const {
        return (std::filesystem::path(models_dir()) / (model + ".advm")).string();
    }
    std::string log_path() const { return (std::filesystem::path(out) / "transfer_log.csv").string(); }
    std::string sources_path() const { return (std::filesystem::path(out) / "sources.csv").string(); }
};

namespace detail {

inline AttackMode parse_mode(const nlohmann::json& j) {
    const std::string mode = j.value("mode", std::string("untargeted"));
    if (mode == "untargeted") return AttackMode::untargeted();
    if (mode == "targeted") {
        if (j.contains("target") && !j["target"].is_null()) return AttackMode::targeted_at(j["target"].get<std::size_t>());
        return AttackMode::targeted_any();
    }
    throw ConfigError("attack mode must be 'untargeted' or 'targeted', got '" + mode + "'");
}

inline AttackConfig parse_attack(const nlohmann::json& j) {
    const std::string kind = j.at("kind").get<std::string>();
    if (kind == "pgd") {
        PgdConfig c;
        c.epsilon = j.value("epsilon", c.epsilon);
        if (j.contains("alpha") && !j["alpha"].is_null()) c.alpha = j["alpha"].get<double>();
        c.max_iters = j.value("max_iters", c.max_iters);
        c.random_start = j.value("random_start", c.random_start);
        c.start_seed = j.value("start_seed", c.start_seed);
        c.mode = parse_mode(j);
        c.validate();
        return AttackConfig::pgd(c, j.value("name", std::string("PGD")));
    }
    if (kind == "cw") {
        CwConfig c;
        c.kappa = j.value("kappa", c.kappa);
        c.l2_weight = j.value("l2_weight", c.l2_weight);
        c.step_size = j.value("step_size", c.step_size);
        c.max_iters = j.value("max_iters", c.max_iters);
        c.mode = parse_mode(j);
        c.validate();
        return AttackConfig::cw(c, j.value("name", std::string("CW")));
    }
    throw ConfigError("attack kind must be 'pgd' or 'cw', got '" + kind + "'");
}

inline std::string resolve(const std::filesystem::path& base, const std::string& p) {
    if (p.empty()) return p;
    const std::filesystem::path path(p);
    return path.is_absolute() ? p : (base / path).lexically_normal().string();
}

} // namespace detail

inline nlohmann::ordered_json attack_json(const AttackConfig& a) {
    nlohmann::ordered_json j;
    j["name"] = a.name;
    const auto mode_fields = [&](const AttackMode& m) {
        j["mode"] = m.targeted ? "targeted" : "untargeted";
        if (m.target) j["target"] = *m.target;
    };
    if (const auto* p = std::get_if<PgdConfig>(&a.params)) {
        j["kind"] = "pgd";
        j["epsilon"] = p->epsilon;
        j["alpha"] = p->step();
        j["max_iters"] = p->max_iters;
        j["random_start"] = p->random_start;
        mode_fields(p->mode);
    } else {
        const auto& c = std::get<CwConfig>(a.params);
        j["kind"] = "cw";
        j["kappa"] = c.kappa;
        j["l2_weight"] = c.l2_weight;
        j["step_size"] = c.step_size;
        j["max_iters"] = c.max_iters;
        mode_fields(c.mode);
    }
    return j;
}

/// Parses a config document; `base_dir` anchors relative paths.
inline ExperimentConfig parse_experiment_config(const nlohmann::json& j, const std::filesystem::path& base_dir) {
    ExperimentConfig cfg;
    try {
        cfg.seed = j.value("seed", std::uint64_t{0});
        if (j.contains("dataset")) {
            const auto& d = j["dataset"];
            if (d.contains("generator")) {
                const auto& g = d["generator"];
                HierarchicalGaussianSpec spec;
                if (g.contains("groups")) spec.groups = g["groups"].get<std::vector<std::vector<std::size_t>>>();
                spec.input_dim = g.value("input_dim", spec.input_dim);
                spec.train_per_class = g.value("train_per_class", spec.train_per_class);
                spec.eval_per_class = g.value("eval_per_class", spec.eval_per_class);
                spec.group_radius = g.value("group_radius", spec.group_radius);
                spec.class_radius = g.value("class_radius", spec.class_radius);
                spec.noise = g.value("noise", spec.noise);
                spec.validate();
                cfg.dataset.generator = spec;
            } else {
                cfg.dataset.train_path = detail::resolve(base_dir, d.at("train_path").get<std::string>());
                cfg.dataset.eval_path = detail::resolve(base_dir, d.at("eval_path").get<std::string>());
            }
        } else {
            cfg.dataset.generator = HierarchicalGaussianSpec{};
        }
        for (const auto& m : j.at("models")) {
            cfg.models.push_back({m.at("name").get<std::string>(),
                                  m.value("hidden_dims", std::vector<std::size_t>{}),
                                  m.value("seed", std::uint64_t{0})});
        }
        if (j.contains("training")) {
            const auto& t = j["training"];
            cfg.training.epochs = t.value("epochs", cfg.training.epochs);
            cfg.training.learning_rate = t.value("learning_rate", cfg.training.learning_rate);
            cfg.training.batch_size = t.value("batch_size", cfg.training.batch_size);
        }
        if (j.contains("attacks"))
            for (const auto& a : j["attacks"]) cfg.attacks.push_back(detail::parse_attack(a));
        cfg.hierarchy = detail::resolve(base_dir, j.value("hierarchy", std::string{}));
        cfg.out = detail::resolve(base_dir, j.value("out", cfg.out));
        cfg.top_k = j.value("top_k", cfg.top_k);
        cfg.attack_items = j.value("attack_items", cfg.attack_items);
        cfg.jobs = j.value("jobs", cfg.jobs);
        if (j.contains("report")) {
            const auto& r = j["report"];
            if (r.contains("ks")) cfg.report.ks = r["ks"].get<std::vector<std::size_t>>();
            cfg.report.cross_model_only = r.value("cross_model_only", false);
        }
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("invalid experiment config: ") + e.what());
    }
    return cfg;
}

inline ExperimentConfig load_experiment_config(const std::string& path) {
    const std::string text = read_text_file(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError("config '" + path + "' is not valid JSON: " + e.what(), e.byte);
    }
    return parse_experiment_config(j, std::filesystem::path(path).parent_path());
}

/// Checks internal consistency and that referenced input files exist.
inline void validate_experiment_config(const ExperimentConfig& cfg) {
    if (cfg.models.empty()) throw ConfigError("config lists no models");
    std::vector<std::string> names;
    for (const auto& m : cfg.models) {
        if (m.name.empty() || m.name.find_first_of(",\"/\\\n") != std::string::npos) {
            throw ConfigError("invalid model name '" + m.name + "'");
        }
        if (std::find(names.begin(), names.end(), m.name) != names.end()) {
            throw ConfigError("duplicate model name '" + m.name + "'");
        }
        names.push_back(m.name);
    }
    if (cfg.top_k < 2) throw ConfigError("top_k must be >= 2");
    if (cfg.training.batch_size == 0) throw ConfigError("training batch_size must be positive");
    for (const std::string* p : {&cfg.dataset.train_path, &cfg.dataset.eval_path, &cfg.hierarchy}) {
        if (!p->empty() && !std::filesystem::exists(*p)) throw ConfigError("referenced file '" + *p + "' does not exist");
    }
}

/// Dataset CSV: `item_id,true_class,x0,...`.
inline LabeledDataset parse_dataset_csv(std::string_view text, std::size_t num_classes) {
    std::vector<LabeledItem> items;
    std::size_t line_no = 0, start = 0, dim = 0;
    while (start < text.size()) {
        std::size_t end = text.find('\n', start);
        if (end == std::string_view::npos) end = text.size();
        std::string_view line = text.substr(start, end - start);
        start = end + 1;
        ++line_no;
        if (!line.empty() && line.back() == '\r') line.remove_suffix(1);
        const auto f = detail::split(line, ',');
        if (line_no == 1) {
            if (f.size() < 3 || f[0] != "item_id" || f[1] != "true_class") {
                throw ParseError("line 1: dataset header must start with item_id,true_class", 1);
            }
            dim = f.size() - 2;
            continue;
        }
        if (line.empty()) continue;
        if (f.size() != dim + 2) throw ParseError("line " + std::to_string(line_no) + ": wrong number of fields", line_no);
        std::vector<double> x(dim);
        for (std::size_t i = 0; i < dim; ++i) {
            try {
                std::size_t used = 0;
                const std::string s(f[i + 2]);
                x[i] = std::stod(s, &used);
                if (used != s.size()) throw std::invalid_argument("trailing");
            } catch (const std::exception&) {
                throw ParseError("line " + std::to_string(line_no) + ": feature " + std::to_string(i) + " is not a number",
                                 line_no);
            }
        }
        items.push_back({std::string(f[0]), Tensor::vector(std::move(x)),
                         detail::parse_index(f[1], "true_class", line_no)});
    }
    if (num_classes == 0)
        for (const auto& it : items) num_classes = std::max(num_classes, it.label + 1);
    return LabeledDataset(num_classes, std::move(items));
}

/// Train and evaluation splits plus a probe set for the distinctness check.
inline SyntheticData load_experiment_data(const ExperimentConfig& cfg) {
    if (cfg.dataset.generator) return generate_hierarchical_gaussian(*cfg.dataset.generator, cfg.seed);
    LabeledDataset train = parse_dataset_csv(read_text_file(cfg.dataset.train_path), 0);
    LabeledDataset eval = parse_dataset_csv(read_text_file(cfg.dataset.eval_path), train.num_classes());
    if (eval.input_dim() != train.input_dim()) throw ConfigError("train and eval datasets differ in feature count");
    if (eval.num_classes() != train.num_classes()) {
        // Re-label the training split with the joint class count.
        train = LabeledDataset(eval.num_classes(), train.items());
    }
    SyntheticData data{std::move(train), std::move(eval), {}, {}};
    SplitMix64 rng = SplitMix64(cfg.seed).fork(104);
    for (std::size_t i = 0; i < 256; ++i) {
        std::vector<double> x(data.train.input_dim());
        for (double& v : x) v = rng.uniform();
        data.probe.push_back(Tensor::vector(std::move(x)));
    }
    return data;
}

inline ModelSpec model_spec(const ModelEntry& entry, const LabeledDataset& train) {
    return ModelSpec{entry.name, train.input_dim(), entry.hidden_dims, train.num_classes(), entry.seed};
}

} // namespace advlab
