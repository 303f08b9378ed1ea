// advlab: train a model zoo, run transfer studies, and report on prediction logs.
//
// Exit codes: 0 success, 1 validation error, 2 runtime or numeric error.
// ADVLAB_LOG sets log verbosity (trace, debug, info, warn, error, off; default warn).

#include <cstdlib>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>
#include <spdlog/sinks/stdout_color_sinks.h>
#include <spdlog/spdlog.h>

#include "advlab/commands.hpp"
#include "advlab/config.hpp"
#include "advlab/verify.hpp"

namespace {

void setup_logging() {
    auto logger = spdlog::stderr_color_mt("advlab");
    logger->set_pattern("%^[%l]%$ %v");
    spdlog::set_default_logger(logger);
    spdlog::set_level(spdlog::level::warn);
    if (const char* env = std::getenv("ADVLAB_LOG")) spdlog::set_level(spdlog::level::from_str(env));
}

advlab::Console console() {
    advlab::Console c;
    c.out = &std::cout;
    c.info = [](const std::string& m) { spdlog::info("{}", m); };
    c.warn = [](const std::string& m) { spdlog::warn("{}", m); };
    return c;
}

template <class T>
std::optional<T> opt_of(const CLI::Option* o, const T& v) {
    return o->count() ? std::optional<T>(v) : std::nullopt;
}

} // namespace

int main(int argc, char** argv) {
    setup_logging();
    CLI::App app{"advlab: adversarial transfer experiments on small classifiers"};
    app.require_subcommand(1);

    std::string config_path;
    std::string out, attack_kind, mode;
    std::uint64_t seed = 0;
    std::size_t jobs = 1, top_k = 5;

    const auto add_common = [&](CLI::App* sub, bool needs_config) {
        auto* c = sub->add_option("--config", config_path, "experiment config (JSON)");
        if (needs_config) c->required()->check(CLI::ExistingFile);
        sub->add_option("--out", out, "output directory (overrides config)");
        sub->add_option("--seed", seed, "experiment seed (overrides config)");
        sub->add_option("--jobs", jobs, "worker threads for the attack phase (default 1)");
        sub->add_option("--top-k", top_k, "clean top-K depth captured and reported");
        sub->add_option("--attack", attack_kind, "restrict to one attack family")
            ->check(CLI::IsMember({"pgd", "cw", "both"}));
        sub->add_option("--mode", mode, "force attack mode")->check(CLI::IsMember({"untargeted", "targeted"}));
    };

    auto* train_cmd = app.add_subcommand("train", "train every model in the config and write checkpoints");
    add_common(train_cmd, true);
    auto* attack_cmd = app.add_subcommand("attack", "attack filtered eval items and write the prediction log");
    add_common(attack_cmd, true);

    auto* report_cmd = app.add_subcommand("report", "compute matrices, top-K tables, and collection reports");
    add_common(report_cmd, false);
    std::string log_path, hierarchy_path, sources_path;
    report_cmd->add_option("--log", log_path, "prediction log (default <out>/transfer_log.csv)");
    report_cmd->add_option("--hierarchy", hierarchy_path, "hierarchy JSON (default from config)");
    report_cmd->add_option("--sources", sources_path, "source list CSV (default sources.csv beside the log)");

    auto* ingest_cmd = app.add_subcommand("ingest", "validate an external prediction log");
    std::string ingest_log, ingest_out;
    ingest_cmd->add_option("log", ingest_log, "prediction log CSV")->required()->check(CLI::ExistingFile);
    ingest_cmd->add_option("--out", ingest_out, "write the log back in canonical form");

    auto* verify_cmd = app.add_subcommand("verify", "run the built-in property checks");
    std::uint64_t verify_seed = 0x5eed;
    verify_cmd->add_option("--seed", verify_seed, "fuzzing seed");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        // Usage errors are validation errors; --help exits 0.
        return app.exit(e) == 0 ? 0 : 1;
    }

    try {
        const auto overrides = [&](CLI::App* sub) {
            advlab::Overrides ov;
            ov.out = opt_of(sub->get_option("--out"), out);
            ov.seed = opt_of(sub->get_option("--seed"), seed);
            ov.jobs = opt_of(sub->get_option("--jobs"), jobs);
            ov.top_k = opt_of(sub->get_option("--top-k"), top_k);
            ov.attack = opt_of(sub->get_option("--attack"), attack_kind);
            ov.mode = opt_of(sub->get_option("--mode"), mode);
            return ov;
        };
        const auto load = [&](CLI::App* sub) {
            advlab::ExperimentConfig cfg = advlab::load_experiment_config(config_path);
            advlab::apply_overrides(cfg, overrides(sub));
            return cfg;
        };

        if (train_cmd->parsed()) {
            advlab::cmd_train(load(train_cmd), console());
        } else if (attack_cmd->parsed()) {
            const auto s = advlab::cmd_attack(load(attack_cmd), console());
            std::cout << s.study.records.size() << " records written to " << s.log_path << '\n';
        } else if (report_cmd->parsed()) {
            advlab::ReportOptions ro;
            if (!config_path.empty()) {
                ro = advlab::report_options(load(report_cmd));
            } else {
                if (report_cmd->get_option("--out")->count()) ro.out_dir = out;
                if (report_cmd->get_option("--top-k")->count()) ro.top_k = top_k;
            }
            if (!log_path.empty()) ro.log_path = log_path;
            if (!hierarchy_path.empty()) ro.hierarchy_path = hierarchy_path;
            if (!sources_path.empty()) ro.sources_path = sources_path;
            if (ro.out_dir.empty()) ro.out_dir = "report";
            advlab::cmd_report(ro, console());
        } else if (ingest_cmd->parsed()) {
            advlab::cmd_ingest(ingest_log, ingest_out.empty() ? std::nullopt : std::optional<std::string>(ingest_out),
                               console());
        } else if (verify_cmd->parsed()) {
            const auto r = advlab::cmd_verify(verify_seed);
            std::cout << advlab::format_verify_report(r);
            return r.passed() ? 0 : 2;
        }
    } catch (const advlab::ValidationError& e) {
        spdlog::error("{}", e.what());
        return 1;
    } catch (const advlab::Error& e) {
        spdlog::error("{}", e.what());
        return 2;
    } catch (const std::exception& e) {
        spdlog::error("{}", e.what());
        return 2;
    }
    return 0;
}
