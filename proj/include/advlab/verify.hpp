#pragma once

// Self-check suite behind `advlab verify`: gradient checks, L-infinity ball
// fuzzing, margin-loss brute force, hierarchy invariants, and a mutation run
// confirming the gradient check notices a broken ReLU backward.

#include <cstdint>
#include <cstdio>
#include <optional>
#include <string>
#include <vector>

#include "advlab/attacks.hpp"
#include "advlab/fuzz.hpp"
#include "advlab/hierarchy.hpp"
#include "advlab/random.hpp"

namespace advlab {

struct VerifyCheck {
    std::string name;
    bool passed = true;
    std::size_t cases = 0;
    std::string counterexample;  // first failure, when any
};

struct VerifyReport {
    std::uint64_t seed = 0;
    std::vector<VerifyCheck> checks;

    bool passed() const {
        for (const auto& c : checks)
            if (!c.passed) return false;
        return true;
    }
};

struct VerifyOptions {
    std::size_t networks = 30;
    std::size_t pgd_cases = 300;
    std::size_t margin_cases = 500;
    std::size_t trees = 50;
    double fd_step = 1e-6;
    double fd_tolerance = 1e-4;
};

namespace detail {

/// Random small network and an input whose pre-activations all sit well away
/// from the ReLU kink.
inline std::pair<TrainedModel, Tensor> smooth_instance(SplitMix64& rng, double min_kink) {
    while (true) {
        const std::size_t d = 1 + rng.below(16);
        const std::size_t m = 2 + rng.below(15);
        std::vector<std::size_t> hidden;
        for (std::size_t i = 1 + rng.below(2); i > 0; --i) hidden.push_back(1 + rng.below(16));
        TrainedModel model = random_model(rng, d, hidden, m);
        Tensor x = random_unit_input(rng, d);
        if (kink_distance(model, x) >= min_kink) return {std::move(model), std::move(x)};
    }
}

inline std::string describe(const GradCheckReport& r, const GradTarget& where) {
    static const char* kinds[] = {"input", "weight", "bias"};
    char buf[192];
    std::snprintf(buf, sizeof buf, "%s of layer %zu, index %zu: analytic %.12g vs numeric %.12g (rel %.3g)",
                  kinds[where.kind], where.layer, r.worst_index, r.analytic, r.numeric, r.max_rel_error);
    return buf;
}

} // namespace detail

inline VerifyReport cmd_verify(std::uint64_t seed, const VerifyOptions& opt = {}) {
    VerifyReport report;
    report.seed = seed;
    const double min_kink = 1e3 * opt.fd_step;

    {
        VerifyCheck c{"gradient check (input, weights, biases)", true, 0, {}};
        SplitMix64 rng = SplitMix64(seed).fork(1);
        for (std::size_t i = 0; i < opt.networks; ++i, ++c.cases) {
            auto [model, x] = detail::smooth_instance(rng, min_kink);
            const std::size_t label = rng.below(model.num_classes());
            const auto r = check_network_gradients(model, x, label, opt.fd_step, opt.fd_tolerance);
            if (!r.worst.passed) {
                c.passed = false;
                c.counterexample = "network " + std::to_string(i) + ": " + detail::describe(r.worst, r.where);
                break;
            }
        }
        report.checks.push_back(std::move(c));
    }
    {
        VerifyCheck c{"PGD stays in the epsilon ball and the unit box", true, 0, {}};
        SplitMix64 rng = SplitMix64(seed).fork(2);
        for (std::size_t i = 0; i < opt.pgd_cases; ++i, ++c.cases) {
            const PgdFuzzCase fc = random_pgd_case(rng);
            const AttackOutcome out = pgd_attack(fc.model, fc.input, fc.true_class, fc.config);
            if (const auto problem = pgd_soundness_problem(fc.input, out, fc.config.epsilon)) {
                c.passed = false;
                c.counterexample = "case " + std::to_string(i) + ": " + *problem;
                break;
            }
        }
        report.checks.push_back(std::move(c));
    }
    {
        VerifyCheck c{"margin loss matches brute force", true, 0, {}};
        SplitMix64 rng = SplitMix64(seed).fork(3);
        const double kappas[] = {0.0, 0.5, 5.0, 20.0};
        for (std::size_t i = 0; i < opt.margin_cases; ++i, ++c.cases) {
            const std::size_t m = 2 + rng.below(9);
            std::vector<double> z(m);
            for (double& v : z) v = 30.0 * rng.normal();
            const std::size_t target = rng.below(m);
            const double kappa = kappas[i % 4];
            const double got = cw_loss(Tensor::vector(z), target, kappa);
            if (got != margin_loss_oracle(z, target, kappa)) {
                c.passed = false;
                c.counterexample = "case " + std::to_string(i) + ": cw_loss " + std::to_string(got) + " vs oracle " +
                                   std::to_string(margin_loss_oracle(z, target, kappa));
                break;
            }
        }
        report.checks.push_back(std::move(c));
    }
    {
        VerifyCheck c{"hierarchy invariants on random trees", true, 0, {}};
        SplitMix64 rng = SplitMix64(seed).fork(4);
        for (std::size_t i = 0; i < opt.trees; ++i, ++c.cases) {
            const auto j = random_hierarchy_json(rng, 1 + rng.below(50));
            std::optional<std::string> problem;
            try {
                problem = hierarchy_problem(HierarchyTree::from_json(j));
            } catch (const Error& e) {
                problem = std::string("load failed: ") + e.what();
            }
            if (problem) {
                c.passed = false;
                c.counterexample = "tree " + std::to_string(i) + ": " + *problem + "\n" + j.dump();
                break;
            }
        }
        report.checks.push_back(std::move(c));
    }
    {
        // The check has to fail here; passing would mean it cannot see ReLU bugs.
        VerifyCheck c{"gradient check detects a broken ReLU backward", true, 0, {}};
        SplitMix64 rng = SplitMix64(seed).fork(5);
        bool detected = false;
        for (std::size_t i = 0; i < 20 && !detected; ++i, ++c.cases) {
            auto [model, x] = detail::smooth_instance(rng, min_kink);
            const auto r = check_network_gradients(model, x, rng.below(model.num_classes()), opt.fd_step,
                                                   opt.fd_tolerance, mutate_relu_backward);
            detected = !r.worst.passed;
        }
        if (!detected) {
            c.passed = false;
            c.counterexample = "mutated ReLU backward passed every gradient check";
        }
        report.checks.push_back(std::move(c));
    }
    return report;
}

inline std::string format_verify_report(const VerifyReport& r) {
    std::string out = "seed " + std::to_string(r.seed) + "\n";
    for (const auto& c : r.checks) {
        out += std::string(c.passed ? "PASS " : "FAIL ") + c.name + " (" + std::to_string(c.cases) + " cases)\n";
        if (!c.passed) out += "  counterexample: " + c.counterexample + "\n";
    }
    out += r.passed() ? "all checks passed\n" : "verification FAILED; rerun with --seed " + std::to_string(r.seed) + "\n";
    return out;
}

} // namespace advlab
