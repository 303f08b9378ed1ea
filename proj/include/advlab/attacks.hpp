#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "advlab/autodiff.hpp"
#include "advlab/classifier.hpp"
#include "advlab/error.hpp"
#include "advlab/random.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

/// Untargeted, or targeted at class `target`. A targeted mode without a
/// class is only meaningful inside a study, which picks the target per item.
struct AttackMode {
    bool targeted = false;
    std::optional<std::size_t> target;

    static AttackMode untargeted() { return {}; }
    static AttackMode targeted_at(std::size_t c) { return {true, c}; }
    static AttackMode targeted_any() { return {true, std::nullopt}; }

    friend bool operator==(const AttackMode&, const AttackMode&) = default;
};

/// L-infinity PGD. Data units are [0, 1]; alpha defaults to epsilon / 10.
struct PgdConfig {
    double epsilon = 38.0 / 255.0;
    std::optional<double> alpha;
    int max_iters = 50;
    AttackMode mode;
    bool random_start = false;
    std::uint64_t start_seed = 0;

    double step() const { return alpha.value_or(epsilon / 10.0); }

    void validate() const {
        if (!(epsilon >= 0.0 && epsilon <= 1.0)) throw ContractError("PGD epsilon must lie in [0, 1]");
        const double a = step();
        if (!(a >= 0.0) || !std::isfinite(a)) throw ContractError("PGD alpha must be finite and >= 0");
        if (epsilon > 0.0 && !(a > 0.0)) throw ContractError("PGD alpha must be positive when epsilon > 0");
        if (a > epsilon) throw ContractError("PGD alpha must not exceed epsilon");
        if (max_iters < 1) throw ContractError("PGD max_iters must be >= 1");
    }

    friend bool operator==(const PgdConfig&, const PgdConfig&) = default;
};

/// Carlini-Wagner L2 with the margin loss, tanh box, and plain gradient descent.
/// Minimizes l2_weight * ||delta||^2 + f(x + delta).
struct CwConfig {
    double kappa = 20.0;
    double l2_weight = 1.0;
    double step_size = 1e-2;
    int max_iters = 1000;
    AttackMode mode;

    void validate() const {
        if (!std::isfinite(kappa) || kappa < 0.0) throw ContractError("CW kappa must be finite and >= 0");
        if (!(l2_weight > 0.0) || !std::isfinite(l2_weight)) throw ContractError("CW l2_weight must be positive");
        if (!(step_size > 0.0) || !std::isfinite(step_size)) throw ContractError("CW step_size must be positive");
        if (max_iters < 1) throw ContractError("CW max_iters must be >= 1");
    }

    friend bool operator==(const CwConfig&, const CwConfig&) = default;
};

using AttackParams = std::variant<PgdConfig, CwConfig>;

/// A named attack configuration, e.g. {"PGD", PgdConfig{...}}.
struct AttackConfig {
    std::string name;
    AttackParams params;

    static AttackConfig pgd(PgdConfig c, std::string name = "PGD") { return {std::move(name), std::move(c)}; }
    static AttackConfig cw(CwConfig c, std::string name = "CW") { return {std::move(name), std::move(c)}; }

    const AttackMode& mode() const {
        return std::visit([](const auto& c) -> const AttackMode& { return c.mode; }, params);
    }
    AttackMode& mode() {
        return std::visit([](auto& c) -> AttackMode& { return c.mode; }, params);
    }
    bool is_pgd() const { return std::holds_alternative<PgdConfig>(params); }

    friend bool operator==(const AttackConfig&, const AttackConfig&) = default;
};

struct AttackOutcome {
    Tensor adversarial;
    int iterations_used = 0;
    bool success = false;
    std::size_t final_predicted_class = 0;
    double perturbation_linf = 0.0;
    double perturbation_l2 = 0.0;
    AttackParams params;  // the configuration that produced this outcome
};

/// Called after every update with the 1-based iteration and the current iterate.
using IterationObserver = std::function<void(int iteration, const Tensor& adversarial)>;

namespace detail {

inline std::optional<std::size_t> checked_target(const TrainedModel& model, const AttackMode& mode, std::size_t k) {
    if (!mode.targeted) return std::nullopt;
    if (!mode.target) throw ContractError("targeted attack needs a target class");
    const std::size_t c = *mode.target;
    if (c >= model.num_classes()) throw IndexError("target class " + std::to_string(c) + " out of range");
    if (c == k) throw ContractError("target class equals the true class " + std::to_string(k));
    return c;
}

inline void check_source(const TrainedModel& model, const Tensor& x, std::size_t k) {
    model.check_input(x);
    if (k >= model.num_classes()) throw IndexError("true class " + std::to_string(k) + " out of range");
    for (double v : x.data()) {
        if (!(v >= 0.0 && v <= 1.0)) throw ContractError("attack source must lie in [0, 1]");
    }
    const std::size_t pred = model.predicted_class(x);
    if (pred != k) {
        throw ContractError("attack source is not correctly classified by '" + model.name() + "' (predicted " +
                            std::to_string(pred) + ", true " + std::to_string(k) + ")");
    }
}

inline bool is_success(std::size_t pred, std::size_t k, const std::optional<std::size_t>& target) {
    return target ? pred == *target : pred != k;
}

inline double sign(double v) { return v > 0.0 ? 1.0 : (v < 0.0 ? -1.0 : 0.0); }

inline void finish(AttackOutcome& out, const Tensor& x) {
    const Tensor delta = kernels::sub(out.adversarial, x);
    out.perturbation_linf = kernels::linf_norm(delta);
    out.perturbation_l2 = std::sqrt(kernels::l2_norm_squared(delta));
}

} // namespace detail

/// Iterates x <- clip(x -/+ alpha * sign(grad CE)) inside the epsilon ball and [0, 1].
/// Targeted descends the loss of the target class; untargeted ascends the loss
/// of the true class. Stops at the first iterate satisfying the success predicate.
inline AttackOutcome pgd_attack(const TrainedModel& model, const Tensor& x, std::size_t true_class,
                                const PgdConfig& cfg, const IterationObserver& observer = {}) {
    cfg.validate();
    detail::check_source(model, x, true_class);
    const auto target = detail::checked_target(model, cfg.mode, true_class);
    const double eps = cfg.epsilon;
    const double alpha = cfg.step();
    const std::size_t loss_class = target.value_or(true_class);
    const double direction = target ? -1.0 : 1.0;

    const auto project = [&](Tensor& adv) {
        for (std::size_t i = 0; i < adv.size(); ++i) {
            adv[i] = std::clamp(std::clamp(adv[i], x[i] - eps, x[i] + eps), 0.0, 1.0);
        }
    };

    AttackOutcome out;
    out.params = cfg;
    out.adversarial = x;
    if (cfg.random_start) {
        SplitMix64 rng(cfg.start_seed);
        for (double& v : out.adversarial.data()) v += rng.uniform(-eps, eps);
        project(out.adversarial);
    }
    out.final_predicted_class = model.predicted_class(out.adversarial);
    if (cfg.random_start && detail::is_success(out.final_predicted_class, true_class, target)) {
        out.success = true;
        detail::finish(out, x);
        return out;
    }

    const auto loss_fn = [&](Tape& tape, Var v) { return cross_entropy_logits(model.forward(tape, v), loss_class); };
    for (int n = 1; n <= cfg.max_iters; ++n) {
        const Tensor g = grad(loss_fn, out.adversarial);
        if (!g.all_finite()) {
            throw AttackNumericError("PGD gradient became non-finite at iteration " + std::to_string(n), n);
        }
        for (std::size_t i = 0; i < g.size(); ++i) out.adversarial[i] += direction * alpha * detail::sign(g[i]);
        project(out.adversarial);
        if (observer) observer(n, out.adversarial);
        out.iterations_used = n;
        out.final_predicted_class = model.predicted_class(out.adversarial);
        if (detail::is_success(out.final_predicted_class, true_class, target)) {
            out.success = true;
            break;
        }
    }
    detail::finish(out, x);
    return out;
}

/// Margin loss on plain logits, max(max_{i != c} z_i - z_c, -kappa).
inline double cw_loss(const Tensor& logits, std::size_t c, double kappa) {
    return evaluate([&](Tape&, Var z) { return cw_loss(z, c, kappa); }, logits);
}

/// Untargeted margin loss on plain logits, max(z_k - max_{i != k} z_i, -kappa).
inline double cw_loss_untargeted(const Tensor& logits, std::size_t k, double kappa) {
    return evaluate([&](Tape&, Var z) { return cw_loss_untargeted(z, k, kappa); }, logits);
}

/// Gradient descent on l2_weight * ||delta||^2 + f(x + delta) in tanh space,
/// x + delta = (tanh(w) + 1) / 2. Returns the successful iterate with the
/// smallest L2 perturbation, or the last iterate when none succeeded.
inline AttackOutcome cw_attack(const TrainedModel& model, const Tensor& x, std::size_t true_class,
                               const CwConfig& cfg, const IterationObserver& observer = {}) {
    cfg.validate();
    detail::check_source(model, x, true_class);
    const auto target = detail::checked_target(model, cfg.mode, true_class);

    constexpr double edge = 1.0 - 1e-9;
    Tensor w = x;
    for (double& v : w.data()) v = std::atanh(std::clamp(2.0 * v - 1.0, -edge, edge));
    const auto to_input = [](const Tensor& ws) {
        Tensor img = ws;
        for (double& v : img.data()) v = (std::tanh(v) + 1.0) / 2.0;
        return img;
    };

    const auto loss_fn = [&](Tape& tape, Var v) {
        const Var logits = model.forward(tape, v);
        const Var f = target ? cw_loss(logits, *target, cfg.kappa) : cw_loss_untargeted(logits, true_class, cfg.kappa);
        const Var dist = l2_norm_squared(sub(v, tape.leaf(x)));
        return add(scale(dist, cfg.l2_weight), f);
    };

    AttackOutcome last;
    last.params = cfg;
    std::optional<AttackOutcome> best;
    for (int n = 1; n <= cfg.max_iters; ++n) {
        const Tensor current = to_input(w);
        const Tensor g = grad(loss_fn, current);
        if (!g.all_finite()) {
            throw AttackNumericError("CW gradient became non-finite at iteration " + std::to_string(n), n);
        }
        for (std::size_t i = 0; i < w.size(); ++i) {
            const double t = std::tanh(w[i]);
            w[i] -= cfg.step_size * g[i] * (1.0 - t * t) / 2.0;
        }
        if (!w.all_finite()) throw AttackNumericError("CW iterate became non-finite at iteration " + std::to_string(n), n);
        last.adversarial = to_input(w);
        if (observer) observer(n, last.adversarial);
        last.iterations_used = n;
        last.final_predicted_class = model.predicted_class(last.adversarial);
        if (detail::is_success(last.final_predicted_class, true_class, target)) {
            last.success = true;
            detail::finish(last, x);
            if (!best || last.perturbation_l2 < best->perturbation_l2) best = last;
            break;
        }
    }
    if (best) return *best;
    detail::finish(last, x);
    return last;
}

inline AttackOutcome run_attack(const TrainedModel& model, const Tensor& x, std::size_t true_class,
                                const AttackConfig& attack, const IterationObserver& observer = {}) {
    return std::visit(
        [&](const auto& cfg) -> AttackOutcome {
            if constexpr (std::is_same_v<std::decay_t<decltype(cfg)>, PgdConfig>) {
                return pgd_attack(model, x, true_class, cfg, observer);
            } else {
                return cw_attack(model, x, true_class, cfg, observer);
            }
        },
        attack.params);
}

/// One observed iteration of attack_until.
struct TraceStep {
    int iteration = 0;
    std::size_t predicted_class = 0;  // by the attacking model
    std::vector<bool> success;        // per registered target model
};

struct AttackTrace {
    AttackOutcome outcome;
    std::vector<TraceStep> steps;
    std::vector<std::optional<int>> first_success;  // per registered target model
};

/// Runs an attack on `model` and, after every iteration, checks whether the
/// current iterate already fools each registered target model.
inline AttackTrace attack_until(const TrainedModel& model, const Tensor& x, std::size_t true_class,
                                const AttackConfig& attack, const std::vector<const TrainedModel*>& targets) {
    if (targets.empty()) throw ContractError("attack_until needs at least one registered target model");
    const auto target_class = detail::checked_target(model, attack.mode(), true_class);
    AttackTrace trace;
    trace.first_success.assign(targets.size(), std::nullopt);
    const IterationObserver observer = [&](int n, const Tensor& adv) {
        TraceStep step;
        step.iteration = n;
        step.predicted_class = model.predicted_class(adv);
        for (std::size_t t = 0; t < targets.size(); ++t) {
            const bool ok = detail::is_success(targets[t]->predicted_class(adv), true_class, target_class);
            step.success.push_back(ok);
            if (ok && !trace.first_success[t]) trace.first_success[t] = n;
        }
        trace.steps.push_back(std::move(step));
    };
    trace.outcome = run_attack(model, x, true_class, attack, observer);
    return trace;
}

} // namespace advlab
