#pragma once

// Random instance generators and property checks shared by `advlab verify`,
// the unit tests, and the acceptance suite.

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <type_traits>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <json.hpp>

#include "advlab/attacks.hpp"
#include "advlab/autodiff.hpp"
#include "advlab/classifier.hpp"
#include "advlab/gradcheck.hpp"
#include "advlab/hierarchy.hpp"
#include "advlab/random.hpp"

namespace advlab {

/// Dense ReLU network with N(0, 1/fan_in) weights and N(0, 0.1) biases.
inline TrainedModel random_model(SplitMix64& rng, std::size_t input_dim, const std::vector<std::size_t>& hidden,
                                 std::size_t num_classes, const std::string& name = "random") {
    ModelSpec spec{name, input_dim, hidden, num_classes, rng.next()};
    std::vector<DenseLayer> layers;
    for (const auto& [in, out] : spec.layer_dims()) {
        DenseLayer l{Tensor::zeros({in, out}), Tensor::zeros({out})};
        const double sd = 1.0 / std::sqrt(static_cast<double>(in));
        for (double& w : l.weight.data()) w = sd * rng.normal();
        for (double& b : l.bias.data()) b = 0.1 * rng.normal();
        layers.push_back(std::move(l));
    }
    return TrainedModel(spec, std::move(layers));
}

inline Tensor random_unit_input(SplitMix64& rng, std::size_t dim) {
    Tensor x = Tensor::zeros({dim});
    for (double& v : x.data()) v = rng.uniform();
    return x;
}

/// Smallest |pre-activation| over all hidden units for input `x`. Finite
/// differences straddle a ReLU kink when this is below the step size.
inline double kink_distance(const TrainedModel& model, const Tensor& x) {
    Tensor h = x.reshaped({1, x.size()});
    double closest = INFINITY;
    const auto& layers = model.layers();
    for (std::size_t i = 0; i + 1 < layers.size(); ++i) {
        h = kernels::add_bias(kernels::matmul(h, layers[i].weight), layers[i].bias);
        for (double v : h.data()) closest = std::min(closest, std::abs(v));
        h = kernels::relu(h);
    }
    return closest;
}

/// Which tensor a gradient check differentiates with respect to.
struct GradTarget {
    enum Kind { Input, Weight, Bias } kind = Input;
    std::size_t layer = 0;
};

/// Cross-entropy of `model` at (x, label), with the tensor named by `target`
/// replaced by the tape variable `v`.
inline Var network_loss(Tape& tape, Var v, const TrainedModel& model, const Tensor& x, std::size_t label,
                        GradTarget target) {
    Var h = target.kind == GradTarget::Input ? reshape(v, {1, x.size()}) : tape.leaf(x.reshaped({1, x.size()}));
    const auto& layers = model.layers();
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const bool here = target.kind != GradTarget::Input && target.layer == i;
        const Var w = here && target.kind == GradTarget::Weight ? v : tape.leaf(layers[i].weight);
        const Var b = here && target.kind == GradTarget::Bias ? v : tape.leaf(layers[i].bias);
        h = add_bias(matmul(h, w), b);
        if (i + 1 < layers.size()) h = relu(h);
    }
    const std::size_t labels[1] = {label};
    return cross_entropy_logits(h, labels);
}

inline const Tensor& grad_target_value(const TrainedModel& model, const Tensor& x, GradTarget t) {
    if (t.kind == GradTarget::Input) return x;
    return t.kind == GradTarget::Weight ? model.layers().at(t.layer).weight : model.layers().at(t.layer).bias;
}

struct NetworkGradCheck {
    GradCheckReport worst;
    GradTarget where;
};

/// Gradient check of the input and every weight and bias of `model`. A
/// non-empty `mutate` hook is installed on each tape before the loss is built.
template <class Mutate = std::nullptr_t>
NetworkGradCheck check_network_gradients(const TrainedModel& model, const Tensor& x, std::size_t label, double h,
                                         double tol, Mutate mutate = nullptr) {
    std::vector<GradTarget> targets{{GradTarget::Input, 0}};
    for (std::size_t i = 0; i < model.layers().size(); ++i) {
        targets.push_back({GradTarget::Weight, i});
        targets.push_back({GradTarget::Bias, i});
    }
    NetworkGradCheck out;
    bool first = true;
    for (const GradTarget& t : targets) {
        const auto loss = [&](Tape& tape, Var v) {
            if constexpr (!std::is_same_v<Mutate, std::nullptr_t>) mutate(tape);
            return network_loss(tape, v, model, x, label, t);
        };
        const auto r = finite_diff_check(loss, grad_target_value(model, x, t), h, tol);
        if (first || r.max_rel_error > out.worst.max_rel_error) {
            out.worst = r;
            out.where = t;
            first = false;
        }
    }
    out.worst.tolerance = tol;
    out.worst.passed = out.worst.max_rel_error < tol;
    return out;
}

/// Wrong ReLU backward rule that ignores the activation mask.
inline void mutate_relu_backward(Tape& tape) {
    tape.override_backward(OpKind::Relu, [](const Tape&, const Node&, const Tensor& g) { return std::vector<Tensor>{g}; });
}

// ---------------------------------------------------------------------------
// PGD soundness
// ---------------------------------------------------------------------------

struct PgdFuzzCase {
    TrainedModel model;
    Tensor input;
    std::size_t true_class = 0;
    PgdConfig config;
};

/// A random network, a random input in [0,1] labeled with the network's own
/// prediction, and a random PGD configuration.
inline PgdFuzzCase random_pgd_case(SplitMix64& rng) {
    const std::size_t d = 1 + rng.below(12);
    const std::size_t m = 2 + rng.below(6);
    std::vector<std::size_t> hidden;
    for (std::size_t i = rng.below(3); i > 0; --i) hidden.push_back(1 + rng.below(12));
    PgdFuzzCase c;
    c.model = random_model(rng, d, hidden, m);
    c.input = random_unit_input(rng, d);
    // Pin some coordinates to the box faces to exercise clamping.
    for (double& v : c.input.data()) {
        const double u = rng.uniform();
        if (u < 0.1) v = 0.0;
        else if (u < 0.2) v = 1.0;
    }
    c.true_class = c.model.predicted_class(c.input);
    const double pick = rng.uniform();
    c.config.epsilon = pick < 0.1 ? 0.0 : rng.uniform(0.0, 0.5);
    c.config.alpha = c.config.epsilon == 0.0 ? 0.0 : c.config.epsilon * rng.uniform(0.05, 1.0);
    c.config.max_iters = 1 + static_cast<int>(rng.below(30));
    c.config.random_start = rng.uniform() < 0.3;
    c.config.start_seed = rng.next();
    if (rng.uniform() < 0.3) {
        c.config.mode = AttackMode::targeted_at((c.true_class + 1 + rng.below(m - 1)) % m);
    }
    return c;
}

/// Describes the first soundness violation of `out`, if any.
inline std::optional<std::string> pgd_soundness_problem(const Tensor& x, const AttackOutcome& out, double epsilon,
                                                        double slack = 1e-9) {
    const Tensor& adv = out.adversarial;
    if (adv.shape() != x.shape()) return "adversarial shape differs from input";
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(adv[i] >= 0.0 && adv[i] <= 1.0)) return "coordinate " + std::to_string(i) + " leaves [0,1]";
        if (!(std::abs(adv[i] - x[i]) <= epsilon + slack)) {
            return "coordinate " + std::to_string(i) + " moved " + std::to_string(std::abs(adv[i] - x[i])) +
                   " > epsilon " + std::to_string(epsilon);
        }
    }
    if (epsilon == 0.0 && !(adv == x)) return "epsilon = 0 changed the input";
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// Margin loss
// ---------------------------------------------------------------------------

/// Brute-force targeted margin loss: max(max_{i != c} z_i - z_c, -kappa).
inline double margin_loss_oracle(const std::vector<double>& z, std::size_t c, double kappa) {
    double best = -INFINITY;
    for (std::size_t i = 0; i < z.size(); ++i)
        if (i != c) best = std::max(best, z[i]);
    return std::max(best - z[c], -kappa);
}

// ---------------------------------------------------------------------------
// Hierarchies
// ---------------------------------------------------------------------------

/// Random strict tree over `num_classes` classes in the hierarchy JSON format.
/// Some classes stay unlisted and belong to the root only.
inline nlohmann::json random_hierarchy_json(SplitMix64& rng, std::size_t num_classes, std::size_t max_nodes = 12) {
    struct Proto {
        std::string path;
        std::vector<std::size_t> children;
        std::vector<std::size_t> classes;
        std::size_t parent = 0;
    };
    std::vector<Proto> nodes{{"", {}, {}, 0}};
    const std::size_t n_nodes = 1 + rng.below(max_nodes);
    for (std::size_t i = 1; i < n_nodes; ++i) {
        const std::size_t parent = rng.below(nodes.size());
        const std::string seg = std::to_string(nodes[parent].children.size() + 1);
        const std::string path = nodes[parent].path.empty() ? seg : nodes[parent].path + "." + seg;
        nodes[parent].children.push_back(nodes.size());
        nodes.push_back({path, {}, {}, parent});
    }
    for (std::size_t c = 0; c < num_classes; ++c) nodes[rng.below(nodes.size())].classes.push_back(c);

    // Subtree sizes decide which collections survive; empty ones are dropped.
    std::vector<std::size_t> total(nodes.size(), 0);
    for (std::size_t i = nodes.size(); i-- > 0;) {
        total[i] += nodes[i].classes.size();
        if (i > 0) total[nodes[i].parent] += total[i];
    }
    const std::function<nlohmann::json(std::size_t, const std::string&)> emit = [&](std::size_t id,
                                                                                    const std::string& path) {
        nlohmann::json j;
        j["name"] = id == 0 ? "root" : "node-" + path;
        j["path"] = path;
        if (id == 0) j["num_classes"] = num_classes;
        j["classes"] = nodes[id].classes;
        if (rng.uniform() < 0.5) j["class_count"] = total[id];
        j["children"] = nlohmann::json::array();
        std::size_t seg = 0;
        for (std::size_t c : nodes[id].children) {
            if (total[c] == 0) continue;
            const std::string s = std::to_string(++seg);
            j["children"].push_back(emit(c, path.empty() ? s : path + "." + s));
        }
        return j;
    };
    return emit(0, "");
}

/// Describes the first violated structural invariant of `tree`, if any:
/// root totality, child-within-parent monotonicity, disjoint siblings,
/// consistent deepest collections, and serialization round trip.
inline std::optional<std::string> hierarchy_problem(const HierarchyTree& tree) {
    const std::size_t m = tree.num_classes();
    if (tree.class_count(HierarchyTree::root) != m) return "root does not contain every class";
    for (std::size_t id = 0; id < tree.size(); ++id) {
        const HierarchyNode& n = tree.node(id);
        std::set<std::size_t> union_children;
        for (std::size_t c : n.children) {
            const HierarchyNode& ch = tree.node(c);
            if (ch.class_set.size() > n.class_set.size()) return "child '" + ch.name + "' is larger than its parent";
            for (std::size_t cls : ch.class_set) {
                if (!tree.contains(id, cls)) return "class of '" + ch.name + "' missing from parent '" + n.name + "'";
                if (!union_children.insert(cls).second) return "siblings under '" + n.name + "' share a class";
            }
        }
    }
    for (std::size_t cls = 0; cls < m; ++cls) {
        const auto chain = collections_of(tree, cls);
        if (chain.empty() || chain.front() != HierarchyTree::root) return "collections_of does not start at the root";
        if (chain.back() != tree.deepest_collection(cls)) return "collections_of does not end at the deepest collection";
        for (std::size_t id = 0; id < tree.size(); ++id) {
            const bool listed = std::find(chain.begin(), chain.end(), id) != chain.end();
            if (listed != tree.contains(id, cls)) return "collections_of disagrees with membership";
        }
    }
    if (!(parse_hierarchy(serialize_hierarchy(tree)) == tree)) return "serialize/parse round trip changed the tree";
    return std::nullopt;
}

} // namespace advlab
