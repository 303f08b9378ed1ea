#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "advlab/classifier.hpp"
#include "advlab/dataset.hpp"
#include "advlab/error.hpp"
#include "advlab/random.hpp"

namespace advlab {

/// Gaussian mixture with a two-level taxonomy: classes of one group sit around
/// a shared group center, so same-group classes are nearer to each other than
/// to classes of other groups. Features are clamped to [0, 1].
struct HierarchicalGaussianSpec {
    std::vector<std::vector<std::size_t>> groups{{0, 1, 2}, {3, 4, 5}, {6, 7}};
    std::size_t input_dim = 16;
    std::size_t train_per_class = 80;
    std::size_t eval_per_class = 30;
    double group_radius = 0.25;  // L2 distance of group centers from the cube center
    double class_radius = 0.16;  // L2 distance of class centers from their group center
    double noise = 0.03;         // per-feature standard deviation

    std::size_t num_classes() const {
        std::size_t m = 0;
        for (const auto& g : groups)
            for (std::size_t c : g) m = std::max(m, c + 1);
        return m;
    }

    void validate() const {
        if (input_dim == 0) throw ConfigError("generator input_dim must be positive");
        std::vector<int> seen(num_classes(), 0);
        for (const auto& g : groups) {
            if (g.empty()) throw ConfigError("generator groups must not be empty");
            for (std::size_t c : g) ++seen[c];
        }
        for (std::size_t c = 0; c < seen.size(); ++c) {
            if (seen[c] != 1) throw ConfigError("generator class " + std::to_string(c) + " must belong to exactly one group");
        }
        if (seen.size() < 2) throw ConfigError("generator needs at least two classes");
        if (!(noise >= 0.0) || !(group_radius >= 0.0) || !(class_radius >= 0.0)) {
            throw ConfigError("generator radii and noise must be non-negative");
        }
    }
};

struct SyntheticData {
    LabeledDataset train;
    LabeledDataset eval;
    std::vector<Tensor> probe;  // uniform inputs for model-distinctness checks
    std::vector<Tensor> class_centers;
};

namespace detail {

inline std::vector<double> random_direction(SplitMix64& rng, std::size_t dim) {
    std::vector<double> v(dim);
    double n2 = 0.0;
    while (n2 == 0.0) {
        n2 = 0.0;
        for (double& x : v) {
            x = rng.normal();
            n2 += x * x;
        }
    }
    const double inv = 1.0 / std::sqrt(n2);
    for (double& x : v) x *= inv;
    return v;
}

inline std::string item_id(const char* prefix, std::size_t n) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%s-%05zu", prefix, n);
    return buf;
}

} // namespace detail

inline SyntheticData generate_hierarchical_gaussian(const HierarchicalGaussianSpec& spec, std::uint64_t seed,
                                                    std::size_t probe_size = 256) {
    spec.validate();
    const std::size_t m = spec.num_classes();
    const std::size_t d = spec.input_dim;
    SplitMix64 geometry = SplitMix64(seed).fork(101);
    std::vector<Tensor> centers(m, Tensor::zeros({d}));
    for (const auto& group : spec.groups) {
        const auto gdir = detail::random_direction(geometry, d);
        for (std::size_t c : group) {
            const auto cdir = detail::random_direction(geometry, d);
            for (std::size_t i = 0; i < d; ++i) {
                centers[c][i] = 0.5 + spec.group_radius * gdir[i] + spec.class_radius * cdir[i];
            }
        }
    }
    const auto sample = [&](SplitMix64& rng, std::size_t per_class, const char* prefix) {
        std::vector<LabeledItem> items;
        std::size_t n = 0;
        for (std::size_t k = 0; k < per_class; ++k) {
            for (std::size_t c = 0; c < m; ++c) {
                std::vector<double> x(d);
                for (std::size_t i = 0; i < d; ++i) x[i] = std::clamp(centers[c][i] + spec.noise * rng.normal(), 0.0, 1.0);
                items.push_back({detail::item_id(prefix, n++), Tensor::vector(std::move(x)), c});
            }
        }
        return LabeledDataset(m, std::move(items));
    };
    SplitMix64 train_rng = SplitMix64(seed).fork(102);
    SplitMix64 eval_rng = SplitMix64(seed).fork(103);
    SplitMix64 probe_rng = SplitMix64(seed).fork(104);
    SyntheticData out{sample(train_rng, spec.train_per_class, "train"), sample(eval_rng, spec.eval_per_class, "eval"), {},
                      centers};
    for (std::size_t i = 0; i < probe_size; ++i) {
        std::vector<double> x(d);
        for (double& v : x) v = probe_rng.uniform();
        out.probe.push_back(Tensor::vector(std::move(x)));
    }
    return out;
}

/// Pairs of models with different seeds that agree on every probe input.
/// Such a zoo cannot show model-to-model transfer.
struct IndistinctPair {
    std::string a;
    std::string b;
};

inline std::vector<IndistinctPair> indistinct_models(const std::vector<TrainedModel>& models,
                                                     const std::vector<Tensor>& probe) {
    std::vector<IndistinctPair> out;
    for (std::size_t i = 0; i < models.size(); ++i) {
        for (std::size_t j = i + 1; j < models.size(); ++j) {
            if (models[i].spec().seed == models[j].spec().seed) continue;
            const bool agree = std::all_of(probe.begin(), probe.end(), [&](const Tensor& x) {
                return models[i].predicted_class(x) == models[j].predicted_class(x);
            });
            if (agree) out.push_back({models[i].name(), models[j].name()});
        }
    }
    return out;
}

} // namespace advlab
