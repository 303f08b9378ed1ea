#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <numeric>
#include <string>
#include <utility>
#include <vector>

#include "advlab/autodiff.hpp"
#include "advlab/dataset.hpp"
#include "advlab/error.hpp"
#include "advlab/random.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

/// Architecture and seed of one feed-forward ReLU classifier.
struct ModelSpec {
    std::string name;
    std::size_t input_dim = 0;
    std::vector<std::size_t> hidden_dims;
    std::size_t num_classes = 0;
    std::uint64_t seed = 0;

    void validate() const {
        if (name.empty()) throw ContractError("model name must not be empty");
        if (input_dim == 0) throw ContractError("model '" + name + "': input_dim must be positive");
        if (num_classes < 2) throw ContractError("model '" + name + "': num_classes must be >= 2");
        for (std::size_t h : hidden_dims)
            if (h == 0) throw ContractError("model '" + name + "': hidden layer widths must be positive");
    }

    /// Fan-in/fan-out of each dense layer, input to output.
    std::vector<std::pair<std::size_t, std::size_t>> layer_dims() const {
        std::vector<std::pair<std::size_t, std::size_t>> dims;
        std::size_t in = input_dim;
        for (std::size_t h : hidden_dims) {
            dims.emplace_back(in, h);
            in = h;
        }
        dims.emplace_back(in, num_classes);
        return dims;
    }

    friend bool operator==(const ModelSpec&, const ModelSpec&) = default;
};

struct DenseLayer {
    Tensor weight;  // [fan_in x fan_out]
    Tensor bias;    // [fan_out]
};

struct TrainingInfo {
    std::size_t epochs = 0;
    double learning_rate = 0.0;
    std::size_t batch_size = 0;
    double final_accuracy = 0.0;

    friend bool operator==(const TrainingInfo&, const TrainingInfo&) = default;
};

struct ClassScore {
    std::size_t class_index = 0;
    double logit = 0.0;
};

/// Logits plus the k best classes, descending, ties to the lower class index.
struct Prediction {
    Tensor logits;
    std::vector<ClassScore> top_k;

    std::size_t top() const { return top_k.front().class_index; }
};

/// Immutable trained classifier. Logits are affine-ReLU-...-affine.
class TrainedModel {
public:
    TrainedModel() = default;
    TrainedModel(ModelSpec spec, std::vector<DenseLayer> layers, TrainingInfo info = {})
        : spec_(std::move(spec)), layers_(std::move(layers)), info_(info) {
        spec_.validate();
        const auto dims = spec_.layer_dims();
        if (dims.size() != layers_.size()) {
            throw DimensionError("model '" + spec_.name + "' expects " + std::to_string(dims.size()) + " layers, got " +
                                 std::to_string(layers_.size()));
        }
        for (std::size_t i = 0; i < dims.size(); ++i) {
            const Shape w{dims[i].first, dims[i].second};
            const Shape b{dims[i].second};
            if (layers_[i].weight.shape() != w || layers_[i].bias.shape() != b) {
                throw DimensionError("model '" + spec_.name + "' layer " + std::to_string(i) + " has weight " +
                                     shape_string(layers_[i].weight.shape()) + ", expected " + shape_string(w));
            }
        }
    }

    const ModelSpec& spec() const noexcept { return spec_; }
    const std::string& name() const noexcept { return spec_.name; }
    const std::vector<DenseLayer>& layers() const noexcept { return layers_; }
    const TrainingInfo& info() const noexcept { return info_; }
    std::size_t num_classes() const noexcept { return spec_.num_classes; }
    std::size_t input_dim() const noexcept { return spec_.input_dim; }

    /// Logit vector [M] for one input of `input_dim` features.
    Tensor logits(const Tensor& x) const {
        check_input(x);
        Tensor h = x.reshaped({1, x.size()});
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = kernels::add_bias(kernels::matmul(h, layers_[i].weight), layers_[i].bias);
            if (i + 1 < layers_.size()) h = kernels::relu(h);
        }
        return h.reshaped({spec_.num_classes});
    }

    /// Taped forward pass with weights as constants. Same arithmetic as logits().
    Var forward(Tape& tape, Var x) const {
        check_input(tape.value(x));
        Var h = reshape(x, {1, spec_.input_dim});
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            h = add_bias(matmul(h, tape.leaf(layers_[i].weight)), tape.leaf(layers_[i].bias));
            if (i + 1 < layers_.size()) h = relu(h);
        }
        return reshape(h, {spec_.num_classes});
    }

    std::size_t predicted_class(const Tensor& x) const {
        const Tensor z = logits(x);
        return kernels::argmax(z.data());
    }

    void check_input(const Tensor& x) const {
        if (x.size() != spec_.input_dim || x.rank() != 1) {
            throw DimensionError("model '" + spec_.name + "' expects input [" + std::to_string(spec_.input_dim) +
                                 "], got " + shape_string(x.shape()));
        }
    }

private:
    ModelSpec spec_;
    std::vector<DenseLayer> layers_;
    TrainingInfo info_;
};

/// Orders classes by logit, descending; equal logits keep ascending class order.
inline std::vector<ClassScore> rank_classes(const Tensor& logits, std::size_t k) {
    std::vector<std::size_t> order(logits.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return logits[a] > logits[b]; });
    std::vector<ClassScore> out;
    out.reserve(k);
    for (std::size_t i = 0; i < k; ++i) out.push_back({order[i], logits[order[i]]});
    return out;
}

inline Prediction predict(const TrainedModel& model, const Tensor& x, std::size_t k = 1) {
    if (k < 1 || k > model.num_classes()) {
        throw ContractError("predict: k=" + std::to_string(k) + " outside [1, " +
                            std::to_string(model.num_classes()) + "]");
    }
    Prediction p;
    p.logits = model.logits(x);
    p.top_k = rank_classes(p.logits, k);
    return p;
}

/// Weights drawn uniformly from [-1/sqrt(fan_in), 1/sqrt(fan_in)], biases likewise.
inline TrainedModel initialize_model(const ModelSpec& spec) {
    spec.validate();
    SplitMix64 rng = SplitMix64(spec.seed).fork(1);
    std::vector<DenseLayer> layers;
    for (const auto& [fan_in, fan_out] : spec.layer_dims()) {
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::vector<double> w(fan_in * fan_out), b(fan_out);
        for (double& v : w) v = rng.uniform(-bound, bound);
        for (double& v : b) v = rng.uniform(-bound, bound);
        layers.push_back({Tensor::matrix(fan_in, fan_out, std::move(w)), Tensor::vector(std::move(b))});
    }
    return TrainedModel(spec, std::move(layers));
}

inline double accuracy(const TrainedModel& model, const LabeledDataset& data) {
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (const auto& item : data.items())
        if (model.predicted_class(item.input) == item.label) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

struct TrainOptions {
    std::size_t epochs = 50;
    double learning_rate = 0.1;
    std::size_t batch_size = 16;
};

/// Minibatch SGD on mean cross entropy, constant learning rate, no momentum.
/// Shuffling is drawn from the spec seed, so equal inputs give equal weights.
inline TrainedModel train(const ModelSpec& spec, const LabeledDataset& data, const TrainOptions& opt) {
    spec.validate();
    if (data.empty()) throw ContractError("train: dataset for model '" + spec.name + "' is empty");
    if (data.input_dim() != spec.input_dim) {
        throw DimensionError("train: dataset has " + std::to_string(data.input_dim()) + " features, model '" +
                             spec.name + "' expects " + std::to_string(spec.input_dim));
    }
    if (data.num_classes() > spec.num_classes) {
        throw RangeError("train: dataset has " + std::to_string(data.num_classes()) + " classes, model '" + spec.name +
                         "' has " + std::to_string(spec.num_classes));
    }
    if (opt.batch_size == 0) throw ContractError("train: batch_size must be positive");
    if (!(opt.learning_rate > 0.0)) throw ContractError("train: learning rate must be positive");

    TrainedModel init = initialize_model(spec);
    std::vector<DenseLayer> layers = init.layers();
    SplitMix64 shuffler = SplitMix64(spec.seed).fork(2);
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    const std::size_t d = spec.input_dim;

    for (std::size_t epoch = 1; epoch <= opt.epochs; ++epoch) {
        shuffler.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
            const std::size_t b = std::min(opt.batch_size, order.size() - start);
            std::vector<double> xs(b * d);
            std::vector<std::size_t> labels(b);
            for (std::size_t r = 0; r < b; ++r) {
                const auto& item = data[order[start + r]];
                std::copy(item.input.data().begin(), item.input.data().end(), xs.begin() + static_cast<std::ptrdiff_t>(r * d));
                labels[r] = item.label;
            }
            Tape tape;
            Var h = tape.leaf(Tensor::matrix(b, d, std::move(xs)));
            std::vector<Var> params;
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const Var w = tape.leaf(layers[i].weight);
                const Var bias = tape.leaf(layers[i].bias);
                params.push_back(w);
                params.push_back(bias);
                h = add_bias(matmul(h, w), bias);
                if (i + 1 < layers.size()) h = relu(h);
            }
            const Var loss = cross_entropy_logits(h, labels);
            if (!std::isfinite(tape.value(loss).item())) {
                throw TrainingDivergedError("training of model '" + spec.name + "' diverged (non-finite loss) in epoch " +
                                                std::to_string(epoch),
                                            epoch);
            }
            const Gradients g = tape.backward(loss);
            for (std::size_t i = 0; i < layers.size(); ++i) {
                const Tensor& gw = g[params[2 * i]];
                const Tensor& gb = g[params[2 * i + 1]];
                for (std::size_t j = 0; j < gw.size(); ++j) layers[i].weight[j] -= opt.learning_rate * gw[j];
                for (std::size_t j = 0; j < gb.size(); ++j) layers[i].bias[j] -= opt.learning_rate * gb[j];
            }
        }
    }
    for (const auto& layer : layers) {
        if (!layer.weight.all_finite() || !layer.bias.all_finite()) {
            throw TrainingDivergedError("training of model '" + spec.name + "' produced non-finite weights", opt.epochs);
        }
    }
    TrainedModel trained(spec, std::move(layers));
    TrainingInfo info{opt.epochs, opt.learning_rate, opt.batch_size, accuracy(trained, data)};
    return TrainedModel(spec, trained.layers(), info);
}

} // namespace advlab
