#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "advlab/error.hpp"
#include "advlab/tensor.hpp"

namespace advlab {

enum class OpKind {
    Leaf,
    Matmul,
    AddBias,
    Relu,
    CrossEntropy,
    Add,
    Sub,
    Mul,
    Scale,
    Sum,
    L2NormSquared,
    CwLoss,
    Reshape,
};

inline const char* op_name(OpKind kind) {
    switch (kind) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Matmul: return "matmul";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Relu: return "relu";
    case OpKind::CrossEntropy: return "cross_entropy_logits";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::Sum: return "sum";
    case OpKind::L2NormSquared: return "l2_norm_squared";
    case OpKind::CwLoss: return "cw_loss";
    case OpKind::Reshape: return "reshape";
    }
    return "?";
}

class Tape;

/// Handle to a value recorded on a tape. Cheap to copy; only valid while the tape lives.
struct Var {
    Tape* tape = nullptr;
    std::size_t id = 0;
};

/// One recorded primitive: its inputs, output value, and whatever backward needs.
struct Node {
    OpKind kind = OpKind::Leaf;
    std::vector<std::size_t> inputs;
    Tensor value;
    Tensor saved;                      // softmax probabilities for cross entropy
    std::vector<std::size_t> indices;  // class labels, or the two active logits of cw_loss
    double scalar = 0.0;               // scale factor, or +1/-1 activity flag of cw_loss
};

/// Gradient of a scalar with respect to every node of a tape.
class Gradients {
public:
    explicit Gradients(std::vector<Tensor> grads) : grads_(std::move(grads)) {}

    const Tensor& operator[](Var v) const { return grads_.at(v.id); }
    const Tensor& at(std::size_t id) const { return grads_.at(id); }

private:
    std::vector<Tensor> grads_;
};

/// Reverse-mode tape for the fixed primitive set above.
///
/// A tape is single-threaded; independent tapes may run concurrently.
class Tape {
public:
    /// Custom backward: returns one gradient per input of `node`.
    using BackwardRule = std::function<std::vector<Tensor>(const Tape&, const Node&, const Tensor& out_grad)>;

    Tape() = default;
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    Var leaf(Tensor value) {
        Node n;
        n.value = std::move(value);
        return push(std::move(n));
    }

    const Tensor& value(Var v) const { return nodes_.at(v.id).value; }
    const Node& node(std::size_t id) const { return nodes_.at(id); }
    std::size_t size() const noexcept { return nodes_.size(); }

    /// Replaces the backward rule of one primitive on this tape. Used to
    /// check that the gradient checker catches a wrong rule.
    void override_backward(OpKind kind, BackwardRule rule) { overrides_[kind] = std::move(rule); }

    /// Ids of the non-leaf nodes visited by the last backward(), in visit order.
    const std::vector<std::size_t>& last_backward_order() const noexcept { return order_; }

    Gradients backward(Var loss) {
        check_owner(loss);
        const Node& out = nodes_.at(loss.id);
        if (!out.value.is_scalar()) {
            throw ContractError("backward requires a scalar loss, got shape " + shape_string(out.value.shape()));
        }
        std::vector<Tensor> grads;
        grads.reserve(nodes_.size());
        for (const Node& n : nodes_) grads.push_back(Tensor::zeros(n.value.shape()));
        grads[loss.id] = Tensor::filled(out.value.shape(), 1.0);

        order_.clear();
        for (std::size_t id = loss.id + 1; id-- > 0;) {
            const Node& n = nodes_[id];
            if (n.kind == OpKind::Leaf) continue;
            order_.push_back(id);
            std::vector<Tensor> in_grads = backward_node(n, grads[id]);
            for (std::size_t i = 0; i < n.inputs.size(); ++i) {
                Tensor& acc = grads[n.inputs[i]];
                const Tensor& g = in_grads[i];
                if (g.shape() != acc.shape()) {
                    throw DimensionError(std::string("backward of ") + op_name(n.kind) + " produced gradient " +
                                         shape_string(g.shape()) + " for input " + shape_string(acc.shape()));
                }
                for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += g[j];
            }
        }
        return Gradients(std::move(grads));
    }

    // Recording entry points used by the free functions below.
    Var record(OpKind kind, std::vector<std::size_t> inputs, Tensor value) {
        Node n;
        n.kind = kind;
        n.inputs = std::move(inputs);
        n.value = std::move(value);
        return push(std::move(n));
    }
    Var record(Node n) { return push(std::move(n)); }

    void check_owner(Var v) const {
        if (v.tape != this || v.id >= nodes_.size()) throw ContractError("variable does not belong to this tape");
    }

private:
    Var push(Node n) {
        nodes_.push_back(std::move(n));
        return Var{this, nodes_.size() - 1};
    }

    std::vector<Tensor> backward_node(const Node& n, const Tensor& g) const {
        if (auto it = overrides_.find(n.kind); it != overrides_.end()) return it->second(*this, n, g);
        const auto in = [&](std::size_t i) -> const Tensor& { return nodes_[n.inputs[i]].value; };
        switch (n.kind) {
        case OpKind::Matmul: {
            // dA = dC B^T, dB = A^T dC
            return {kernels::matmul(g, kernels::transpose(in(1))), kernels::matmul(kernels::transpose(in(0)), g)};
        }
        case OpKind::AddBias: {
            Tensor db = Tensor::zeros(in(1).shape());
            const std::size_t c = db.size();
            for (std::size_t i = 0; i < g.size(); ++i) db[i % c] += g[i];
            return {g, db};
        }
        case OpKind::Relu: {
            Tensor da = g;
            const Tensor& a = in(0);
            for (std::size_t i = 0; i < da.size(); ++i)
                if (!(a[i] > 0.0)) da[i] = 0.0;
            return {da};
        }
        case OpKind::CrossEntropy: {
            // (softmax - onehot) per row, averaged over rows.
            const Tensor& p = n.saved;
            Tensor dl = p;
            const std::size_t m = p.cols();
            const std::size_t rows = n.indices.size();
            for (std::size_t r = 0; r < rows; ++r) dl[r * m + n.indices[r]] -= 1.0;
            const double s = g.item() / static_cast<double>(rows);
            for (double& v : dl.data()) v *= s;
            return {dl};
        }
        case OpKind::Add: return {g, g};
        case OpKind::Sub: return {g, kernels::scale(g, -1.0)};
        case OpKind::Mul: return {kernels::mul(g, in(1)), kernels::mul(g, in(0))};
        case OpKind::Scale: return {kernels::scale(g, n.scalar)};
        case OpKind::Sum: return {Tensor::filled(in(0).shape(), g.item())};
        case OpKind::L2NormSquared: return {kernels::scale(in(0), 2.0 * g.item())};
        case OpKind::CwLoss: {
            Tensor dl = Tensor::zeros(in(0).shape());
            if (n.scalar != 0.0) {
                dl[n.indices[0]] += g.item();
                dl[n.indices[1]] -= g.item();
            }
            return {dl};
        }
        case OpKind::Reshape: return {g.reshaped(in(0).shape())};
        case OpKind::Leaf: break;
        }
        return {};
    }

    std::vector<Node> nodes_;
    std::map<OpKind, BackwardRule> overrides_;
    std::vector<std::size_t> order_;
};

namespace detail {

inline Tape& tape_of(Var a) {
    if (a.tape == nullptr) throw ContractError("variable is not attached to a tape");
    a.tape->check_owner(a);
    return *a.tape;
}

inline Tape& tape_of(Var a, Var b) {
    Tape& t = tape_of(a);
    if (b.tape != &t) throw ContractError("variables recorded on different tapes");
    t.check_owner(b);
    return t;
}

inline void check_class(std::size_t cls, std::size_t m) {
    if (cls >= m) {
        throw IndexError("class index " + std::to_string(cls) + " out of range for " + std::to_string(m) +
                         " logits");
    }
}

} // namespace detail

inline Var matmul(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    return t.record(OpKind::Matmul, {a.id, b.id}, kernels::matmul(t.value(a), t.value(b)));
}

inline Var add_bias(Var a, Var bias) {
    Tape& t = detail::tape_of(a, bias);
    return t.record(OpKind::AddBias, {a.id, bias.id}, kernels::add_bias(t.value(a), t.value(bias)));
}

inline Var relu(Var a) {
    Tape& t = detail::tape_of(a);
    return t.record(OpKind::Relu, {a.id}, kernels::relu(t.value(a)));
}

inline Var add(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    return t.record(OpKind::Add, {a.id, b.id}, kernels::add(t.value(a), t.value(b)));
}

inline Var sub(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    return t.record(OpKind::Sub, {a.id, b.id}, kernels::sub(t.value(a), t.value(b)));
}

inline Var mul(Var a, Var b) {
    Tape& t = detail::tape_of(a, b);
    return t.record(OpKind::Mul, {a.id, b.id}, kernels::mul(t.value(a), t.value(b)));
}

inline Var scale(Var a, double s) {
    Tape& t = detail::tape_of(a);
    Node n;
    n.kind = OpKind::Scale;
    n.inputs = {a.id};
    n.value = kernels::scale(t.value(a), s);
    n.scalar = s;
    return t.record(std::move(n));
}

inline Var sum(Var a) {
    Tape& t = detail::tape_of(a);
    return t.record(OpKind::Sum, {a.id}, Tensor::scalar(kernels::sum(t.value(a))));
}

inline Var l2_norm_squared(Var a) {
    Tape& t = detail::tape_of(a);
    return t.record(OpKind::L2NormSquared, {a.id}, Tensor::scalar(kernels::l2_norm_squared(t.value(a))));
}

inline Var reshape(Var a, Shape shape) {
    Tape& t = detail::tape_of(a);
    return t.record(OpKind::Reshape, {a.id}, t.value(a).reshaped(std::move(shape)));
}

/// Mean cross entropy of a [B x M] logit matrix (or one [M] vector) against labels.
inline Var cross_entropy_logits(Var logits, std::span<const std::size_t> labels) {
    Tape& t = detail::tape_of(logits);
    const Tensor& z = t.value(logits);
    if (z.rank() > 2) throw DimensionError("cross_entropy_logits expects [M] or [B x M], got " + shape_string(z.shape()));
    const std::size_t rows = z.rows(), m = z.cols();
    if (labels.size() != rows) {
        throw DimensionError("cross_entropy_logits: " + std::to_string(labels.size()) + " labels for " +
                             std::to_string(rows) + " rows");
    }
    Node n;
    n.kind = OpKind::CrossEntropy;
    n.inputs = {logits.id};
    n.saved = z;
    double total = 0.0;
    for (std::size_t r = 0; r < rows; ++r) {
        detail::check_class(labels[r], m);
        const auto row = z.data().subspan(r * m, m);
        total += kernels::cross_entropy(row, labels[r]);
        const auto p = kernels::softmax(row);
        std::copy(p.begin(), p.end(), n.saved.data().begin() + static_cast<std::ptrdiff_t>(r * m));
    }
    n.indices.assign(labels.begin(), labels.end());
    n.value = Tensor::scalar(total / static_cast<double>(rows));
    return t.record(std::move(n));
}

inline Var cross_entropy_logits(Var logits, std::size_t cls) {
    const std::size_t labels[] = {cls};
    return cross_entropy_logits(logits, std::span<const std::size_t>(labels));
}

namespace detail {

/// Largest logit other than `cls`; ties go to the lowest index.
inline std::size_t runner_up(std::span<const double> z, std::size_t cls) {
    std::size_t best = cls == 0 ? 1 : 0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        if (i == cls) continue;
        if (z[i] > z[best]) best = i;
    }
    return best;
}

inline Var cw_record(Var logits, std::size_t plus, std::size_t minus, double kappa) {
    Tape& t = detail::tape_of(logits);
    const Tensor& z = t.value(logits);
    const double margin = z[plus] - z[minus];
    Node n;
    n.kind = OpKind::CwLoss;
    n.inputs = {logits.id};
    n.indices = {plus, minus};
    // On a tie with -kappa the first argument of the outer max is taken.
    n.scalar = margin >= -kappa ? 1.0 : 0.0;
    n.value = Tensor::scalar(margin >= -kappa ? margin : -kappa);
    return t.record(std::move(n));
}

inline void check_cw_args(const Tensor& z, std::size_t cls, double kappa) {
    if (z.rank() != 1) throw DimensionError("cw_loss expects a logit vector, got " + shape_string(z.shape()));
    if (z.size() < 2) throw ContractError("cw_loss needs at least two classes");
    check_class(cls, z.size());
    if (!std::isfinite(kappa) || kappa < 0.0) throw ContractError("cw_loss kappa must be finite and >= 0");
}

} // namespace detail

/// Targeted margin loss: max(max_{i != c} z_i - z_c, -kappa).
inline Var cw_loss(Var logits, std::size_t target, double kappa) {
    const Tensor& z = detail::tape_of(logits).value(logits);
    detail::check_cw_args(z, target, kappa);
    return detail::cw_record(logits, detail::runner_up(z.data(), target), target, kappa);
}

/// Untargeted margin loss: max(z_k - max_{i != k} z_i, -kappa).
inline Var cw_loss_untargeted(Var logits, std::size_t true_class, double kappa) {
    const Tensor& z = detail::tape_of(logits).value(logits);
    detail::check_cw_args(z, true_class, kappa);
    return detail::cw_record(logits, true_class, detail::runner_up(z.data(), true_class), kappa);
}

/// Gradient of a scalar-valued `loss_fn(Tape&, Var)` at `at`.
template <class LossFn>
Tensor grad(LossFn&& loss_fn, const Tensor& at) {
    Tape tape;
    const Var x = tape.leaf(at);
    const Var loss = loss_fn(tape, x);
    return tape.backward(loss)[x];
}

/// Loss value without keeping the tape.
template <class LossFn>
double evaluate(LossFn&& loss_fn, const Tensor& at) {
    Tape tape;
    const Var x = tape.leaf(at);
    const Var loss = loss_fn(tape, x);
    const Tensor& v = tape.value(loss);
    if (!v.is_scalar()) throw ContractError("loss must be scalar, got shape " + shape_string(v.shape()));
    return v.item();
}

} // namespace advlab
