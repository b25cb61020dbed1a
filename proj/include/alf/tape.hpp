#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <utility>
#include <vector>

#include "alf/conv.hpp"
#include "alf/tensor.hpp"

namespace alf {

// Reverse-mode autodiff over Tensor4 ops. The tape is append-only and ids are
// issued in topological order, so the backward sweep is a reverse id walk.
// One training step owns one tape; tapes are never shared across steps.
template <typename T>
class TapeT {
public:
    using NodeId = std::int32_t;

    enum class OpKind : std::uint8_t {
        Leaf,
        Conv2d,         // in0 = activations, in1 = KKIO weights
        Act,
        ScaleChannels,  // per-last-axis constant factors (the pruning mask)
        Reshape,
        AddBias,        // in0 = [N,H,W,C], in1 = [1,1,1,C]
        Mul,            // elementwise, equal dims
        AddScaled,      // alpha*in0 + beta*in1, elementwise, equal dims
        SumAll,
        Mse,            // mean squared difference, scalar
        SoftmaxXent,    // mean cross entropy over rows, labels are constants
    };

    NodeId leaf(Tensor4T<T> value, bool trainable = false) {
        Node n;
        n.kind = OpKind::Leaf;
        n.value = std::move(value);
        n.trainable = trainable;
        return push(std::move(n));
    }

    NodeId conv2d(NodeId x, NodeId w, const ConvGeometry& geom) {
        Node n;
        n.kind = OpKind::Conv2d;
        n.in = {x, w};
        n.geom = geom;
        n.value = conv2d_fast(value(x), value(w), geom);
        return push(std::move(n));
    }

    NodeId pointwise(NodeId x, NodeId w) { return conv2d(x, w, ConvGeometry{1, 1, 0}); }

    NodeId act(NodeId x, Activation kind) {
        Node n;
        n.kind = OpKind::Act;
        n.in = {x, kNone};
        n.activation = kind;
        n.value = activation(value(x), kind);
        return push(std::move(n));
    }

    NodeId scale_channels(NodeId x, std::vector<T> factors) {
        const Tensor4T<T>& xv = value(x);
        if (static_cast<std::int64_t>(factors.size()) != xv.dim(3)) {
            throw ShapeError("scale_channels: factor count does not match last axis");
        }
        Node n;
        n.kind = OpKind::ScaleChannels;
        n.in = {x, kNone};
        n.factors = std::move(factors);
        n.value = xv;
        const std::int64_t ch = xv.dim(3);
        T* d = n.value.raw();
        for (std::int64_t i = 0; i < n.value.size(); ++i) d[i] *= n.factors[static_cast<std::size_t>(i % ch)];
        return push(std::move(n));
    }

    NodeId reshape(NodeId x, typename Tensor4T<T>::Dims nd) {
        Node n;
        n.kind = OpKind::Reshape;
        n.in = {x, kNone};
        n.value = value(x).reshaped(nd);
        return push(std::move(n));
    }

    NodeId add_bias(NodeId x, NodeId b) {
        const Tensor4T<T>& xv = value(x);
        const Tensor4T<T>& bv = value(b);
        if (bv.dim(0) != 1 || bv.dim(1) != 1 || bv.dim(2) != 1 || bv.dim(3) != xv.dim(3)) {
            throw ShapeError("add_bias: bias must be [1,1,1,C] with C matching input");
        }
        Node n;
        n.kind = OpKind::AddBias;
        n.in = {x, b};
        n.value = xv;
        const std::int64_t ch = xv.dim(3);
        T* d = n.value.raw();
        for (std::int64_t i = 0; i < n.value.size(); ++i) d[i] += bv.raw()[i % ch];
        return push(std::move(n));
    }

    NodeId mul(NodeId a, NodeId b) {
        const Tensor4T<T>& av = value(a);
        const Tensor4T<T>& bv = value(b);
        if (!av.same_dims(bv)) throw ShapeError("mul: dimension mismatch");
        Node n;
        n.kind = OpKind::Mul;
        n.in = {a, b};
        n.value = av;
        for (std::int64_t i = 0; i < n.value.size(); ++i) n.value.raw()[i] *= bv.raw()[i];
        return push(std::move(n));
    }

    NodeId add_scaled(NodeId a, NodeId b, T alpha, T beta) {
        const Tensor4T<T>& av = value(a);
        const Tensor4T<T>& bv = value(b);
        if (!av.same_dims(bv)) throw ShapeError("add_scaled: dimension mismatch");
        Node n;
        n.kind = OpKind::AddScaled;
        n.in = {a, b};
        n.alpha = alpha;
        n.beta = beta;
        n.value = Tensor4T<T>(av.dims(), av.layout());
        for (std::int64_t i = 0; i < n.value.size(); ++i) {
            n.value.raw()[i] = alpha * av.raw()[i] + beta * bv.raw()[i];
        }
        return push(std::move(n));
    }

    NodeId sum_all(NodeId x) {
        Node n;
        n.kind = OpKind::SumAll;
        n.in = {x, kNone};
        double acc = 0.0;
        for (T v : value(x).data()) acc += static_cast<double>(v);
        n.value = Tensor4T<T>::scalar(static_cast<T>(acc));
        return push(std::move(n));
    }

    NodeId mse(NodeId a, NodeId b) {
        const Tensor4T<T>& av = value(a);
        const Tensor4T<T>& bv = value(b);
        if (!av.same_dims(bv)) throw ShapeError("mse: dimension mismatch");
        if (av.size() == 0) throw ShapeError("mse: empty tensors");
        Node n;
        n.kind = OpKind::Mse;
        n.in = {a, b};
        double acc = 0.0;
        for (std::int64_t i = 0; i < av.size(); ++i) {
            const double d = static_cast<double>(av.raw()[i]) - static_cast<double>(bv.raw()[i]);
            acc += d * d;
        }
        n.value = Tensor4T<T>::scalar(static_cast<T>(acc / static_cast<double>(av.size())));
        return push(std::move(n));
    }

    // logits: [N,1,1,C]; loss = mean_n -log softmax(logits_n)[label_n].
    NodeId softmax_cross_entropy(NodeId logits, std::vector<std::int32_t> labels) {
        const Tensor4T<T>& lv = value(logits);
        if (lv.dim(1) != 1 || lv.dim(2) != 1) {
            throw ShapeError("softmax_cross_entropy: logits must be [N,1,1,C]");
        }
        const std::int64_t n = lv.dim(0), c = lv.dim(3);
        if (static_cast<std::int64_t>(labels.size()) != n) {
            throw ShapeError("softmax_cross_entropy: label count does not match batch");
        }
        if (n == 0) throw ShapeError("softmax_cross_entropy: empty batch");
        for (std::int32_t y : labels) {
            if (y < 0 || y >= c) {
                throw Error("softmax_cross_entropy: label " + std::to_string(y) +
                            " out of range [0," + std::to_string(c) + ")");
            }
        }
        Node node;
        node.kind = OpKind::SoftmaxXent;
        node.in = {logits, kNone};
        node.labels = std::move(labels);
        node.saved = Tensor4T<T>(lv.dims(), Layout::NHWC);  // softmax probabilities
        double loss = 0.0;
        for (std::int64_t b = 0; b < n; ++b) {
            const T* row = lv.raw() + b * c;
            double mx = static_cast<double>(row[0]);
            for (std::int64_t j = 1; j < c; ++j) mx = std::max(mx, static_cast<double>(row[j]));
            double z = 0.0;
            for (std::int64_t j = 0; j < c; ++j) z += std::exp(static_cast<double>(row[j]) - mx);
            const double logz = std::log(z) + mx;
            T* prow = node.saved.raw() + b * c;
            for (std::int64_t j = 0; j < c; ++j) {
                prow[j] = static_cast<T>(std::exp(static_cast<double>(row[j]) - logz));
            }
            loss += logz - static_cast<double>(row[node.labels[static_cast<std::size_t>(b)]]);
        }
        node.value = Tensor4T<T>::scalar(static_cast<T>(loss / static_cast<double>(n)));
        return push(std::move(node));
    }

    const Tensor4T<T>& value(NodeId id) const { return nodes_[check(id)].value; }
    const Tensor4T<T>& grad(NodeId id) const { return nodes_[check(id)].grad; }
    bool trainable(NodeId id) const { return nodes_[check(id)].trainable; }
    std::size_t size() const { return nodes_.size(); }

    // Populates gradients of everything reachable from the scalar loss node.
    // Accumulators of untouched nodes stay exactly zero.
    void backward(NodeId loss) {
        Node& ln = nodes_[check(loss)];
        if (ln.value.size() != 1) {
            throw Error("backward: loss node must be scalar, got " +
                        Tensor4T<T>::dims_str(ln.value.dims()));
        }
        std::vector<char> touched(nodes_.size(), 0);
        touched[static_cast<std::size_t>(loss)] = 1;
        ln.grad.raw()[0] += T(1);
        for (NodeId id = loss; id >= 0; --id) {
            if (!touched[static_cast<std::size_t>(id)]) continue;
            step_backward(id);
            for (NodeId in : nodes_[static_cast<std::size_t>(id)].in) {
                if (in != kNone) touched[static_cast<std::size_t>(in)] = 1;
            }
        }
        for (NodeId id = 0; id < static_cast<NodeId>(nodes_.size()); ++id) {
            if (touched[static_cast<std::size_t>(id)]) {
                nodes_[static_cast<std::size_t>(id)].grad.check_finite("backward");
            }
        }
    }

    void zero_grads() {
        for (Node& n : nodes_) n.grad.fill(T(0));
    }

private:
    static constexpr NodeId kNone = -1;

    struct Node {
        OpKind kind = OpKind::Leaf;
        std::array<NodeId, 2> in{kNone, kNone};
        Tensor4T<T> value;
        Tensor4T<T> grad;
        bool trainable = false;
        // op payloads
        ConvGeometry geom{};
        Activation activation = Activation::Identity;
        std::vector<T> factors;
        std::vector<std::int32_t> labels;
        Tensor4T<T> saved;
        T alpha = T(0), beta = T(0);
    };

    NodeId push(Node&& n) {
        const NodeId id = static_cast<NodeId>(nodes_.size());
        for (NodeId in : n.in) {
            assert(in == kNone || in < id);  // append-only, cycles impossible
            (void)in;
        }
        n.grad = Tensor4T<T>(n.value.dims(), n.value.layout());
        nodes_.push_back(std::move(n));
        return id;
    }

    std::size_t check(NodeId id) const {
        if (id < 0 || static_cast<std::size_t>(id) >= nodes_.size()) {
            throw Error("tape: invalid node id " + std::to_string(id));
        }
        return static_cast<std::size_t>(id);
    }

    Tensor4T<T>& grad_of(NodeId id) { return nodes_[static_cast<std::size_t>(id)].grad; }

    void step_backward(NodeId id) {
        Node& n = nodes_[static_cast<std::size_t>(id)];
        switch (n.kind) {
            case OpKind::Leaf:
                return;
            case OpKind::Conv2d: {
                conv2d_backward(nodes_[static_cast<std::size_t>(n.in[0])].value,
                                nodes_[static_cast<std::size_t>(n.in[1])].value, n.geom, n.grad,
                                grad_of(n.in[0]), grad_of(n.in[1]));
                return;
            }
            case OpKind::Act: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                if (n.activation == Activation::Identity) {
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) gx.raw()[i] += n.grad.raw()[i];
                } else {
                    const Tensor4T<T>& xv = nodes_[static_cast<std::size_t>(n.in[0])].value;
                    for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                        if (xv.raw()[i] > T(0)) gx.raw()[i] += n.grad.raw()[i];
                    }
                }
                return;
            }
            case OpKind::ScaleChannels: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                const std::int64_t ch = n.value.dim(3);
                for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                    gx.raw()[i] += n.grad.raw()[i] * n.factors[static_cast<std::size_t>(i % ch)];
                }
                return;
            }
            case OpKind::Reshape: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                for (std::int64_t i = 0; i < n.grad.size(); ++i) gx.raw()[i] += n.grad.raw()[i];
                return;
            }
            case OpKind::AddBias: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                Tensor4T<T>& gb = grad_of(n.in[1]);
                const std::int64_t ch = n.value.dim(3);
                for (std::int64_t i = 0; i < n.grad.size(); ++i) gx.raw()[i] += n.grad.raw()[i];
                for (std::int64_t c = 0; c < ch; ++c) {
                    double acc = 0.0;
                    for (std::int64_t i = c; i < n.grad.size(); i += ch) {
                        acc += static_cast<double>(n.grad.raw()[i]);
                    }
                    gb.raw()[c] += static_cast<T>(acc);
                }
                return;
            }
            case OpKind::Mul: {
                const Tensor4T<T>& av = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const Tensor4T<T>& bv = nodes_[static_cast<std::size_t>(n.in[1])].value;
                Tensor4T<T>& ga = grad_of(n.in[0]);
                Tensor4T<T>& gb = grad_of(n.in[1]);
                for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                    ga.raw()[i] += n.grad.raw()[i] * bv.raw()[i];
                    gb.raw()[i] += n.grad.raw()[i] * av.raw()[i];
                }
                return;
            }
            case OpKind::AddScaled: {
                Tensor4T<T>& ga = grad_of(n.in[0]);
                Tensor4T<T>& gb = grad_of(n.in[1]);
                for (std::int64_t i = 0; i < n.grad.size(); ++i) {
                    ga.raw()[i] += n.alpha * n.grad.raw()[i];
                    gb.raw()[i] += n.beta * n.grad.raw()[i];
                }
                return;
            }
            case OpKind::SumAll: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                const T g = n.grad.raw()[0];
                for (std::int64_t i = 0; i < gx.size(); ++i) gx.raw()[i] += g;
                return;
            }
            case OpKind::Mse: {
                const Tensor4T<T>& av = nodes_[static_cast<std::size_t>(n.in[0])].value;
                const Tensor4T<T>& bv = nodes_[static_cast<std::size_t>(n.in[1])].value;
                Tensor4T<T>& ga = grad_of(n.in[0]);
                Tensor4T<T>& gb = grad_of(n.in[1]);
                const T g = n.grad.raw()[0];
                const T scale = g * T(2) / static_cast<T>(av.size());
                for (std::int64_t i = 0; i < av.size(); ++i) {
                    const T d = av.raw()[i] - bv.raw()[i];
                    ga.raw()[i] += scale * d;
                    gb.raw()[i] -= scale * d;
                }
                return;
            }
            case OpKind::SoftmaxXent: {
                Tensor4T<T>& gx = grad_of(n.in[0]);
                const std::int64_t bn = n.saved.dim(0), c = n.saved.dim(3);
                const T g = n.grad.raw()[0];
                const T inv_n = T(1) / static_cast<T>(bn);
                for (std::int64_t b = 0; b < bn; ++b) {
                    const T* prow = n.saved.raw() + b * c;
                    T* grow = gx.raw() + b * c;
                    const std::int64_t y = n.labels[static_cast<std::size_t>(b)];
                    for (std::int64_t j = 0; j < c; ++j) {
                        const T delta = (j == y) ? T(1) : T(0);
                        grow[j] += g * (prow[j] - delta) * inv_n;
                    }
                }
                return;
            }
        }
    }

    std::vector<Node> nodes_;
};

using Tape = TapeT<float>;
using TapeD = TapeT<double>;

}  // namespace alf
