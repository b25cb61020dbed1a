#pragma once

#include <cstdint>
#include <random>
#include <string>
#include <variant>
#include <vector>

#include "alf/alf_block.hpp"
#include "alf/conv.hpp"
#include "alf/tape.hpp"
#include "alf/tensor.hpp"

namespace alf {

enum class LayerKind : std::uint8_t { Conv = 0, Alf = 1 };

struct LayerSpec {
    LayerKind kind = LayerKind::Conv;
    std::string id;  // auto-assigned when empty
    std::int64_t co = 0;
    std::int64_t k = 1;
    std::int64_t stride = 1;
    std::int64_t pad = 0;
    Activation act = Activation::Relu;
    Activation act_inter = Activation::Identity;  // alf layers only
    bool bias = false;
    std::int64_t ci = -1;  // derived from the channel chain; explicit values are cross-checked
    std::int64_t ho = -1, wo = -1;  // derived
};

// Ordered conv/alf body plus a final linear classifier over the flattened
// feature map.
struct ArchSpec {
    std::int64_t in_h = 0, in_w = 0, in_c = 0;
    std::int64_t classes = 0;
    std::vector<LayerSpec> layers;
    std::int64_t flat_features = -1;  // derived

    // Fills per-layer ci/ho/wo and flat_features; rejects channel-chain
    // mismatches, bad geometry and duplicate ids before any tensor work.
    void validate_and_derive();
};

template <typename T>
struct ConvLayerT {
    Tensor4T<T> w;     // [K,K,Ci,Co]
    Tensor4T<T> bias;  // [1,1,1,Co]; size 0 when the layer has no bias
    Activation act = Activation::Relu;
    ConvGeometry geom;
};

template <typename T>
struct ModelT {
    ArchSpec arch;
    std::vector<std::variant<ConvLayerT<T>, ALFBlockT<T>>> layers;
    Tensor4T<T> fc_w;  // [1,1,flat_features,classes]
    Tensor4T<T> fc_b;  // [1,1,1,classes]
};

using Model = ModelT<float>;

template <typename T>
ModelT<T> init_model(ArchSpec arch, std::mt19937& rng) {
    arch.validate_and_derive();
    ModelT<T> m;
    m.arch = arch;
    for (const LayerSpec& s : arch.layers) {
        const ConvGeometry geom{s.k, s.stride, s.pad};
        if (s.kind == LayerKind::Conv) {
            ConvLayerT<T> layer;
            layer.geom = geom;
            layer.act = s.act;
            layer.w = Tensor4T<T>({s.k, s.k, s.ci, s.co}, Layout::KKIO);
            const T std_w =
                static_cast<T>(std::sqrt(2.0 / static_cast<double>(s.k * s.k * s.ci)));
            fill_normal(layer.w, rng, T(0), std_w);
            if (s.bias) layer.bias = Tensor4T<T>::zeros({1, 1, 1, s.co}, Layout::NHWC);
            m.layers.emplace_back(std::move(layer));
        } else {
            m.layers.emplace_back(
                make_alf_block<T>(s.k, s.ci, s.co, geom, s.act_inter, s.act, rng));
        }
    }
    m.fc_w = Tensor4T<T>({1, 1, arch.flat_features, arch.classes}, Layout::KKIO);
    const T std_fc = static_cast<T>(std::sqrt(1.0 / static_cast<double>(arch.flat_features)));
    fill_normal(m.fc_w, rng, T(0), std_fc);
    m.fc_b = Tensor4T<T>::zeros({1, 1, 1, arch.classes}, Layout::NHWC);
    return m;
}

// Inference path shared by training-mode evaluation. Returns [N,1,1,classes].
template <typename T>
Tensor4T<T> model_logits(const ModelT<T>& model, const Tensor4T<T>& input) {
    Tensor4T<T> x = input;
    for (const auto& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayerT<T>>(&layer)) {
            x = conv2d_fast(x, conv->w, conv->geom);
            if (conv->bias.size() > 0) {
                const std::int64_t c = x.dim(3);
                for (std::int64_t i = 0; i < x.size(); i += c) {
                    for (std::int64_t j = 0; j < c; ++j) x.raw()[i + j] += conv->bias.raw()[j];
                }
            }
            x = activation(x, conv->act);
        } else {
            x = alf_forward(std::get<ALFBlockT<T>>(layer), x);
        }
    }
    x = x.reshaped({x.dim(0), 1, 1, model.arch.flat_features});
    Tensor4T<T> logits = pointwise_conv(x, model.fc_w);
    const std::int64_t c = logits.dim(3);
    for (std::int64_t i = 0; i < logits.size(); i += c) {
        for (std::int64_t j = 0; j < c; ++j) logits.raw()[i + j] += model.fc_b.raw()[j];
    }
    return logits;
}

// One training step's graph. Parameter order is the traversal order below;
// optimizer state is keyed off that order.
template <typename T>
struct TrainGraph {
    typename TapeT<T>::NodeId logits = -1;
    typename TapeT<T>::NodeId task_loss = -1;
    typename TapeT<T>::NodeId rec_sum = -1;  // -1 when the model has no alf layers
    typename TapeT<T>::NodeId total = -1;
    std::vector<std::pair<typename TapeT<T>::NodeId, Tensor4T<T>*>> params;
};

template <typename T>
TrainGraph<T> build_train_graph(TapeT<T>& tape, ModelT<T>& model, const Tensor4T<T>& batch,
                                const std::vector<std::int32_t>& labels, double lambda_rec) {
    TrainGraph<T> g;
    auto x = tape.leaf(batch);
    for (auto& layer : model.layers) {
        if (auto* conv = std::get_if<ConvLayerT<T>>(&layer)) {
            auto w = tape.leaf(conv->w, true);
            g.params.emplace_back(w, &conv->w);
            x = tape.conv2d(x, w, conv->geom);
            if (conv->bias.size() > 0) {
                auto b = tape.leaf(conv->bias, true);
                g.params.emplace_back(b, &conv->bias);
                x = tape.add_bias(x, b);
            }
            x = tape.act(x, conv->act);
        } else {
            auto& block = std::get<ALFBlockT<T>>(layer);
            AlfTapeNodes<T> nodes = alf_on_tape(tape, block, x);
            g.params.emplace_back(nodes.w_ref, &block.w_ref);
            g.params.emplace_back(nodes.encoder, &block.encoder);
            g.params.emplace_back(nodes.w_exp, &block.w_exp);
            x = nodes.out;
            g.rec_sum = (g.rec_sum < 0)
                            ? nodes.rec_loss
                            : tape.add_scaled(g.rec_sum, nodes.rec_loss, T(1), T(1));
        }
    }
    x = tape.reshape(x, {tape.value(x).dim(0), 1, 1, model.arch.flat_features});
    auto fw = tape.leaf(model.fc_w, true);
    auto fb = tape.leaf(model.fc_b, true);
    g.params.emplace_back(fw, &model.fc_w);
    g.params.emplace_back(fb, &model.fc_b);
    g.logits = tape.add_bias(tape.pointwise(x, fw), fb);
    g.task_loss = tape.softmax_cross_entropy(g.logits, labels);
    g.total = (g.rec_sum < 0)
                  ? g.task_loss
                  : tape.add_scaled(g.task_loss, g.rec_sum, T(1), static_cast<T>(lambda_rec));
    return g;
}

}  // namespace alf
