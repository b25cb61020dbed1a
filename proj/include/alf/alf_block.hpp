#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <string>
#include <vector>

#include "alf/conv.hpp"
#include "alf/tape.hpp"
#include "alf/tensor.hpp"

namespace alf {

// Factorized replacement for one standard convolution. The wide filter bank
// w_ref is compressed through the encoder into a code bank, convolved, then
// expanded back to the original channel count point-wise, so output dims match
// the convolution it replaces. The mask switches code channels off softly
// during training; channels are physically removed only at deployment.
template <typename T>
struct ALFBlockT {
    Tensor4T<T> w_ref;    // [K,K,Ci,Co]
    Tensor4T<T> encoder;  // [1,1,Co,C_code]
    Tensor4T<T> w_exp;    // [1,1,C_code,Co]
    std::vector<std::uint8_t> mask;  // C_code entries in {0,1}
    std::vector<T> soft_scores;      // pre-binarization channel importances
    Activation act_inter = Activation::Identity;
    Activation act = Activation::Identity;
    ConvGeometry geom;

    std::int64_t kernel() const { return w_ref.dim(0); }
    std::int64_t ci() const { return w_ref.dim(2); }
    std::int64_t co() const { return w_ref.dim(3); }
    std::int64_t c_code() const { return w_exp.dim(2); }

    std::int64_t active_count() const {
        std::int64_t n = 0;
        for (auto m : mask) n += (m != 0);
        return n;
    }
    std::int64_t masked_count() const { return c_code() - active_count(); }

    void validate() const {
        geom.validate();
        if (w_ref.dim(0) != w_ref.dim(1) || w_ref.dim(0) != geom.kernel) {
            throw ShapeError("ALFBlock: w_ref kernel dims " + Tensor4T<T>::dims_str(w_ref.dims()) +
                             " do not match geometry kernel " + std::to_string(geom.kernel));
        }
        const std::int64_t cc = c_code();
        if (cc < 1 || cc > co()) {
            throw ShapeError("ALFBlock: C_code " + std::to_string(cc) + " must be in [1, " +
                             std::to_string(co()) + "]");
        }
        if (encoder.dim(0) != 1 || encoder.dim(1) != 1 || encoder.dim(2) != co() ||
            encoder.dim(3) != cc) {
            throw ShapeError("ALFBlock: encoder dims " + Tensor4T<T>::dims_str(encoder.dims()) +
                             " do not match [1,1," + std::to_string(co()) + "," +
                             std::to_string(cc) + "]");
        }
        if (w_exp.dim(0) != 1 || w_exp.dim(1) != 1 || w_exp.dim(3) != co()) {
            throw ShapeError("ALFBlock: w_exp dims " + Tensor4T<T>::dims_str(w_exp.dims()) +
                             " do not match [1,1," + std::to_string(cc) + "," +
                             std::to_string(co()) + "]");
        }
        if (static_cast<std::int64_t>(mask.size()) != cc ||
            static_cast<std::int64_t>(soft_scores.size()) != cc) {
            throw ShapeError("ALFBlock: mask/soft_scores size must equal C_code");
        }
        bool any = false;
        for (auto m : mask) {
            if (m > 1) throw ShapeError("ALFBlock: mask entries must be 0 or 1");
            any = any || (m == 1);
        }
        if (!any) throw ShapeError("ALFBlock: at least one mask entry must be 1");
    }
};

using ALFBlock = ALFBlockT<float>;

// Training starts at full code width (C_code = Co) with the encoder near a
// truncated identity and the expansion near its transpose, so the block
// begins close to the lossless point.
template <typename T>
ALFBlockT<T> make_alf_block(std::int64_t kernel, std::int64_t ci, std::int64_t co,
                            const ConvGeometry& geom, Activation act_inter, Activation act,
                            std::mt19937& rng, std::int64_t c_code = -1) {
    if (c_code < 0) c_code = co;
    ALFBlockT<T> b;
    b.geom = geom;
    b.act_inter = act_inter;
    b.act = act;

    b.w_ref = Tensor4T<T>({kernel, kernel, ci, co}, Layout::KKIO);
    const T std_ref = static_cast<T>(std::sqrt(2.0 / static_cast<double>(kernel * kernel * ci)));
    fill_normal(b.w_ref, rng, T(0), std_ref);

    b.encoder = Tensor4T<T>::zeros({1, 1, co, c_code}, Layout::KKIO);
    std::normal_distribution<double> noise(0.0, 0.01);
    for (std::int64_t o = 0; o < co; ++o) {
        for (std::int64_t c = 0; c < c_code; ++c) {
            b.encoder(0, 0, o, c) = static_cast<T>((o == c ? 1.0 : 0.0) + noise(rng));
        }
    }
    b.w_exp = Tensor4T<T>::zeros({1, 1, c_code, co}, Layout::KKIO);
    for (std::int64_t c = 0; c < c_code; ++c) {
        for (std::int64_t o = 0; o < co; ++o) b.w_exp(0, 0, c, o) = b.encoder(0, 0, o, c);
    }

    b.mask.assign(static_cast<std::size_t>(c_code), 1);
    b.soft_scores.assign(static_cast<std::size_t>(c_code), T(0));
    b.validate();
    return b;
}

// W_code[u,v,i,c] = M[c] * sum_o W_ref[u,v,i,o] * E[o,c]. The filter bank is
// contracted over its output axis, so the point-wise kernel applies with the
// bank viewed as an activation stack. Masked channels are written as exact
// zeros.
template <typename T>
Tensor4T<T> encode_filters(const ALFBlockT<T>& block) {
    block.validate();
    Tensor4T<T> code = pointwise_conv(block.w_ref.relabeled(Layout::NHWC), block.encoder);
    const std::int64_t cc = block.c_code();
    for (std::int64_t i = 0; i < code.size(); i += cc) {
        for (std::int64_t c = 0; c < cc; ++c) {
            if (block.mask[static_cast<std::size_t>(c)] == 0) code.raw()[i + c] = T(0);
        }
    }
    return code.relabeled(Layout::KKIO);
}

// What the deployed pair (code bank, expansion) reconstructs of the original
// filter bank: W_hat[u,v,i,o] = sum_c W_code[u,v,i,c] * W_exp[0,0,c,o].
template <typename T>
Tensor4T<T> decode_filters(const Tensor4T<T>& w_code, const Tensor4T<T>& w_exp) {
    return pointwise_conv(w_code.relabeled(Layout::NHWC), w_exp).relabeled(Layout::KKIO);
}

// act( pointwise( act_inter( conv(A, W_code) ), W_exp ) )
template <typename T>
Tensor4T<T> alf_forward(const ALFBlockT<T>& block, const Tensor4T<T>& a_prev) {
    Tensor4T<T> code = encode_filters(block);
    Tensor4T<T> inter = activation(conv2d_fast(a_prev, code, block.geom), block.act_inter);
    return activation(pointwise_conv(inter, block.w_exp), block.act);
}

// Mean squared error between the reference bank and its round trip through
// the code bank and expansion.
template <typename T>
double reconstruction_loss(const ALFBlockT<T>& block) {
    Tensor4T<T> dec = decode_filters(encode_filters(block), block.w_exp);
    double acc = 0.0;
    for (std::int64_t i = 0; i < dec.size(); ++i) {
        const double d = static_cast<double>(block.w_ref.raw()[i]) -
                         static_cast<double>(dec.raw()[i]);
        acc += d * d;
    }
    return acc / static_cast<double>(dec.size());
}

// Tape subgraph for one block: returns the parameter leaves, the block output
// and the reconstruction-loss node so callers can combine losses.
template <typename T>
struct AlfTapeNodes {
    typename TapeT<T>::NodeId w_ref;
    typename TapeT<T>::NodeId encoder;
    typename TapeT<T>::NodeId w_exp;
    typename TapeT<T>::NodeId w_code;
    typename TapeT<T>::NodeId out;
    typename TapeT<T>::NodeId rec_loss;
};

template <typename T>
AlfTapeNodes<T> alf_on_tape(TapeT<T>& tape, const ALFBlockT<T>& block,
                            typename TapeT<T>::NodeId input) {
    block.validate();
    AlfTapeNodes<T> n;
    n.w_ref = tape.leaf(block.w_ref, true);
    n.encoder = tape.leaf(block.encoder, true);
    n.w_exp = tape.leaf(block.w_exp, true);

    std::vector<T> factors(block.mask.size());
    for (std::size_t i = 0; i < block.mask.size(); ++i) factors[i] = static_cast<T>(block.mask[i]);
    n.w_code = tape.scale_channels(tape.pointwise(n.w_ref, n.encoder), factors);

    auto inter = tape.act(tape.conv2d(input, n.w_code, block.geom), block.act_inter);
    n.out = tape.act(tape.pointwise(inter, n.w_exp), block.act);
    n.rec_loss = tape.mse(tape.pointwise(n.w_code, n.w_exp), n.w_ref);
    return n;
}

}  // namespace alf
