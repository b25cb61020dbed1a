#include "alf/deploy.hpp"

#include <algorithm>
#include <cmath>

#include "alf/binio.hpp"
#include "alf/log.hpp"

namespace alf {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'F', '1'};
constexpr std::uint8_t kKindConv = 0;
constexpr std::uint8_t kKindAlf = 1;
constexpr std::uint8_t kKindLinear = 2;

}  // namespace

std::int64_t DeployedModel::input_channels() const {
    if (layers.empty()) throw ShapeError("deployed model has no layers");
    if (const auto* c = std::get_if<DeployedConv>(&layers.front())) return c->w.dim(2);
    if (const auto* a = std::get_if<DeployedAlf>(&layers.front())) return a->w_code.dim(2);
    return std::get<DeployedLinear>(layers.front()).w.dim(2);
}

std::int64_t DeployedModel::classes() const {
    if (layers.empty()) throw ShapeError("deployed model has no layers");
    if (const auto* c = std::get_if<DeployedConv>(&layers.back())) return c->w.dim(3);
    if (const auto* a = std::get_if<DeployedAlf>(&layers.back())) return a->w_exp.dim(3);
    return std::get<DeployedLinear>(layers.back()).w.dim(3);
}

DeployedAlf compact(const ALFBlock& block) {
    block.validate();
    const std::int64_t k = block.kernel(), ci = block.ci(), co = block.co();
    const std::int64_t cc = block.c_code(), ce = block.active_count();

    Tensor4 code = encode_filters(block);
    DeployedAlf out;
    out.geom = block.geom;
    out.act_inter = block.act_inter;
    out.act = block.act;
    out.w_code = Tensor4::zeros({k, k, ci, ce}, Layout::KKIO);
    out.w_exp = Tensor4::zeros({1, 1, ce, co}, Layout::KKIO);

    std::int64_t dst = 0;
    for (std::int64_t c = 0; c < cc; ++c) {
        if (block.mask[static_cast<std::size_t>(c)] == 0) continue;
        for (std::int64_t r = 0; r < k * k * ci; ++r) {
            out.w_code.raw()[r * ce + dst] = code.raw()[r * cc + c];
        }
        for (std::int64_t o = 0; o < co; ++o) {
            out.w_exp(0, 0, dst, o) = block.w_exp(0, 0, c, o);
        }
        ++dst;
    }

    const std::int64_t cm = code_max(ci, co, k);
    out.uneconomical = ce >= cm;
    if (out.uneconomical) {
        log_info("deploy", "compacted layer keeps %lld channels, at or above code_max %lld",
                 static_cast<long long>(ce), static_cast<long long>(cm));
    }
    return out;
}

DeployedModel compact_model(const Model& model) {
    DeployedModel dm;
    for (const auto& layer : model.layers) {
        if (const auto* conv = std::get_if<ConvLayerT<float>>(&layer)) {
            dm.layers.emplace_back(DeployedConv{conv->w, conv->bias, conv->act, conv->geom});
        } else {
            dm.layers.emplace_back(compact(std::get<ALFBlock>(layer)));
        }
    }
    dm.layers.emplace_back(DeployedLinear{model.fc_w, model.fc_b});
    return dm;
}

namespace {

Tensor4 add_channel_bias(Tensor4 x, const Tensor4& bias) {
    if (bias.size() == 0) return x;
    const std::int64_t c = x.dim(3);
    for (std::int64_t i = 0; i < x.size(); i += c) {
        for (std::int64_t j = 0; j < c; ++j) x.raw()[i + j] += bias.raw()[j];
    }
    return x;
}

}  // namespace

Tensor4 deployed_forward(const DeployedModel& dm, const Tensor4& input) {
    Tensor4 x = input;
    for (const auto& layer : dm.layers) {
        if (const auto* conv = std::get_if<DeployedConv>(&layer)) {
            x = activation(add_channel_bias(conv2d_fast(x, conv->w, conv->geom), conv->bias),
                           conv->act);
        } else if (const auto* alf = std::get_if<DeployedAlf>(&layer)) {
            Tensor4 inter =
                activation(conv2d_fast(x, alf->w_code, alf->geom), alf->act_inter);
            x = activation(pointwise_conv(inter, alf->w_exp), alf->act);
        } else {
            const auto& fc = std::get<DeployedLinear>(layer);
            const std::int64_t n = x.dim(0);
            const std::int64_t features = fc.w.dim(2);
            if (n > 0 && x.size() / n != features) {
                throw ShapeError("deployed linear layer expects " + std::to_string(features) +
                                 " features, got " + std::to_string(x.size() / std::max<std::int64_t>(n, 1)));
            }
            x = add_channel_bias(pointwise_conv(x.reshaped({n, 1, 1, features}), fc.w), fc.bias);
        }
    }
    return x;
}

double evaluate(const DeployedModel& dm, const Dataset& ds) {
    const std::int64_t n = ds.size();
    if (n == 0) return 0.0;
    const std::int64_t h = ds.images.dim(1), w = ds.images.dim(2), c = ds.images.dim(3);
    const std::int64_t sample = h * w * c;
    const std::int64_t chunk = 256;

    std::int64_t correct = 0;
    for (std::int64_t at = 0; at < n; at += chunk) {
        const std::int64_t bn = std::min(chunk, n - at);
        Tensor4 batch({bn, h, w, c}, Layout::NHWC);
        std::copy_n(ds.images.raw() + at * sample, bn * sample, batch.raw());
        Tensor4 logits = deployed_forward(dm, batch);
        const std::int64_t classes = logits.dim(3);
        for (std::int64_t b = 0; b < bn; ++b) {
            const float* row = logits.raw() + b * classes;
            std::int64_t best = 0;
            for (std::int64_t j = 1; j < classes; ++j) {
                if (row[j] > row[best]) best = j;
            }
            correct += (best == ds.labels[static_cast<std::size_t>(at + b)]);
        }
    }
    return static_cast<double>(correct) / static_cast<double>(n);
}

CostReport model_cost_report(const Model& model) {
    std::vector<LayerCostEntry> entries;
    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (const auto* block = std::get_if<ALFBlock>(&model.layers[i])) {
            const LayerSpec& spec = model.arch.layers[i];
            entries.push_back(layer_cost(spec.id, block->ci(), block->co(), block->kernel(),
                                         spec.ho, spec.wo, block->active_count()));
        }
    }
    return make_cost_report(std::move(entries));
}

namespace {

void write_payload(ByteWriter& w, const Tensor4& t) {
    w.u64(static_cast<std::uint64_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) w.f32(t.raw()[i]);
}

Tensor4 read_payload(ByteReader& r, const Tensor4::Dims& dims, const Layout layout,
                     const char* what) {
    const std::uint64_t expect = static_cast<std::uint64_t>(Tensor4::count(dims));
    const std::uint64_t count = r.u64();
    if (count != expect) {
        throw FormatError(std::string("container: ") + what + " payload holds " +
                          std::to_string(count) + " values, header implies " +
                          std::to_string(expect));
    }
    Tensor4 t(dims, layout);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = r.f32();
        if (!std::isfinite(v)) {
            throw FormatError(std::string("container: non-finite value in ") + what +
                              " payload at element " + std::to_string(i));
        }
        t.raw()[static_cast<std::int64_t>(i)] = v;
    }
    return t;
}

// Optional second payload (bias): element count 0 or Co.
Tensor4 read_bias_payload(ByteReader& r, std::int64_t co, const char* what) {
    const std::uint64_t count = r.u64();
    if (count == 0) return Tensor4();
    if (count != static_cast<std::uint64_t>(co)) {
        throw FormatError(std::string("container: ") + what + " bias payload holds " +
                          std::to_string(count) + " values, expected 0 or " + std::to_string(co));
    }
    Tensor4 t({1, 1, 1, co}, Layout::NHWC);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = r.f32();
        if (!std::isfinite(v)) {
            throw FormatError(std::string("container: non-finite value in ") + what +
                              " bias payload at element " + std::to_string(i));
        }
        t.raw()[static_cast<std::int64_t>(i)] = v;
    }
    return t;
}

}  // namespace

std::string export_container(const DeployedModel& dm) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(DeployedModel::kVersion);
    w.u32(static_cast<std::uint32_t>(dm.layers.size()));

    for (const auto& layer : dm.layers) {
        if (const auto* conv = std::get_if<DeployedConv>(&layer)) {
            w.u8(kKindConv);
            w.u32(static_cast<std::uint32_t>(conv->w.dim(0)));
            w.u32(static_cast<std::uint32_t>(conv->w.dim(2)));
            w.u32(0);  // no code channels in a standard conv
            w.u32(static_cast<std::uint32_t>(conv->w.dim(3)));
            w.u32(static_cast<std::uint32_t>(conv->geom.stride));
            w.u32(static_cast<std::uint32_t>(conv->geom.pad));
            w.u8(static_cast<std::uint8_t>(Activation::Identity));
            w.u8(static_cast<std::uint8_t>(conv->act));
            write_payload(w, conv->w);
            if (conv->bias.size() > 0) {
                write_payload(w, conv->bias);
            } else {
                w.u64(0);
            }
        } else if (const auto* alf = std::get_if<DeployedAlf>(&layer)) {
            w.u8(kKindAlf);
            w.u32(static_cast<std::uint32_t>(alf->w_code.dim(0)));
            w.u32(static_cast<std::uint32_t>(alf->w_code.dim(2)));
            w.u32(static_cast<std::uint32_t>(alf->w_code.dim(3)));
            w.u32(static_cast<std::uint32_t>(alf->w_exp.dim(3)));
            w.u32(static_cast<std::uint32_t>(alf->geom.stride));
            w.u32(static_cast<std::uint32_t>(alf->geom.pad));
            w.u8(static_cast<std::uint8_t>(alf->act_inter));
            w.u8(static_cast<std::uint8_t>(alf->act));
            write_payload(w, alf->w_code);
            write_payload(w, alf->w_exp);
        } else {
            const auto& fc = std::get<DeployedLinear>(layer);
            w.u8(kKindLinear);
            w.u32(1);
            w.u32(static_cast<std::uint32_t>(fc.w.dim(2)));
            w.u32(0);
            w.u32(static_cast<std::uint32_t>(fc.w.dim(3)));
            w.u32(1);
            w.u32(0);
            w.u8(static_cast<std::uint8_t>(Activation::Identity));
            w.u8(static_cast<std::uint8_t>(Activation::Identity));
            write_payload(w, fc.w);
            write_payload(w, fc.bias);
        }
    }
    ByteWriter out;
    out.bytes(w.data().data(), w.size());
    out.u32(crc32_of(w.data()));
    return out.data();
}

DeployedModel import_container(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("container: ALF1 magic not found");
    }
    if (bytes.size() < 8) {
        throw FormatError("container: truncated before the version field");
    }
    const std::size_t body = bytes.size() - 4;
    ByteReader crc_r(bytes.data() + body, 4);
    const std::uint32_t stored_crc = crc_r.u32();
    const std::uint32_t actual_crc = crc32_of(bytes.data(), body);
    if (stored_crc != actual_crc) {
        throw FormatError("container: crc mismatch (stored " + std::to_string(stored_crc) +
                          ", computed " + std::to_string(actual_crc) + ")");
    }

    ByteReader r(bytes.data(), body);
    char magic[4];
    r.raw(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != DeployedModel::kVersion) {
        throw FormatError("container: format version " + std::to_string(version) +
                          " is not supported (reader is at " +
                          std::to_string(DeployedModel::kVersion) + ")");
    }
    const std::uint32_t layer_count = r.u32();

    DeployedModel dm;
    for (std::uint32_t li = 0; li < layer_count; ++li) {
        const std::uint8_t kind = r.u8();
        const auto k = static_cast<std::int64_t>(r.u32());
        const auto ci = static_cast<std::int64_t>(r.u32());
        const auto ce = static_cast<std::int64_t>(r.u32());
        const auto co = static_cast<std::int64_t>(r.u32());
        const auto stride = static_cast<std::int64_t>(r.u32());
        const auto pad = static_cast<std::int64_t>(r.u32());
        const std::uint8_t inter_raw = r.u8();
        const std::uint8_t act_raw = r.u8();
        if (inter_raw > 1 || act_raw > 1) {
            throw FormatError("container: unknown activation code in layer " + std::to_string(li));
        }
        const auto act_inter = static_cast<Activation>(inter_raw);
        const auto act = static_cast<Activation>(act_raw);
        if (k < 1 || ci < 1 || co < 1 || stride < 1 || pad < 0) {
            throw FormatError("container: invalid dimensions in layer " + std::to_string(li));
        }

        if (kind == kKindConv) {
            DeployedConv conv;
            conv.geom = {k, stride, pad};
            conv.act = act;
            conv.w = read_payload(r, {k, k, ci, co}, Layout::KKIO, "conv weight");
            conv.bias = read_bias_payload(r, co, "conv");
            dm.layers.emplace_back(std::move(conv));
        } else if (kind == kKindAlf) {
            if (ce < 1) {
                throw FormatError("container: factorized layer " + std::to_string(li) +
                                  " has no code channels");
            }
            DeployedAlf alf;
            alf.geom = {k, stride, pad};
            alf.act_inter = act_inter;
            alf.act = act;
            alf.w_code = read_payload(r, {k, k, ci, ce}, Layout::KKIO, "code weight");
            alf.w_exp = read_payload(r, {1, 1, ce, co}, Layout::KKIO, "expansion weight");
            alf.uneconomical = ce >= code_max(ci, co, k);
            dm.layers.emplace_back(std::move(alf));
        } else if (kind == kKindLinear) {
            DeployedLinear fc;
            fc.w = read_payload(r, {1, 1, ci, co}, Layout::KKIO, "linear weight");
            fc.bias = read_bias_payload(r, co, "linear");
            dm.layers.emplace_back(std::move(fc));
        } else {
            throw FormatError("container: unknown layer kind " + std::to_string(kind) +
                              " in layer " + std::to_string(li));
        }
    }
    if (r.remaining() != 0) {
        throw FormatError("container: " + std::to_string(r.remaining()) +
                          " unexpected trailing bytes at offset " + std::to_string(r.offset()));
    }
    return dm;
}

void save_container(const DeployedModel& dm, const std::string& path) {
    write_file(path, export_container(dm));
}

DeployedModel load_container(const std::string& path) {
    return import_container(read_file(path));
}

}  // namespace alf
