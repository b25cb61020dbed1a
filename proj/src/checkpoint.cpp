#include "alf/checkpoint.hpp"

#include <cmath>
#include <cstring>

#include "alf/binio.hpp"

namespace alf {

namespace {

constexpr char kMagic[4] = {'A', 'L', 'F', 'T'};
constexpr std::uint32_t kVersion = 1;

void write_tensor(ByteWriter& w, const Tensor4& t) {
    w.u64(static_cast<std::uint64_t>(t.size()));
    for (std::int64_t i = 0; i < t.size(); ++i) w.f32(t.raw()[i]);
}

Tensor4 read_tensor(ByteReader& r, const Tensor4::Dims& dims, Layout layout, const char* what) {
    const std::uint64_t expect = static_cast<std::uint64_t>(Tensor4::count(dims));
    const std::uint64_t count = r.u64();
    if (count != expect) {
        throw FormatError(std::string("checkpoint: ") + what + " holds " + std::to_string(count) +
                          " values, expected " + std::to_string(expect));
    }
    Tensor4 t(dims, layout);
    for (std::uint64_t i = 0; i < count; ++i) {
        const float v = r.f32();
        if (!std::isfinite(v)) {
            throw FormatError(std::string("checkpoint: non-finite value in ") + what);
        }
        t.raw()[static_cast<std::int64_t>(i)] = v;
    }
    return t;
}

}  // namespace

std::string serialize_checkpoint(const Model& model) {
    ByteWriter w;
    w.bytes(kMagic, 4);
    w.u32(kVersion);
    w.u32(static_cast<std::uint32_t>(model.arch.in_h));
    w.u32(static_cast<std::uint32_t>(model.arch.in_w));
    w.u32(static_cast<std::uint32_t>(model.arch.in_c));
    w.u32(static_cast<std::uint32_t>(model.arch.classes));
    w.u32(static_cast<std::uint32_t>(model.arch.layers.size()));

    for (const LayerSpec& s : model.arch.layers) {
        w.u8(static_cast<std::uint8_t>(s.kind));
        w.u32(static_cast<std::uint32_t>(s.id.size()));
        w.bytes(s.id.data(), s.id.size());
        w.u32(static_cast<std::uint32_t>(s.co));
        w.u32(static_cast<std::uint32_t>(s.k));
        w.u32(static_cast<std::uint32_t>(s.stride));
        w.u32(static_cast<std::uint32_t>(s.pad));
        w.u8(static_cast<std::uint8_t>(s.act));
        w.u8(static_cast<std::uint8_t>(s.act_inter));
        w.u8(s.bias ? 1 : 0);
    }

    for (std::size_t i = 0; i < model.layers.size(); ++i) {
        if (const auto* conv = std::get_if<ConvLayerT<float>>(&model.layers[i])) {
            write_tensor(w, conv->w);
            if (conv->bias.size() > 0) {
                write_tensor(w, conv->bias);
            } else {
                w.u64(0);
            }
        } else {
            const auto& block = std::get<ALFBlock>(model.layers[i]);
            w.u32(static_cast<std::uint32_t>(block.c_code()));
            write_tensor(w, block.w_ref);
            write_tensor(w, block.encoder);
            write_tensor(w, block.w_exp);
            w.u64(block.mask.size());
            for (auto m : block.mask) w.u8(m);
            w.u64(block.soft_scores.size());
            for (float v : block.soft_scores) w.f32(v);
        }
    }
    write_tensor(w, model.fc_w);
    write_tensor(w, model.fc_b);

    ByteWriter out;
    out.bytes(w.data().data(), w.size());
    out.u32(crc32_of(w.data()));
    return out.data();
}

Model deserialize_checkpoint(const std::string& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw FormatError("checkpoint: ALFT magic not found");
    }
    if (bytes.size() < 8) throw FormatError("checkpoint: truncated header");
    const std::size_t body = bytes.size() - 4;
    ByteReader crc_r(bytes.data() + body, 4);
    if (crc_r.u32() != crc32_of(bytes.data(), body)) {
        throw FormatError("checkpoint: crc mismatch");
    }

    ByteReader r(bytes.data(), body);
    char magic[4];
    r.raw(magic, 4);
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw FormatError("checkpoint: version " + std::to_string(version) + " not supported");
    }

    ArchSpec arch;
    arch.in_h = r.u32();
    arch.in_w = r.u32();
    arch.in_c = r.u32();
    arch.classes = r.u32();
    const std::uint32_t layer_count = r.u32();
    for (std::uint32_t i = 0; i < layer_count; ++i) {
        LayerSpec s;
        const std::uint8_t kind = r.u8();
        if (kind > 1) throw FormatError("checkpoint: unknown layer kind");
        s.kind = static_cast<LayerKind>(kind);
        const std::uint32_t id_len = r.u32();
        if (id_len > 1024) throw FormatError("checkpoint: implausible layer id length");
        s.id.resize(id_len);
        r.raw(s.id.data(), id_len);
        s.co = r.u32();
        s.k = r.u32();
        s.stride = r.u32();
        s.pad = r.u32();
        const std::uint8_t act_raw = r.u8();
        const std::uint8_t inter_raw = r.u8();
        if (act_raw > 1 || inter_raw > 1) {
            throw FormatError("checkpoint: unknown activation code");
        }
        s.act = static_cast<Activation>(act_raw);
        s.act_inter = static_cast<Activation>(inter_raw);
        s.bias = r.u8() != 0;
        arch.layers.push_back(std::move(s));
    }
    arch.validate_and_derive();

    Model m;
    m.arch = arch;
    for (const LayerSpec& s : arch.layers) {
        const ConvGeometry geom{s.k, s.stride, s.pad};
        if (s.kind == LayerKind::Conv) {
            ConvLayerT<float> conv;
            conv.geom = geom;
            conv.act = s.act;
            conv.w = read_tensor(r, {s.k, s.k, s.ci, s.co}, Layout::KKIO, "conv weight");
            const std::uint64_t bias_count = r.u64();
            if (bias_count == static_cast<std::uint64_t>(s.co)) {
                conv.bias = Tensor4({1, 1, 1, s.co}, Layout::NHWC);
                for (std::int64_t j = 0; j < s.co; ++j) {
                    const float v = r.f32();
                    if (!std::isfinite(v)) {
                        throw FormatError("checkpoint: non-finite value in conv bias");
                    }
                    conv.bias.raw()[j] = v;
                }
            } else if (bias_count != 0) {
                throw FormatError("checkpoint: conv bias holds " + std::to_string(bias_count) +
                                  " values, expected 0 or " + std::to_string(s.co));
            }
            m.layers.emplace_back(std::move(conv));
        } else {
            const auto cc = static_cast<std::int64_t>(r.u32());
            if (cc < 1 || cc > s.co) {
                throw FormatError("checkpoint: code width " + std::to_string(cc) +
                                  " out of range for layer '" + s.id + "'");
            }
            ALFBlock block;
            block.geom = geom;
            block.act = s.act;
            block.act_inter = s.act_inter;
            block.w_ref = read_tensor(r, {s.k, s.k, s.ci, s.co}, Layout::KKIO, "reference bank");
            block.encoder = read_tensor(r, {1, 1, s.co, cc}, Layout::KKIO, "encoder");
            block.w_exp = read_tensor(r, {1, 1, cc, s.co}, Layout::KKIO, "expansion");
            const std::uint64_t mask_count = r.u64();
            if (mask_count != static_cast<std::uint64_t>(cc)) {
                throw FormatError("checkpoint: mask length mismatch");
            }
            block.mask.resize(mask_count);
            for (auto& v : block.mask) v = r.u8();
            const std::uint64_t score_count = r.u64();
            if (score_count != static_cast<std::uint64_t>(cc)) {
                throw FormatError("checkpoint: soft score length mismatch");
            }
            block.soft_scores.resize(score_count);
            for (auto& v : block.soft_scores) v = r.f32();
            block.validate();
            m.layers.emplace_back(std::move(block));
        }
    }
    m.fc_w = read_tensor(r, {1, 1, arch.flat_features, arch.classes}, Layout::KKIO,
                         "classifier weight");
    m.fc_b = read_tensor(r, {1, 1, 1, arch.classes}, Layout::NHWC, "classifier bias");
    if (r.remaining() != 0) {
        throw FormatError("checkpoint: " + std::to_string(r.remaining()) +
                          " unexpected trailing bytes");
    }
    return m;
}

void save_checkpoint(const Model& model, const std::string& path) {
    write_file(path, serialize_checkpoint(model));
}

Model load_checkpoint(const std::string& path) {
    return deserialize_checkpoint(read_file(path));
}

}  // namespace alf
