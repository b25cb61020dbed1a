#include "alf/model.hpp"

#include <set>

namespace alf {

void ArchSpec::validate_and_derive() {
    if (in_h < 1 || in_w < 1 || in_c < 1) {
        throw ConfigError("arch: input dims must be >= 1, got " + std::to_string(in_h) + "x" +
                          std::to_string(in_w) + "x" + std::to_string(in_c));
    }
    if (classes < 2) throw ConfigError("arch: classes must be >= 2");

    std::set<std::string> ids;
    std::int64_t h = in_h, w = in_w, c = in_c;
    std::int64_t index = 0;
    for (LayerSpec& s : layers) {
        ++index;
        if (s.id.empty()) {
            s.id = (s.kind == LayerKind::Conv ? "conv" : "alf") + std::to_string(index);
        }
        if (!ids.insert(s.id).second) throw ConfigError("arch: duplicate layer id '" + s.id + "'");
        if (s.co < 1) throw ConfigError("layer '" + s.id + "': co must be >= 1");
        if (s.ci >= 0 && s.ci != c) {
            throw ConfigError("layer '" + s.id + "': ci " + std::to_string(s.ci) +
                              " does not match incoming channels " + std::to_string(c));
        }
        s.ci = c;
        const ConvGeometry geom{s.k, s.stride, s.pad};
        try {
            geom.validate();
            s.ho = geom.out_extent(h, "H");
            s.wo = geom.out_extent(w, "W");
        } catch (const ShapeError& e) {
            throw ConfigError("layer '" + s.id + "': " + e.what());
        }
        h = s.ho;
        w = s.wo;
        c = s.co;
    }
    flat_features = h * w * c;
}

}  // namespace alf
