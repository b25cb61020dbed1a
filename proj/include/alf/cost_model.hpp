#pragma once

#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "alf/error.hpp"

namespace alf {

// Exact rational. Cost comparisons sit right on a floor boundary, so nothing
// here ever touches floating point; ordering uses 128-bit cross products.
struct Ratio {
    std::int64_t num = 0;
    std::int64_t den = 1;

    static Ratio of(std::int64_t n, std::int64_t d) {
        if (d == 0) throw NumericError("Ratio: zero denominator");
        if (d < 0) {
            n = -n;
            d = -d;
        }
        const std::int64_t g = std::gcd(n < 0 ? -n : n, d);
        return Ratio{g ? n / g : n, g ? d / g : d};
    }

    double value() const { return static_cast<double>(num) / static_cast<double>(den); }

    friend bool operator==(const Ratio& a, const Ratio& b) {
        return a.num == b.num && a.den == b.den;
    }
    friend bool operator<(const Ratio& a, const Ratio& b) {
        return static_cast<__int128>(a.num) * b.den < static_cast<__int128>(b.num) * a.den;
    }
    friend bool operator>(const Ratio& a, const Ratio& b) { return b < a; }
    friend bool operator<=(const Ratio& a, const Ratio& b) { return !(b < a); }
    friend bool operator>=(const Ratio& a, const Ratio& b) { return !(a < b); }
};

// Largest code width that still saves resources: floor(Ci*Co*K^2 / (Ci*K^2 + Co)).
// 0 means the layer cannot be shrunk by factorization at all.
inline std::int64_t code_max(std::int64_t ci, std::int64_t co, std::int64_t k) {
    if (ci < 1 || co < 1 || k < 1) throw ConfigError("code_max: Ci, Co, K must be >= 1");
    return (ci * co * k * k) / (ci * k * k + co);
}

// Resource ratio standard/factorized; > 1 means the factorized layer is
// strictly cheaper.
inline Ratio gain_ratio(std::int64_t ci, std::int64_t co, std::int64_t k, std::int64_t c_code) {
    if (ci < 1 || co < 1 || k < 1) throw ConfigError("gain_ratio: Ci, Co, K must be >= 1");
    if (c_code < 1) throw ConfigError("gain_ratio: C_code must be >= 1");
    return Ratio::of(ci * co * k * k, c_code * (ci * k * k + co));
}

struct LayerCostEntry {
    std::string id;
    std::int64_t ci = 0, co = 0, k = 0, ho = 0, wo = 0;
    std::int64_t c_code_eff = 0;
    std::int64_t params_std = 0, params_alf = 0;
    std::int64_t ops_std = 0, ops_alf = 0;
    Ratio gain_params, gain_ops;
    std::int64_t c_code_max = 0;
    bool uneconomical = false;  // gain < 1
};

struct CostReport {
    std::vector<LayerCostEntry> layers;
    LayerCostEntry total;
};

// Params and MACs for one layer at an effective code width. Ops count one
// multiply-accumulate as one operation, per sample (batch excluded); bias and
// activation are omitted since they cancel between the two designs.
inline LayerCostEntry layer_cost(const std::string& id, std::int64_t ci, std::int64_t co,
                                 std::int64_t k, std::int64_t ho, std::int64_t wo,
                                 std::int64_t c_code_eff) {
    if (ci < 1 || co < 1 || k < 1 || ho < 1 || wo < 1) {
        throw ConfigError("layer_cost: dimensions must be >= 1 for layer '" + id + "'");
    }
    if (c_code_eff < 1 || c_code_eff > co) {
        throw ConfigError("layer_cost: C_code_eff must be in [1, Co] for layer '" + id + "'");
    }
    LayerCostEntry e;
    e.id = id;
    e.ci = ci;
    e.co = co;
    e.k = k;
    e.ho = ho;
    e.wo = wo;
    e.c_code_eff = c_code_eff;
    e.params_std = k * k * ci * co;
    e.params_alf = k * k * ci * c_code_eff + c_code_eff * co;
    e.ops_std = ho * wo * e.params_std;
    e.ops_alf = ho * wo * e.params_alf;
    e.gain_params = Ratio::of(e.params_std, e.params_alf);
    e.gain_ops = Ratio::of(e.ops_std, e.ops_alf);
    e.c_code_max = code_max(ci, co, k);
    e.uneconomical = e.gain_params < Ratio{1, 1};
    return e;
}

// Totals row sums the counts; its gains are ratios of the summed counts.
CostReport make_cost_report(std::vector<LayerCostEntry> layers);

// One row per layer plus a final totals row. Column order:
// layer,ci,co,k,ho,wo,c_code_eff,params_std,params_alf,ops_std,ops_alf,
// gain_params,gain_ops,c_code_max. Gains print with six decimals; the totals
// row carries zeros in the shape and c_code_max columns.
std::string to_csv(const CostReport& report);

}  // namespace alf
